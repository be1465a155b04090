use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use reactsense::config::PipelineConfig;
use reactsense::harness::{CorpusSpec, SessionSpec};
use reactsense::io::{read_events_jsonl, read_json, read_labels_csv, write_events_jsonl, write_json, write_text};
use reactsense::motion::LstmWeights;
use reactsense::musicinfo::MusicInfoStore;
use reactsense::runner::{self, DetectOptions, PipelineKind, TreeTask, MUSIC_DIR};
use reactsense::vocal::HmmParams;
use reactsense::FilterStats;

#[derive(Parser, Debug)]
#[command(name = "reactsense", version, about = "Detect listening reactions in earbud sensor sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate labeled synthetic sessions.
    Simulate {
        /// Corpus spec (JSON) or a single session spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run detection on session directories.
    Detect {
        #[arg(long, value_parser = parse_pipeline)]
        pipeline: PipelineKind,
        /// Session directory, or a directory of sessions. Repeatable.
        #[arg(long, required = true)]
        session: Vec<PathBuf>,
        #[arg(long, env = "REACTSENSE_CONFIG")]
        config: Option<PathBuf>,
        /// Note tracks (`<song_id>.csv`). Defaults to the simulate layout's
        /// `music` directory when one exists.
        #[arg(long)]
        music: Option<PathBuf>,
        #[arg(long)]
        hmm: Option<PathBuf>,
        /// Sequence-classifier weights; the heuristic classifier runs without.
        #[arg(long)]
        lstm: Option<PathBuf>,
        /// Events file for one session, directory of `<id>.jsonl` for several.
        #[arg(long)]
        out: PathBuf,
        /// Filtering statistics (JSON, summed over sessions).
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Score predicted events against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Filtering statistics written by `detect --stats`.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Fit the smoothing HMM on labeled sessions.
    TrainHmm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "REACTSENSE_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        music: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        laplace: f64,
    },
    /// Fit a rating or familiarity tree from a feature table.
    TrainTree {
        #[arg(long, value_parser = parse_task)]
        task: TreeTask,
        /// CSV with header `events,duration_s,label`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_depth: usize,
        #[arg(long, default_value_t = 2)]
        min_leaf: usize,
    },
    /// Rank songs by reaction-pattern similarity.
    Recommend {
        #[arg(long)]
        pattern: PathBuf,
        /// Directory of `<song_id>.jsonl` event files.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_pipeline(s: &str) -> std::result::Result<PipelineKind, String> {
    s.parse().map_err(|e: reactsense::Error| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<TreeTask, String> {
    s.parse().map_err(|e: reactsense::Error| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Explicit `--music`, else `<session>/../../music` when present.
fn load_music(explicit: Option<&Path>, session: &Path) -> Result<MusicInfoStore> {
    if let Some(dir) = explicit {
        return Ok(MusicInfoStore::load_dir(dir)?);
    }
    let guess = session.ancestors().skip(1).map(|a| a.join(MUSIC_DIR)).find(|p| p.is_dir());
    match guess {
        Some(dir) => {
            log::info!("using note tracks from {}", dir.display());
            Ok(MusicInfoStore::load_dir(&dir)?)
        }
        None => Ok(MusicInfoStore::default()),
    }
}

fn expand_sessions(roots: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for r in roots {
        dirs.extend(runner::session_dirs(r)?);
    }
    Ok(dirs)
}

fn simulate(spec: &Path, seed: u64, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let corpus: CorpusSpec = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(corpus_err) => match serde_json::from_str::<SessionSpec>(&text) {
            Ok(s) => CorpusSpec {
                song_length_s: 180.0,
                sessions: vec![s],
            },
            Err(_) => return Err(corpus_err).with_context(|| format!("parsing {}", spec.display())),
        },
    };
    let dirs = runner::simulate(&corpus, seed, out)?;
    log::info!("wrote {} sessions under {}", dirs.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn detect(
    pipeline: PipelineKind,
    sessions: &[PathBuf],
    config: Option<&Path>,
    music: Option<&Path>,
    hmm: Option<&Path>,
    lstm: Option<&Path>,
    out: &Path,
    stats_path: Option<&Path>,
    workers: usize,
) -> Result<()> {
    let dirs = expand_sessions(sessions)?;
    let opts = DetectOptions {
        config: load_config(config)?,
        music: load_music(music, &dirs[0])?,
        hmm: hmm.map(HmmParams::load).transpose()?,
        lstm: lstm.map(LstmWeights::load).transpose()?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("starting worker pool")?;
    let detections = pool.install(|| {
        dirs.par_iter()
            .map(|d| runner::detect(d, pipeline, &opts).with_context(|| format!("session {}", d.display())))
            .collect::<Result<Vec<_>>>()
    })?;
    for d in &detections {
        for diag in &d.diagnostics {
            log::warn!("{} segment {}: {}", d.session_id, diag.segment, diag.message);
        }
    }
    if let [single] = detections.as_slice() {
        write_events_jsonl(out, &single.events)?;
    } else {
        for d in &detections {
            write_events_jsonl(&out.join(format!("{}.jsonl", d.session_id)), &d.events)?;
        }
    }
    if let Some(p) = stats_path {
        let mut total = FilterStats::default();
        detections.iter().for_each(|d| total.accumulate(&d.stats()));
        write_json(p, &total)?;
    }
    Ok(())
}

fn eval(pred: &Path, truth: &Path, report: &Path, stats: Option<&Path>) -> Result<()> {
    let pred = read_events_jsonl(pred)?;
    let truth = if truth.extension().is_some_and(|x| x == "jsonl") {
        read_events_jsonl(truth)?
    } else {
        read_labels_csv(truth)?
    };
    let stats: Option<FilterStats> = stats.map(read_json).transpose()?;
    let r = runner::evaluate_events(&pred, &truth, stats.as_ref())?;
    log::info!("macro F1 {:.4} over {} seconds", r.macro_f1, r.n_segments);
    write_json(report, &r)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { spec, seed, out } => simulate(&spec, seed, &out),
        Command::Detect {
            pipeline,
            session,
            config,
            music,
            hmm,
            lstm,
            out,
            stats,
            workers,
        } => detect(
            pipeline,
            &session,
            config.as_deref(),
            music.as_deref(),
            hmm.as_deref(),
            lstm.as_deref(),
            &out,
            stats.as_deref(),
            workers,
        ),
        Command::Eval {
            pred,
            truth,
            report,
            stats,
        } => eval(&pred, &truth, &report, stats.as_deref()),
        Command::TrainHmm {
            data,
            out,
            config,
            music,
            laplace,
        } => {
            let dirs = runner::session_dirs(&data)?;
            let opts = DetectOptions {
                config: load_config(config.as_deref())?,
                music: load_music(music.as_deref(), &dirs[0])?,
                ..Default::default()
            };
            let hmm = runner::train_hmm_from_dirs(&dirs, &opts, laplace)?;
            write_text(&out, &hmm.to_json_pretty())?;
            Ok(())
        }
        Command::TrainTree {
            task,
            data,
            out,
            max_depth,
            min_leaf,
        } => {
            let tree = runner::train_tree_from_table(&data, task, max_depth, min_leaf)?;
            write_text(&out, &tree.to_json_pretty())?;
            Ok(())
        }
        Command::Recommend { pattern, pool, top, out } => {
            if top == 0 {
                bail!("--top must be at least 1");
            }
            let recs = runner::recommend_from_dir(&read_events_jsonl(&pattern)?, &pool, top)?;
            write_json(&out, &json!({ "recommendations": recs }))?;
            Ok(())
        }
    }
}

/// Error chain on one line; library errors already embed their source text.
fn render(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if msg.ends_with(&part) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&part);
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(2)
        }
    }
}
