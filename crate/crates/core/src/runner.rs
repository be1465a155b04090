//! File-level workflows shared by the command-line front end and the tests:
//! simulate a corpus to disk, detect on session directories, score event
//! files, and fit the trainable models from files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::engage::{reaction_features, reaction_index_sequence, train_tree, DecisionTree, Recommendation};
use crate::error::{Error, Result};
use crate::harness::{evaluate, generate_corpus, CorpusSpec, EvalReport};
use crate::io::{
    combined_labels, load_session_dir, read_events_jsonl, read_text, span_seconds, write_session_dir,
    write_text, Companions, SessionDir,
};
use crate::motion::{HeuristicClassifier, LstmWeights, MotionPipeline, SequenceClassifier};
use crate::musicinfo::MusicInfoStore;
use crate::pipeline::{Diagnostic, PipelineOutput};
use crate::types::{expand_events_to_labels, FilterStats, ReactionEvent, ReactionLabel};
use crate::vocal::{train_hmm, AutocorrelationTracker, HmmParams, PitchTracker, VocalPipeline};

pub const MUSIC_DIR: &str = "music";
pub const SESSIONS_DIR: &str = "sessions";

/// Writes `<out>/music/<song>.csv` and `<out>/sessions/<id>/` for every
/// session in the corpus description. Returns the session directories in order.
pub fn simulate(spec: &CorpusSpec, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let corpus = generate_corpus(spec, seed)?;
    let songs: std::collections::BTreeSet<&str> = spec.sessions.iter().map(|s| s.song_id.as_str()).collect();
    for song in songs {
        let track = corpus.tracks.get(song).expect("generated track");
        write_text(&out.join(MUSIC_DIR).join(format!("{song}.csv")), &track.to_csv())?;
    }
    let mut dirs = Vec::with_capacity(corpus.sessions.len());
    for g in &corpus.sessions {
        let dir = out.join(SESSIONS_DIR).join(g.session.id());
        let truth = g.truth_events();
        write_session_dir(
            &dir,
            &g.session,
            Companions {
                scores: Some(&g.scores),
                pitch: Some(&g.pitch),
                truth: Some(&truth),
            },
        )?;
        dirs.push(dir);
    }
    Ok(dirs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Vocal,
    Motion,
    Both,
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vocal" => Ok(PipelineKind::Vocal),
            "motion" => Ok(PipelineKind::Motion),
            "both" => Ok(PipelineKind::Both),
            _ => Err(Error::param(format!("unknown pipeline {s:?}"))),
        }
    }
}

/// Models and settings for detection.
#[derive(Debug, Clone, Default)]
pub struct DetectOptions {
    pub config: PipelineConfig,
    pub music: MusicInfoStore,
    pub hmm: Option<HmmParams>,
    /// Motion classifier weights; the heuristic classifier runs without them.
    pub lstm: Option<LstmWeights>,
}

/// Detection result of one session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub session_id: String,
    /// Vocal events first, then motion events, when both pipelines ran.
    pub events: Vec<ReactionEvent>,
    pub vocal_stats: Option<FilterStats>,
    pub motion_stats: Option<FilterStats>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Detection {
    /// Stats of all pipelines that ran, summed.
    pub fn stats(&self) -> FilterStats {
        let mut s = FilterStats::default();
        for part in [&self.vocal_stats, &self.motion_stats].into_iter().flatten() {
            s.accumulate(part);
        }
        s
    }
}

fn run_vocal_dir(dir: &SessionDir, opts: &DetectOptions) -> Result<PipelineOutput> {
    let scores = dir.scores.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "{}: vocal detection needs {} (classifier scores)",
            dir.path.display(),
            crate::io::SCORES_FILE
        ))
    })?;
    let fallback = AutocorrelationTracker::default();
    let pitch: &dyn PitchTracker = match &dir.pitch {
        Some(p) => p,
        None => &fallback,
    };
    VocalPipeline::new(&opts.config.vocal, scores, pitch, &opts.music, opts.hmm.as_ref()).run(&dir.session)
}

fn run_motion_dir(dir: &SessionDir, opts: &DetectOptions) -> Result<PipelineOutput> {
    let heuristic = HeuristicClassifier::new(opts.config.motion.heuristic);
    let classifier: &dyn SequenceClassifier = match &opts.lstm {
        Some(w) => w,
        None => &heuristic,
    };
    MotionPipeline::new(&opts.config.motion, classifier).run(&dir.session)
}

pub fn detect_dir(dir: &SessionDir, kind: PipelineKind, opts: &DetectOptions) -> Result<Detection> {
    let mut det = Detection {
        session_id: dir.session.id().to_string(),
        events: Vec::new(),
        vocal_stats: None,
        motion_stats: None,
        diagnostics: Vec::new(),
    };
    if matches!(kind, PipelineKind::Vocal | PipelineKind::Both) {
        let out = run_vocal_dir(dir, opts)?;
        det.events.extend(out.events);
        det.vocal_stats = Some(out.stats);
        det.diagnostics.extend(out.diagnostics);
    }
    if matches!(kind, PipelineKind::Motion | PipelineKind::Both) {
        let out = run_motion_dir(dir, opts)?;
        det.events.extend(out.events);
        det.motion_stats = Some(out.stats);
        det.diagnostics.extend(out.diagnostics);
    }
    Ok(det)
}

pub fn detect(session: &Path, kind: PipelineKind, opts: &DetectOptions) -> Result<Detection> {
    detect_dir(&load_session_dir(session)?, kind, opts)
}

/// Scores predicted events against ground-truth events over the seconds the
/// truth covers. Both files may mix vocal and motion timelines.
pub fn evaluate_events(pred: &[ReactionEvent], truth: &[ReactionEvent], stats: Option<&FilterStats>) -> Result<EvalReport> {
    let n = span_seconds(truth);
    if n == 0 {
        return Err(Error::InsufficientData("ground truth covers no whole second".into()));
    }
    evaluate(&combined_labels(pred, n), &combined_labels(truth, n), stats)
}

/// Per-second vocal timeline of mixed ground-truth events.
fn vocal_truth(events: &[ReactionEvent], n: usize) -> Vec<ReactionLabel> {
    let vocal: Vec<ReactionEvent> = events.iter().filter(|e| e.label.is_vocal()).copied().collect();
    expand_events_to_labels(&vocal, n)
}

/// Fits the smoothing HMM on labeled session directories: each session is
/// classified with smoothing off and its raw labels are paired with the
/// vocal ground truth.
pub fn train_hmm_from_dirs(dirs: &[PathBuf], opts: &DetectOptions, laplace: f64) -> Result<HmmParams> {
    let mut raw_opts = opts.clone();
    raw_opts.config.vocal.smoothing.enabled = false;
    raw_opts.hmm = None;
    let mut pairs = Vec::with_capacity(dirs.len());
    for d in dirs {
        let dir = load_session_dir(d)?;
        let truth = dir.truth.as_ref().ok_or_else(|| {
            Error::InsufficientData(format!("{}: no {} to train on", d.display(), crate::io::LABELS_FILE))
        })?;
        let out = run_vocal_dir(&dir, &raw_opts)?;
        let truth = vocal_truth(truth, out.raw_labels.len());
        pairs.push((out.raw_labels, truth));
    }
    train_hmm(&pairs, laplace)
}

/// Session subdirectories (those holding a `meta.json`), sorted by name.
pub fn session_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(crate::io::META_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(format!("listing {}", root.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(crate::io::META_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InsufficientData(format!("no session directories under {}", root.display())));
    }
    Ok(dirs)
}

/// Engagement model target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeTask {
    Rating,
    Familiarity,
}

impl FromStr for TreeTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rating" => Ok(TreeTask::Rating),
            "familiarity" => Ok(TreeTask::Familiarity),
            _ => Err(Error::param(format!("unknown tree task {s:?}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct TableRow {
    events: String,
    duration_s: f64,
    label: String,
}

fn split_timelines(events: &[ReactionEvent]) -> (Vec<ReactionEvent>, Vec<ReactionEvent>) {
    let vocal = events.iter().filter(|e| e.label.is_vocal()).copied().collect();
    let motion = events.iter().filter(|e| e.label == ReactionLabel::HeadMotion).copied().collect();
    (vocal, motion)
}

fn parse_target(task: TreeTask, s: &str) -> Option<u32> {
    match task {
        TreeTask::Rating => s.parse::<u32>().ok().filter(|r| (1..=5).contains(r)),
        TreeTask::Familiarity => match s {
            "known" | "1" => Some(1),
            "unknown" | "0" => Some(0),
            _ => None,
        },
    }
}

/// Training table: CSV with header `events,duration_s,label`. `events` is an
/// events file (relative paths resolve against the table's directory);
/// `label` is a rating 1-5 or `known`/`unknown`.
pub fn load_tree_table(path: &Path, task: TreeTask) -> Result<(Vec<Vec<f64>>, Vec<u32>)> {
    let base = path.parent().unwrap_or(Path::new("."));
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, row) in reader.deserialize::<TableRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let target = parse_target(task, row.label.trim())
            .ok_or_else(|| Error::parse(path, line, format!("bad {task:?} label {:?}", row.label)))?;
        let events = read_events_jsonl(&base.join(row.events.trim()))?;
        let (vocal, motion) = split_timelines(&events);
        x.push(reaction_features(&vocal, &motion, row.duration_s)?.to_vec());
        y.push(target);
    }
    if x.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no training rows", path.display())));
    }
    Ok((x, y))
}

pub fn train_tree_from_table(path: &Path, task: TreeTask, max_depth: usize, min_leaf: usize) -> Result<DecisionTree> {
    let (x, y) = load_tree_table(path, task)?;
    train_tree(&x, &y, max_depth, min_leaf)
}

/// Reaction index sequence of a mixed events file.
pub fn pattern_of(events: &[ReactionEvent]) -> Result<Vec<u8>> {
    let n = span_seconds(events);
    let (vocal, motion) = split_timelines(events);
    reaction_index_sequence(&expand_events_to_labels(&vocal, n), &expand_events_to_labels(&motion, n))
}

/// Ranks the `<song_id>.jsonl` event files of `pool_dir` against a pattern.
pub fn recommend_from_dir(pattern: &[ReactionEvent], pool_dir: &Path, top: usize) -> Result<Vec<Recommendation>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(pool_dir)
        .map_err(|e| Error::io(format!("listing {}", pool_dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let pool = paths
        .iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, pattern_of(&read_events_jsonl(p)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::engage::recommend(&pattern_of(pattern)?, &pool, top))
}
