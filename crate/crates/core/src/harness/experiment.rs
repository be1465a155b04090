//! Corpus construction and the cross-validated experiments run on it.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{MotionConfig, VocalConfig};
use crate::engage::{
    predict_familiarity, predict_rating, reaction_features, reaction_index_sequence, train_tree,
    Familiarity, ReactionFeatures,
};
use crate::error::{Error, Result};
use crate::motion::{MotionPipeline, SequenceClassifier};
use crate::musicinfo::MusicInfoStore;
use crate::pipeline::{PipelineOutput, SegmentOutcome};
use crate::types::{expand_events_to_labels, FilterStats, ReactionEvent, ReactionLabel};
use crate::vocal::{smooth_output, train_hmm, HmmParams, ScorePlayback, VocalPipeline};

use super::eval::{binary_f1, evaluate, loso_split, mean_absolute_error, EvalReport};
use super::generate::{
    generate_note_track, generate_session, sub_seed, Activity, GeneratedSession, ScriptSpan, SessionSpec,
};
use super::profile::Place;

fn default_song_length() -> f64 {
    180.0
}

/// Sessions to synthesize. Every distinct song gets a generated note track
/// of `song_length_s` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    #[serde(default = "default_song_length")]
    pub song_length_s: f64,
    pub sessions: Vec<SessionSpec>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub tracks: MusicInfoStore,
    pub sessions: Vec<GeneratedSession>,
}

impl Corpus {
    pub fn subjects(&self) -> Vec<&str> {
        self.sessions.iter().map(|g| g.session.meta().subject_id.as_str()).collect()
    }
}

pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Result<Corpus> {
    let songs: BTreeSet<&str> = spec.sessions.iter().map(|s| s.song_id.as_str()).collect();
    let tracks = songs
        .into_iter()
        .map(|id| generate_note_track(id, spec.song_length_s, seed))
        .collect::<Result<Vec<_>>>()?;
    let tracks = MusicInfoStore::new(tracks);
    let sessions = spec
        .sessions
        .par_iter()
        .map(|s| {
            let track = tracks.get(&s.song_id).expect("track generated for every song");
            generate_session(s, track, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { tracks, sessions })
}

/// Gap and span length ranges (inclusive, seconds) of a random script.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptShape {
    pub gap_s: (usize, usize),
    pub span_s: (usize, usize),
    /// Earliest start of the first span.
    pub first_at: usize,
}

fn random_script(rng: &mut ChaCha8Rng, duration: usize, shape: ScriptShape, labels: &[(ReactionLabel, f64)]) -> Vec<ScriptSpan> {
    let mut spans = Vec::new();
    let mut t = shape.first_at + rng.gen_range(0..=shape.gap_s.1 - shape.gap_s.0);
    loop {
        let len = rng.gen_range(shape.span_s.0..=shape.span_s.1);
        if t + len > duration {
            break;
        }
        let mut r = rng.gen::<f64>();
        let label = labels
            .iter()
            .find(|(_, w)| {
                r -= w;
                r < 0.0
            })
            .map_or(labels[labels.len() - 1].0, |(l, _)| *l);
        spans.push(ScriptSpan {
            t0: t as f64,
            t1: (t + len) as f64,
            label,
        });
        t += len + rng.gen_range(shape.gap_s.0..=shape.gap_s.1);
    }
    spans
}

pub const VOCAL_SESSION_S: usize = 40;
pub const MOTION_SESSION_S: usize = 45;
const SONGS: usize = 6;

pub const VOCAL_SHAPE: ScriptShape = ScriptShape {
    gap_s: (6, 16),
    span_s: (4, 10),
    first_at: 2,
};

pub const MOTION_SHAPE: ScriptShape = ScriptShape {
    gap_s: (8, 15),
    span_s: (10, 20),
    first_at: 8,
};

fn session_spec(i: usize, prefix: &str, n_subjects: usize, place: Place, duration_s: usize) -> SessionSpec {
    SessionSpec {
        id: format!("{prefix}{i:03}"),
        subject_id: format!("p{:02}", i % n_subjects),
        song_id: format!("song{}", i % SONGS),
        place,
        duration_s,
        start_offset_in_song: None,
        script: Vec::new(),
        activity: None,
    }
}

/// Sessions with singing (70%) and whistling (30%) spans between stretches
/// of non-reaction.
pub fn vocal_corpus_spec(n_sessions: usize, n_subjects: usize, place: Place, seed: u64) -> CorpusSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "vocal-corpus"));
    let labels = [(ReactionLabel::SingingHumming, 0.7), (ReactionLabel::Whistling, 0.3)];
    let sessions = (0..n_sessions)
        .map(|i| {
            let mut s = session_spec(i, "v", n_subjects, place, VOCAL_SESSION_S);
            s.script = random_script(&mut rng, VOCAL_SESSION_S, VOCAL_SHAPE, &labels);
            s
        })
        .collect();
    CorpusSpec {
        song_length_s: default_song_length(),
        sessions,
    }
}

/// Even sessions nod along; odd sessions carry no reaction at all.
pub fn motion_corpus_spec(n_sessions: usize, n_subjects: usize, place: Place, seed: u64) -> CorpusSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "motion-corpus"));
    let sessions = (0..n_sessions)
        .map(|i| {
            let mut s = session_spec(i, "m", n_subjects, place, MOTION_SESSION_S);
            if i % 2 == 0 {
                s.script = random_script(&mut rng, MOTION_SESSION_S, MOTION_SHAPE, &[(ReactionLabel::HeadMotion, 1.0)]);
            }
            s
        })
        .collect();
    CorpusSpec {
        song_length_s: default_song_length(),
        sessions,
    }
}

/// Reaction-free sessions under one forced activity.
pub fn activity_corpus_spec(n_sessions: usize, activity: Activity, place: Place) -> CorpusSpec {
    let sessions = (0..n_sessions)
        .map(|i| {
            let mut s = session_spec(i, "a", n_sessions.max(1), place, MOTION_SESSION_S);
            s.activity = Some(activity);
            s
        })
        .collect();
    CorpusSpec {
        song_length_s: default_song_length(),
        sessions,
    }
}

/// Runs the vocal pipeline on every session, replaying the generated
/// scores and pitch frames.
pub fn run_vocal(corpus: &Corpus, config: &VocalConfig, hmm: Option<&HmmParams>) -> Result<Vec<PipelineOutput>> {
    corpus
        .sessions
        .par_iter()
        .map(|g| {
            let scores = ScorePlayback::from_records(g.scores.iter().cloned())?;
            VocalPipeline::new(config, &scores, &g.pitch, &corpus.tracks, hmm).run(&g.session)
        })
        .collect()
}

pub fn run_motion(corpus: &Corpus, config: &MotionConfig, classifier: &dyn SequenceClassifier) -> Result<Vec<PipelineOutput>> {
    let pipeline = MotionPipeline::new(config, classifier);
    corpus.sessions.par_iter().map(|g| pipeline.run(&g.session)).collect()
}

/// Pooled report of per-session outputs against the generated truth.
pub fn pooled_report(corpus: &Corpus, outputs: &[PipelineOutput]) -> Result<EvalReport> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    let mut stats = FilterStats::default();
    for (g, out) in corpus.sessions.iter().zip(outputs) {
        pred.extend_from_slice(&out.labels);
        truth.extend_from_slice(&g.truth);
        stats.accumulate(&out.stats);
    }
    evaluate(&pred, &truth, Some(&stats))
}

/// Picks the DTW threshold that best separates true vocal reactions from
/// the rest among corrected segments. The pipeline runs once with no
/// threshold; every midpoint between observed distances is a candidate and
/// the smallest most-accurate one wins. Falls back to the configured value
/// when no segment reached correction.
pub fn calibrate_dtw_threshold(corpus: &Corpus, config: &VocalConfig) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.correction.enabled = true;
    cfg.correction.dtw_threshold = f64::INFINITY;
    cfg.smoothing.enabled = false;
    let outputs = run_vocal(corpus, &cfg, None)?;
    let mut points: Vec<(f64, bool)> = Vec::new();
    for (g, out) in corpus.sessions.iter().zip(&outputs) {
        for (i, o) in out.outcomes.iter().enumerate() {
            if let SegmentOutcome::Classified { distance: Some(d), .. } = o {
                points.push((*d, g.truth[i].is_vocal()));
            }
        }
    }
    if points.is_empty() {
        return Ok(config.correction.dtw_threshold);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut candidates = vec![points[0].0 - 1.0];
    candidates.extend(points.windows(2).filter(|w| w[1].0 > w[0].0).map(|w| 0.5 * (w[0].0 + w[1].0)));
    candidates.push(points[points.len() - 1].0 + 1.0);
    let accuracy = |t: f64| points.iter().filter(|(d, vocal)| (*d <= t) == *vocal).count();
    let mut best = (candidates[0], accuracy(candidates[0]));
    for &t in &candidates[1..] {
        let a = accuracy(t);
        if a > best.1 {
            best = (t, a);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoSummary {
    /// All held-out predictions scored together.
    pub pooled: EvalReport,
    /// Macro-F1 of each held-out subject, in subject order.
    pub fold_macro_f1: Vec<f64>,
    pub mean_fold_macro_f1: f64,
    /// Final labels of every session, in corpus order.
    #[serde(skip)]
    pub predictions: Vec<Vec<ReactionLabel>>,
    /// Per-segment outcomes of every session, in corpus order.
    #[serde(skip)]
    pub outcomes: Vec<Vec<SegmentOutcome>>,
}

/// Leave-one-subject-out vocal evaluation. Sessions are classified once
/// without smoothing; each fold then trains its HMM on the other subjects'
/// raw labels and smooths the held-out sessions with it.
pub fn loso_vocal(corpus: &Corpus, config: &VocalConfig) -> Result<LosoSummary> {
    let mut raw_cfg = config.clone();
    raw_cfg.smoothing.enabled = false;
    let outputs = run_vocal(corpus, &raw_cfg, None)?;
    let folds = loso_split(&corpus.subjects())?;
    let mut predictions: Vec<Vec<ReactionLabel>> = outputs.iter().map(|o| o.raw_labels.clone()).collect();
    let mut fold_macro_f1 = Vec::with_capacity(folds.len());
    for fold in &folds {
        if config.smoothing.enabled {
            let training: Vec<_> = fold
                .train
                .iter()
                .map(|&i| (outputs[i].raw_labels.clone(), corpus.sessions[i].truth.clone()))
                .collect();
            let hmm = train_hmm(&training, 1.0)?;
            for &i in &fold.test {
                predictions[i] = smooth_output(&outputs[i].raw_labels, &outputs[i].outcomes, &hmm, config.smoothing.window)?;
            }
        }
        let pred: Vec<ReactionLabel> = fold.test.iter().flat_map(|&i| predictions[i].clone()).collect();
        let truth: Vec<ReactionLabel> = fold.test.iter().flat_map(|&i| corpus.sessions[i].truth.clone()).collect();
        fold_macro_f1.push(evaluate(&pred, &truth, None)?.macro_f1);
    }
    let mut stats = FilterStats::default();
    outputs.iter().for_each(|o| stats.accumulate(&o.stats));
    let pred: Vec<ReactionLabel> = predictions.iter().flatten().copied().collect();
    let truth: Vec<ReactionLabel> = corpus.sessions.iter().flat_map(|g| g.truth.clone()).collect();
    let pooled = evaluate(&pred, &truth, Some(&stats))?;
    let mean_fold_macro_f1 = fold_macro_f1.iter().sum::<f64>() / fold_macro_f1.len() as f64;
    Ok(LosoSummary {
        pooled,
        fold_macro_f1,
        mean_fold_macro_f1,
        predictions,
        outcomes: outputs.into_iter().map(|o| o.outcomes).collect(),
    })
}

fn other_vocal(rng: &mut ChaCha8Rng, not: ReactionLabel) -> ReactionLabel {
    let others: Vec<ReactionLabel> = ReactionLabel::VOCAL.into_iter().filter(|&l| l != not).collect();
    others[rng.gen_range(0..others.len())]
}

/// `(observed, true)` pairs of long constant runs (20-60 s) observed with
/// 10% single-second flips.
pub fn sticky_training_sequences(n: usize, seed: u64) -> Vec<(Vec<ReactionLabel>, Vec<ReactionLabel>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "sticky"));
    (0..n)
        .map(|_| {
            let mut truth = Vec::new();
            let mut label = ReactionLabel::VOCAL[rng.gen_range(0..3)];
            while truth.len() < 300 {
                let len = rng.gen_range(20..=60);
                truth.extend(std::iter::repeat_n(label, len));
                label = other_vocal(&mut rng, label);
            }
            let observed = truth
                .iter()
                .map(|&l| if rng.gen_bool(0.1) { other_vocal(&mut rng, l) } else { l })
                .collect();
            (observed, truth)
        })
        .collect()
}

/// Fraction of isolated single-second flips that smoothing removes. Each
/// case is a run of 5-20 s between runs of other labels, with one flipped
/// second at least `min_lead` seconds into the run and at least one second
/// before its end. A case counts as corrected when every smoothed second
/// from the flip to the run end carries the run's label.
pub fn flip_correction_rate(hmm: &HmmParams, cases: usize, window: usize, min_lead: usize, seed: u64) -> Result<f64> {
    if min_lead > 3 {
        return Err(Error::param("flip lead must leave room inside a 5 s run"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "flips"));
    let mut corrected = 0usize;
    for _ in 0..cases {
        let run_label = ReactionLabel::VOCAL[rng.gen_range(0..3)];
        let before = other_vocal(&mut rng, run_label);
        let after = other_vocal(&mut rng, run_label);
        let lead = rng.gen_range(6..=12);
        let len = rng.gen_range(5..=20);
        let mut obs = vec![before; lead];
        obs.extend(std::iter::repeat_n(run_label, len));
        obs.extend(std::iter::repeat_n(after, 6));
        let p = rng.gen_range(min_lead..=len - 2);
        obs[lead + p] = other_vocal(&mut rng, run_label);
        let smoothed = crate::vocal::smooth_sequence(&obs, hmm, window)?;
        if smoothed[lead + p..lead + len].iter().all(|&l| l == run_label) {
            corrected += 1;
        }
    }
    Ok(corrected as f64 / cases as f64)
}

/// One synthetic listening session summarized for the engagement models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementSample {
    pub subject_id: String,
    pub song_id: String,
    pub rating: u8,
    pub familiar: bool,
    pub features: ReactionFeatures,
    pub pattern: Vec<u8>,
    pub vocal_events: Vec<ReactionEvent>,
    pub motion_events: Vec<ReactionEvent>,
}

pub const ENGAGEMENT_SESSION_S: usize = 180;

/// Lays `(label, seconds)` pieces on one timeline in random order with
/// random gaps.
fn lay_out(rng: &mut ChaCha8Rng, mut pieces: Vec<(ReactionLabel, usize)>, duration: usize) -> Vec<ReactionEvent> {
    pieces.retain(|p| p.1 > 0);
    pieces.shuffle(rng);
    let busy: usize = pieces.iter().map(|p| p.1).sum();
    let free = duration.saturating_sub(busy);
    let mut cuts: Vec<usize> = (0..pieces.len()).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut events = Vec::with_capacity(pieces.len());
    let mut t = 0;
    let mut prev_cut = 0;
    for ((label, len), cut) in pieces.into_iter().zip(cuts) {
        t += cut - prev_cut;
        prev_cut = cut;
        events.push(ReactionEvent {
            label,
            t_start: t as f64,
            t_end: (t + len) as f64,
        });
        t += len;
    }
    events
}

/// Splits `total` seconds into `k` pieces of at least one second each.
fn split(rng: &mut ChaCha8Rng, total: usize, k: usize) -> Vec<usize> {
    if total == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, total);
    let mut cuts: Vec<usize> = (0..k - 1).map(|_| rng.gen_range(1..total)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Sessions whose reaction amounts follow the listener's rating and
/// familiarity. Head motion grows with rating; singing grows with rating
/// and strongly with familiarity; whistling is unrelated noise.
pub fn engagement_corpus(n_subjects: usize, per_subject: usize, seed: u64) -> Result<Vec<EngagementSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "engagement"));
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let d = ENGAGEMENT_SESSION_S;
    let mut samples = Vec::with_capacity(n_subjects * per_subject);
    for i in 0..n_subjects * per_subject {
        let rating: u8 = rng.gen_range(1..=5);
        let familiar = rng.gen_bool(0.5);
        let r = (rating - 1) as f64;
        let frac = |x: f64| (x.clamp(0.0, 0.45) * d as f64).round() as usize;
        let head = frac(0.06 * r + 0.02 * noise.sample(&mut rng));
        let sing = frac(0.015 * r + if familiar { 0.12 } else { 0.0 } + 0.02 * noise.sample(&mut rng));
        let whistle = frac(0.02 + 0.01 * noise.sample(&mut rng));
        let mut vocal_pieces: Vec<(ReactionLabel, usize)> = {
            let k = rng.gen_range(1..=4);
            split(&mut rng, sing, k)
        }
            .into_iter()
            .map(|s| (ReactionLabel::SingingHumming, s))
            .collect();
        vocal_pieces.extend({
            let k = rng.gen_range(1..=2);
            split(&mut rng, whistle, k)
        }.into_iter().map(|s| (ReactionLabel::Whistling, s)));
        let motion_pieces = {
            let k = rng.gen_range(1..=5);
            split(&mut rng, head, k)
        }
            .into_iter()
            .map(|s| (ReactionLabel::HeadMotion, s))
            .collect();
        let vocal_events = lay_out(&mut rng, vocal_pieces, d);
        let motion_events = lay_out(&mut rng, motion_pieces, d);
        let features = reaction_features(&vocal_events, &motion_events, d as f64)?;
        let pattern = reaction_index_sequence(
            &expand_events_to_labels(&vocal_events, d),
            &expand_events_to_labels(&motion_events, d),
        )?;
        samples.push(EngagementSample {
            subject_id: format!("p{:02}", i % n_subjects),
            song_id: format!("track{i:04}"),
            rating,
            familiar,
            features,
            pattern,
            vocal_events,
            motion_events,
        });
    }
    Ok(samples)
}

pub const TREE_DEPTH: usize = 4;
pub const TREE_MIN_LEAF: usize = 2;

/// Leave-one-subject-out rating prediction; returns the MAE over all
/// held-out sessions.
pub fn loso_rating(samples: &[EngagementSample]) -> Result<f64> {
    let subjects: Vec<&str> = samples.iter().map(|s| s.subject_id.as_str()).collect();
    let mut pred = vec![0.0; samples.len()];
    for fold in loso_split(&subjects)? {
        let x: Vec<Vec<f64>> = fold.train.iter().map(|&i| samples[i].features.to_vec()).collect();
        let y: Vec<u32> = fold.train.iter().map(|&i| samples[i].rating as u32).collect();
        let tree = train_tree(&x, &y, TREE_DEPTH, TREE_MIN_LEAF)?;
        for &i in &fold.test {
            pred[i] = predict_rating(&samples[i].features, &tree) as f64;
        }
    }
    let truth: Vec<f64> = samples.iter().map(|s| s.rating as f64).collect();
    mean_absolute_error(&pred, &truth)
}

/// Familiarity F1 (known songs positive) on a seeded held-out fraction.
pub fn familiarity_holdout(samples: &[EngagementSample], test_fraction: f64, seed: u64) -> Result<f64> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::param("test fraction must lie in (0, 1)"));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, "familiarity")));
    let n_test = ((samples.len() as f64 * test_fraction).round() as usize).clamp(1, samples.len() - 1);
    let (test, train) = idx.split_at(n_test);
    let x: Vec<Vec<f64>> = train.iter().map(|&i| samples[i].features.to_vec()).collect();
    let y: Vec<u32> = train.iter().map(|&i| samples[i].familiar as u32).collect();
    let tree = train_tree(&x, &y, TREE_DEPTH, TREE_MIN_LEAF)?;
    let pred: Vec<bool> = test
        .iter()
        .map(|&i| predict_familiarity(&samples[i].features, &tree) == Familiarity::Known)
        .collect();
    let truth: Vec<bool> = test.iter().map(|&i| samples[i].familiar).collect();
    binary_f1(&pred, &truth)
}
