//! Sound-event scores, label mapping and rank-constraint relaxation.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ClassNames;
use crate::dsp::LogMelPatch;
use crate::error::{Error, Result};
use crate::types::{PipelineLabel, ReactionLabel};

const SUM_TOLERANCE: f64 = 1e-6;

/// Class confidences over a named class list, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    class_names: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(class_names: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if class_names.is_empty() || class_names.len() != scores.len() {
            return Err(Error::param(format!(
                "score vector needs matching non-empty lists ({} names, {} scores)",
                class_names.len(),
                scores.len()
            )));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::param("scores must lie in [0, 1]"));
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::param(format!("scores sum to {sum}, not 1")));
        }
        Ok(ScoreVector {
            class_names,
            scores,
        })
    }

    /// Rescales non-negative raw scores to unit sum. Use for truncated top-k
    /// lists or sigmoid outputs that do not sum to 1.
    pub fn normalized(class_names: Vec<String>, raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::param("raw scores must be finite and non-negative"));
        }
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::param("raw scores sum to zero"));
        }
        ScoreVector::new(class_names, raw.into_iter().map(|s| s / sum).collect())
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Class indices by descending score; equal scores keep list order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }

    pub fn top1(&self) -> &str {
        &self.class_names[self.ranking()[0]]
    }

    /// Top-1 minus top-2 confidence.
    pub fn least_margin(&self) -> Option<f64> {
        let r = self.ranking();
        (r.len() >= 2).then(|| self.scores[r[0]] - self.scores[r[1]])
    }
}

/// Input handed to a sound-event classifier for one segment.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierInput<'a> {
    pub index: usize,
    /// Absent when the session carries precomputed scores instead of audio.
    pub patch: Option<&'a LogMelPatch>,
}

pub trait SoundEventClassifier: Send + Sync {
    fn classify(&self, input: &ClassifierInput<'_>) -> Result<ScoreVector>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClassGroup {
    Singing,
    Whistling,
    Ambiguous,
}

fn group_of(name: &str, names: &ClassNames) -> Option<ClassGroup> {
    let hit = |set: &[String]| set.iter().any(|s| s.eq_ignore_ascii_case(name));
    if hit(&names.singing) {
        Some(ClassGroup::Singing)
    } else if hit(&names.whistling) {
        Some(ClassGroup::Whistling)
    } else if hit(&names.ambiguous) {
        Some(ClassGroup::Ambiguous)
    } else {
        None
    }
}

/// Maps the top-1 class: singing/humming and whistling classes map to their
/// reaction, speech/music to `Ambiguous`, everything else to non-reaction.
pub fn map_labels(scores: &ScoreVector, names: &ClassNames) -> Result<PipelineLabel> {
    if scores.is_empty() {
        return Err(Error::param("empty score vector"));
    }
    Ok(match group_of(scores.top1(), names) {
        Some(ClassGroup::Singing) => PipelineLabel::Final(ReactionLabel::SingingHumming),
        Some(ClassGroup::Whistling) => PipelineLabel::Final(ReactionLabel::Whistling),
        Some(ClassGroup::Ambiguous) => PipelineLabel::Ambiguous,
        None => PipelineLabel::Final(ReactionLabel::NonReaction),
    })
}

/// Falls back to the top-k list when the least margin is below
/// `margin_threshold`: the first target class found marks the segment
/// uncertain with the corresponding candidate.
pub fn relax_rank(
    scores: &ScoreVector,
    names: &ClassNames,
    margin_threshold: f64,
    k: usize,
) -> Result<PipelineLabel> {
    if k < 1 {
        return Err(Error::param("relaxation k must be >= 1"));
    }
    let margin = scores
        .least_margin()
        .ok_or_else(|| Error::param("rank relaxation needs at least two classes"))?;
    if margin >= margin_threshold {
        return map_labels(scores, names);
    }
    for &i in scores.ranking().iter().take(k) {
        match group_of(&scores.class_names()[i], names) {
            Some(ClassGroup::Singing | ClassGroup::Ambiguous) => {
                return Ok(PipelineLabel::Uncertain(ReactionLabel::SingingHumming))
            }
            Some(ClassGroup::Whistling) => {
                return Ok(PipelineLabel::Uncertain(ReactionLabel::Whistling))
            }
            None => {}
        }
    }
    Ok(PipelineLabel::Final(ReactionLabel::NonReaction))
}

/// One line of `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub index: usize,
    pub classes: Vec<String>,
    pub scores: Vec<f64>,
}

/// Minimum entries per `scores.jsonl` line so top-5 relaxation is defined.
pub const MIN_RECORD_CLASSES: usize = 5;

/// Replays per-segment scores computed offline.
#[derive(Debug, Clone, Default)]
pub struct ScorePlayback {
    by_index: HashMap<usize, ScoreVector>,
}

impl ScorePlayback {
    pub fn from_records(records: impl IntoIterator<Item = ScoreRecord>) -> Result<Self> {
        let mut by_index = HashMap::new();
        for r in records {
            if r.classes.len() < MIN_RECORD_CLASSES {
                return Err(Error::param(format!(
                    "segment {}: need at least {MIN_RECORD_CLASSES} classes",
                    r.index
                )));
            }
            let sv = ScoreVector::normalized(r.classes, r.scores)?;
            if by_index.insert(r.index, sv).is_some() {
                return Err(Error::param(format!("duplicate segment index {}", r.index)));
            }
        }
        Ok(ScorePlayback { by_index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut records = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            records.push(rec);
        }
        Self::from_records(records).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.by_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_index.is_empty()
    }
}

impl SoundEventClassifier for ScorePlayback {
    fn classify(&self, input: &ClassifierInput<'_>) -> Result<ScoreVector> {
        self.by_index
            .get(&input.index)
            .cloned()
            .ok_or_else(|| Error::InsufficientData(format!("no scores for segment {}", input.index)))
    }
}

pub fn write_score_records(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("score record serializes"));
        out.push('\n');
    }
    out
}
