//! Output types shared by the vocal and motion pipelines.

use serde::{Deserialize, Serialize};

use crate::config::RangeFilter;
use crate::dsp::movement_level;
use crate::types::{FilterStats, PipelineLabel, ReactionEvent, ReactionLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterDecision {
    FilteredNonReaction,
    Pass,
}

/// Closed-interval movement-level check used by both pipelines. Fewer than
/// two samples never filter.
pub fn range_prefilter(accel: &[[f64; 3]], filter: &RangeFilter) -> FilterDecision {
    match movement_level(accel) {
        Ok(level) if !filter.passes(level) => FilterDecision::FilteredNonReaction,
        _ => FilterDecision::Pass,
    }
}

/// What happened to one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum SegmentOutcome {
    MotionFiltered,
    SoundFiltered,
    /// Unfiltered, but too early in the session for a full window.
    ColdStart,
    Classified {
        mapped: PipelineLabel,
        /// DTW distance when melody correction ran.
        distance: Option<f64>,
        /// Classifier probability of the reaction class, when there is one.
        score: Option<f64>,
        label: ReactionLabel,
    },
    /// A stage failed; the segment was set to non-reaction.
    Failed,
}

impl SegmentOutcome {
    pub fn is_filtered(&self) -> bool {
        matches!(self, SegmentOutcome::MotionFiltered | SegmentOutcome::SoundFiltered)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub segment: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final per-second labels.
    pub labels: Vec<ReactionLabel>,
    /// Per-second labels before smoothing.
    pub raw_labels: Vec<ReactionLabel>,
    pub outcomes: Vec<SegmentOutcome>,
    pub events: Vec<ReactionEvent>,
    pub stats: FilterStats,
    pub diagnostics: Vec<Diagnostic>,
}

/// Forces filtered seconds back to non-reaction after smoothing.
pub(crate) fn pin_filtered(labels: &mut [ReactionLabel], outcomes: &[SegmentOutcome]) {
    for (l, o) in labels.iter_mut().zip(outcomes) {
        if o.is_filtered() {
            *l = ReactionLabel::NonReaction;
        }
    }
}
