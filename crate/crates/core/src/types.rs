//! Label taxonomy and event timelines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Final per-second reaction label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionLabel {
    NonReaction,
    SingingHumming,
    Whistling,
    HeadMotion,
}

impl ReactionLabel {
    pub const ALL: [ReactionLabel; 4] = [
        ReactionLabel::NonReaction,
        ReactionLabel::SingingHumming,
        ReactionLabel::Whistling,
        ReactionLabel::HeadMotion,
    ];

    /// Labels the vocal pipeline can emit, in HMM state order.
    pub const VOCAL: [ReactionLabel; 3] = [
        ReactionLabel::NonReaction,
        ReactionLabel::SingingHumming,
        ReactionLabel::Whistling,
    ];

    pub const MOTION: [ReactionLabel; 2] = [ReactionLabel::NonReaction, ReactionLabel::HeadMotion];

    pub fn as_str(self) -> &'static str {
        match self {
            ReactionLabel::NonReaction => "non_reaction",
            ReactionLabel::SingingHumming => "singing_humming",
            ReactionLabel::Whistling => "whistling",
            ReactionLabel::HeadMotion => "head_motion",
        }
    }

    /// Position in [`ReactionLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_reaction(self) -> bool {
        self != ReactionLabel::NonReaction
    }

    pub fn is_vocal(self) -> bool {
        matches!(self, ReactionLabel::SingingHumming | ReactionLabel::Whistling)
    }
}

impl fmt::Display for ReactionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReactionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReactionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown reaction label {s:?}")))
    }
}

/// Label as it travels between classification and correction.
///
/// `Ambiguous` and `Uncertain` never leave the vocal pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineLabel {
    Final(ReactionLabel),
    /// Top-1 was speech or music: singing/humming or non-reaction.
    Ambiguous,
    /// Low-margin output with a target class in the top-k. The candidate is
    /// always `SingingHumming` or `Whistling`.
    Uncertain(ReactionLabel),
}

impl PipelineLabel {
    pub fn needs_correction(self) -> bool {
        !matches!(self, PipelineLabel::Final(_))
    }
}

/// A maximal span of one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionEvent {
    pub label: ReactionLabel,
    pub t_start: f64,
    pub t_end: f64,
}

impl ReactionEvent {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Run-length encodes a per-second label sequence into events.
pub fn merge_labels_to_events(labels: &[ReactionLabel]) -> Vec<ReactionEvent> {
    let mut events: Vec<ReactionEvent> = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let t = i as f64;
        match events.last_mut() {
            Some(last) if last.label == label => last.t_end = t + 1.0,
            _ => events.push(ReactionEvent {
                label,
                t_start: t,
                t_end: t + 1.0,
            }),
        }
    }
    events
}

/// Per-second labels over `n_seconds`, taking the event that covers each
/// second's midpoint. Uncovered seconds are `NonReaction`; when events overlap
/// the last one listed wins.
pub fn expand_events_to_labels(events: &[ReactionEvent], n_seconds: usize) -> Vec<ReactionLabel> {
    let mut labels = vec![ReactionLabel::NonReaction; n_seconds];
    for ev in events {
        let first = (ev.t_start - 0.5).ceil().max(0.0) as usize;
        let mut i = first;
        while i < n_seconds && (i as f64 + 0.5) < ev.t_end {
            if i as f64 + 0.5 >= ev.t_start {
                labels[i] = ev.label;
            }
            i += 1;
        }
    }
    labels
}

/// Per-stage segment accounting for one pipeline run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub total: usize,
    pub motion_filtered: usize,
    pub sound_filtered: usize,
    /// Number of classifier invocations.
    pub classified: usize,
}

impl FilterStats {
    pub fn filtered(&self) -> usize {
        self.motion_filtered + self.sound_filtered
    }

    /// Filtered segments over total segments; 0 for an empty run.
    pub fn filtering_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.filtered() as f64 / self.total as f64
        }
    }

    pub fn accumulate(&mut self, other: &FilterStats) {
        self.total += other.total;
        self.motion_filtered += other.motion_filtered;
        self.sound_filtered += other.sound_filtered;
        self.classified += other.classified;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ReactionLabel::*;

    fn ev(label: ReactionLabel, a: f64, b: f64) -> ReactionEvent {
        ReactionEvent {
            label,
            t_start: a,
            t_end: b,
        }
    }

    #[test]
    fn merge_runs() {
        let events = merge_labels_to_events(&[
            SingingHumming,
            SingingHumming,
            NonReaction,
            NonReaction,
            NonReaction,
        ]);
        assert_eq!(
            events,
            vec![ev(SingingHumming, 0.0, 2.0), ev(NonReaction, 2.0, 5.0)]
        );
    }

    #[test]
    fn merge_single_and_alternating() {
        assert_eq!(
            merge_labels_to_events(&[NonReaction]),
            vec![ev(NonReaction, 0.0, 1.0)]
        );
        let events = merge_labels_to_events(&[SingingHumming, Whistling, SingingHumming]);
        assert_eq!(events.len(), 3);
        assert!(events.iter().all(|e| e.duration() == 1.0));
    }

    #[test]
    fn label_names_round_trip() {
        for l in ReactionLabel::ALL {
            assert_eq!(l.as_str().parse::<ReactionLabel>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.as_str()));
            assert_eq!(serde_json::from_str::<ReactionLabel>(&json).unwrap(), l);
        }
        assert!("singing".parse::<ReactionLabel>().is_err());
    }

    #[test]
    fn filtering_ratio_of_empty_run_is_zero() {
        assert_eq!(FilterStats::default().filtering_ratio(), 0.0);
    }

    fn label_strategy() -> impl Strategy<Value = ReactionLabel> {
        prop::sample::select(ReactionLabel::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn expand_inverts_merge(labels in prop::collection::vec(label_strategy(), 1..60)) {
            let events = merge_labels_to_events(&labels);
            prop_assert_eq!(expand_events_to_labels(&events, labels.len()), labels.clone());
            for w in events.windows(2) {
                prop_assert!(w[0].label != w[1].label);
                prop_assert_eq!(w[0].t_end, w[1].t_start);
            }
            prop_assert_eq!(events[0].t_start, 0.0);
            prop_assert_eq!(events.last().unwrap().t_end, labels.len() as f64);
        }

        #[test]
        fn merge_inverts_expand(runs in prop::collection::vec((label_strategy(), 1usize..6), 1..20)) {
            let mut events: Vec<ReactionEvent> = Vec::new();
            let mut t = 0.0;
            for (label, len) in runs {
                if events.last().map(|e| e.label) == Some(label) {
                    continue;
                }
                events.push(ev(label, t, t + len as f64));
                t += len as f64;
            }
            let labels = expand_events_to_labels(&events, t as usize);
            prop_assert_eq!(merge_labels_to_events(&labels), events);
        }
    }
}
