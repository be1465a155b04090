//! Engagement applications on detected events: reaction features, decision
//! trees for rating and familiarity, and pattern-based recommendation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::dtw;
use crate::error::{Error, Result};
use crate::types::{ReactionEvent, ReactionLabel};

const SPAN_TOLERANCE: f64 = 1e-9;

/// Normalized duration and per-minute count of one label.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelStat {
    pub normalized_duration: f64,
    pub count_per_min: f64,
}

/// Per-label statistics of a session. Non-reaction appears once per
/// timeline because the vocal and motion timelines are separate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReactionFeatures {
    pub vocal_non_reaction: LabelStat,
    pub singing_humming: LabelStat,
    pub whistling: LabelStat,
    pub motion_non_reaction: LabelStat,
    pub head_motion: LabelStat,
}

impl ReactionFeatures {
    pub const LEN: usize = 10;
    pub const NAMES: [&'static str; Self::LEN] = [
        "vocal_non_reaction_duration",
        "vocal_non_reaction_count",
        "singing_humming_duration",
        "singing_humming_count",
        "whistling_duration",
        "whistling_count",
        "motion_non_reaction_duration",
        "motion_non_reaction_count",
        "head_motion_duration",
        "head_motion_count",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        [
            self.vocal_non_reaction,
            self.singing_humming,
            self.whistling,
            self.motion_non_reaction,
            self.head_motion,
        ]
        .iter()
        .flat_map(|s| [s.normalized_duration, s.count_per_min])
        .collect()
    }
}

/// Statistics of one timeline. Non-reaction duration is the complement of
/// the reaction durations; its count is the number of gaps between them.
fn timeline(events: &[ReactionEvent], reactions: &[ReactionLabel], duration: f64) -> Result<Vec<LabelStat>> {
    let minutes = duration / 60.0;
    let mut stats = vec![LabelStat::default(); reactions.len() + 1];
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for e in events {
        if e.t_start < -SPAN_TOLERANCE || e.t_end > duration + SPAN_TOLERANCE || e.t_end < e.t_start {
            return Err(Error::param(format!(
                "event {}..{} outside session span 0..{duration}",
                e.t_start, e.t_end
            )));
        }
        if let Some(k) = reactions.iter().position(|&l| l == e.label) {
            stats[k + 1].normalized_duration += e.duration() / duration;
            stats[k + 1].count_per_min += 1.0 / minutes;
            spans.push((e.t_start, e.t_end));
        } else if e.label != ReactionLabel::NonReaction {
            return Err(Error::param(format!("label {} does not belong on this timeline", e.label)));
        }
    }
    let reacted: f64 = stats[1..].iter().map(|s| s.normalized_duration).sum();
    stats[0].normalized_duration = (1.0 - reacted).max(0.0);
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = 0usize;
    let mut cursor = 0.0;
    for (s, e) in spans {
        if s > cursor + SPAN_TOLERANCE {
            gaps += 1;
        }
        cursor = f64::max(cursor, e);
    }
    if duration > cursor + SPAN_TOLERANCE {
        gaps += 1;
    }
    stats[0].count_per_min = gaps as f64 / minutes;
    Ok(stats)
}

pub fn reaction_features(
    vocal_events: &[ReactionEvent],
    motion_events: &[ReactionEvent],
    session_duration_s: f64,
) -> Result<ReactionFeatures> {
    if !(session_duration_s > 0.0) {
        return Err(Error::param("session duration must be positive"));
    }
    let v = timeline(
        vocal_events,
        &[ReactionLabel::SingingHumming, ReactionLabel::Whistling],
        session_duration_s,
    )?;
    let m = timeline(motion_events, &[ReactionLabel::HeadMotion], session_duration_s)?;
    Ok(ReactionFeatures {
        vocal_non_reaction: v[0],
        singing_humming: v[1],
        whistling: v[2],
        motion_non_reaction: m[0],
        head_motion: m[1],
    })
}

/// CART tree node. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub max_depth: usize,
    pub root: TreeNode,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(targets: &[u32], idx: &[usize]) -> u32 {
    let mut counts = std::collections::BTreeMap::new();
    for &i in idx {
        *counts.entry(targets[i]).or_insert(0usize) += 1;
    }
    // BTreeMap iterates in ascending class order, so `>` keeps the smaller class on ties.
    let mut best = (0u32, 0usize);
    for (&c, &n) in &counts {
        if n > best.1 {
            best = (c, n);
        }
    }
    best.0
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u32],
    classes: Vec<u32>,
    max_depth: usize,
    min_leaf: usize,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &i in idx {
            let k = self.classes.binary_search(&self.y[i]).expect("known class");
            c[k] += 1;
        }
        c
    }

    /// Best (feature, threshold, weighted impurity) over all midpoints.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let n_features = self.x[0].len();
        let parent = gini(&self.counts(idx), idx.len());
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..n_features {
            let mut order = idx.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.classes.len()];
            let mut right = self.counts(idx);
            for split in 1..order.len() {
                let moved = order[split - 1];
                let k = self.classes.binary_search(&self.y[moved]).expect("known class");
                left[k] += 1;
                right[k] -= 1;
                let (lo, hi) = (self.x[moved][f], self.x[order[split]][f]);
                if lo == hi || split < self.min_leaf || order.len() - split < self.min_leaf {
                    continue;
                }
                let n = order.len() as f64;
                let impurity = (split as f64 * gini(&left, split)
                    + (order.len() - split) as f64 * gini(&right, order.len() - split))
                    / n;
                if impurity < parent - 1e-12 && best.is_none_or(|b| impurity < b.2 - 1e-12) {
                    best = Some((f, lo + (hi - lo) / 2.0, impurity));
                }
            }
        }
        best
    }

    fn build(&self, idx: &[usize], depth: usize) -> TreeNode {
        let leaf = TreeNode::Leaf {
            class: majority(self.y, idx),
        };
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return leaf;
        }
        if self.counts(idx).iter().filter(|&&c| c > 0).count() < 2 {
            return leaf;
        }
        let Some((feature, threshold, _)) = self.best_split(idx) else {
            return leaf;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.build(&l, depth + 1)),
            right: Box::new(self.build(&r, depth + 1)),
        }
    }
}

/// Greedy CART with Gini impurity. Degenerate inputs give a single leaf.
pub fn train_tree(x: &[Vec<f64>], y: &[u32], max_depth: usize, min_leaf: usize) -> Result<DecisionTree> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::param(format!(
            "need matching non-empty samples and targets ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n_features = x[0].len();
    if x.iter().any(|r| r.len() != n_features || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::param("feature rows must share a length and be finite"));
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let builder = Builder {
        x,
        y,
        classes,
        max_depth,
        min_leaf: min_leaf.max(1),
    };
    let idx: Vec<usize> = (0..x.len()).collect();
    let root = if n_features == 0 {
        TreeNode::Leaf { class: majority(y, &idx) }
    } else {
        builder.build(&idx, 0)
    };
    Ok(DecisionTree {
        n_features,
        max_depth,
        root,
    })
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> u32 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn d(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Rejects out-of-range feature indices and non-finite thresholds.
    pub fn validate(&self) -> Result<()> {
        fn walk(n: &TreeNode, nf: usize) -> Result<()> {
            match n {
                TreeNode::Leaf { .. } => Ok(()),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= nf || !threshold.is_finite() {
                        return Err(Error::param(format!("bad split on feature {feature}")));
                    }
                    walk(left, nf)?;
                    walk(right, nf)
                }
            }
        }
        walk(&self.root, self.n_features)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let tree: DecisionTree = serde_json::from_str(&text)?;
        tree.validate()?;
        Ok(tree)
    }
}

pub fn predict_rating(features: &ReactionFeatures, tree: &DecisionTree) -> u8 {
    tree.predict(&features.to_vec()).clamp(1, 5) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Familiarity {
    Unknown = 0,
    Known = 1,
}

impl Familiarity {
    pub fn from_class(c: u32) -> Self {
        if c == 0 {
            Familiarity::Unknown
        } else {
            Familiarity::Known
        }
    }
}

pub fn predict_familiarity(features: &ReactionFeatures, tree: &DecisionTree) -> Familiarity {
    Familiarity::from_class(tree.predict(&features.to_vec()))
}

/// Per-second index: singing 1, whistling 2, head motion 3, otherwise 0.
/// A vocal reaction wins when both timelines react in the same second.
pub fn reaction_index_sequence(vocal: &[ReactionLabel], motion: &[ReactionLabel]) -> Result<Vec<u8>> {
    if vocal.len() != motion.len() {
        return Err(Error::param(format!(
            "timelines differ in length ({} vs {})",
            vocal.len(),
            motion.len()
        )));
    }
    Ok(vocal
        .iter()
        .zip(motion)
        .map(|(v, m)| match (v, m) {
            (ReactionLabel::SingingHumming, _) => 1,
            (ReactionLabel::Whistling, _) => 2,
            (_, ReactionLabel::HeadMotion) => 3,
            _ => 0,
        })
        .collect())
}

/// DTW distance between index sequences with 0/1 local cost.
pub fn pattern_distance(a: &[u8], b: &[u8]) -> f64 {
    dtw(a, b, |x, y| (x != y) as u8 as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub song_id: String,
    pub distance: f64,
}

/// Pool songs ranked by ascending pattern distance, ties by song id.
pub fn recommend(pattern: &[u8], pool: &[(String, Vec<u8>)], top_n: usize) -> Vec<Recommendation> {
    let mut ranked: Vec<Recommendation> = pool
        .iter()
        .filter(|(_, seq)| !seq.is_empty() && !pattern.is_empty())
        .map(|(id, seq)| Recommendation {
            song_id: id.clone(),
            distance: pattern_distance(pattern, seq),
        })
        .collect();
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.song_id.cmp(&b.song_id)));
    ranked.truncate(top_n);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ReactionLabel::*;

    fn ev(label: ReactionLabel, t0: f64, t1: f64) -> ReactionEvent {
        ReactionEvent {
            label,
            t_start: t0,
            t_end: t1,
        }
    }

    #[test]
    fn feature_arithmetic() {
        let f = reaction_features(&[ev(SingingHumming, 10.0, 40.0)], &[], 60.0).unwrap();
        assert_eq!(f.singing_humming.normalized_duration, 0.5);
        assert_eq!(f.vocal_non_reaction.normalized_duration, 0.5);
        assert_eq!(f.vocal_non_reaction.count_per_min, 2.0);

        let none = reaction_features(&[], &[], 60.0).unwrap();
        assert_eq!(none.vocal_non_reaction.normalized_duration, 1.0);
        assert_eq!(none.motion_non_reaction.normalized_duration, 1.0);
        assert_eq!(none.head_motion, LabelStat::default());

        let m = [ev(HeadMotion, 0.0, 10.0), ev(HeadMotion, 30.0, 40.0), ev(HeadMotion, 60.0, 70.0)];
        let f = reaction_features(&[], &m, 120.0).unwrap();
        assert!((f.head_motion.normalized_duration - 0.25).abs() < 1e-12);
        assert!((f.head_motion.count_per_min - 1.5).abs() < 1e-12);
    }

    #[test]
    fn events_outside_span_rejected() {
        assert!(reaction_features(&[ev(Whistling, 50.0, 61.0)], &[], 60.0).is_err());
        assert!(reaction_features(&[], &[ev(SingingHumming, 0.0, 1.0)], 60.0).is_err());
    }

    #[test]
    fn separable_one_feature() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<u32> = (0..10).map(|i| (i >= 5) as u32).collect();
        let t = train_tree(&x, &y, 4, 2).unwrap();
        assert_eq!(t.depth(), 1);
        assert!(matches!(t.root, TreeNode::Split { threshold, .. } if threshold == 4.5));
        assert!(x.iter().zip(&y).all(|(r, &c)| t.predict(r) == c));
    }

    #[test]
    fn identical_features_give_majority_leaf() {
        let x = vec![vec![1.0, 2.0]; 5];
        let t = train_tree(&x, &[3, 1, 3, 1, 2], 4, 1).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { class: 1 });
        let empty = train_tree(&[vec![], vec![]], &[4, 4], 4, 1).unwrap();
        assert_eq!(empty.predict(&[]), 4);
    }

    #[test]
    fn xor_depth_two() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            for _ in 0..3 {
                x.push(vec![a, b]);
                y.push(((a != b) as u32) + 1);
            }
        }
        // Gini cannot see XOR at the root; a slight imbalance breaks the tie.
        x.push(vec![0.0, 0.0]);
        y.push(1);
        let t = train_tree(&x, &y, 2, 1).unwrap();
        assert!(t.depth() <= 2);
        assert!(x.iter().zip(&y).all(|(r, &c)| t.predict(r) == c));
    }

    #[test]
    fn tree_json_round_trip() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 4) as f64, (i / 4) as f64]).collect();
        let y: Vec<u32> = (0..12).map(|i| (i % 3) as u32 + 1).collect();
        let t = train_tree(&x, &y, 3, 1).unwrap();
        let back: DecisionTree = serde_json::from_str(&t.to_json_pretty()).unwrap();
        assert_eq!(back, t);
        back.validate().unwrap();
    }

    #[test]
    fn rating_and_familiarity_from_leaves() {
        let leaf = |c| DecisionTree {
            n_features: ReactionFeatures::LEN,
            max_depth: 4,
            root: TreeNode::Leaf { class: c },
        };
        let f = ReactionFeatures::default();
        assert_eq!(predict_rating(&f, &leaf(4)), 4);
        assert_eq!(predict_rating(&f, &leaf(9)), 5);
        assert_eq!(predict_familiarity(&f, &leaf(1)), Familiarity::Known);
    }

    #[test]
    fn index_sequence_precedence() {
        assert_eq!(
            reaction_index_sequence(&[SingingHumming, NonReaction], &[HeadMotion, HeadMotion]).unwrap(),
            vec![1, 3]
        );
        assert_eq!(reaction_index_sequence(&[Whistling], &[NonReaction]).unwrap(), vec![2]);
        assert_eq!(reaction_index_sequence(&[NonReaction; 3], &[NonReaction; 3]).unwrap(), vec![0; 3]);
        assert!(reaction_index_sequence(&[NonReaction], &[]).is_err());
    }

    #[test]
    fn recommendation_order() {
        let pool = vec![("B".to_string(), vec![0, 0, 0]), ("A".to_string(), vec![1, 1, 0])];
        let r = recommend(&[1, 1, 0], &pool, 5);
        assert_eq!(r[0], Recommendation { song_id: "A".into(), distance: 0.0 });
        assert_eq!(r[1], Recommendation { song_id: "B".into(), distance: 2.0 });
        let one = recommend(&[3], &pool[..1], 5);
        assert_eq!(one.len(), 1);
    }

    proptest! {
        #[test]
        fn durations_sum_to_one(
            cuts in prop::collection::vec(0u32..600, 0..12),
            labels in prop::collection::vec(0u8..3, 12),
        ) {
            let mut cuts = cuts;
            cuts.sort_unstable();
            cuts.dedup();
            let events: Vec<ReactionEvent> = cuts
                .windows(2)
                .zip(&labels)
                .map(|(w, &l)| ev([NonReaction, SingingHumming, Whistling][l as usize], w[0] as f64 / 10.0, w[1] as f64 / 10.0))
                .collect();
            let f = reaction_features(&events, &[], 60.0).unwrap();
            let total = f.vocal_non_reaction.normalized_duration
                + f.singing_humming.normalized_duration
                + f.whistling.normalized_duration;
            prop_assert!((total - 1.0).abs() <= 1e-6);
            prop_assert!((f.motion_non_reaction.normalized_duration - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn scaling_preserves_durations(t0 in 0.0f64..20.0, len in 0.5f64..20.0, k in 1.0f64..4.0) {
            let a = reaction_features(&[ev(Whistling, t0, t0 + len)], &[], 60.0).unwrap();
            let b = reaction_features(&[ev(Whistling, k * t0, k * (t0 + len))], &[], 60.0 * k).unwrap();
            prop_assert!((a.whistling.normalized_duration - b.whistling.normalized_duration).abs() < 1e-12);
        }

        #[test]
        fn tree_respects_depth(
            rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 1u32..6), 2..60),
            depth in 0usize..5,
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
            let y: Vec<u32> = rows.iter().map(|r| r.2).collect();
            let t = train_tree(&x, &y, depth, 2).unwrap();
            prop_assert!(t.depth() <= depth);
            for r in &x {
                prop_assert!(y.contains(&t.predict(r)));
            }
        }

        #[test]
        fn recommendation_ignores_pool_order(
            pool in prop::collection::vec(prop::collection::vec(0u8..4, 1..8), 1..8),
            pattern in prop::collection::vec(0u8..4, 1..8),
            rot in 0usize..8,
        ) {
            let pool: Vec<(String, Vec<u8>)> = pool.into_iter().enumerate().map(|(i, p)| (format!("s{i}"), p)).collect();
            let mut rotated = pool.clone();
            rotated.rotate_left(rot % pool.len());
            rotated.reverse();
            prop_assert_eq!(recommend(&pattern, &pool, 5), recommend(&pattern, &rotated, 5));
        }
    }
}
