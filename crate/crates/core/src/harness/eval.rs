//! Per-second scoring and leave-one-subject-out splits.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FilterStats, ReactionLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ReactionLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Seconds with this true label.
    pub support: usize,
    /// Seconds predicted as this label.
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_segments: usize,
    /// Classes present in the truth or the predictions, in label order.
    pub classes: Vec<ClassMetrics>,
    pub macro_f1: f64,
    /// `confusion[truth][pred]` over all four labels.
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filtering_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
}

impl EvalReport {
    pub fn class(&self, label: ReactionLabel) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// F1 of one label, 0 when it never occurs.
    pub fn f1(&self, label: ReactionLabel) -> f64 {
        self.class(label).map_or(0.0, |c| c.f1)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(pred: &[ReactionLabel], truth: &[ReactionLabel], stats: Option<&FilterStats>) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::param(format!(
            "{} predictions for {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    let n = ReactionLabel::ALL.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
    }
    let present: BTreeSet<usize> = pred.iter().chain(truth).map(|l| l.index()).collect();
    let classes: Vec<ClassMetrics> = present
        .iter()
        .map(|&k| {
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: ReactionLabel::ALL[k],
                precision,
                recall,
                f1,
                support,
                predicted,
            }
        })
        .collect();
    let macro_f1 = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64
    };
    Ok(EvalReport {
        n_segments: pred.len(),
        classes,
        macro_f1,
        confusion,
        filtering_ratio: stats.map(FilterStats::filtering_ratio),
        mae: None,
    })
}

pub fn mean_absolute_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::param("MAE needs equal, non-empty sequences"));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Binary F1 of the positive class.
pub fn binary_f1(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::param("binary F1 needs equal lengths"));
    }
    let tp = pred.iter().zip(truth).filter(|(p, t)| **p && **t).count();
    let fp = pred.iter().zip(truth).filter(|(p, t)| **p && !**t).count();
    let fn_ = pred.iter().zip(truth).filter(|(p, t)| !**p && **t).count();
    let (p, r) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
    Ok(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
}

/// One held-out subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct subject, in subject order. `subjects[i]` is the
/// subject of item `i`.
pub fn loso_split<S: AsRef<str>>(subjects: &[S]) -> Result<Vec<Fold>> {
    let distinct: BTreeSet<&str> = subjects.iter().map(|s| s.as_ref()).collect();
    if distinct.len() < 2 {
        return Err(Error::param("leave-one-subject-out needs at least two subjects"));
    }
    Ok(distinct
        .into_iter()
        .map(|subject| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..subjects.len()).partition(|&i| subjects[i].as_ref() == subject);
            Fold {
                subject: subject.to_string(),
                train,
                test,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ReactionLabel::*;

    #[test]
    fn hand_computed_metrics() {
        let truth = [SingingHumming, SingingHumming, NonReaction, NonReaction];
        let pred = [SingingHumming, NonReaction, NonReaction, NonReaction];
        let r = evaluate(&pred, &truth, None).unwrap();
        let s = r.class(SingingHumming).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        let n = r.class(NonReaction).unwrap();
        assert!((n.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(n.recall, 1.0);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(r.confusion[SingingHumming.index()][NonReaction.index()], 1);
        assert_eq!(r.filtering_ratio, None);
    }

    #[test]
    fn no_filtering_gives_zero_ratio() {
        let stats = FilterStats {
            total: 4,
            classified: 4,
            ..Default::default()
        };
        let r = evaluate(&[NonReaction; 4], &[NonReaction; 4], Some(&stats)).unwrap();
        assert_eq!(r.filtering_ratio, Some(0.0));
        assert!(evaluate(&[NonReaction], &[], None).is_err());
    }

    #[test]
    fn absent_prediction_class_scores_zero() {
        let r = evaluate(&[NonReaction, NonReaction], &[Whistling, NonReaction], None).unwrap();
        assert_eq!(r.f1(Whistling), 0.0);
        assert_eq!(r.classes.len(), 2);
    }

    #[test]
    fn loso_folds() {
        let subjects = ["b", "a", "c", "a", "b"];
        let folds = loso_split(&subjects).unwrap();
        assert_eq!(folds.len(), 3);
        assert_eq!(folds[0].subject, "a");
        assert_eq!(folds[0].test, vec![1, 3]);
        assert_eq!(folds[0].train, vec![0, 2, 4]);
        let mut tested: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        tested.sort_unstable();
        assert_eq!(tested, vec![0, 1, 2, 3, 4]);
        assert!(loso_split(&["a", "a"]).is_err());
    }

    #[test]
    fn binary_f1_basics() {
        assert_eq!(binary_f1(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(binary_f1(&[false, false], &[true, false]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn perfect_prediction_scores_one(xs in prop::collection::vec(0usize..4, 1..100)) {
            let labels: Vec<ReactionLabel> = xs.iter().map(|&i| ReactionLabel::ALL[i]).collect();
            let r = evaluate(&labels, &labels, None).unwrap();
            prop_assert_eq!(r.macro_f1, 1.0);
            for c in &r.classes {
                prop_assert!((0.0..=1.0).contains(&c.precision) && (0.0..=1.0).contains(&c.recall));
            }
        }

        #[test]
        fn folds_partition(subjects in prop::collection::vec(0u8..5, 2..40)) {
            let names: Vec<String> = subjects.iter().map(|s| format!("p{s}")).collect();
            match loso_split(&names) {
                Ok(folds) => {
                    for f in &folds {
                        prop_assert_eq!(f.train.len() + f.test.len(), names.len());
                        prop_assert!(f.test.iter().all(|&i| names[i] == f.subject));
                        prop_assert!(f.train.iter().all(|&i| names[i] != f.subject));
                    }
                    let total: usize = folds.iter().map(|f| f.test.len()).sum();
                    prop_assert_eq!(total, names.len());
                }
                Err(_) => prop_assert!(names.iter().all(|n| n == &names[0])),
            }
        }
    }
}
