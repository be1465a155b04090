//! HMM smoothing of per-second vocal labels.
//!
//! Hidden states and observations share the vocal label set. Each second is
//! smoothed by decoding the trailing window that ends at it and keeping the
//! final state of the most probable path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ReactionLabel;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub states: Vec<ReactionLabel>,
    pub initial: Vec<f64>,
    /// `transition[i][j] = P(s_t = j | s_{t-1} = i)`.
    pub transition: Vec<Vec<f64>>,
    /// `emission[i][k] = P(o_t = k | s_t = i)`.
    pub emission: Vec<Vec<f64>>,
}

fn check_distribution(name: &str, row: &[f64], n: usize) -> Result<()> {
    if row.len() != n {
        return Err(Error::param(format!("{name}: expected {n} entries, got {}", row.len())));
    }
    if row.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::param(format!("{name}: entries must be finite and > 0")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::param(format!("{name}: sums to {sum}")));
    }
    Ok(())
}

impl HmmParams {
    pub fn new(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let hmm = HmmParams {
            states: ReactionLabel::VOCAL.to_vec(),
            initial,
            transition,
            emission,
        };
        hmm.validate()?;
        Ok(hmm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states != ReactionLabel::VOCAL {
            return Err(Error::param(
                "HMM states must be [non_reaction, singing_humming, whistling]",
            ));
        }
        let n = self.states.len();
        check_distribution("initial", &self.initial, n)?;
        if self.transition.len() != n || self.emission.len() != n {
            return Err(Error::param(format!("HMM matrices must have {n} rows")));
        }
        for (i, row) in self.transition.iter().enumerate() {
            check_distribution(&format!("transition row {i}"), row, n)?;
        }
        for (i, row) in self.emission.iter().enumerate() {
            check_distribution(&format!("emission row {i}"), row, n)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let hmm: HmmParams = serde_json::from_str(&text)?;
        hmm.validate()?;
        Ok(hmm)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("hmm serializes")
    }

    fn state_index(&self, label: ReactionLabel) -> Result<usize> {
        self.states
            .iter()
            .position(|&s| s == label)
            .ok_or_else(|| Error::param(format!("{label} is not an HMM state")))
    }

    /// Log joint probability of a hidden path and the observations.
    pub fn log_joint(&self, path: &[usize], obs: &[usize]) -> f64 {
        let mut lp = self.initial[path[0]].ln() + self.emission[path[0]][obs[0]].ln();
        for t in 1..obs.len() {
            lp += self.transition[path[t - 1]][path[t]].ln() + self.emission[path[t]][obs[t]].ln();
        }
        lp
    }
}

/// Estimates an HMM from `(observed, true)` label sequences with add-`laplace`
/// smoothing on every row.
pub fn train_hmm(
    sequences: &[(Vec<ReactionLabel>, Vec<ReactionLabel>)],
    laplace: f64,
) -> Result<HmmParams> {
    if sequences.is_empty() {
        return Err(Error::param("HMM training needs at least one sequence"));
    }
    if !(laplace > 0.0) {
        return Err(Error::param("laplace smoothing must be > 0"));
    }
    let states = ReactionLabel::VOCAL;
    let n = states.len();
    let idx = |l: ReactionLabel| {
        states
            .iter()
            .position(|&s| s == l)
            .ok_or_else(|| Error::param(format!("{l} is not a vocal label")))
    };
    let mut init = vec![0.0; n];
    let mut trans = vec![vec![0.0; n]; n];
    let mut emis = vec![vec![0.0; n]; n];
    for (k, (observed, truth)) in sequences.iter().enumerate() {
        if observed.len() != truth.len() {
            return Err(Error::param(format!(
                "sequence {k}: {} observations vs {} true labels",
                observed.len(),
                truth.len()
            )));
        }
        if truth.is_empty() {
            continue;
        }
        init[idx(truth[0])?] += 1.0;
        for w in truth.windows(2) {
            trans[idx(w[0])?][idx(w[1])?] += 1.0;
        }
        for (&o, &s) in observed.iter().zip(truth) {
            emis[idx(s)?][idx(o)?] += 1.0;
        }
    }
    let normalize = |row: &[f64]| -> Vec<f64> {
        let total: f64 = row.iter().sum::<f64>() + laplace * row.len() as f64;
        row.iter().map(|c| (c + laplace) / total).collect()
    };
    HmmParams::new(
        normalize(&init),
        trans.iter().map(|r| normalize(r)).collect(),
        emis.iter().map(|r| normalize(r)).collect(),
    )
}

/// Most probable hidden path for a window of observations, with its log
/// joint probability. Ties go to the lower state index.
pub fn viterbi(hmm: &HmmParams, window: &[ReactionLabel]) -> Result<(Vec<ReactionLabel>, f64)> {
    if window.is_empty() {
        return Err(Error::param("Viterbi needs at least one observation"));
    }
    let obs = window
        .iter()
        .map(|&o| hmm.state_index(o))
        .collect::<Result<Vec<_>>>()?;
    let n = hmm.states.len();
    let log_t: Vec<Vec<f64>> = hmm
        .transition
        .iter()
        .map(|r| r.iter().map(|p| p.ln()).collect())
        .collect();
    let log_e: Vec<Vec<f64>> = hmm
        .emission
        .iter()
        .map(|r| r.iter().map(|p| p.ln()).collect())
        .collect();

    let mut delta: Vec<f64> = (0..n).map(|s| hmm.initial[s].ln() + log_e[s][obs[0]]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(obs.len());
    for &o in &obs[1..] {
        let mut next = vec![f64::NEG_INFINITY; n];
        let mut arg = vec![0usize; n];
        for s in 0..n {
            for (p, &d) in delta.iter().enumerate() {
                let v = d + log_t[p][s];
                if v > next[s] {
                    next[s] = v;
                    arg[s] = p;
                }
            }
            next[s] += log_e[s][o];
        }
        back.push(arg);
        delta = next;
    }
    let mut last = 0;
    for s in 1..n {
        if delta[s] > delta[last] {
            last = s;
        }
    }
    let best = delta[last];
    let mut path = vec![last; obs.len()];
    for t in (1..obs.len()).rev() {
        path[t - 1] = back[t - 1][path[t]];
    }
    Ok((path.into_iter().map(|s| hmm.states[s]).collect(), best))
}

/// Smoothed label for the last second of `window`.
pub fn smooth(window: &[ReactionLabel], hmm: &HmmParams) -> Result<ReactionLabel> {
    let (path, _) = viterbi(hmm, window)?;
    Ok(*path.last().expect("non-empty path"))
}

/// Smooths a whole sequence with a trailing window of `window` seconds.
pub fn smooth_sequence(
    observed: &[ReactionLabel],
    hmm: &HmmParams,
    window: usize,
) -> Result<Vec<ReactionLabel>> {
    if window == 0 {
        return Err(Error::param("smoothing window must be >= 1"));
    }
    (0..observed.len())
        .map(|t| smooth(&observed[(t + 1).saturating_sub(window)..=t], hmm))
        .collect()
}
