//! Exhaustive reference implementations for small inputs.

use crate::error::{Error, Result};
use crate::types::ReactionLabel;
use crate::vocal::HmmParams;

pub const DTW_ORACLE_MAX_LEN: usize = 8;
pub const VITERBI_ORACLE_MAX_LEN: usize = 6;

/// Minimum total cost over every monotone alignment path from `(0, 0)` to
/// `(|a|-1, |b|-1)` with unit steps, found by walking all paths.
pub fn dtw_oracle<T>(a: &[T], b: &[T], cost: impl Fn(&T, &T) -> f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("DTW oracle needs non-empty sequences"));
    }
    if a.len() > DTW_ORACLE_MAX_LEN || b.len() > DTW_ORACLE_MAX_LEN {
        return Err(Error::param(format!(
            "DTW oracle is limited to length {DTW_ORACLE_MAX_LEN}"
        )));
    }
    fn walk<T>(a: &[T], b: &[T], i: usize, j: usize, acc: f64, cost: &dyn Fn(&T, &T) -> f64, best: &mut f64) {
        let acc = acc + cost(&a[i], &b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, cost, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, cost, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, cost, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &cost, &mut best);
    Ok(best)
}

/// Best hidden path by enumerating all `3^n` state sequences. Ties keep the
/// lexicographically smallest path.
pub fn viterbi_oracle(hmm: &HmmParams, window: &[ReactionLabel]) -> Result<(Vec<ReactionLabel>, f64)> {
    if window.is_empty() || window.len() > VITERBI_ORACLE_MAX_LEN {
        return Err(Error::param(format!(
            "Viterbi oracle needs 1..={VITERBI_ORACLE_MAX_LEN} observations"
        )));
    }
    let k = hmm.states.len();
    let obs = window
        .iter()
        .map(|&o| {
            hmm.states
                .iter()
                .position(|&s| s == o)
                .ok_or_else(|| Error::param(format!("{o} is not an HMM state")))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = obs.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for code in 0..k.pow(n as u32) {
        let mut path = vec![0; n];
        let mut c = code;
        for slot in path.iter_mut().rev() {
            *slot = c % k;
            c /= k;
        }
        let lp = hmm.log_joint(&path, &obs);
        if best.as_ref().is_none_or(|(_, b)| lp > *b) {
            best = Some((path, lp));
        }
    }
    let (path, lp) = best.expect("at least one path");
    Ok((path.into_iter().map(|s| hmm.states[s]).collect(), lp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{chroma_cost, Chroma};

    #[test]
    fn single_elements_are_local_cost() {
        let a = [Chroma::voiced(2).unwrap()];
        let b = [Chroma::voiced(9).unwrap()];
        assert_eq!(dtw_oracle(&a, &b, chroma_cost).unwrap(), 5.0);
    }

    #[test]
    fn size_bounds() {
        let long = vec![0u8; 9];
        assert!(dtw_oracle(&long, &[1u8], |x, y| (x != y) as u8 as f64).is_err());
        let hmm = HmmParams::new(
            vec![1.0 / 3.0; 3],
            vec![vec![1.0 / 3.0; 3]; 3],
            vec![vec![1.0 / 3.0; 3]; 3],
        )
        .unwrap();
        assert!(viterbi_oracle(&hmm, &[ReactionLabel::NonReaction; 7]).is_err());
        assert!(viterbi_oracle(&hmm, &[ReactionLabel::HeadMotion]).is_err());
    }
}
