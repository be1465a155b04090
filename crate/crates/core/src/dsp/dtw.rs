use super::chroma::Chroma;
use crate::error::{Error, Result};

/// Unnormalized DTW cumulative cost with steps (1,1), (1,0), (0,1).
///
/// Returns 0 when either input is empty; callers that treat empty input as
/// an error check it themselves.
pub fn dtw<T, F>(a: &[T], b: &[T], cost: F) -> f64
where
    F: Fn(&T, &T) -> f64,
{
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut curr = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for x in a {
        curr[0] = f64::INFINITY;
        for (j, y) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(curr[j]);
            curr[j + 1] = cost(x, y) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
        prev[0] = f64::INFINITY;
    }
    prev[b.len()]
}

/// Circular semitone distance between voiced frames; 0 between two unvoiced
/// frames and 6 (the largest circular distance) between voiced and unvoiced.
pub fn chroma_cost(x: &Chroma, y: &Chroma) -> f64 {
    match (x.pitch_class(), y.pitch_class()) {
        (Some(p), Some(q)) => {
            let d = (p as i32 - q as i32).unsigned_abs();
            d.min(12 - d) as f64
        }
        (None, None) => 0.0,
        _ => 6.0,
    }
}

pub fn dtw_distance(a: &[Chroma], b: &[Chroma]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("dtw_distance needs non-empty sequences"));
    }
    Ok(dtw(a, b, chroma_cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(xs: &[i32]) -> Vec<Chroma> {
        xs.iter()
            .map(|&x| {
                if x < 0 {
                    Chroma::UNVOICED
                } else {
                    Chroma::voiced(x as u8).unwrap()
                }
            })
            .collect()
    }

    #[test]
    fn worked_examples() {
        let a = seq(&[0, 4, 7, -1, 11]);
        assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(dtw_distance(&seq(&[0]), &seq(&[11])).unwrap(), 1.0);
        // Alignment (0,0),(1,0),(2,1),(2,2) costs nothing.
        assert_eq!(dtw_distance(&seq(&[0, 0, 11]), &seq(&[0, 11, 11])).unwrap(), 0.0);
        assert_eq!(dtw_distance(&seq(&[0, 0, 11]), &seq(&[0, 11])).unwrap(), 0.0);
        assert_eq!(dtw_distance(&seq(&[0, 3]), &seq(&[1, 5, 3])).unwrap(), 3.0);
        assert_eq!(dtw_distance(&seq(&[-1; 10]), &seq(&[3; 10])).unwrap(), 60.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(dtw_distance(&[], &seq(&[1])).is_err());
        assert!(dtw_distance(&seq(&[1]), &[]).is_err());
    }

    #[test]
    fn local_cost_table() {
        let c = |a: i32, b: i32| chroma_cost(&seq(&[a])[0], &seq(&[b])[0]);
        assert_eq!(c(0, 6), 6.0);
        assert_eq!(c(2, 9), 5.0);
        assert_eq!(c(-1, -1), 0.0);
        assert_eq!(c(-1, 4), 6.0);
    }

    fn chroma_seq() -> impl Strategy<Value = Vec<Chroma>> {
        prop::collection::vec(-1i32..12, 1..12).prop_map(|v| seq(&v))
    }

    proptest! {
        #[test]
        fn symmetric_and_zero_on_diagonal(a in chroma_seq(), b in chroma_seq()) {
            prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(dtw_distance(&a, &b).unwrap(), dtw_distance(&b, &a).unwrap());
        }
    }
}
