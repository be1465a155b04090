use std::f64::consts::PI;

use crate::error::{Error, Result};

const ZERO_CROSSINGS: f64 = 12.0;
const ROLLOFF: f64 = 0.94;
/// Above this many polyphase branches the kernel is evaluated on the fly.
const MAX_PHASES: u64 = 4096;

/// Blackman-windowed sinc resampler for a rational rate change `to / from`.
///
/// Taps are normalized to unit sum per output sample, so DC passes exactly;
/// samples beyond either edge replicate the edge value.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: u64,
    down: u64,
    /// Cutoff in cycles per input sample.
    cutoff: f64,
    half_width: i64,
    phases: Option<Vec<Vec<f64>>>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Resampler {
    pub fn new(from_hz: u32, to_hz: u32) -> Result<Self> {
        if from_hz == 0 || to_hz == 0 {
            return Err(Error::param("resampling rates must be positive"));
        }
        let g = gcd(from_hz as u64, to_hz as u64);
        let up = to_hz as u64 / g;
        let down = from_hz as u64 / g;
        let cutoff = 0.5 * (up as f64 / down as f64).min(1.0) * ROLLOFF;
        let half_width = (ZERO_CROSSINGS / (2.0 * cutoff)).ceil() as i64;
        let mut r = Resampler {
            up,
            down,
            cutoff,
            half_width,
            phases: None,
        };
        if up <= MAX_PHASES {
            let table = (0..up).map(|p| r.taps(p as f64 / up as f64)).collect();
            r.phases = Some(table);
        }
        Ok(r)
    }

    /// Normalized taps for input offsets `-half_width + 1 ..= half_width`
    /// around an output sample that sits `frac` samples past an input sample.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let h = self.half_width;
        let mut w: Vec<f64> = ((-h + 1)..=h)
            .map(|k| {
                let t = k as f64 - frac;
                let x = 2.0 * self.cutoff * t;
                let sinc = if x.abs() < 1e-12 {
                    1.0
                } else {
                    (PI * x).sin() / (PI * x)
                };
                let u = t / h as f64;
                let window = if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos()
                };
                sinc * window
            })
            .collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= sum);
        w
    }

    /// `round(n * to / from)` output samples.
    pub fn output_len(&self, n: usize) -> usize {
        ((n as u128 * self.up as u128 * 2 + self.down as u128) / (2 * self.down as u128)) as usize
    }

    pub fn process<T: Copy + Into<f64>>(&self, input: &[T]) -> Vec<f64> {
        let n = input.len();
        if n == 0 {
            return Vec::new();
        }
        let out_len = self.output_len(n);
        let last = n as i64 - 1;
        let h = self.half_width;
        let mut out = Vec::with_capacity(out_len);
        let mut owned;
        for j in 0..out_len as u64 {
            let pos = j * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let taps: &[f64] = match &self.phases {
                Some(table) => &table[phase as usize],
                None => {
                    owned = self.taps(phase as f64 / self.up as f64);
                    &owned
                }
            };
            let start = base - h + 1;
            let acc = if start >= 0 && start + taps.len() as i64 - 1 <= last {
                let s = start as usize;
                taps.iter()
                    .zip(&input[s..s + taps.len()])
                    .map(|(w, &x)| w * x.into())
                    .sum()
            } else {
                taps.iter()
                    .enumerate()
                    .map(|(k, w)| {
                        let idx = (start + k as i64).clamp(0, last) as usize;
                        w * input[idx].into()
                    })
                    .sum()
            };
            out.push(acc);
        }
        out
    }
}

pub fn resample<T: Copy + Into<f64>>(input: &[T], from_hz: u32, to_hz: u32) -> Result<Vec<f64>> {
    Ok(Resampler::new(from_hz, to_hz)?.process(input))
}
