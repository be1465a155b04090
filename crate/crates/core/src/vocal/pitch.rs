//! Pitch trackers feeding melody correction. Both produce one frame per
//! 0.1 s.

use std::path::Path;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dsp::CHROMA_HOP_S;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    pub f0: f64,
    pub confidence: f64,
}

impl PitchFrame {
    pub const SILENT: PitchFrame = PitchFrame {
        f0: 0.0,
        confidence: 0.0,
    };
}

/// One segment's worth of audio to track.
#[derive(Debug, Clone, Copy)]
pub struct PitchRequest<'a> {
    /// Session time of the first sample (s).
    pub t_start: f64,
    /// Number of 0.1 s frames wanted.
    pub frames: usize,
    pub audio: &'a [f32],
    pub sample_rate: u32,
}

pub trait PitchTracker: Send + Sync {
    fn track(&self, req: &PitchRequest<'_>) -> Result<Vec<PitchFrame>>;
}

/// Replays `pitch.csv` (`t,f0,confidence` at 0.1 s steps).
#[derive(Debug, Clone, Default)]
pub struct PitchPlayback {
    frames: Vec<PitchFrame>,
}

#[derive(Debug, Deserialize, Serialize)]
struct PitchRow {
    t: f64,
    f0: f64,
    confidence: f64,
}

impl PitchPlayback {
    pub fn new(frames: Vec<PitchFrame>) -> Self {
        PitchPlayback { frames }
    }

    pub fn frames(&self) -> &[PitchFrame] {
        &self.frames
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut frames = Vec::new();
        for (i, row) in rdr.deserialize::<PitchRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
            let expected = frames.len() as f64 * CHROMA_HOP_S;
            if (row.t - expected).abs() > 1e-6 {
                return Err(Error::parse(
                    path,
                    line,
                    format!("time {} breaks the 0.1 s hop", row.t),
                ));
            }
            if !row.f0.is_finite() || !row.confidence.is_finite() {
                return Err(Error::parse(path, line, "non-finite value"));
            }
            frames.push(PitchFrame {
                f0: row.f0,
                confidence: row.confidence,
            });
        }
        Ok(PitchPlayback { frames })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,f0,confidence\n");
        for (i, f) in self.frames.iter().enumerate() {
            out.push_str(&format!("{:.1},{},{}\n", i as f64 / 10.0, f.f0, f.confidence));
        }
        out
    }
}

impl PitchTracker for PitchPlayback {
    fn track(&self, req: &PitchRequest<'_>) -> Result<Vec<PitchFrame>> {
        let first = (req.t_start / CHROMA_HOP_S).round() as usize;
        let last = first + req.frames;
        if last > self.frames.len() {
            return Err(Error::Pitch(format!(
                "pitch file ends at {:.1} s, segment needs up to {:.1} s",
                self.frames.len() as f64 * CHROMA_HOP_S,
                last as f64 * CHROMA_HOP_S
            )));
        }
        Ok(self.frames[first..last].to_vec())
    }
}

/// Normalized-autocorrelation pitch tracker for clean synthetic audio.
///
/// Each 0.1 s frame is scored by the unbiased autocorrelation normalized by
/// lag 0; the first peak within 90 % of the best one in the 80-1000 Hz lag
/// range wins and its height is the confidence.
pub struct AutocorrelationTracker {
    pub min_hz: f64,
    pub max_hz: f64,
    planner: std::sync::Mutex<FftPlanner<f64>>,
}

impl std::fmt::Debug for AutocorrelationTracker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AutocorrelationTracker")
            .field("min_hz", &self.min_hz)
            .field("max_hz", &self.max_hz)
            .finish()
    }
}

impl Default for AutocorrelationTracker {
    fn default() -> Self {
        AutocorrelationTracker::new(80.0, 1000.0)
    }
}

impl AutocorrelationTracker {
    pub fn new(min_hz: f64, max_hz: f64) -> Self {
        AutocorrelationTracker {
            min_hz,
            max_hz,
            planner: std::sync::Mutex::new(FftPlanner::new()),
        }
    }

    fn plans(&self, n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        let mut p = self.planner.lock().unwrap_or_else(|e| e.into_inner());
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    }

    /// Pitch of one frame.
    pub fn frame_pitch(&self, frame: &[f32], sample_rate: u32) -> PitchFrame {
        let n = frame.len();
        let sr = sample_rate as f64;
        let min_lag = (sr / self.max_hz).floor().max(1.0) as usize;
        let max_lag = ((sr / self.min_hz).ceil() as usize).min(n.saturating_sub(2));
        if n < 4 || min_lag + 1 >= max_lag {
            return PitchFrame::SILENT;
        }
        let mean = frame.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        let size = (2 * n).next_power_of_two();
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x as f64 - mean, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(size)
            .collect();
        let (fwd, inv) = self.plans(size);
        fwd.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        inv.process(&mut buf);
        let r0 = buf[0].re / size as f64;
        if r0 <= 1e-12 * n as f64 {
            return PitchFrame::SILENT;
        }
        let nacf = |lag: usize| -> f64 {
            let r = buf[lag].re / size as f64;
            (r / r0) * n as f64 / (n - lag) as f64
        };
        let values: Vec<f64> = (min_lag - 1..=max_lag + 1).map(nacf).collect();
        let at = |lag: usize| values[lag + 1 - min_lag];
        let best = (min_lag..=max_lag).map(at).fold(f64::NEG_INFINITY, f64::max);
        if best <= 0.0 {
            return PitchFrame {
                f0: 0.0,
                confidence: 0.0,
            };
        }
        let lag = (min_lag..=max_lag)
            .find(|&l| at(l) >= 0.9 * best && at(l) >= at(l - 1) && at(l) >= at(l + 1))
            .unwrap_or(min_lag);
        let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        PitchFrame {
            f0: sr / (lag as f64 + shift),
            confidence: b.clamp(0.0, 1.0),
        }
    }
}

impl PitchTracker for AutocorrelationTracker {
    fn track(&self, req: &PitchRequest<'_>) -> Result<Vec<PitchFrame>> {
        if req.sample_rate == 0 || req.audio.is_empty() {
            return Err(Error::Pitch("no audio to track".into()));
        }
        let hop = (req.sample_rate as f64 * CHROMA_HOP_S).round() as usize;
        if req.audio.len() < hop * req.frames {
            return Err(Error::Pitch(format!(
                "need {} samples for {} frames, got {}",
                hop * req.frames,
                req.frames,
                req.audio.len()
            )));
        }
        Ok((0..req.frames)
            .map(|k| self.frame_pitch(&req.audio[k * hop..(k + 1) * hop], req.sample_rate))
            .collect())
    }
}
