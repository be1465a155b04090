//! Log-mel patches in the layout of the YAMNet front end: 25 ms periodic
//! Hann frames with a 10 ms hop at 16 kHz, magnitude spectrum, 64 HTK mel
//! bands over 125-7500 Hz, `ln(mel + 0.001)`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: f64 = 16_000.0;
pub const PATCH_SAMPLES: usize = 16_000;
pub const WINDOW_SAMPLES: usize = 400;
pub const HOP_SAMPLES: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const MEL_BANDS: usize = 64;
pub const PATCH_FRAMES: usize = 96;
pub const MEL_LOW_HZ: f64 = 125.0;
pub const MEL_HIGH_HZ: f64 = 7500.0;
pub const LOG_OFFSET: f64 = 0.001;

const SPECTRUM_BINS: usize = FFT_SIZE / 2 + 1;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies of the 64 mel bands.
pub fn mel_band_centers_hz() -> Vec<f64> {
    let lo = hz_to_mel(MEL_LOW_HZ);
    let step = (hz_to_mel(MEL_HIGH_HZ) - lo) / (MEL_BANDS + 1) as f64;
    (1..=MEL_BANDS).map(|i| mel_to_hz(lo + step * i as f64)).collect()
}

/// 96 × 64 matrix of log mel energies (frames × bands).
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelPatch(Array2<f64>);

impl LogMelPatch {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.dim() != (PATCH_FRAMES, MEL_BANDS) {
            return Err(Error::param(format!(
                "log-mel patch must be {PATCH_FRAMES}x{MEL_BANDS}, got {:?}",
                data.dim()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("log-mel patch has non-finite entries"));
        }
        Ok(LogMelPatch(data))
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// Precomputed window, filterbank and FFT plan.
pub struct LogMelExtractor {
    window: Vec<f64>,
    /// Per band: first bin with non-zero weight and the weights from there.
    bands: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LogMelExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelExtractor").finish_non_exhaustive()
    }
}

impl Default for LogMelExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl LogMelExtractor {
    pub fn new() -> Self {
        let window = (0..WINDOW_SAMPLES)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / WINDOW_SAMPLES as f64).cos())
            .collect();

        // Triangles evaluated in the mel domain at each bin's frequency; the
        // DC bin gets no weight.
        let lo = hz_to_mel(MEL_LOW_HZ);
        let step = (hz_to_mel(MEL_HIGH_HZ) - lo) / (MEL_BANDS + 1) as f64;
        let edges: Vec<f64> = (0..MEL_BANDS + 2).map(|i| lo + step * i as f64).collect();
        let nyquist = SAMPLE_RATE / 2.0;
        let mut mel_weights = Array2::zeros((SPECTRUM_BINS, MEL_BANDS));
        for bin in 1..SPECTRUM_BINS {
            let m = hz_to_mel(nyquist * bin as f64 / (SPECTRUM_BINS - 1) as f64);
            for band in 0..MEL_BANDS {
                let (l, c, r) = (edges[band], edges[band + 1], edges[band + 2]);
                let w = ((m - l) / (c - l)).min((r - m) / (r - c));
                if w > 0.0 {
                    mel_weights[[bin, band]] = w;
                }
            }
        }

        let bands = (0..MEL_BANDS)
            .map(|band| {
                let col = mel_weights.column(band);
                let first = col.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = col.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                (first, col.iter().skip(first).take(last + 1 - first).copied().collect())
            })
            .collect();

        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        LogMelExtractor {
            window,
            bands,
            fft,
        }
    }

    /// Expects exactly one second of 16 kHz audio. 98 frames fit; the last
    /// two are dropped.
    pub fn extract(&self, audio: &[f64]) -> Result<LogMelPatch> {
        if audio.len() != PATCH_SAMPLES {
            return Err(Error::param(format!(
                "log-mel patch needs {PATCH_SAMPLES} samples, got {}",
                audio.len()
            )));
        }
        let mut out = Array2::zeros((PATCH_FRAMES, MEL_BANDS));
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut magnitude = [0.0f64; SPECTRUM_BINS];
        for frame in 0..PATCH_FRAMES {
            let start = frame * HOP_SAMPLES;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = if i < WINDOW_SAMPLES {
                    Complex::new(audio[start + i] * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in magnitude.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (band, (first, weights)) in self.bands.iter().enumerate() {
                let energy: f64 = weights.iter().zip(&magnitude[*first..]).map(|(w, m)| w * m).sum();
                out[[frame, band]] = (energy + LOG_OFFSET).ln();
            }
        }
        LogMelPatch::new(out)
    }
}

fn shared_extractor() -> &'static LogMelExtractor {
    static EXTRACTOR: OnceLock<LogMelExtractor> = OnceLock::new();
    EXTRACTOR.get_or_init(LogMelExtractor::new)
}

pub fn log_mel_patch(audio_1s_16k: &[f64]) -> Result<LogMelPatch> {
    shared_extractor().extract(audio_1s_16k)
}
