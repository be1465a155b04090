//! Signal-processing primitives shared by the pipelines.

mod chroma;
mod dtw;
mod filter;
mod mel;
mod resample;

pub use chroma::{hz_to_chroma, midi_to_hz, Chroma, CHROMA_HOP_S};
pub use dtw::{chroma_cost, dtw, dtw_distance};
pub use filter::{lowpass_first_order, FirstOrderLowpass};
pub use mel::{
    hz_to_mel, log_mel_patch, mel_band_centers_hz, LogMelExtractor, LogMelPatch, LOG_OFFSET,
    MEL_BANDS, PATCH_FRAMES, PATCH_SAMPLES,
};
pub use resample::{resample, Resampler};

use crate::error::{Error, Result};

/// Floor added to the RMS before taking the logarithm.
pub const DB_EPSILON: f64 = 1e-12;

/// Population standard deviation of the per-sample accelerometer magnitude (g).
pub fn movement_level(accel: &[[f64; 3]]) -> Result<f64> {
    if accel.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "movement level needs at least 2 samples, got {}",
            accel.len()
        )));
    }
    let mags: Vec<f64> = accel
        .iter()
        .map(|a| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt())
        .collect();
    Ok(population_std(&mags))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Root mean square of a PCM window; 0 for an empty window.
pub fn rms(audio: &[f32]) -> f64 {
    if audio.is_empty() {
        return 0.0;
    }
    (audio.iter().map(|&x| x as f64 * x as f64).sum::<f64>() / audio.len() as f64).sqrt()
}

/// `20 log10(rms + 1e-12) + calibration_db`.
pub fn sound_level_db(audio: &[f32], calibration_db: f64) -> f64 {
    20.0 * (rms(audio) + DB_EPSILON).log10() + calibration_db
}
