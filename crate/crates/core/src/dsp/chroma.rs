use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pitch frames are sampled every 100 ms.
pub const CHROMA_HOP_S: f64 = 0.1;

/// Pitch class 0..=11 (C = 0, B = 11) or unvoiced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chroma(Option<u8>);

impl Chroma {
    pub const UNVOICED: Chroma = Chroma(None);

    pub fn voiced(pitch_class: u8) -> Result<Self> {
        if pitch_class < 12 {
            Ok(Chroma(Some(pitch_class)))
        } else {
            Err(Error::param(format!("pitch class {pitch_class} out of 0..=11")))
        }
    }

    pub fn pitch_class(self) -> Option<u8> {
        self.0
    }

    pub fn is_voiced(self) -> bool {
        self.0.is_some()
    }
}

impl fmt::Display for Chroma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(c) => write!(f, "{c}"),
            None => f.write_str("U"),
        }
    }
}

/// Frequency of a MIDI note number in 12-TET with A4 = 440 Hz.
pub fn midi_to_hz(note: f64) -> f64 {
    440.0 * 2f64.powf((note - 69.0) / 12.0)
}

/// Maps a pitch estimate to its pitch class: `round(12 log2(f / 440)) + 69`
/// taken mod 12. Frames under `conf_threshold` are unvoiced.
pub fn hz_to_chroma(f0_hz: f64, confidence: f64, conf_threshold: f64) -> Result<Chroma> {
    if !(confidence >= conf_threshold) {
        return Ok(Chroma::UNVOICED);
    }
    if !(f0_hz > 0.0) || !f0_hz.is_finite() {
        return Err(Error::param(format!(
            "voiced frame needs a positive finite f0, got {f0_hz}"
        )));
    }
    // Fold into [440, 880) with exact power-of-two scaling so that f and 2f
    // land on the same value.
    let mut f = f0_hz;
    while f >= 880.0 {
        f *= 0.5;
    }
    while f < 440.0 {
        f *= 2.0;
    }
    let semis = (12.0 * (f / 440.0).log2()).round() as i64;
    Ok(Chroma(Some(((69 + semis).rem_euclid(12)) as u8)))
}
