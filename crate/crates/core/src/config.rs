//! Pipeline thresholds. Every field has a default, so a config file only
//! needs the keys it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub vocal: VocalConfig,
    pub motion: MotionConfig,
}

/// Closed interval filter on movement level (g). Segments outside are
/// certain non-reactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeFilter {
    pub enabled: bool,
    pub low: f64,
    pub high: f64,
}

impl RangeFilter {
    pub fn passes(&self, level: f64) -> bool {
        level >= self.low && level <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoundFilter {
    pub enabled: bool,
    pub threshold_db: f64,
    /// dB value assigned to a full-scale (rms 1) signal.
    pub calibration_db: f64,
}

impl Default for SoundFilter {
    fn default() -> Self {
        SoundFilter {
            enabled: true,
            threshold_db: 49.0,
            calibration_db: 94.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxationConfig {
    pub enabled: bool,
    pub margin_threshold: f64,
    pub k: usize,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        RelaxationConfig {
            enabled: true,
            margin_threshold: 0.9,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    /// When disabled, ambiguous maps to singing/humming and uncertain to its
    /// candidate without consulting the song.
    pub enabled: bool,
    pub dtw_threshold: f64,
    /// Slack added on both sides of the reference note window (s).
    pub reference_margin_s: f64,
    /// Pitch frames below this confidence are unvoiced.
    pub pitch_confidence: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            enabled: true,
            dtw_threshold: 130.0,
            reference_margin_s: 0.5,
            pitch_confidence: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub enabled: bool,
    /// Trailing window length in seconds (observations).
    pub window: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            enabled: true,
            window: 6,
        }
    }
}

/// Classifier class names recognized by label mapping (case-insensitive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassNames {
    pub singing: Vec<String>,
    pub whistling: Vec<String>,
    pub ambiguous: Vec<String>,
}

impl Default for ClassNames {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        ClassNames {
            singing: v(&["singing", "humming"]),
            whistling: v(&["whistling", "whistle"]),
            ambiguous: v(&["speech", "music"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocalConfig {
    pub motion_filter: RangeFilter,
    pub sound_filter: SoundFilter,
    pub resample_hz: u32,
    pub preprocess_cutoff_hz: f64,
    pub relaxation: RelaxationConfig,
    pub correction: CorrectionConfig,
    pub smoothing: SmoothingConfig,
    pub class_names: ClassNames,
}

impl Default for VocalConfig {
    fn default() -> Self {
        VocalConfig {
            motion_filter: RangeFilter {
                enabled: true,
                low: 0.0104,
                high: 0.12,
            },
            sound_filter: SoundFilter::default(),
            resample_hz: 16_000,
            preprocess_cutoff_hz: 2000.0,
            relaxation: RelaxationConfig::default(),
            correction: CorrectionConfig::default(),
            smoothing: SmoothingConfig::default(),
            class_names: ClassNames::default(),
        }
    }
}

/// Weights of the reference periodicity classifier for motion windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicWeights {
    pub bias: f64,
    pub periodicity: f64,
    pub in_band: f64,
    pub recent_activity: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Below this gyro std (deg/s) the window counts as motionless.
    pub min_activity_dps: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        HeuristicWeights {
            bias: -4.5,
            periodicity: 6.0,
            in_band: 1.0,
            recent_activity: 4.0,
            band_low_hz: 0.25,
            band_high_hz: 4.0,
            min_activity_dps: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub filter: RangeFilter,
    pub lpf_cutoff_hz: f64,
    pub window_s: usize,
    pub decision_threshold: f64,
    pub heuristic: HeuristicWeights,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            filter: RangeFilter {
                enabled: true,
                low: 0.0092,
                high: 0.114,
            },
            lpf_cutoff_hz: 5.0,
            window_s: 7,
            decision_threshold: 0.5,
            heuristic: HeuristicWeights::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// All thresholds finite, ranges ordered, rates and windows positive.
    pub fn validate(&self) -> Result<()> {
        let v = &self.vocal;
        let m = &self.motion;
        let h = &m.heuristic;
        let finite = [
            ("vocal.motion_filter.low", v.motion_filter.low),
            ("vocal.motion_filter.high", v.motion_filter.high),
            ("vocal.sound_filter.threshold_db", v.sound_filter.threshold_db),
            ("vocal.sound_filter.calibration_db", v.sound_filter.calibration_db),
            ("vocal.preprocess_cutoff_hz", v.preprocess_cutoff_hz),
            ("vocal.relaxation.margin_threshold", v.relaxation.margin_threshold),
            ("vocal.correction.dtw_threshold", v.correction.dtw_threshold),
            ("vocal.correction.reference_margin_s", v.correction.reference_margin_s),
            ("vocal.correction.pitch_confidence", v.correction.pitch_confidence),
            ("motion.filter.low", m.filter.low),
            ("motion.filter.high", m.filter.high),
            ("motion.lpf_cutoff_hz", m.lpf_cutoff_hz),
            ("motion.decision_threshold", m.decision_threshold),
            ("motion.heuristic.bias", h.bias),
            ("motion.heuristic.periodicity", h.periodicity),
            ("motion.heuristic.in_band", h.in_band),
            ("motion.heuristic.recent_activity", h.recent_activity),
            ("motion.heuristic.band_low_hz", h.band_low_hz),
            ("motion.heuristic.band_high_hz", h.band_high_hz),
            ("motion.heuristic.min_activity_dps", h.min_activity_dps),
        ];
        for (name, x) in finite {
            if !x.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        let ordered = [
            ("vocal.motion_filter", v.motion_filter.low, v.motion_filter.high),
            ("motion.filter", m.filter.low, m.filter.high),
            ("motion.heuristic band", h.band_low_hz, h.band_high_hz),
        ];
        for (name, lo, hi) in ordered {
            if !(lo < hi) {
                return Err(Error::Config(format!("{name}: low must be < high")));
            }
        }
        if v.resample_hz == 0 || !(v.preprocess_cutoff_hz > 0.0)
            || v.preprocess_cutoff_hz >= v.resample_hz as f64 / 2.0
        {
            return Err(Error::Config(
                "vocal preprocessing needs 0 < cutoff < resample_hz / 2".into(),
            ));
        }
        if v.relaxation.k == 0 {
            return Err(Error::Config("vocal.relaxation.k must be >= 1".into()));
        }
        if v.smoothing.window == 0 {
            return Err(Error::Config("vocal.smoothing.window must be >= 1".into()));
        }
        if v.correction.dtw_threshold < 0.0 || v.correction.reference_margin_s < 0.0 {
            return Err(Error::Config(
                "vocal.correction threshold and margin must be >= 0".into(),
            ));
        }
        if m.window_s == 0 {
            return Err(Error::Config("motion.window_s must be >= 1".into()));
        }
        if !(m.lpf_cutoff_hz > 0.0) {
            return Err(Error::Config("motion.lpf_cutoff_hz must be > 0".into()));
        }
        Ok(())
    }
}
