//! Motion reaction pipeline: movement prefilter, 5 Hz low-pass on the gyro
//! stream, motion units over a trailing 7 s window, sequence classifier.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::Deserialize;

use crate::config::{HeuristicWeights, MotionConfig, RangeFilter};
use crate::dsp::lowpass_first_order;
use crate::error::{Error, Result};
use crate::pipeline::{range_prefilter, Diagnostic, FilterDecision, PipelineOutput, SegmentOutcome};
use crate::session::{segment_session, ImuSample, Session, NOMINAL_IMU_HZ};
use crate::types::{merge_labels_to_events, FilterStats, PipelineLabel, ReactionLabel};

pub const UNIT_SAMPLES: usize = 7;
pub const UNITS: usize = 70;
pub const STATS_PER_AXIS: usize = 6;
pub const FEATURES: usize = 3 * STATS_PER_AXIS;
pub const WINDOW_SAMPLES: usize = UNITS * UNIT_SAMPLES;
/// Rate of the motion-unit series (units per second).
pub const UNIT_RATE_HZ: f64 = NOMINAL_IMU_HZ / UNIT_SAMPLES as f64;

/// Offsets of each statistic inside an axis block.
pub mod stat {
    pub const MAX: usize = 0;
    pub const MIN: usize = 1;
    pub const MEAN: usize = 2;
    pub const RANGE: usize = 3;
    pub const STD: usize = 4;
    pub const RMS: usize = 5;
}

/// 70 motion units × 18 gyro features, axis-major
/// (x-max, x-min, x-mean, x-range, x-std, x-rms, y-…, z-…).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionUnitSeq(Array2<f64>);

impl MotionUnitSeq {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.dim() != (UNITS, FEATURES) {
            return Err(Error::param(format!(
                "motion units must be {UNITS}x{FEATURES}, got {:?}",
                data.dim()
            )));
        }
        Ok(MotionUnitSeq(data))
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// One statistic of one axis across all units.
    pub fn series(&self, axis: usize, statistic: usize) -> ArrayView1<'_, f64> {
        self.0.column(axis * STATS_PER_AXIS + statistic)
    }
}

/// Unit statistics for any whole number of units. Population std.
pub fn motion_units(gyro: &[[f64; 3]]) -> Result<Array2<f64>> {
    if gyro.is_empty() || !gyro.len().is_multiple_of(UNIT_SAMPLES) {
        return Err(Error::param(format!(
            "gyro length {} is not a positive multiple of {UNIT_SAMPLES}",
            gyro.len()
        )));
    }
    let n_units = gyro.len() / UNIT_SAMPLES;
    let mut out = Array2::zeros((n_units, FEATURES));
    for (u, chunk) in gyro.chunks_exact(UNIT_SAMPLES).enumerate() {
        for axis in 0..3 {
            let xs = chunk.iter().map(|s| s[axis]);
            let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
            let min = xs.clone().fold(f64::INFINITY, f64::min);
            let n = UNIT_SAMPLES as f64;
            let mean = xs.clone().sum::<f64>() / n;
            let var = xs.clone().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let ms = xs.map(|x| x * x).sum::<f64>() / n;
            let base = axis * STATS_PER_AXIS;
            out[[u, base + stat::MAX]] = max;
            out[[u, base + stat::MIN]] = min;
            out[[u, base + stat::MEAN]] = mean;
            out[[u, base + stat::RANGE]] = max - min;
            out[[u, base + stat::STD]] = var.sqrt();
            out[[u, base + stat::RMS]] = ms.sqrt();
        }
    }
    Ok(out)
}

/// Motion units of one 7 s window (490 samples of filtered gyro).
pub fn extract_motion_units(gyro_7s: &[[f64; 3]]) -> Result<MotionUnitSeq> {
    if gyro_7s.len() != WINDOW_SAMPLES {
        return Err(Error::param(format!(
            "motion window needs {WINDOW_SAMPLES} gyro samples, got {}",
            gyro_7s.len()
        )));
    }
    MotionUnitSeq::new(motion_units(gyro_7s)?)
}

pub fn motion_prefilter(accel_1s: &[[f64; 3]], filter: &RangeFilter) -> FilterDecision {
    range_prefilter(accel_1s, filter)
}

/// Returns `[p(head_motion), p(non_reaction)]`.
pub trait SequenceClassifier: Send + Sync {
    fn classify(&self, seq: &MotionUnitSeq) -> Result<[f64; 2]>;
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Features read by the heuristic classifier, exposed for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicFeatures {
    /// Axis whose unit-mean series varies most.
    pub axis: usize,
    /// Standard deviation of that series (deg/s).
    pub activity: f64,
    pub dominant_hz: f64,
    pub periodicity: f64,
    /// Mean power of the last second over mean power of the window, in [0, 1].
    pub recent_activity: f64,
}

/// Periodicity classifier: rewards a strong autocorrelation peak and an
/// in-band dominant frequency in the per-unit gyro mean series, and penalizes
/// windows whose final second is quieter than the rest.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicClassifier {
    pub weights: HeuristicWeights,
}

impl HeuristicClassifier {
    pub fn new(weights: HeuristicWeights) -> Self {
        HeuristicClassifier { weights }
    }

    pub fn features(&self, seq: &MotionUnitSeq) -> HeuristicFeatures {
        let w = &self.weights;
        let (axis, series) = (0..3)
            .map(|a| {
                let s = seq.series(a, stat::MEAN).to_owned();
                let m = s.mean().unwrap_or(0.0);
                (a, s.mapv(|x| x - m))
            })
            .max_by(|(_, a), (_, b)| a.dot(a).total_cmp(&b.dot(b)))
            .expect("three axes");
        let n = series.len();
        let energy = series.dot(&series);
        let activity = (energy / n as f64).sqrt();
        if activity < w.min_activity_dps {
            return HeuristicFeatures {
                axis,
                activity,
                dominant_hz: 0.0,
                periodicity: 0.0,
                recent_activity: 0.0,
            };
        }
        let acf = |lag: usize| -> f64 {
            let r: f64 = (0..n - lag).map(|i| series[i] * series[i + lag]).sum();
            (r / (n - lag) as f64) / (energy / n as f64)
        };
        let min_lag = ((UNIT_RATE_HZ / w.band_high_hz).ceil() as usize).max(3);
        let max_lag = ((UNIT_RATE_HZ / w.band_low_hz).floor() as usize).min(n / 2);
        let first_zero = (1..n).find(|&l| acf(l) <= 0.0).unwrap_or(n);
        let periodicity = (min_lag.max(first_zero)..=max_lag)
            .map(acf)
            .fold(0.0, f64::max)
            .clamp(0.0, 1.0);
        let dominant_hz = dominant_frequency(series.view(), UNIT_RATE_HZ);
        let tail = (UNIT_RATE_HZ.round() as usize).min(n);
        let tail_power = series.slice(ndarray::s![n - tail..]).mapv(|x| x * x).sum() / tail as f64;
        let recent_activity = (tail_power / (energy / n as f64)).clamp(0.0, 1.0);
        HeuristicFeatures {
            axis,
            activity,
            dominant_hz,
            periodicity,
            recent_activity,
        }
    }

    pub fn score(&self, f: &HeuristicFeatures) -> f64 {
        let w = &self.weights;
        let in_band = (f.dominant_hz >= w.band_low_hz && f.dominant_hz <= w.band_high_hz) as u8 as f64;
        let z = w.bias
            + w.periodicity * f.periodicity
            + w.in_band * in_band
            + w.recent_activity * (f.recent_activity - 1.0);
        logistic(z)
    }
}

/// Frequency of the largest non-DC DFT bin.
fn dominant_frequency(x: ArrayView1<'_, f64>, rate: f64) -> f64 {
    let n = x.len();
    let mut best = (0.0, 0.0);
    for k in 1..=n / 2 {
        let w = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            re += v * (w * i as f64).cos();
            im -= v * (w * i as f64).sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (k as f64 * rate / n as f64, p);
        }
    }
    best.0
}

impl SequenceClassifier for HeuristicClassifier {
    fn classify(&self, seq: &MotionUnitSeq) -> Result<[f64; 2]> {
        let p = self.score(&self.features(seq));
        Ok([p, 1.0 - p])
    }
}

/// Single-layer LSTM followed by ReLU, a dense layer and softmax.
/// Gate matrices are `input × hidden`, recurrent ones `hidden × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w: [Array2<f64>; 4],
    pub u: [Array2<f64>; 4],
    pub b: [Array1<f64>; 4],
    pub wd: Array2<f64>,
    pub bd: Array1<f64>,
}

/// Gate order inside the arrays.
pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_O: usize = 2;
pub const GATE_C: usize = 3;

#[derive(Deserialize)]
#[serde(untagged)]
enum RawMatrix {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[allow(non_snake_case)]
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLstm {
    Wi: RawMatrix,
    Wf: RawMatrix,
    Wo: RawMatrix,
    Wc: RawMatrix,
    Ui: RawMatrix,
    Uf: RawMatrix,
    Uo: RawMatrix,
    Uc: RawMatrix,
    bi: Vec<f64>,
    bf: Vec<f64>,
    bo: Vec<f64>,
    bc: Vec<f64>,
    Wd: RawMatrix,
    bd: Vec<f64>,
}

fn to_matrix(name: &str, m: RawMatrix, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let flat: Vec<f64> = match m {
        RawMatrix::Flat(v) => v,
        RawMatrix::Nested(rs) => {
            if rs.len() != rows || rs.iter().any(|r| r.len() != cols) {
                return Err(Error::param(format!("{name} must be {rows}x{cols}")));
            }
            rs.into_iter().flatten().collect()
        }
    };
    Array2::from_shape_vec((rows, cols), flat)
        .map_err(|_| Error::param(format!("{name} must hold {rows}x{cols} values")))
}

impl LstmWeights {
    pub fn new(
        w: [Array2<f64>; 4],
        u: [Array2<f64>; 4],
        b: [Array1<f64>; 4],
        wd: Array2<f64>,
        bd: Array1<f64>,
    ) -> Result<Self> {
        let (d, h) = w[0].dim();
        let ok = w.iter().all(|m| m.dim() == (d, h))
            && u.iter().all(|m| m.dim() == (h, h))
            && b.iter().all(|v| v.len() == h)
            && wd.dim() == (h, 2)
            && bd.len() == 2
            && d > 0
            && h > 0;
        if !ok {
            return Err(Error::param("inconsistent LSTM weight shapes"));
        }
        let finite = w.iter().chain(&u).all(|m| m.iter().all(|x| x.is_finite()))
            && b.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && wd.iter().chain(bd.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::param("LSTM weights must be finite"));
        }
        Ok(LstmWeights { w, u, b, wd, bd })
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w[0].ncols()
    }

    /// Parses the JSON weights file (nested or flat row-major arrays; the
    /// hidden size comes from the bias length).
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawLstm = serde_json::from_str(text)?;
        let h = raw.bi.len();
        let d = FEATURES;
        let w = [
            to_matrix("Wi", raw.Wi, d, h)?,
            to_matrix("Wf", raw.Wf, d, h)?,
            to_matrix("Wo", raw.Wo, d, h)?,
            to_matrix("Wc", raw.Wc, d, h)?,
        ];
        let u = [
            to_matrix("Ui", raw.Ui, h, h)?,
            to_matrix("Uf", raw.Uf, h, h)?,
            to_matrix("Uo", raw.Uo, h, h)?,
            to_matrix("Uc", raw.Uc, h, h)?,
        ];
        let b = [raw.bi, raw.bf, raw.bo, raw.bc].map(Array1::from);
        LstmWeights::new(w, u, b, to_matrix("Wd", raw.Wd, h, 2)?, Array1::from(raw.bd))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

/// Runs the network over a `steps × input_dim` sequence from zero state.
pub fn lstm_forward_steps(weights: &LstmWeights, seq: &Array2<f64>) -> Result<[f64; 2]> {
    if seq.ncols() != weights.input_dim() {
        return Err(Error::param(format!(
            "sequence has {} features, weights expect {}",
            seq.ncols(),
            weights.input_dim()
        )));
    }
    let sigmoid = |v: Array1<f64>| v.mapv(logistic);
    let hdim = weights.hidden();
    let mut h = Array1::<f64>::zeros(hdim);
    let mut c = Array1::<f64>::zeros(hdim);
    for x in seq.axis_iter(Axis(0)) {
        let pre = |g: usize| x.dot(&weights.w[g]) + h.dot(&weights.u[g]) + &weights.b[g];
        let i = sigmoid(pre(GATE_I));
        let f = sigmoid(pre(GATE_F));
        let o = sigmoid(pre(GATE_O));
        let g = pre(GATE_C).mapv(f64::tanh);
        c = f * &c + i * g;
        h = o * c.mapv(f64::tanh);
    }
    let logits = h.mapv(|v| v.max(0.0)).dot(&weights.wd) + &weights.bd;
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    Ok([e0 / (e0 + e1), e1 / (e0 + e1)])
}

pub fn lstm_forward(weights: &LstmWeights, seq: &MotionUnitSeq) -> Result<[f64; 2]> {
    lstm_forward_steps(weights, seq.data())
}

impl SequenceClassifier for LstmWeights {
    fn classify(&self, seq: &MotionUnitSeq) -> Result<[f64; 2]> {
        lstm_forward(self, seq)
    }
}

/// Low-passes each gyro axis over the whole session.
fn filtered_gyro(imu: &[ImuSample], cutoff_hz: f64) -> Result<Vec<[f64; 3]>> {
    let rate = if imu.len() >= 2 {
        (imu.len() - 1) as f64 / (imu[imu.len() - 1].t - imu[0].t)
    } else {
        NOMINAL_IMU_HZ
    };
    let axes = (0..3)
        .map(|a| {
            let x: Vec<f64> = imu.iter().map(|s| s.gyro[a]).collect();
            lowpass_first_order(&x, rate, cutoff_hz)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..imu.len()).map(|i| [axes[0][i], axes[1][i], axes[2][i]]).collect())
}

/// Linear interpolation of the filtered gyro stream onto the uniform 70 Hz
/// grid `t0 + k / 70`, holding the end values outside the sampled span.
fn window_on_grid(times: &[f64], gyro: &[[f64; 3]], t0: f64) -> Vec<[f64; 3]> {
    let mut j = 0;
    (0..WINDOW_SAMPLES)
        .map(|k| {
            let t = t0 + k as f64 / NOMINAL_IMU_HZ;
            while j + 1 < times.len() && times[j + 1] <= t {
                j += 1;
            }
            if t <= times[0] {
                return gyro[0];
            }
            if j + 1 >= times.len() {
                return gyro[times.len() - 1];
            }
            let a = (t - times[j]) / (times[j + 1] - times[j]);
            let (p, q) = (gyro[j], gyro[j + 1]);
            [0, 1, 2].map(|i| p[i] + a * (q[i] - p[i]))
        })
        .collect()
}

/// Motion pipeline bound to a classifier. Second `i` is decided by the
/// window `[i + 1 - window_s, i + 1)`; unfiltered seconds before the first
/// full window are non-reaction.
pub struct MotionPipeline<'a> {
    config: &'a MotionConfig,
    classifier: &'a dyn SequenceClassifier,
}

impl<'a> MotionPipeline<'a> {
    pub fn new(config: &'a MotionConfig, classifier: &'a dyn SequenceClassifier) -> Self {
        MotionPipeline { config, classifier }
    }

    pub fn run(&self, session: &Session) -> Result<PipelineOutput> {
        let cfg = self.config;
        if cfg.window_s * NOMINAL_IMU_HZ as usize != WINDOW_SAMPLES {
            return Err(Error::Config(format!(
                "motion window must be {} s to yield {UNITS} units",
                WINDOW_SAMPLES / NOMINAL_IMU_HZ as usize
            )));
        }
        let segments = segment_session(session);
        let imu = session.imu();
        let times: Vec<f64> = imu.iter().map(|s| s.t).collect();
        let gyro = if imu.is_empty() {
            Vec::new()
        } else {
            filtered_gyro(imu, cfg.lpf_cutoff_hz)?
        };
        let mut stats = FilterStats {
            total: segments.len(),
            ..Default::default()
        };
        let mut outcomes = Vec::with_capacity(segments.len());
        let mut labels = Vec::with_capacity(segments.len());
        let mut diagnostics = Vec::new();
        for seg in &segments {
            if cfg.filter.enabled
                && motion_prefilter(&seg.accel(), &cfg.filter) == FilterDecision::FilteredNonReaction
            {
                stats.motion_filtered += 1;
                outcomes.push(SegmentOutcome::MotionFiltered);
                labels.push(ReactionLabel::NonReaction);
                continue;
            }
            if seg.index + 1 < cfg.window_s || gyro.is_empty() {
                outcomes.push(SegmentOutcome::ColdStart);
                labels.push(ReactionLabel::NonReaction);
                continue;
            }
            stats.classified += 1;
            let t0 = seg.t_end - cfg.window_s as f64;
            let result = extract_motion_units(&window_on_grid(&times, &gyro, t0))
                .and_then(|units| self.classifier.classify(&units));
            match result {
                Ok([p_head, p_non]) => {
                    if !(p_head.is_finite() && p_non.is_finite()) {
                        diagnostics.push(Diagnostic {
                            segment: seg.index,
                            message: "classifier returned non-finite probabilities".into(),
                        });
                        outcomes.push(SegmentOutcome::Failed);
                        labels.push(ReactionLabel::NonReaction);
                        continue;
                    }
                    let label = if p_head > cfg.decision_threshold {
                        ReactionLabel::HeadMotion
                    } else {
                        ReactionLabel::NonReaction
                    };
                    outcomes.push(SegmentOutcome::Classified {
                        mapped: PipelineLabel::Final(label),
                        distance: None,
                        score: Some(p_head),
                        label,
                    });
                    labels.push(label);
                }
                Err(e) => {
                    log::warn!("session {} second {}: {e}", session.id(), seg.index);
                    diagnostics.push(Diagnostic {
                        segment: seg.index,
                        message: e.to_string(),
                    });
                    outcomes.push(SegmentOutcome::Failed);
                    labels.push(ReactionLabel::NonReaction);
                }
            }
        }
        let events = merge_labels_to_events(&labels);
        Ok(PipelineOutput {
            raw_labels: labels.clone(),
            labels,
            outcomes,
            events,
            stats,
            diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn sine_gyro(freq: f64, amp: f64) -> Vec<[f64; 3]> {
        let raw: Vec<f64> = (0..WINDOW_SAMPLES)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 70.0).sin())
            .collect();
        let y = lowpass_first_order(&raw, 70.0, 5.0).unwrap();
        y.iter().map(|&v| [0.1 * v, v, 0.0]).collect()
    }

    #[test]
    fn constant_gyro_units() {
        let seq = extract_motion_units(&vec![[-2.5; 3]; WINDOW_SAMPLES]).unwrap();
        for row in seq.data().rows() {
            for a in 0..3 {
                let b = a * STATS_PER_AXIS;
                assert_eq!(row[b + stat::MAX], -2.5);
                assert_eq!(row[b + stat::MIN], -2.5);
                assert_eq!(row[b + stat::MEAN], -2.5);
                assert_eq!(row[b + stat::RANGE], 0.0);
                assert_eq!(row[b + stat::STD], 0.0);
                assert_eq!(row[b + stat::RMS], 2.5);
            }
        }
    }

    #[test]
    fn alternating_unit_by_hand() {
        let unit: Vec<[f64; 3]> = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0]
            .iter()
            .map(|&x| [x, 0.0, 0.0])
            .collect();
        let u = motion_units(&unit).unwrap();
        assert_abs_diff_eq!(u[[0, stat::MEAN]], 1.0 / 7.0, epsilon = 1e-15);
        assert_eq!(u[[0, stat::MAX]], 1.0);
        assert_eq!(u[[0, stat::MIN]], -1.0);
        assert_eq!(u[[0, stat::RANGE]], 2.0);
        assert_abs_diff_eq!(u[[0, stat::STD]], (1.0f64 - 1.0 / 49.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(u[[0, stat::RMS]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(extract_motion_units(&vec![[0.0; 3]; 489]).is_err());
        assert!(motion_units(&[]).is_err());
    }

    #[test]
    fn zero_sequence_is_not_motion() {
        let seq = extract_motion_units(&vec![[0.0; 3]; WINDOW_SAMPLES]).unwrap();
        let [p, q] = HeuristicClassifier::default().classify(&seq).unwrap();
        assert!(p < 0.5);
        assert_abs_diff_eq!(p + q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nodding_is_motion() {
        let h = HeuristicClassifier::default();
        for freq in [1.0, 2.0, 3.0] {
            let seq = extract_motion_units(&sine_gyro(freq, 30.0)).unwrap();
            let f = h.features(&seq);
            assert_eq!(f.axis, 1);
            assert!(f.periodicity > 0.7, "{freq} Hz: {f:?}");
            assert_abs_diff_eq!(f.dominant_hz, freq, epsilon = 0.15);
            assert!(h.classify(&seq).unwrap()[0] > 0.5, "{freq} Hz: {f:?}");
        }
    }

    #[test]
    fn nodding_that_stopped_is_not_current_motion() {
        let mut g = sine_gyro(2.0, 30.0);
        for s in &mut g[WINDOW_SAMPLES - 140..] {
            *s = [0.0; 3];
        }
        let seq = extract_motion_units(&g).unwrap();
        assert!(HeuristicClassifier::default().classify(&seq).unwrap()[0] < 0.5);
    }

    #[test]
    fn white_noise_is_mostly_not_motion() {
        let h = HeuristicClassifier::default();
        let positives = (0..10)
            .filter(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let raw: Vec<[f64; 3]> = (0..WINDOW_SAMPLES)
                    .map(|_| [0, 1, 2].map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                let seq = extract_motion_units(&raw).unwrap();
                h.classify(&seq).unwrap()[0] >= 0.5
            })
            .count();
        assert!(positives <= 1, "{positives} of 10 noise windows called motion");
    }

    fn tiny_weights(w: f64, u: f64, b: f64, wd: [f64; 2], bd: [f64; 2]) -> LstmWeights {
        let m = |v: f64| Array2::from_elem((1, 1), v);
        LstmWeights::new(
            [m(w), m(w * 0.5), m(-w), m(w * 2.0)],
            [m(u), m(u), m(u), m(u)],
            std::array::from_fn(|_| Array1::from_elem(1, b)),
            Array2::from_shape_vec((1, 2), wd.to_vec()).unwrap(),
            Array1::from(bd.to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn scalar_lstm_by_hand() {
        let (w, u, b) = (0.7, -0.3, 0.1);
        let weights = tiny_weights(w, u, b, [1.5, -0.5], [0.2, 0.0]);
        let x = 0.8;
        let seq = Array2::from_elem((1, 1), x);
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = s(w * x + b);
        let g = (2.0 * w * x + b).tanh();
        let o = s(-w * x + b);
        let c = i * g;
        let h = o * c.tanh();
        let h = h.max(0.0);
        let l0 = 1.5 * h + 0.2;
        let l1 = -0.5 * h;
        let p0 = l0.exp() / (l0.exp() + l1.exp());
        let out = lstm_forward_steps(&weights, &seq).unwrap();
        assert_abs_diff_eq!(out[0], p0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 1.0 - p0, epsilon = 1e-12);
    }

    fn zero_weights(h: usize) -> LstmWeights {
        LstmWeights::new(
            std::array::from_fn(|_| Array2::zeros((FEATURES, h))),
            std::array::from_fn(|_| Array2::zeros((h, h))),
            std::array::from_fn(|_| Array1::zeros(h)),
            Array2::zeros((h, 2)),
            Array1::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_even_odds() {
        let seq = extract_motion_units(&sine_gyro(2.0, 10.0)).unwrap();
        assert_eq!(lstm_forward(&zero_weights(32), &seq).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn json_round_trip_nested_and_flat() {
        let nested = |r: usize, c: usize, v: f64| serde_json::json!(vec![vec![v; c]; r]);
        let h = 4;
        let doc = serde_json::json!({
            "Wi": nested(FEATURES, h, 0.01), "Wf": nested(FEATURES, h, 0.02),
            "Wo": nested(FEATURES, h, 0.03), "Wc": vec![0.04; FEATURES * h],
            "Ui": nested(h, h, 0.1), "Uf": nested(h, h, 0.1),
            "Uo": nested(h, h, 0.1), "Uc": vec![0.1; h * h],
            "bi": vec![0.0; h], "bf": vec![1.0; h], "bo": vec![0.0; h], "bc": vec![0.0; h],
            "Wd": nested(h, 2, 0.5), "bd": [0.0, 0.1]
        });
        let w = LstmWeights::from_json(&doc.to_string()).unwrap();
        assert_eq!((w.input_dim(), w.hidden()), (FEATURES, h));
        assert_eq!(w.w[GATE_C][[3, 2]], 0.04);
        let mut bad = doc.clone();
        bad["Uc"] = serde_json::json!(vec![0.1; h * h - 1]);
        assert!(LstmWeights::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn still_session_is_all_filtered() {
        let imu = crate::session::tests::still_imu(20.0);
        let session = Session::new(crate::session::tests::meta(), imu, None).unwrap();
        let cfg = MotionConfig::default();
        let out = MotionPipeline::new(&cfg, &HeuristicClassifier::default())
            .run(&session)
            .unwrap();
        assert!(out.labels.iter().all(|&l| l == ReactionLabel::NonReaction));
        assert_eq!(out.stats.filtering_ratio(), 1.0);
    }

    fn random_weights(rng: &mut ChaCha8Rng, h: usize) -> LstmWeights {
        let mut m = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0));
        let w = [m(FEATURES, h), m(FEATURES, h), m(FEATURES, h), m(FEATURES, h)];
        let u = [m(h, h), m(h, h), m(h, h), m(h, h)];
        let b = std::array::from_fn(|_| m(1, h).row(0).to_owned());
        LstmWeights::new(w, u, b, m(h, 2), m(1, 2).row(0).to_owned()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn unit_identities(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gyro: Vec<[f64; 3]> = (0..WINDOW_SAMPLES)
                .map(|_| [0, 1, 2].map(|_| rng.gen_range(-200.0..200.0)))
                .collect();
            let seq = extract_motion_units(&gyro).unwrap();
            prop_assert_eq!(seq.shape(), (UNITS, FEATURES));
            for row in seq.data().rows() {
                for a in 0..3 {
                    let b = a * STATS_PER_AXIS;
                    let (mx, mn, mean) = (row[b + stat::MAX], row[b + stat::MIN], row[b + stat::MEAN]);
                    prop_assert!(mn <= mean && mean <= mx);
                    prop_assert_eq!(row[b + stat::RANGE], mx - mn);
                    let (sd, rms) = (row[b + stat::STD], row[b + stat::RMS]);
                    prop_assert!((rms * rms - (mean * mean + sd * sd)).abs() <= 1e-9 * rms.max(1.0).powi(2));
                }
            }
        }

        #[test]
        fn lstm_output_is_a_distribution(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_weights(&mut rng, 8);
            let seq = MotionUnitSeq::new(Array2::from_shape_fn((UNITS, FEATURES), |_| rng.gen_range(-3.0..3.0))).unwrap();
            let [p, q] = lstm_forward(&w, &seq).unwrap();
            prop_assert!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0);
            prop_assert!((p + q - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn permuting_features_with_weights(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_weights(&mut rng, 5);
            let seq = Array2::from_shape_fn((UNITS, FEATURES), |_| rng.gen_range(-3.0..3.0));
            let mut perm: Vec<usize> = (0..FEATURES).collect();
            for i in (1..FEATURES).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let pseq = seq.select(Axis(1), &perm);
            let mut pw = w.clone();
            for g in 0..4 {
                pw.w[g] = w.w[g].select(Axis(0), &perm);
            }
            let a = lstm_forward_steps(&w, &seq).unwrap();
            let b = lstm_forward_steps(&pw, &pseq).unwrap();
            prop_assert!((a[0] - b[0]).abs() < 1e-12);
        }
    }
}
