//! Listening sessions and their one-second tiling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NOMINAL_IMU_HZ: f64 = 70.0;
pub const IMU_RATE_TOLERANCE_HZ: f64 = 5.0;
pub const AUDIO_HZ: u32 = 44_100;

/// One IMU reading: accelerometer in g, gyroscope in deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

/// Mono PCM audio in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl Audio {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Session metadata as stored in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub subject_id: String,
    pub song_id: String,
    pub place_tag: String,
    /// Song position (seconds) at session time 0.
    pub start_offset_in_song: f64,
}

/// One listening session. Validated on construction, immutable afterwards.
#[derive(Debug, Clone)]
pub struct Session {
    meta: SessionMeta,
    imu: Vec<ImuSample>,
    audio: Option<Audio>,
}

impl Session {
    /// Checks that IMU timestamps strictly increase at 70 ± 5 Hz and that the
    /// audio and IMU spans agree within one second.
    pub fn new(meta: SessionMeta, imu: Vec<ImuSample>, audio: Option<Audio>) -> Result<Self> {
        if !meta.start_offset_in_song.is_finite() || meta.start_offset_in_song < 0.0 {
            return Err(Error::param("start_offset_in_song must be finite and >= 0"));
        }
        for (i, w) in imu.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::Alignment(format!(
                    "IMU timestamps not strictly increasing at sample {}",
                    i + 1
                )));
            }
        }
        if imu.len() >= 2 {
            let span = imu[imu.len() - 1].t - imu[0].t;
            let rate = (imu.len() - 1) as f64 / span;
            if (rate - NOMINAL_IMU_HZ).abs() > IMU_RATE_TOLERANCE_HZ {
                return Err(Error::Alignment(format!(
                    "IMU rate {rate:.2} Hz outside {NOMINAL_IMU_HZ} ± {IMU_RATE_TOLERANCE_HZ} Hz"
                )));
            }
        }
        if let Some(a) = &audio {
            if a.sample_rate == 0 {
                return Err(Error::param("audio sample rate must be positive"));
            }
            if !imu.is_empty() {
                let imu_span = imu_duration(&imu);
                if (a.duration() - imu_span).abs() > 1.0 {
                    return Err(Error::Alignment(format!(
                        "audio spans {:.3} s but IMU spans {:.3} s",
                        a.duration(),
                        imu_span
                    )));
                }
            }
        }
        Ok(Session { meta, imu, audio })
    }

    pub fn meta(&self) -> &SessionMeta {
        &self.meta
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn imu(&self) -> &[ImuSample] {
        &self.imu
    }

    pub fn audio(&self) -> Option<&Audio> {
        self.audio.as_ref()
    }

    /// Usable duration: the shorter of the two streams.
    pub fn duration(&self) -> f64 {
        let imu = if self.imu.is_empty() {
            None
        } else {
            Some(imu_duration(&self.imu))
        };
        match (imu, self.audio.as_ref().map(Audio::duration)) {
            (Some(i), Some(a)) => i.min(a),
            (Some(i), None) => i,
            (None, Some(a)) => a,
            (None, None) => 0.0,
        }
    }

    /// Number of whole seconds, i.e. the segment count.
    pub fn n_seconds(&self) -> usize {
        (self.duration() + 1e-9).floor().max(0.0) as usize
    }
}

/// IMU span measured from t = 0, extended by one mean sample period so that
/// `n` samples at rate `r` starting at 0 cover `n / r` seconds.
fn imu_duration(imu: &[ImuSample]) -> f64 {
    let last = imu[imu.len() - 1].t;
    if imu.len() < 2 {
        return last.max(0.0);
    }
    let dt = (last - imu[0].t) / (imu.len() - 1) as f64;
    last + dt
}

/// One aligned second of sensor data.
#[derive(Debug, Clone, Copy)]
pub struct SensorSegment<'a> {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// IMU samples with `t_start <= t < t_end`.
    pub imu: &'a [ImuSample],
    /// Audio samples `[index * sr, (index + 1) * sr)`; empty when the session
    /// carries no audio.
    pub audio: &'a [f32],
    pub sample_rate: u32,
}

impl SensorSegment<'_> {
    pub fn accel(&self) -> Vec<[f64; 3]> {
        self.imu.iter().map(|s| s.accel).collect()
    }
}

/// Tiles a session into whole one-second segments; the trailing partial
/// second is dropped.
pub fn segment_session(session: &Session) -> Vec<SensorSegment<'_>> {
    let n = session.n_seconds();
    let imu = session.imu();
    let (audio, sr): (&[f32], u32) = match session.audio() {
        Some(a) => (&a.samples, a.sample_rate),
        None => (&[], 0),
    };
    let mut out = Vec::with_capacity(n);
    let mut lo = imu.partition_point(|s| s.t < 0.0);
    for index in 0..n {
        let t_start = index as f64;
        let t_end = t_start + 1.0;
        let hi = lo + imu[lo..].partition_point(|s| s.t < t_end);
        let audio_slice = if sr > 0 {
            let a = index * sr as usize;
            &audio[a..a + sr as usize]
        } else {
            &[]
        };
        out.push(SensorSegment {
            index,
            t_start,
            t_end,
            imu: &imu[lo..hi],
            audio: audio_slice,
            sample_rate: sr,
        });
        lo = hi;
    }
    out
}
