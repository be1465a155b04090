//! Session directory and event file formats.
//!
//! ```text
//! <session>/meta.json     SessionMeta
//! <session>/imu.csv       t,ax,ay,az,gx,gy,gz
//! <session>/audio.wav     mono 16-bit PCM (optional)
//! <session>/scores.jsonl  per-segment classifier scores (optional)
//! <session>/pitch.csv     t,f0,confidence (optional)
//! <session>/labels.csv    t_start,t_end,label ground truth (optional)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{Audio, ImuSample, Session, SessionMeta};
use crate::types::{ReactionEvent, ReactionLabel};
use crate::vocal::{write_score_records, PitchPlayback, ScorePlayback, ScoreRecord};

pub const META_FILE: &str = "meta.json";
pub const IMU_FILE: &str = "imu.csv";
pub const AUDIO_FILE: &str = "audio.wav";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const PITCH_FILE: &str = "pitch.csv";
pub const LABELS_FILE: &str = "labels.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "ax", "ay", "az", "gx", "gy", "gz"] {
        return Err(Error::parse(path, 1, "expected header t,ax,ay,az,gx,gy,gz"));
    }
    rdr.deserialize::<ImuRow>()
        .enumerate()
        .map(|(i, row)| {
            let r = row.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            let sample = ImuSample {
                t: r.t,
                accel: [r.ax, r.ay, r.az],
                gyro: [r.gx, r.gy, r.gz],
            };
            if sample.accel.iter().chain(&sample.gyro).chain([&sample.t]).any(|v| !v.is_finite()) {
                return Err(Error::parse(path, i + 2, "non-finite value"));
            }
            Ok(sample)
        })
        .collect()
}

pub fn write_imu_csv(path: &Path, imu: &[ImuSample]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    for s in imu {
        wtr.serialize(ImuRow {
            t: s.t,
            ax: s.accel[0],
            ay: s.accel[1],
            az: s.accel[2],
            gx: s.gyro[0],
            gy: s.gyro[1],
            gz: s.gyro[2],
        })?;
    }
    wtr.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads mono PCM. Integer samples are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::param(format!(
            "{}: expected mono audio, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Ok(Audio {
        sample_rate: spec.sample_rate,
        samples,
    })
}

/// Writes 16-bit mono PCM, clipping to full scale.
pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::new(create(path)?, spec)?;
    for &x in &audio.samples {
        w.write_sample((x.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    t_start: f64,
    t_end: f64,
    label: ReactionLabel,
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<ReactionEvent>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<LabelRow>()
        .enumerate()
        .map(|(i, row)| {
            let r = row.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            if !(r.t_end > r.t_start) {
                return Err(Error::parse(path, i + 2, "t_end must exceed t_start"));
            }
            Ok(ReactionEvent {
                label: r.label,
                t_start: r.t_start,
                t_end: r.t_end,
            })
        })
        .collect()
}

pub fn write_labels_csv(path: &Path, events: &[ReactionEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    for e in events {
        wtr.serialize(LabelRow {
            t_start: e.t_start,
            t_end: e.t_end,
            label: e.label,
        })?;
    }
    wtr.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn events_to_jsonl(events: &[ReactionEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
        .collect()
}

pub fn write_events_jsonl(path: &Path, events: &[ReactionEvent]) -> Result<()> {
    write_text(path, &events_to_jsonl(events))
}

pub fn read_events_jsonl(path: &Path) -> Result<Vec<ReactionEvent>> {
    let file = File::open(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ReactionEvent =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(e);
    }
    Ok(out)
}

/// Per-second labels of a file that may hold both a vocal and a motion
/// timeline. Non-reaction events are ignored and a vocal label outranks
/// head motion in the same second.
pub fn combined_labels(events: &[ReactionEvent], n_seconds: usize) -> Vec<ReactionLabel> {
    let mut labels = vec![ReactionLabel::NonReaction; n_seconds];
    for e in events.iter().filter(|e| e.label.is_reaction()) {
        let one = crate::types::expand_events_to_labels(std::slice::from_ref(e), n_seconds);
        for (l, new) in labels.iter_mut().zip(one) {
            if new == ReactionLabel::NonReaction {
                continue;
            }
            if *l == ReactionLabel::NonReaction || (new.is_vocal() && *l == ReactionLabel::HeadMotion) {
                *l = new;
            }
        }
    }
    labels
}

/// Whole seconds covered by an event list.
pub fn span_seconds(events: &[ReactionEvent]) -> usize {
    events.iter().map(|e| e.t_end).fold(0.0, f64::max).round() as usize
}

/// Everything a session directory can hold.
#[derive(Debug)]
pub struct SessionDir {
    pub path: PathBuf,
    pub session: Session,
    pub scores: Option<ScorePlayback>,
    pub pitch: Option<PitchPlayback>,
    pub truth: Option<Vec<ReactionEvent>>,
}

pub fn load_session_dir(dir: &Path) -> Result<SessionDir> {
    let meta: SessionMeta = read_json(&dir.join(META_FILE))?;
    let imu = read_imu_csv(&dir.join(IMU_FILE))?;
    let optional = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
    let audio = optional(AUDIO_FILE).map(|p| read_wav(&p)).transpose()?;
    let scores = optional(SCORES_FILE).map(|p| ScorePlayback::load(&p)).transpose()?;
    let pitch = optional(PITCH_FILE).map(|p| PitchPlayback::load(&p)).transpose()?;
    let truth = optional(LABELS_FILE).map(|p| read_labels_csv(&p)).transpose()?;
    Ok(SessionDir {
        path: dir.to_path_buf(),
        session: Session::new(meta, imu, audio)?,
        scores,
        pitch,
        truth,
    })
}

/// Optional companions written next to a session.
#[derive(Debug, Default, Clone, Copy)]
pub struct Companions<'a> {
    pub scores: Option<&'a [ScoreRecord]>,
    pub pitch: Option<&'a PitchPlayback>,
    pub truth: Option<&'a [ReactionEvent]>,
}

pub fn write_session_dir(dir: &Path, session: &Session, extra: Companions<'_>) -> Result<()> {
    write_json(&dir.join(META_FILE), session.meta())?;
    write_imu_csv(&dir.join(IMU_FILE), session.imu())?;
    if let Some(a) = session.audio() {
        write_wav(&dir.join(AUDIO_FILE), a)?;
    }
    if let Some(s) = extra.scores {
        write_text(&dir.join(SCORES_FILE), &write_score_records(s))?;
    }
    if let Some(p) = extra.pitch {
        write_text(&dir.join(PITCH_FILE), &p.to_csv())?;
    }
    if let Some(t) = extra.truth {
        write_labels_csv(&dir.join(LABELS_FILE), t)?;
    }
    Ok(())
}
