//! Synthetic labeled sessions.
//!
//! Each second gets a regime (still, fidgeting, large motion, nodding,
//! vocal reaction; quiet, chatter, singing, whistling) from the reaction
//! script and the place profile. IMU, PCM audio, pitch frames and classifier
//! scores are all derived from those regimes, so the same seed always
//! yields the same bytes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{midi_to_hz, Chroma, CHROMA_HOP_S};
use crate::error::{Error, Result};
use crate::musicinfo::NoteTrack;
use crate::session::{Audio, ImuSample, Session, SessionMeta, AUDIO_HZ, NOMINAL_IMU_HZ};
use crate::types::{expand_events_to_labels, merge_labels_to_events, ReactionEvent, ReactionLabel};
use crate::vocal::{PitchFrame, PitchPlayback, ScoreRecord};

use super::profile::{Place, PlaceProfile};

/// Class list of the oracle classifier, modeled on a general audio tagger.
pub const ORACLE_CLASSES: [&str; 10] = [
    "Speech", "Music", "Singing", "Humming", "Whistling", "Silence", "Chatter", "Vehicle", "Laughter",
    "Typing",
];

const IMU_PER_S: usize = NOMINAL_IMU_HZ as usize;
const FRAMES_PER_S: usize = 10;

/// Reaction-level movement range (g), inside both pipelines' pass bands.
pub const REACTION_LEVEL_G: (f64, f64) = (0.02, 0.08);
/// Large-motion range (g), above both pass bands.
pub const LARGE_LEVEL_G: (f64, f64) = (0.15, 0.4);
/// Fidgeting range (g), inside the pass bands but not a reaction.
pub const FIDGET_LEVEL_G: (f64, f64) = (0.015, 0.1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptSpan {
    pub t0: f64,
    pub t1: f64,
    pub label: ReactionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub id: String,
    pub subject_id: String,
    pub song_id: String,
    pub place: Place,
    pub duration_s: usize,
    /// Drawn at random when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_offset_in_song: Option<f64>,
    #[serde(default)]
    pub script: Vec<ScriptSpan>,
    /// Forces the motion of every non-reaction second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<Activity>,
}

/// Whole-session activity overriding the place's non-reaction motion mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    /// Sitting still, below both movement bands.
    Still,
    /// Workout-level movement, above both movement bands.
    Exercise,
}

impl SessionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration_s == 0 {
            return Err(Error::Config(format!("session {}: duration must be positive", self.id)));
        }
        let mut spans = self.script.clone();
        spans.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        for s in &spans {
            if !(s.t0 >= 0.0 && s.t1 > s.t0 && s.t1 <= self.duration_s as f64) {
                return Err(Error::Config(format!(
                    "session {}: span {}..{} outside 0..{}",
                    self.id, s.t0, s.t1, self.duration_s
                )));
            }
        }
        for w in spans.windows(2) {
            if w[1].t0 < w[0].t1 {
                return Err(Error::Config(format!(
                    "session {}: script spans {}..{} and {}..{} overlap",
                    self.id, w[0].t0, w[0].t1, w[1].t0, w[1].t1
                )));
            }
        }
        Ok(())
    }

    /// Per-second ground truth (midpoint rule).
    pub fn truth_labels(&self) -> Vec<ReactionLabel> {
        let events: Vec<ReactionEvent> = self
            .script
            .iter()
            .map(|s| ReactionEvent {
                label: s.label,
                t_start: s.t0,
                t_end: s.t1,
            })
            .collect();
        expand_events_to_labels(&events, self.duration_s)
    }
}

/// A generated session with everything the pipelines and the evaluator need.
#[derive(Debug, Clone)]
pub struct GeneratedSession {
    pub session: Session,
    pub truth: Vec<ReactionLabel>,
    pub scores: Vec<ScoreRecord>,
    pub pitch: PitchPlayback,
    /// Movement level (g) the generator assigned to each second.
    pub levels: Vec<f64>,
    /// Sound level (dB) of each second's audio.
    pub sound_db: Vec<f64>,
}

impl GeneratedSession {
    pub fn truth_events(&self) -> Vec<ReactionEvent> {
        merge_labels_to_events(&self.truth)
    }
}

/// FNV-1a, used to derive stable sub-seeds from names.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn sub_seed(seed: u64, name: &str) -> u64 {
    seed ^ stable_hash(name).rotate_left(17)
}

/// A vocal-line note track: notes of 3-8 frames moving by small steps,
/// with short rests between phrases.
pub fn generate_note_track(song_id: &str, duration_s: f64, seed: u64) -> Result<NoteTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, song_id));
    let n = (duration_s / CHROMA_HOP_S).round() as usize;
    let mut symbols = Vec::with_capacity(n);
    let mut pc: i32 = rng.gen_range(0..12);
    let mut since_rest = 0usize;
    while symbols.len() < n {
        if since_rest > 20 && rng.gen_bool(0.25) {
            let rest = rng.gen_range(1..=2);
            symbols.extend(std::iter::repeat_n(Chroma::UNVOICED, rest));
            since_rest = 0;
            continue;
        }
        let len = rng.gen_range(3..=8);
        let step = [-4, -3, -2, -1, 1, 2, 3, 4, 5][rng.gen_range(0..9)];
        pc = (pc + step).rem_euclid(12);
        symbols.extend(std::iter::repeat_n(Chroma::voiced(pc as u8)?, len));
        since_rest += len;
    }
    symbols.truncate(n);
    NoteTrack::new(song_id, symbols)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MotionRegime {
    Still,
    Fidget,
    Large,
    Nod { freq: f64, amp: f64, phase: f64 },
    Sway,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SoundRegime {
    Quiet,
    Chatter,
    Sing { base_midi: f64, lag: i64 },
    Whistle { base_midi: f64, lag: i64 },
}

/// Regimes for every second. Non-reaction stretches are cut into runs of
/// 2-6 s that share one regime.
fn plan_regimes(
    truth: &[ReactionLabel],
    spans: &[ScriptSpan],
    profile: &PlaceProfile,
    activity: Option<Activity>,
    rng: &mut ChaCha8Rng,
) -> Vec<(MotionRegime, SoundRegime)> {
    let mut out = Vec::with_capacity(truth.len());
    let mut run_left = 0usize;
    let mut current = (MotionRegime::Still, SoundRegime::Quiet);
    let mut span_regime: Option<(usize, (MotionRegime, SoundRegime))> = None;
    let voice_base = if rng.gen_bool(0.5) { 48.0 } else { 60.0 };
    for (i, &label) in truth.iter().enumerate() {
        let mid = i as f64 + 0.5;
        let span_idx = spans.iter().position(|s| s.t0 <= mid && mid < s.t1);
        match (label, span_idx) {
            (ReactionLabel::NonReaction, _) | (_, None) => {
                span_regime = None;
                if run_left == 0 {
                    run_left = rng.gen_range(2..=6);
                    let m = rng.gen::<f64>();
                    let motion = if let Some(a) = activity {
                        match a {
                            Activity::Still => MotionRegime::Still,
                            Activity::Exercise => MotionRegime::Large,
                        }
                    } else if m < profile.still_prob {
                        MotionRegime::Still
                    } else if m < profile.still_prob + profile.large_prob {
                        MotionRegime::Large
                    } else {
                        MotionRegime::Fidget
                    };
                    let sound = if rng.gen_bool(profile.chatter_prob) {
                        SoundRegime::Chatter
                    } else {
                        SoundRegime::Quiet
                    };
                    current = (motion, sound);
                }
                run_left -= 1;
                out.push(current);
            }
            (label, Some(k)) => {
                run_left = 0;
                let regime = match span_regime {
                    Some((j, r)) if j == k => r,
                    _ => {
                        let lag = rng.gen_range(-1..=1);
                        let r = match label {
                            ReactionLabel::SingingHumming => (
                                MotionRegime::Sway,
                                SoundRegime::Sing {
                                    base_midi: voice_base,
                                    lag,
                                },
                            ),
                            ReactionLabel::Whistling => (
                                MotionRegime::Sway,
                                SoundRegime::Whistle {
                                    base_midi: if rng.gen_bool(0.5) { 60.0 } else { 72.0 },
                                    lag,
                                },
                            ),
                            _ => (
                                MotionRegime::Nod {
                                    freq: rng.gen_range(1.0..3.0),
                                    amp: rng.gen_range(15.0..40.0),
                                    phase: rng.gen_range(0.0..2.0 * PI),
                                },
                                SoundRegime::Quiet,
                            ),
                        };
                        span_regime = Some((k, r));
                        r
                    }
                };
                out.push(regime);
            }
        }
    }
    out
}

/// `n` draws with mean exactly 0 and population std exactly 1.
fn standardized(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd > 1e-6 {
            return z.into_iter().map(|x| (x - mean) / sd).collect();
        }
    }
}

/// One labeled session. `track` is the song's note track; the session must
/// fit inside it.
pub fn generate_session(spec: &SessionSpec, track: &NoteTrack, seed: u64) -> Result<GeneratedSession> {
    spec.validate()?;
    if track.song_id() != spec.song_id {
        return Err(Error::Config(format!(
            "session {} wants song {}, got track {}",
            spec.id,
            spec.song_id,
            track.song_id()
        )));
    }
    let profile = spec.place.profile();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &spec.id));
    let n = spec.duration_s;
    let slack = track.duration() - n as f64 - 1.0;
    if slack < 0.0 {
        return Err(Error::Config(format!(
            "song {} ({:.1} s) is too short for session {} ({n} s)",
            spec.song_id,
            track.duration(),
            spec.id
        )));
    }
    let offset = match spec.start_offset_in_song {
        Some(o) if o >= 0.0 && o <= slack => o,
        Some(o) => {
            return Err(Error::Config(format!(
                "session {}: start offset {o} leaves no room in the song",
                spec.id
            )))
        }
        None => (rng.gen_range(0.0..=slack) * 10.0).floor() / 10.0,
    };
    let truth = spec.truth_labels();
    let regimes = plan_regimes(&truth, &spec.script, &profile, spec.activity, &mut rng);
    let tilt: f64 = rng.gen_range(0.0..0.2);
    let gravity = [tilt.sin(), 0.0, tilt.cos()];

    let mut imu = Vec::with_capacity(n * IMU_PER_S);
    let mut levels = Vec::with_capacity(n);
    let mut ar = [0.0f64; 3];
    let mut ar_scale = 0.0;
    let mut prev_motion: Option<MotionRegime> = None;
    for (i, &(motion, _)) in regimes.iter().enumerate() {
        let (lo, hi) = match motion {
            MotionRegime::Still => profile.still_level_g,
            MotionRegime::Fidget => FIDGET_LEVEL_G,
            MotionRegime::Large => LARGE_LEVEL_G,
            MotionRegime::Nod { .. } | MotionRegime::Sway => REACTION_LEVEL_G,
        };
        let level = rng.gen_range(lo..hi);
        levels.push(level);
        if prev_motion != Some(motion) {
            ar_scale = match motion {
                MotionRegime::Still => 0.0,
                MotionRegime::Fidget => rng.gen_range(3.0..12.0),
                MotionRegime::Large => rng.gen_range(30.0..60.0),
                MotionRegime::Nod { .. } => 0.5,
                MotionRegime::Sway => rng.gen_range(1.0..3.0),
            };
            prev_motion = Some(motion);
        }
        let z = standardized(&mut rng, IMU_PER_S);
        for (k, zk) in z.iter().enumerate() {
            let t = (i * IMU_PER_S + k) as f64 / NOMINAL_IMU_HZ;
            let m = 1.0 + level * zk;
            let accel = gravity.map(|g| m * g);
            let phi: f64 = 0.9;
            let innovation = ar_scale * (1.0 - phi * phi).sqrt();
            for a in ar.iter_mut() {
                *a = phi * *a + innovation * rng.sample::<f64, _>(StandardNormal);
            }
            let noise = Normal::new(0.0, 0.2).expect("valid normal");
            let mut gyro = [0, 1, 2].map(|a| ar[a] + noise.sample(&mut rng));
            if let MotionRegime::Nod { freq, amp, phase } = motion {
                let s = (2.0 * PI * freq * t + phase).sin();
                gyro[1] += amp * s;
                gyro[0] += 0.2 * amp * s;
            }
            imu.push(ImuSample { t, accel, gyro });
        }
    }

    let frame_len = AUDIO_HZ as usize / FRAMES_PER_S;
    let mut samples = Vec::with_capacity(n * AUDIO_HZ as usize);
    let mut frames = Vec::with_capacity(n * FRAMES_PER_S);
    let mut scores = Vec::with_capacity(n);
    let mut sound_db = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    let background = Normal::new(0.0, profile.background_rms).expect("valid normal");
    for (i, &(_, sound)) in regimes.iter().enumerate() {
        let second_start = samples.len();
        for j in 0..FRAMES_PER_S {
            let song_frame = ((offset + i as f64) / CHROMA_HOP_S).round() as i64 + j as i64;
            let (frame, amp, harmonics) = match sound {
                SoundRegime::Quiet => (
                    PitchFrame {
                        f0: 0.0,
                        confidence: rng.gen_range(0.0..0.2),
                    },
                    0.0,
                    0,
                ),
                SoundRegime::Chatter => (
                    PitchFrame {
                        f0: rng.gen_range(90.0..260.0),
                        confidence: rng.gen_range(0.3..0.9),
                    },
                    rng.gen_range(0.03..0.06),
                    4,
                ),
                SoundRegime::Sing { base_midi, lag } | SoundRegime::Whistle { base_midi, lag } => {
                    let idx = (song_frame + lag).clamp(0, track.symbols().len() as i64 - 1) as usize;
                    let whistle = matches!(sound, SoundRegime::Whistle { .. });
                    let (amp, harmonics) = if whistle { (0.06, 1) } else { (0.1, 3) };
                    match track.symbols()[idx].pitch_class() {
                        Some(pc) => {
                            let detune = if rng.gen_bool(0.05) {
                                [-1.0, 1.0][rng.gen_range(0..2)]
                            } else {
                                0.0
                            };
                            let confidence = if rng.gen_bool(0.05) {
                                rng.gen_range(0.1..0.4)
                            } else {
                                rng.gen_range(0.7..0.95)
                            };
                            let f0 = midi_to_hz(base_midi + pc as f64 + detune);
                            (PitchFrame { f0, confidence }, amp, harmonics)
                        }
                        None => (
                            PitchFrame {
                                f0: 0.0,
                                confidence: rng.gen_range(0.0..0.2),
                            },
                            0.3 * amp,
                            0,
                        ),
                    }
                }
            };
            frames.push(frame);
            let breath = Normal::new(0.0, f64::max(amp, 1e-12)).expect("valid normal");
            for _ in 0..frame_len {
                let mut x = background.sample(&mut rng);
                if harmonics > 0 && frame.f0 > 0.0 {
                    phase = (phase + 2.0 * PI * frame.f0 / AUDIO_HZ as f64) % (2.0 * PI);
                    x += (1..=harmonics)
                        .map(|h| amp / h as f64 * (h as f64 * phase).sin())
                        .sum::<f64>();
                } else if amp > 0.0 {
                    x += breath.sample(&mut rng);
                }
                samples.push(x as f32);
            }
        }
        sound_db.push(crate::dsp::sound_level_db(&samples[second_start..], 94.0));
        scores.push(oracle_scores(i, truth[i], sound, &profile, &mut rng));
    }

    let meta = SessionMeta {
        id: spec.id.clone(),
        subject_id: spec.subject_id.clone(),
        song_id: spec.song_id.clone(),
        place_tag: spec.place.as_str().to_string(),
        start_offset_in_song: offset,
    };
    let audio = Audio {
        sample_rate: AUDIO_HZ,
        samples,
    };
    Ok(GeneratedSession {
        session: Session::new(meta, imu, Some(audio))?,
        truth,
        scores,
        pitch: PitchPlayback::new(frames),
        levels,
        sound_db,
    })
}

/// Score vector with `top` first, `runners_up` next in order, the remaining
/// classes below.
fn ranked_scores(index: usize, top: &str, runners_up: &[&str], rng: &mut ChaCha8Rng) -> ScoreRecord {
    let mut weights: Vec<f64> = ORACLE_CLASSES.iter().map(|_| rng.gen_range(0.0..0.2)).collect();
    let pos = |name: &str| ORACLE_CLASSES.iter().position(|c| *c == name).expect("oracle class");
    weights[pos(top)] = rng.gen_range(0.9..1.1);
    let mut next = rng.gen_range(0.5..0.85);
    for r in runners_up {
        weights[pos(r)] = next;
        next *= rng.gen_range(0.6..0.9);
        next = next.max(0.21);
    }
    let total: f64 = weights.iter().sum();
    ScoreRecord {
        index,
        classes: ORACLE_CLASSES.iter().map(|s| s.to_string()).collect(),
        scores: weights.iter().map(|w| w / total).collect(),
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

/// Tagger output derived from the ground truth. Singing is mostly reported
/// as speech or music; chatter is occasionally reported as singing at the
/// place's confusion rate.
fn oracle_scores(
    index: usize,
    truth: ReactionLabel,
    sound: SoundRegime,
    profile: &PlaceProfile,
    rng: &mut ChaCha8Rng,
) -> ScoreRecord {
    let quiet = ["Silence", "Typing", "Vehicle"];
    let r = rng.gen::<f64>();
    match (truth, sound) {
        (ReactionLabel::SingingHumming, _) => {
            if r < 0.5 {
                let top = pick(rng, &["Speech", "Music"]);
                ranked_scores(index, top, &["Singing"], rng)
            } else if r < 0.8 {
                let top = pick(rng, &["Singing", "Humming"]);
                ranked_scores(index, top, &["Speech"], rng)
            } else {
                let top = pick(rng, &["Laughter", "Chatter"]);
                ranked_scores(index, top, &["Humming"], rng)
            }
        }
        (ReactionLabel::Whistling, _) => {
            if r < 0.75 {
                ranked_scores(index, "Whistling", &["Music"], rng)
            } else {
                let top = pick(rng, &quiet);
                ranked_scores(index, top, &["Whistling"], rng)
            }
        }
        (_, SoundRegime::Chatter) => {
            if r < profile.confusion {
                ranked_scores(index, "Singing", &["Speech"], rng)
            } else if r < profile.confusion + 0.6 * (1.0 - profile.confusion) {
                ranked_scores(index, "Speech", &["Chatter"], rng)
            } else {
                let top = pick(rng, &["Chatter", "Laughter"]);
                ranked_scores(index, top, &["Speech"], rng)
            }
        }
        _ => {
            if r < profile.confusion {
                ranked_scores(index, "Music", &[], rng)
            } else {
                let top = pick(rng, &quiet);
                ranked_scores(index, top, &[], rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::movement_level;
    use crate::session::segment_session;
    use crate::vocal::ScoreVector;

    fn spec(place: Place, script: Vec<ScriptSpan>) -> SessionSpec {
        SessionSpec {
            id: "g1".into(),
            subject_id: "p1".into(),
            song_id: "song".into(),
            place,
            duration_s: 30,
            start_offset_in_song: None,
            script,
            activity: None,
        }
    }

    fn span(t0: f64, t1: f64, label: ReactionLabel) -> ScriptSpan {
        ScriptSpan { t0, t1, label }
    }

    #[test]
    fn deterministic_under_seed() {
        let track = generate_note_track("song", 120.0, 7).unwrap();
        let s = spec(Place::Cafe, vec![span(5.0, 15.0, ReactionLabel::SingingHumming)]);
        let a = generate_session(&s, &track, 7).unwrap();
        let b = generate_session(&s, &track, 7).unwrap();
        assert_eq!(a.session.imu(), b.session.imu());
        assert_eq!(a.session.audio(), b.session.audio());
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.pitch.frames(), b.pitch.frames());
        let c = generate_session(&s, &track, 8).unwrap();
        assert_ne!(a.session.imu(), c.session.imu());
    }

    #[test]
    fn empty_script_is_all_non_reaction() {
        let track = generate_note_track("song", 120.0, 1).unwrap();
        let g = generate_session(&spec(Place::Lounge, vec![]), &track, 1).unwrap();
        assert!(g.truth.iter().all(|&l| l == ReactionLabel::NonReaction));
        assert_eq!(g.truth.len(), 30);
    }

    #[test]
    fn overlapping_spans_rejected() {
        let s = spec(
            Place::Office,
            vec![
                span(1.0, 5.0, ReactionLabel::Whistling),
                span(4.0, 8.0, ReactionLabel::SingingHumming),
            ],
        );
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn reactions_meet_filter_preconditions() {
        let track = generate_note_track("song", 120.0, 3).unwrap();
        let s = spec(
            Place::Cafe,
            vec![
                span(2.0, 10.0, ReactionLabel::SingingHumming),
                span(12.0, 20.0, ReactionLabel::Whistling),
                span(22.0, 29.0, ReactionLabel::HeadMotion),
            ],
        );
        let g = generate_session(&s, &track, 3).unwrap();
        for (seg, (&label, &level)) in segment_session(&g.session).iter().zip(g.truth.iter().zip(&g.levels)) {
            let measured = movement_level(&seg.accel()).unwrap();
            assert!((measured - level).abs() < 1e-9, "{measured} vs {level}");
            if label.is_reaction() {
                assert!((0.0104..=0.114).contains(&measured));
            }
            if label.is_vocal() && label.is_reaction() {
                assert!(g.sound_db[seg.index] >= 55.0, "second {}: {} dB", seg.index, g.sound_db[seg.index]);
            }
        }
        for r in &g.scores {
            ScoreVector::new(r.classes.clone(), r.scores.clone()).unwrap();
        }
    }

    #[test]
    fn track_has_notes_and_rests() {
        let t = generate_note_track("x", 180.0, 5).unwrap();
        assert_eq!(t.symbols().len(), 1800);
        let voiced = t.symbols().iter().filter(|c| c.is_voiced()).count();
        assert!(voiced > 1500 && voiced < 1800);
        assert_eq!(t, generate_note_track("x", 180.0, 5).unwrap());
    }
}
