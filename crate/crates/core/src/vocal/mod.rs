//! Vocal reaction pipeline.
//!
//! Per one-second segment: movement prefilter, loudness prefilter, then
//! (if the segment survives) 16 kHz resampling, 2 kHz low-pass, log-mel
//! patch, sound-event classification, label mapping with rank relaxation,
//! and melody-based correction of ambiguous/uncertain segments. The
//! per-second labels are then HMM-smoothed over a trailing window and merged
//! into events.

mod classify;
mod correct;
mod hmm;
mod pitch;

pub use classify::{
    map_labels, relax_rank, write_score_records, ClassifierInput, ScorePlayback, ScoreRecord,
    ScoreVector, SoundEventClassifier, MIN_RECORD_CLASSES,
};
pub use correct::{correct_with_music, decide, frames_to_chroma, uncorrected, Correction};
pub use hmm::{smooth, smooth_sequence, train_hmm, viterbi, HmmParams};
pub use pitch::{AutocorrelationTracker, PitchFrame, PitchPlayback, PitchRequest, PitchTracker};

use crate::config::{RangeFilter, SoundFilter, VocalConfig};
use crate::dsp::{sound_level_db, FirstOrderLowpass, LogMelExtractor, Resampler};
use crate::error::{Error, Result};
use crate::musicinfo::{MusicInfoStore, NoteTrack};
use crate::session::{SensorSegment, Session};
use crate::pipeline::{
    pin_filtered, range_prefilter, Diagnostic, FilterDecision, PipelineOutput, SegmentOutcome,
};
use crate::types::{merge_labels_to_events, FilterStats, ReactionLabel};

pub fn vocal_motion_prefilter(segment: &SensorSegment<'_>, filter: &RangeFilter) -> FilterDecision {
    range_prefilter(&segment.accel(), filter)
}

/// Filters segments quieter than the threshold. Segments without audio pass.
pub fn vocal_sound_prefilter(audio: &[f32], filter: &SoundFilter) -> FilterDecision {
    if !audio.is_empty() && sound_level_db(audio, filter.calibration_db) < filter.threshold_db {
        FilterDecision::FilteredNonReaction
    } else {
        FilterDecision::Pass
    }
}

/// Trailing-window smoothing of raw labels; filtered seconds stay
/// non-reaction.
pub fn smooth_output(
    raw: &[ReactionLabel],
    outcomes: &[SegmentOutcome],
    hmm: &HmmParams,
    window: usize,
) -> Result<Vec<ReactionLabel>> {
    let mut labels = smooth_sequence(raw, hmm, window)?;
    pin_filtered(&mut labels, outcomes);
    Ok(labels)
}

/// Vocal pipeline bound to its collaborators. Holds no per-session state, so
/// one instance can process many sessions.
pub struct VocalPipeline<'a> {
    config: &'a VocalConfig,
    classifier: &'a dyn SoundEventClassifier,
    pitch: &'a dyn PitchTracker,
    notes: &'a MusicInfoStore,
    hmm: Option<&'a HmmParams>,
    extractor: LogMelExtractor,
}

impl<'a> VocalPipeline<'a> {
    pub fn new(
        config: &'a VocalConfig,
        classifier: &'a dyn SoundEventClassifier,
        pitch: &'a dyn PitchTracker,
        notes: &'a MusicInfoStore,
        hmm: Option<&'a HmmParams>,
    ) -> Self {
        VocalPipeline {
            config,
            classifier,
            pitch,
            notes,
            hmm,
            extractor: LogMelExtractor::new(),
        }
    }

    pub fn run(&self, session: &Session) -> Result<PipelineOutput> {
        let cfg = self.config;
        let track = if cfg.correction.enabled {
            Some(self.notes.get(&session.meta().song_id).ok_or_else(|| {
                Error::Config(format!(
                    "no note track for song {:?} (session {})",
                    session.meta().song_id,
                    session.id()
                ))
            })?)
        } else {
            None
        };
        let resampler = match session.audio() {
            Some(a) => Some(Resampler::new(a.sample_rate, cfg.resample_hz)?),
            None => None,
        };

        let segments = crate::session::segment_session(session);
        let mut stats = FilterStats {
            total: segments.len(),
            ..Default::default()
        };
        let mut outcomes = Vec::with_capacity(segments.len());
        let mut raw = Vec::with_capacity(segments.len());
        let mut diagnostics = Vec::new();

        for seg in &segments {
            if cfg.motion_filter.enabled
                && vocal_motion_prefilter(seg, &cfg.motion_filter) == FilterDecision::FilteredNonReaction
            {
                stats.motion_filtered += 1;
                outcomes.push(SegmentOutcome::MotionFiltered);
                raw.push(ReactionLabel::NonReaction);
                continue;
            }
            if cfg.sound_filter.enabled
                && vocal_sound_prefilter(seg.audio, &cfg.sound_filter) == FilterDecision::FilteredNonReaction
            {
                stats.sound_filtered += 1;
                outcomes.push(SegmentOutcome::SoundFiltered);
                raw.push(ReactionLabel::NonReaction);
                continue;
            }
            stats.classified += 1;
            match self.classify_segment(session, seg, resampler.as_ref(), track) {
                Ok(outcome) => {
                    if let SegmentOutcome::Classified { label, .. } = outcome {
                        raw.push(label);
                    }
                    outcomes.push(outcome);
                }
                Err((e, diag)) => {
                    log::warn!("session {} segment {}: {e}", session.id(), seg.index);
                    diagnostics.push(Diagnostic {
                        segment: seg.index,
                        message: diag.unwrap_or_else(|| e.to_string()),
                    });
                    outcomes.push(SegmentOutcome::Failed);
                    raw.push(ReactionLabel::NonReaction);
                }
            }
        }

        let labels = match (cfg.smoothing.enabled, self.hmm) {
            (true, Some(hmm)) => smooth_output(&raw, &outcomes, hmm, cfg.smoothing.window)?,
            (true, None) => {
                log::warn!("smoothing enabled but no HMM supplied; emitting raw labels");
                raw.clone()
            }
            (false, _) => raw.clone(),
        };
        let events = merge_labels_to_events(&labels);
        Ok(PipelineOutput {
            labels,
            raw_labels: raw,
            outcomes,
            events,
            stats,
            diagnostics,
        })
    }

    /// Classification through correction for one unfiltered segment.
    #[allow(clippy::type_complexity)]
    fn classify_segment(
        &self,
        session: &Session,
        seg: &SensorSegment<'_>,
        resampler: Option<&Resampler>,
        track: Option<&NoteTrack>,
    ) -> std::result::Result<SegmentOutcome, (Error, Option<String>)> {
        let cfg = self.config;
        let patch = match resampler {
            Some(r) => {
                let mut audio = r.process(seg.audio);
                let mut lpf = FirstOrderLowpass::new(cfg.resample_hz as f64, cfg.preprocess_cutoff_hz)
                    .map_err(|e| (e, None))?;
                audio.iter_mut().for_each(|x| *x = lpf.step(*x));
                Some(self.extractor.extract(&audio).map_err(|e| (e, None))?)
            }
            None => None,
        };
        let scores = self
            .classifier
            .classify(&ClassifierInput {
                index: seg.index,
                patch: patch.as_ref(),
            })
            .map_err(|e| (e, None))?;
        let mapped = if cfg.relaxation.enabled {
            relax_rank(
                &scores,
                &cfg.class_names,
                cfg.relaxation.margin_threshold,
                cfg.relaxation.k,
            )
        } else {
            map_labels(&scores, &cfg.class_names)
        }
        .map_err(|e| (e, None))?;

        if !mapped.needs_correction() {
            return Ok(SegmentOutcome::Classified {
                mapped,
                distance: None,
                score: None,
                label: uncorrected(mapped),
            });
        }
        let Some(track) = track else {
            return Ok(SegmentOutcome::Classified {
                mapped,
                distance: None,
                score: None,
                label: uncorrected(mapped),
            });
        };
        let offset = session.meta().start_offset_in_song;
        let request = PitchRequest {
            t_start: seg.t_start,
            frames: ((seg.t_end - seg.t_start) / crate::dsp::CHROMA_HOP_S).round() as usize,
            audio: seg.audio,
            sample_rate: seg.sample_rate,
        };
        let c = correct_with_music(
            mapped,
            &request,
            self.pitch,
            track,
            offset + seg.t_start,
            offset + seg.t_end,
            &cfg.correction,
        )
        .map_err(|e| (e, None))?;
        if let Some(msg) = c.diagnostic {
            return Err((Error::Pitch(msg.clone()), Some(msg)));
        }
        Ok(SegmentOutcome::Classified {
            mapped,
            distance: c.distance,
            score: None,
            label: c.label,
        })
    }
}
