//! Melody-based correction of ambiguous and uncertain segments.

use crate::config::CorrectionConfig;
use crate::dsp::{dtw_distance, hz_to_chroma, Chroma};
use crate::error::{Error, Result};
use crate::musicinfo::{note_window, NoteTrack};
use crate::types::{PipelineLabel, ReactionLabel};

use super::pitch::{PitchFrame, PitchRequest, PitchTracker};

/// Outcome of correcting one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub label: ReactionLabel,
    /// DTW distance to the reference, when one was computed.
    pub distance: Option<f64>,
    /// Set when the segment was failed closed to non-reaction.
    pub diagnostic: Option<String>,
}

/// Pitch frames to chroma symbols; bad voiced frames become unvoiced.
pub fn frames_to_chroma(frames: &[PitchFrame], conf_threshold: f64) -> Vec<Chroma> {
    frames
        .iter()
        .map(|f| hz_to_chroma(f.f0, f.confidence, conf_threshold).unwrap_or(Chroma::UNVOICED))
        .collect()
}

/// Decision given both note sequences: a distance above the threshold means
/// non-reaction; otherwise ambiguous becomes singing/humming and uncertain
/// becomes its candidate. Final labels pass through unchanged.
pub fn decide(
    label: PipelineLabel,
    segment: &[Chroma],
    reference: &[Chroma],
    dtw_threshold: f64,
) -> Result<(ReactionLabel, f64)> {
    let d = dtw_distance(segment, reference)?;
    let out = match label {
        PipelineLabel::Final(l) => l,
        _ if d > dtw_threshold => ReactionLabel::NonReaction,
        PipelineLabel::Ambiguous => ReactionLabel::SingingHumming,
        PipelineLabel::Uncertain(c) => c,
    };
    Ok((out, d))
}

/// Corrects one segment against the song being played.
///
/// `song_t0..song_t1` is the segment's span in song time. Pitch-tracker
/// failures yield non-reaction with a diagnostic rather than an error.
pub fn correct_with_music(
    label: PipelineLabel,
    request: &PitchRequest<'_>,
    tracker: &dyn PitchTracker,
    track: &NoteTrack,
    song_t0: f64,
    song_t1: f64,
    config: &CorrectionConfig,
) -> Result<Correction> {
    if let PipelineLabel::Final(l) = label {
        return Ok(Correction {
            label: l,
            distance: None,
            diagnostic: None,
        });
    }
    if let PipelineLabel::Uncertain(c) = label {
        if !c.is_vocal() {
            return Err(Error::param(format!("uncertain candidate {c} is not vocal")));
        }
    }
    let reference = note_window(track, song_t0, song_t1, config.reference_margin_s)?;
    let frames = match tracker.track(request) {
        Ok(f) if !f.is_empty() => f,
        Ok(_) => {
            return Ok(fail_closed("pitch tracker returned no frames".into()));
        }
        Err(e) => return Ok(fail_closed(e.to_string())),
    };
    let segment = frames_to_chroma(&frames, config.pitch_confidence);
    let (label, d) = decide(label, &segment, reference, config.dtw_threshold)?;
    Ok(Correction {
        label,
        distance: Some(d),
        diagnostic: None,
    })
}

fn fail_closed(message: String) -> Correction {
    Correction {
        label: ReactionLabel::NonReaction,
        distance: None,
        diagnostic: Some(message),
    }
}

/// Label used when correction is switched off: the mapping-only baseline
/// treats ambiguous as singing/humming and uncertain as its candidate.
pub fn uncorrected(label: PipelineLabel) -> ReactionLabel {
    match label {
        PipelineLabel::Final(l) => l,
        PipelineLabel::Ambiguous => ReactionLabel::SingingHumming,
        PipelineLabel::Uncertain(c) => c,
    }
}
