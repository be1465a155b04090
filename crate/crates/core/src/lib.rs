//! # reactsense
//!
//! Detection of music-listening reactions from earbud sensor streams.
//!
//! Two cost-aware pipelines run over one-second segments of a listening
//! session:
//!
//! - **vocal**: movement/loudness prefilters, log-mel sound-event
//!   classification with label mapping and rank relaxation, melody-based
//!   correction against the song's vocal note track, and HMM smoothing.
//!   Emits `singing_humming`, `whistling` or `non_reaction` per second.
//! - **motion**: movement prefilter, 5 Hz low-pass, motion-unit features
//!   over a 7 s window, and a sequence classifier. Emits `head_motion` or
//!   `non_reaction` per second.
//!
//! Detected events feed the engagement applications in [`engage`]
//! (rating, familiarity, recommendation). [`harness`] generates labeled
//! synthetic sessions and scores pipelines against them.
//!
//! ```text
//! Session -> segment_session -> prefilters -> classify -> correct -> smooth -> events
//! ```
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dsp;
pub mod engage;
pub mod error;
pub mod harness;
pub mod io;
pub mod motion;
pub mod musicinfo;
pub mod pipeline;
pub mod runner;
pub mod session;
pub mod types;
pub mod vocal;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use session::{segment_session, ImuSample, SensorSegment, Session};
pub use types::{
    expand_events_to_labels, merge_labels_to_events, FilterStats, PipelineLabel, ReactionEvent,
    ReactionLabel,
};
