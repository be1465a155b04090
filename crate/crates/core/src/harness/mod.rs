//! Synthetic labeled sessions, scoring, and the experiments built on them.

mod eval;
mod experiment;
mod generate;
mod oracle;
mod profile;

pub use eval::{binary_f1, evaluate, loso_split, mean_absolute_error, ClassMetrics, EvalReport, Fold};
pub use experiment::{
    activity_corpus_spec, calibrate_dtw_threshold, engagement_corpus, familiarity_holdout,
    flip_correction_rate, generate_corpus, loso_rating, loso_vocal, motion_corpus_spec, pooled_report,
    run_motion, run_vocal, sticky_training_sequences, vocal_corpus_spec, Corpus, CorpusSpec,
    EngagementSample, LosoSummary, ScriptShape, ENGAGEMENT_SESSION_S, MOTION_SESSION_S, MOTION_SHAPE,
    TREE_DEPTH, TREE_MIN_LEAF, VOCAL_SESSION_S, VOCAL_SHAPE,
};
pub use generate::{
    generate_note_track, generate_session, stable_hash, sub_seed, Activity, GeneratedSession, ScriptSpan,
    SessionSpec, FIDGET_LEVEL_G, LARGE_LEVEL_G, ORACLE_CLASSES, REACTION_LEVEL_G,
};
pub use oracle::{dtw_oracle, viterbi_oracle, DTW_ORACLE_MAX_LEN, VITERBI_ORACLE_MAX_LEN};
pub use profile::{Place, PlaceProfile};
