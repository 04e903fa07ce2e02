//! Contextual word-pair similarity through translation ensembles.
//!
//! A word pair is judged in two contexts. Each context is translated into a
//! set of extra languages, the two target words are located in every
//! translation, and two similarity channels are computed per language: the
//! cosine of static word vectors and the cosine of contextual token vectors.
//! The per-language values are blended with weights `alpha` (contextual) and
//! `beta` (static) and averaged over languages.
//!
//! Module map:
//!
//! * [`dataset`]: task files and the canonical instance format.
//! * [`translation`]: engines, the on-disk translation cache, target-word
//!   alignment and per-language views.
//! * [`embedstore`]: static word vectors (text and binary formats).
//! * [`encoder`]: contextual token encodings from a sidecar, fixtures, or a
//!   deterministic hash backend.
//! * [`scoring`]: channel combination and subtask predictions.
//! * [`metrics`]: correlation metrics and the task evaluator.
//! * [`experiments`]: weight sweeps, greedy language addition, engine
//!   comparison and the named official configurations.

pub mod config;
pub mod dataset;
pub mod embedstore;
pub mod encoder;
pub mod experiments;
pub mod metrics;
pub mod scoring;
pub mod text;
pub mod translation;
mod vector;

pub use dataset::{GoldScores, Instance, MarkedContext};
pub use text::CharSpan;
