//! Land-use/land-cover change (LULCC) modeling toolkit.
//!
//! The crate models how a categorical land-cover grid evolves over time by
//! splitting the problem into a *temporal* question (how many cells change
//! from class i to class j?) and a *spatial* question (which cells?).
//!
//! Two temporal models are provided: a Markov-chain baseline estimated from
//! a pair of classified grids ([`markov`]), and a Gaussian-emission hidden
//! Markov model trained on yearly socioeconomic factor series ([`hmm`]),
//! where land-cover classes are the hidden states and the factors are the
//! emissions. The spatial side fits one logistic regression per
//! (from, to) class pair over driver rasters and allocates the predicted
//! change quantum onto the highest-potential cells ([`suitability`],
//! [`lcm`]).
//!
//! Supporting modules: [`grid`] (ASCII raster I/O and the shared data
//! model), [`radiometry`] (scan-line gap filling and DN calibration),
//! [`factors`] (factor table ingestion and the replicated observation
//! sequence), [`validate`] (confusion matrices, precision/recall, blob
//! analysis, color overlays) and [`synth`] (seeded synthetic scenarios so
//! the whole pipeline can be exercised without any proprietary data).

pub mod error;
pub mod factors;
pub mod grid;
pub mod hmm;
pub mod lcm;
pub mod markov;
pub mod radiometry;
pub mod suitability;
pub mod synth;
pub mod validate;

pub use error::{Error, Result};
