//! Speaker identification for two-talker (co-channel) mixtures.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`usable`] finds frames that are dominated by one talker by testing
//!    for periodicity in successively lower [`wavelet`] sub-bands, then
//!    merges runs of such frames into segments.
//! 2. [`features`] turns each segment into MFCC observation vectors.
//! 3. [`gmm`] scores every segment against every enrolled speaker model.
//! 4. [`assignment`] picks the speaker pair and the two-way labeling of the
//!    segments that maximize the joint log-likelihood.
//!
//! [`mixer`] and [`eval`] build test mixtures at a commanded
//! target-to-interferer ratio and run the evaluation protocol end to end.

pub mod assignment;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod mixer;
pub mod signal;
pub mod usable;
pub mod wavelet;

pub use error::{Error, Result};

/// Sample rate every stage of the toolkit is tuned for.
pub const SAMPLE_RATE: u32 = 16_000;
