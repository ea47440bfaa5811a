//! Task-aware lossy compression for network traffic feature logs.
//!
//! The pipeline fits every transform on the training split only, then applies
//! it to both splits:
//!
//! 1. [`selector`] keeps the top-k features by forest impurity importance,
//! 2. [`projector`] projects onto principal components covering a variance target,
//! 3. [`quantizer`] maps each feature onto `2^bits` uniform levels,
//! 4. [`codec`] bit-packs the codes into an `.nfq` container and DEFLATEs them.
//!
//! [`experiment`] runs that pipeline across configurations, scores each with a
//! Random Forest ([`forest`]) and reports F1 against storage reduction.

pub mod codec;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod projector;
pub mod quantizer;
pub mod selector;
pub mod tabular;

pub use error::{Error, Result};
pub use tabular::{FeatureTable, SynthSpec};
