//! Privacy-preserving data delivery built on data morphing and augmented
//! convolution layers.
//!
//! A data provider unrolls each image into a row vector, right-multiplies it
//! by a secret block-diagonal morphing matrix, and ships the morphed rows.
//! The developer receives an augmented convolution matrix that extracts, from
//! the morphed rows, the same features (up to a secret channel permutation)
//! that the original convolution would have produced on the clean data. The
//! crate also implements the attack suite used to size the scheme's security
//! margins — closed-form success-probability bounds, Monte-Carlo validation
//! of the underlying geometric lemmas, a known-pair linear recovery attack —
//! and the structural-similarity and operation-count metrics used to judge
//! privacy and overhead.

pub mod attacks;
pub mod augconv;
pub mod d2r;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod morphing;
pub mod rng;
pub mod toytrain;

pub use error::{Error, Result};
pub use linalg::{Matrix, RowVector};
pub use rng::SeededRng;
