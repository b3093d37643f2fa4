//! purify-lab: exact desk-scale numerics for the random purification channel.
//!
//! The library builds the channel from first principles: the Haar twirl over
//! n-fold unitary powers is computed exactly as the orthogonal projection onto
//! the span of subsystem-permutation operators, which yields the channel's
//! defining operator R_n with no sampling error. On top of that sit a family of
//! quantum divergences (Umegaki, sandwiched Rényi, max-relative, measured
//! brackets), weak quasi-concavity verifiers with explicit slack constants,
//! Carathéodory reduction of i.i.d. mixtures, and finite-n scans of the
//! universal extension-channel optimizer.
//!
//! Everything is dense linear algebra over `nalgebra`, intended for local
//! dimensions d ≤ 3 and copy counts n ≤ 4. All logarithms are base 2.

pub mod convexity;
pub mod divergence;
pub mod error;
pub mod haar;
pub mod matfile;
pub mod purifier;
pub mod sample;
pub mod tensor;
pub mod uhlmann;

pub use error::{Error, Result};
pub use tensor::{DensityState, LabeledOperator};
