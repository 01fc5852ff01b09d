//! Inner-product approximators of relation functions.
//!
//! A relation `r(x, y)` on a box domain is approximated as `<phi(x), psi(y)>`
//! by a Voronoi indicator network composed with a low-rank factorization of
//! the relation sampled on landmarks. Symmetric positive-definite kernels use
//! truncated Nystrom features instead. On top of these sit softmax attention,
//! utility-based selection and a Monte-Carlo retrieval check.

pub mod attention;
pub mod error;
pub mod experiment;
pub mod factored;
mod numfmt;
pub mod quantizer;
pub mod registry;
pub mod relation;
pub mod sequence;
pub mod spectral;

pub use error::{Error, Result};
pub use numfmt::sig17;
pub use relation::{BoxDomain, FeaturePair, Point, RelationSpec, SymmetricKernel};
