//! Quad-dominant mesh processing: triangle-to-quad merging by maximum-weight
//! matching, face assembly from anchor points, anchor tokenization, triplet
//! loss numerics, mesh quality metrics and Goldberg polyhedra.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchors;
pub mod assembly;
pub mod error;
pub mod goldberg;
pub mod linkloss;
pub mod matching;
pub mod mesh;
pub mod metrics;
pub mod shapes;
pub mod tokenizer;
pub mod tri2quad;
pub mod verify;

pub use anchors::AnchorSet;
pub use error::{Error, Result};
pub use mesh::{PolyMesh, Vec3};
