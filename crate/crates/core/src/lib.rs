//! Randomized-feature (extreme learning machine) solvers for PDEs on
//! high-dimensional boxes.
//!
//! A frozen random hidden layer ([`FeatureLayer`]) supplies a basis; only the
//! output coefficients are trained, by least squares on collocation rows
//! ([`assembly`]) with [`lsq`]. The [`harness`] module drives complete runs
//! and writes CSV tables.

pub mod assembly;
pub mod atfc;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod harness;
pub mod lsq;
pub mod points;
pub mod problems;
pub mod rng;

pub use assembly::{assemble_atfc, assemble_elm, assemble_loc_elm, AssemblyOptions, Method, System, TrainedModel};
pub use error::{Error, Result};
pub use eval::{errors, ErrorPair};
pub use features::{Activation, FeatureEval, FeatureLayer, FieldDerivs, OpBatch, PointOp};
pub use geometry::{BoxDomain, CollocationSet, Decomposition, FaceId, Side};
pub use lsq::{min_norm_lsq, NllsqOptions, SolveResult};
pub use points::PointBlock;
pub use problems::{make_problem, LinearOperatorSpec, NonlinearTerm, PdeProblem, ScalarField};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/face-operator.md")]
    mod face_operator {}
    #[doc = include_str!("../../../book/src/assembly.md")]
    mod assembly {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
