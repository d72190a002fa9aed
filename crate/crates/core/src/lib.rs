//! Exact dyadic model of entangled multilinear singular forms on hypergraphs.
//!
//! The crate evaluates the forms exactly over a finite dyadic window, decomposes
//! perfect dyadic kernels into entangled paraproducts, runs the stopping-time sparse
//! construction, and measures weighted estimates. Rationals stay rational; the few
//! irrational quantities are handled by exact root comparison or certified enclosures.

pub mod dyadic;
pub mod hypergraph;
pub mod numerics;
pub mod stepfn;
pub mod kernel;
mod contract;
pub mod forms;
pub mod sparse;
pub mod weights;
pub mod workbench;
pub mod report_util;

pub use dyadic::{build_convex_tree, haar, ConvexTree, DyadicCube, DyadicInterval, GridModel};
pub use hypergraph::{
    copy_vertex_split, duplicate_component, feasible_exponents, Hypergraph, Selection, Thresholds,
};
pub use numerics::{root_compare, sum_enclosure, Enclosure, Rational, Real, Root};
pub use kernel::{PerfectDyadicKernel, DiagonalHaarCoefficients};
pub use stepfn::{Exponent, StepFunction};
pub use forms::{Engine, Evaluator, FunctionTuple};
