//! Forward quantum Markov fields on infinite, locally finite graphs.
//!
//! The crate builds the layered tessellation of a rooted graph, represents
//! transition expectations on plaquettes, composes them into level maps and
//! evaluates the resulting states on local observables.

pub mod algebra;
pub mod cli;
pub mod config;
pub mod field;
pub mod graph;
pub mod linalg;
pub mod rng;
pub mod tessellation;
pub mod tolerances;
pub mod transition;

pub use algebra::{LocalOperator, ProductOperator, ProductState, SiteDims};
pub use field::{ConvergenceReport, FieldError, FieldSpec, TeSource, Verdict};
pub use graph::{make_graph, Graph, GraphSpec, Region, VertexId};
pub use tessellation::{Enumeration, Tessellation};
pub use tolerances::Tolerances;
pub use transition::{KrausTe, GenericTe, MarkovTriplet, TransitionExpectation};
