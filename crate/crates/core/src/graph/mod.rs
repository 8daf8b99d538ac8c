//! Declarative DAGs of PDP nodes and their collapsed Gibbs sampler.
//!
//! A [`GraphSpec`] names nodes, mixture edges and observation leaves. Validation
//! yields a [`CompiledGraph`]; [`TextState`] instantiates it over the authors,
//! documents and (lazily) topics of a corpus and runs the sampler.

mod forward;
mod spec;
mod state;

pub use forward::{fill_symbols, forward_generate, regenerate_symbols, ForwardSample, ForwardSizes};
pub use spec::{
    validate, CompiledGraph, CompiledNode, EdgeSpec, GraphSpec, GroupSpec, LeafSpec, NodeSpec, Plate,
    RootBase, Side, Stream, StreamLeaves, MAX_PARENTS,
};
pub use state::{
    FixedInfo, FnCoupling, MoveCoupling, MoveOutcome, Mutation, NodeRef, SweepStats, TextState,
    TokenAssignment, UNASSIGNED,
};
