//! Capacitated dynamical flow networks with spill-back cascades.
//!
//! A network is a single-origin, single-destination DAG whose links carry a
//! particle density bounded by a density capacity. The flow on a link is a
//! strictly increasing function of its density that drops to zero once the
//! capacity is reached, so a saturated link blocks its upstream node and
//! congestion can propagate backwards. This crate provides:
//!
//! * [`topology`]: validated DAG topologies, layering, tree-likeness and
//!   minimum origin-destination cuts.
//! * [`flow`]: density-to-flow laws and their perturbed (reduced) versions.
//! * [`routing`]: the locally responsive exp-residual routing family, its
//!   calibration, and a statistical axiom checker for arbitrary policies.
//! * [`dynamics`]: the switched conservation-law dynamics with irreversible
//!   link failures, equilibrium computation and transferring classification.
//! * [`resilience`]: residual capacities, the backward tree recursion for
//!   the resilience upper bound `d_0`, and its sandwich bounds.
//! * [`perturbation`]: admissible perturbations, their magnitude, perturbed
//!   runs and empirical margin sweeps.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dynamics;
pub mod flow;
mod linalg;
mod maxflow;
pub mod perturbation;
pub mod resilience;
pub mod routing;
pub mod topology;

pub use dynamics::{
    classify_transferring, rhs, simulate, solve_equilibrium, Classification, NetworkState,
    SimError, SimOptions, Trajectory,
};
pub use flow::{FlowError, FlowFunction, FlowLaw, FlowShape, PerturbedFlow, Reduction};
pub use perturbation::{Perturbation, PerturbationError, SweepResult, SweepSpec};
pub use resilience::{EquilibriumFlow, ExtendedReal, ResilienceError, ResilienceReport};
pub use routing::{AxiomCheckReport, RoutingError, RoutingPolicy};
pub use topology::{CutReport, LinkId, LinkSpec, NodeId, Topology, TopologyError};
