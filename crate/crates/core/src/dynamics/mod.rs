//! Switched conservation-law dynamics with irreversible link failures.
//!
//! For every link `e = (v, w)`:
//!
//! ```text
//! d rho_e / dt = chi_v * lambda_v * G^v_e(rho^v) - chi_w * f_e,
//! ```
//!
//! where `f_e = mu_e(rho_e)` while the link is active (`xi_e = 1`) and `0`
//! once it has saturated, `lambda_0` is the constant origin inflow,
//! `lambda_v` (for `v > 0`) is the total flow entering `v`, and a node is
//! active (`chi_v = 1`) while at least one outgoing link is. The
//! destination always absorbs.

mod equilibrium;
mod integrator;

use alloc::vec;
use alloc::vec::Vec;

use crate::flow::FlowLaw;
use crate::routing::RoutingPolicy;
use crate::topology::{LinkId, NodeId, Topology};

pub use equilibrium::solve_equilibrium;
pub use integrator::simulate;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("horizon must be positive, got {0}")]
    HorizonNonpositive(f64),
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("invalid simulation option: {0}")]
    InvalidOptions(&'static str),
    #[error("initial density on link {link} is {rho}, outside [0, {rho_max}]")]
    InvalidInitialState { link: usize, rho: f64, rho_max: f64 },
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("classification window {window} exceeds the horizon {horizon}")]
    WindowExceedsHorizon { window: f64, horizon: f64 },
    #[error("no equilibrium: inflow {inflow} at node {node} reaches its outgoing capacity {capacity}")]
    NoEquilibrium {
        node: NodeId,
        inflow: f64,
        capacity: f64,
    },
    #[error("equilibrium iteration did not converge at node {node} (residual {residual})")]
    NonConvergence { node: NodeId, residual: f64 },
}

/// Snapshot of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    /// Density per link.
    pub rho: Vec<f64>,
    /// Link activation `xi_e`.
    pub xi: Vec<bool>,
    /// Node activation `chi_v`; the destination entry is always true.
    pub chi: Vec<bool>,
    /// Node inflow `lambda_v`.
    pub lambda: Vec<f64>,
    /// Link flow, zero on saturated links.
    pub f: Vec<f64>,
}

impl NetworkState {
    /// Consistent state for densities `rho`: a link is active iff its
    /// density is below capacity.
    pub fn new<F: FlowLaw>(
        topology: &Topology,
        flows: &[F],
        rho: Vec<f64>,
        lambda0: f64,
        t: f64,
    ) -> Result<Self, SimError> {
        check_densities(topology, &rho)?;
        let xi: Vec<bool> = topology
            .links()
            .iter()
            .zip(&rho)
            .map(|(l, &r)| r < l.rho_max)
            .collect();
        let chi = node_activity(topology, &xi);
        let gaps: Vec<f64> = gaps_of(topology, &rho);
        let model = Model::new(topology, flows, None, lambda0);
        let mut rates = Rates::new(topology);
        model.flows_and_inflows(&gaps, &xi, &mut rates);
        Ok(Self {
            t,
            rho,
            xi,
            chi,
            lambda: rates.lambda,
            f: rates.flow,
        })
    }
}

/// Saturation event: `link` reached its density capacity at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationEvent {
    pub t: f64,
    pub link: LinkId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: NetworkState,
    /// `int_0^t lambda_n`.
    pub arrivals: f64,
}

impl Sample {
    pub fn lambda_n(&self) -> f64 {
        *self.state.lambda.last().expect("destination entry")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<SaturationEvent>,
    pub initial_rho: Vec<f64>,
    /// Per-link `int inflow` and `int outflow` accumulated by the integrator.
    pub inflow_integral: Vec<f64>,
    pub outflow_integral: Vec<f64>,
    /// Density added per link when snapping saturated links to capacity.
    pub snap_mass: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.final_sample().state.t
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// `int_0^t lambda_n`, linearly interpolated between samples.
    pub fn arrivals_at(&self, t: f64) -> f64 {
        let i = self.samples.partition_point(|s| s.state.t < t);
        if i == 0 {
            return self.samples[0].arrivals;
        }
        if i == self.samples.len() {
            return self.final_sample().arrivals;
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        if b.state.t == t || b.state.t == a.state.t {
            return b.arrivals;
        }
        let w = (t - a.state.t) / (b.state.t - a.state.t);
        a.arrivals + w * (b.arrivals - a.arrivals)
    }

    /// Average of `lambda_n` over the final `window` time units.
    pub fn window_average(&self, window: f64) -> Result<f64, SimError> {
        let horizon = self.horizon();
        if !(window > 0.0) || window > horizon {
            return Err(SimError::WindowExceedsHorizon { window, horizon });
        }
        let start = horizon - window;
        Ok((self.final_sample().arrivals - self.arrivals_at(start)) / window)
    }

    /// `(1/T) int_0^T lambda_n`.
    pub fn time_average(&self) -> f64 {
        let s = self.final_sample();
        s.arrivals / s.state.t
    }

    /// Per-link `|rho(T) - rho(0) - int (inflow - outflow)|`, excluding the
    /// snap jumps (which are reported separately in `snap_mass`).
    pub fn mass_balance_residual(&self) -> Vec<f64> {
        let end = &self.final_sample().state.rho;
        (0..end.len())
            .map(|e| {
                (end[e]
                    - self.initial_rho[e]
                    - (self.inflow_integral[e] - self.outflow_integral[e])
                    - self.snap_mass[e])
                    .abs()
            })
            .collect()
    }

    /// True when no link ever reactivates and no link saturates twice.
    pub fn is_irreversible(&self) -> bool {
        let monotone = self.samples.windows(2).all(|w| {
            w[0].state
                .xi
                .iter()
                .zip(&w[1].state.xi)
                .all(|(&before, &after)| before || !after)
        });
        let unique = self
            .events
            .iter()
            .enumerate()
            .all(|(i, ev)| self.events[..i].iter().all(|o| o.link != ev.link));
        monotone && unique
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// One sample per accepted step (plus events).
    EveryStep,
    /// Samples only at checkpoints and events.
    Checkpoints,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// The integrator lands exactly on multiples of this interval.
    pub checkpoint_interval: f64,
    /// Saturation band, relative to each link's `rho_max`.
    pub snap_tolerance: f64,
    /// Relative tolerance of the transferring decision.
    pub rel_tol: f64,
    /// Classification window as a fraction of the horizon.
    pub window_fraction: f64,
    pub sample_mode: SampleMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 200.0,
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: 1e-3,
            max_step: 1.0,
            checkpoint_interval: 1.0,
            snap_tolerance: 1e-9,
            rel_tol: 0.02,
            window_fraction: 0.5,
            sample_mode: SampleMode::EveryStep,
        }
    }
}

impl SimOptions {
    pub fn window(&self) -> f64 {
        self.window_fraction * self.horizon
    }

    pub(crate) fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SimError::HorizonNonpositive(self.horizon));
        }
        let positive = [
            self.rtol,
            self.atol,
            self.initial_step,
            self.max_step,
            self.checkpoint_interval,
            self.snap_tolerance,
        ];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(SimError::InvalidOptions(
                "tolerances, step sizes and intervals must be positive",
            ));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(SimError::InvalidOptions("window fraction must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Transferring,
    NotTransferring,
    Undecided,
}

impl core::fmt::Display for Classification {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Transferring => "Transferring",
            Self::NotTransferring => "NotTransferring",
            Self::Undecided => "Undecided",
        })
    }
}

/// Decides the transferring alternative from the average arrival rate over
/// the final `window`: within `rel_tol * lambda0` of `lambda0` is
/// transferring, at most `rel_tol * lambda0` is not, anything in between is
/// undecided at this horizon.
pub fn classify_transferring(
    trajectory: &Trajectory,
    lambda0: f64,
    rel_tol: f64,
    window: f64,
) -> Result<Classification, SimError> {
    let average = trajectory.window_average(window)?;
    let band = rel_tol * lambda0;
    Ok(if (average - lambda0).abs() <= band {
        Classification::Transferring
    } else if average <= band {
        Classification::NotTransferring
    } else {
        Classification::Undecided
    })
}

/// Density derivative of every link at `state`.
///
/// Indicators are taken from `state` as given.
pub fn rhs<F: FlowLaw>(
    topology: &Topology,
    flows: &[F],
    policy: &RoutingPolicy,
    state: &NetworkState,
    lambda0: f64,
) -> Result<Vec<f64>, SimError> {
    check_densities(topology, &state.rho)?;
    let model = Model::new(topology, flows, Some(policy), lambda0);
    let gaps = gaps_of(topology, &state.rho);
    let mut rates = Rates::new(topology);
    model.evaluate(&gaps, &state.xi, &state.chi, &mut rates);
    Ok(rates
        .inflow
        .iter()
        .zip(&rates.outflow)
        .map(|(i, o)| i - o)
        .collect())
}

fn check_densities(topology: &Topology, rho: &[f64]) -> Result<(), SimError> {
    if rho.len() != topology.link_count() {
        return Err(SimError::DimensionMismatch {
            expected: topology.link_count(),
            got: rho.len(),
        });
    }
    for (e, (l, &r)) in topology.links().iter().zip(rho).enumerate() {
        if !(0.0..=l.rho_max).contains(&r) {
            return Err(SimError::InvalidInitialState {
                link: e,
                rho: r,
                rho_max: l.rho_max,
            });
        }
    }
    Ok(())
}

fn gaps_of(topology: &Topology, rho: &[f64]) -> Vec<f64> {
    topology
        .links()
        .iter()
        .zip(rho)
        .map(|(l, &r)| l.rho_max - r)
        .collect()
}

/// `chi_v = 1` iff some outgoing link is active; the destination is always
/// active.
pub(crate) fn node_activity(topology: &Topology, xi: &[bool]) -> Vec<bool> {
    let mut chi: Vec<bool> = (0..topology.node_count())
        .map(|v| topology.out_links(NodeId(v)).iter().any(|e| xi[e.0]))
        .collect();
    chi[topology.destination().0] = true;
    chi
}

/// Instantaneous rates at one state.
pub(crate) struct Rates {
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
    pub flow: Vec<f64>,
    pub lambda: Vec<f64>,
    pub share: Vec<f64>,
    scratch: Vec<f64>,
}

impl Rates {
    pub fn new(topology: &Topology) -> Self {
        let m = topology.link_count();
        let max_out = topology
            .routing_nodes()
            .map(|v| topology.out_links(v).len())
            .max()
            .unwrap_or(0);
        Self {
            inflow: vec![0.0; m],
            outflow: vec![0.0; m],
            flow: vec![0.0; m],
            lambda: vec![0.0; topology.node_count()],
            share: vec![0.0; m],
            scratch: vec![0.0; max_out],
        }
    }

    pub fn arrivals(&self) -> f64 {
        *self.lambda.last().expect("destination entry")
    }
}

/// Dense Jacobians with respect to the densities, at one state.
pub(crate) struct Jacobian {
    /// Row-major `d inflow_e / d rho_k`.
    pub inflow: Vec<f64>,
    /// Diagonal `d outflow_e / d rho_e`.
    pub outflow: Vec<f64>,
    /// `d lambda_n / d rho_k`.
    pub arrivals: Vec<f64>,
    /// `d mu_e / d rho_e` on active links.
    pub slope: Vec<f64>,
}

impl Jacobian {
    pub fn new(m: usize) -> Self {
        Self {
            inflow: vec![0.0; m * m],
            outflow: vec![0.0; m],
            arrivals: vec![0.0; m],
            slope: vec![0.0; m],
        }
    }
}

pub(crate) struct Model<'a, F> {
    pub topology: &'a Topology,
    pub flows: &'a [F],
    policy: Option<&'a RoutingPolicy>,
    pub lambda0: f64,
}

impl<'a, F: FlowLaw> Model<'a, F> {
    pub fn new(
        topology: &'a Topology,
        flows: &'a [F],
        policy: Option<&'a RoutingPolicy>,
        lambda0: f64,
    ) -> Self {
        assert_eq!(flows.len(), topology.link_count(), "one flow law per link");
        Self {
            topology,
            flows,
            policy,
            lambda0,
        }
    }

    fn policy(&self) -> &'a RoutingPolicy {
        self.policy.expect("routing policy required for dynamics")
    }

    /// Link flows and node inflows.
    pub fn flows_and_inflows(&self, gaps: &[f64], xi: &[bool], rates: &mut Rates) {
        for (e, law) in self.flows.iter().enumerate() {
            rates.flow[e] = if xi[e] { law.flow_at_gap(gaps[e]) } else { 0.0 };
        }
        rates.lambda[0] = self.lambda0;
        for v in 1..self.topology.node_count() {
            rates.lambda[v] = self
                .topology
                .in_links(NodeId(v))
                .iter()
                .map(|e| rates.flow[e.0])
                .sum();
        }
    }

    pub fn evaluate(&self, gaps: &[f64], xi: &[bool], chi: &[bool], rates: &mut Rates) {
        self.flows_and_inflows(gaps, xi, rates);
        let policy = self.policy();
        for v in self.topology.routing_nodes() {
            let links = self.topology.out_links(v);
            policy.split_by_gap(links, gaps, xi, &mut rates.scratch);
            let push = if chi[v.0] { rates.lambda[v.0] } else { 0.0 };
            for (k, &LinkId(e)) in links.iter().enumerate() {
                rates.share[e] = rates.scratch[k];
                rates.inflow[e] = push * rates.scratch[k];
            }
        }
        for (e, l) in self.topology.links().iter().enumerate() {
            rates.outflow[e] = if chi[l.head.0] { rates.flow[e] } else { 0.0 };
        }
    }

    /// Jacobian at the state last passed to [`evaluate`](Self::evaluate)
    /// (`rates` must come from that call).
    pub fn jacobian(&self, gaps: &[f64], xi: &[bool], chi: &[bool], rates: &Rates, jac: &mut Jacobian) {
        let m = self.topology.link_count();
        let policy = self.policy();
        jac.inflow.iter_mut().for_each(|x| *x = 0.0);
        jac.arrivals.iter_mut().for_each(|x| *x = 0.0);
        for e in 0..m {
            jac.slope[e] = if xi[e] {
                self.flows[e].slope_at_gap(gaps[e])
            } else {
                0.0
            };
        }
        for v in self.topology.routing_nodes() {
            if !chi[v.0] {
                continue;
            }
            let outs = self.topology.out_links(v);
            let ins = self.topology.in_links(v);
            let lambda = rates.lambda[v.0];
            for &LinkId(e) in outs {
                let ge = rates.share[e];
                if ge == 0.0 {
                    continue;
                }
                let row = &mut jac.inflow[e * m..(e + 1) * m];
                for &LinkId(k) in ins {
                    row[k] += ge * jac.slope[k];
                }
                for &LinkId(k) in outs {
                    let gk = rates.share[k];
                    if gk == 0.0 {
                        continue;
                    }
                    let kronecker = if k == e { 1.0 } else { 0.0 };
                    row[k] += lambda * ge * (kronecker - gk) * policy.log_h_slope(k, gaps[k]);
                }
            }
        }
        for (e, l) in self.topology.links().iter().enumerate() {
            jac.outflow[e] = if chi[l.head.0] { jac.slope[e] } else { 0.0 };
        }
        for &LinkId(k) in self.topology.in_links(self.topology.destination()) {
            jac.arrivals[k] = jac.slope[k];
        }
    }
}
