//! Residual capacities, the backward tree recursion `d_v` and its bounds.
//!
//! For a node `v` with out-throughput `lambda`, a reduction profile
//! `x in [0, f_max]^{E_v^+}` overloads the node once
//! `sum_e (f_max_e - x_e) <= lambda`. Reducing link `e` by `x_e` costs
//! `x_e` directly, or `d_{tau(e)}` by overloading its head instead, so
//! `d_v = min sum_e min(x_e, d_{tau(e)})` over overloading profiles. The
//! recursion runs from the deepest layer back to the origin.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::flow::FlowLaw;
use crate::topology::{CutReport, LinkId, NodeId, Topology};

/// Largest out-degree handled by exact vertex enumeration.
pub const MAX_ENUMERATION_DEGREE: usize = 12;

const CAPACITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResilienceError {
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("flow {flow} on link {link} exceeds its capacity {f_max}")]
    FlowExceedsCapacity { link: usize, flow: f64, f_max: f64 },
    #[error("flow {flow} on link {link} is negative")]
    NegativeFlow { link: usize, flow: f64 },
    #[error("flow is not conserved at node {node} (imbalance {imbalance})")]
    FlowNotBalanced { node: NodeId, imbalance: f64 },
    #[error("budget {budget} exceeds the total capacity {capacity}")]
    InfeasibleBudget { budget: f64, capacity: f64 },
    #[error("topology is not tree-like")]
    NotTreeLike,
    #[error("bound violation: R = {r}, d0 = {d0}, C - lambda0 = {c_minus_lambda0}")]
    BoundViolation {
        r: f64,
        d0: f64,
        c_minus_lambda0: f64,
    },
    #[error("out-degree {degree} at node {node} is too large for exact enumeration")]
    DegreeTooLarge { node: NodeId, degree: usize },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

/// A real number or `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }

    /// `min(x, self)`.
    pub fn min_with(self, x: f64) -> f64 {
        match self {
            Self::Finite(d) => x.min(d),
            Self::Infinite => x,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Self::Finite(d) => d,
            Self::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(d) => write!(f, "{d}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

/// A validated equilibrium flow `f°` in the capacity box.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumFlow {
    flow: Vec<f64>,
    throughput: Vec<f64>,
    lambda0: f64,
}

impl EquilibriumFlow {
    pub fn new(
        topology: &Topology,
        f_max: &[f64],
        flow: Vec<f64>,
        lambda0: f64,
    ) -> Result<Self, ResilienceError> {
        let m = topology.link_count();
        for len in [f_max.len(), flow.len()] {
            if len != m {
                return Err(ResilienceError::DimensionMismatch {
                    expected: m,
                    got: len,
                });
            }
        }
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(ResilienceError::InvalidInput("lambda0 must be nonnegative"));
        }
        for (e, (&f, &cap)) in flow.iter().zip(f_max).enumerate() {
            if !(f >= 0.0) {
                return Err(ResilienceError::NegativeFlow { link: e, flow: f });
            }
            if f > cap + CAPACITY_TOLERANCE * cap.max(1.0) {
                return Err(ResilienceError::FlowExceedsCapacity {
                    link: e,
                    flow: f,
                    f_max: cap,
                });
            }
        }
        let mut throughput = vec![0.0; topology.node_count()];
        for v in topology.routing_nodes() {
            let out: f64 = topology.out_links(v).iter().map(|e| flow[e.0]).sum();
            let inflow = if v.0 == 0 {
                lambda0
            } else {
                topology.in_links(v).iter().map(|e| flow[e.0]).sum()
            };
            let imbalance = out - inflow;
            if imbalance.abs() > CAPACITY_TOLERANCE * inflow.abs().max(1.0) {
                return Err(ResilienceError::FlowNotBalanced { node: v, imbalance });
            }
            throughput[v.0] = out;
        }
        let n = topology.destination().0;
        throughput[n] = topology.in_links(topology.destination()).iter().map(|e| flow[e.0]).sum();
        Ok(Self {
            flow,
            throughput,
            lambda0,
        })
    }

    /// Equilibrium flow of every link, from the links' laws at `rho`.
    pub fn from_densities<F: FlowLaw>(
        topology: &Topology,
        flows: &[F],
        rho: &[f64],
        lambda0: f64,
    ) -> Result<Self, ResilienceError> {
        if rho.len() != flows.len() {
            return Err(ResilienceError::DimensionMismatch {
                expected: flows.len(),
                got: rho.len(),
            });
        }
        let flow = flows
            .iter()
            .zip(rho)
            .map(|(law, &r)| law.flow_at_gap(law.rho_max() - r))
            .collect();
        Self::new(topology, &f_max_of(flows), flow, lambda0)
    }

    pub fn flow(&self) -> &[f64] {
        &self.flow
    }

    /// `lambda°_v = sum_{E_v^+} f°`; the destination entry is its inflow.
    pub fn throughput(&self, v: NodeId) -> f64 {
        self.throughput[v.0]
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
}

pub fn f_max_of<F: FlowLaw>(flows: &[F]) -> Vec<f64> {
    flows.iter().map(FlowLaw::f_max).collect()
}

/// `R_v` per node (the destination entry is `+inf`) and `R = min_v R_v`.
pub fn residual_capacity(
    topology: &Topology,
    f_max: &[f64],
    equilibrium: &EquilibriumFlow,
) -> (Vec<f64>, f64) {
    let mut r_v = vec![f64::INFINITY; topology.node_count()];
    for v in topology.routing_nodes() {
        r_v[v.0] = topology
            .out_links(v)
            .iter()
            .map(|e| f_max[e.0] - equilibrium.flow[e.0])
            .sum();
    }
    let r = r_v.iter().copied().fold(f64::INFINITY, f64::min);
    (r_v, r)
}

/// `c_v(x) = sum_e min(x_e, d_e)`.
pub fn cv(x: &[f64], d: &[ExtendedReal]) -> f64 {
    x.iter().zip(d).map(|(&x, d)| d.min_with(x)).sum()
}

/// Minimises `c_v` over `{x in [0, f_max] : sum (f_max - x) <= lambda}` by
/// enumerating the vertices of the budget face. Ties go to the
/// lexicographically smallest `x`.
pub fn minimize_cv(
    f_max: &[f64],
    d_children: &[ExtendedReal],
    lambda: f64,
) -> Result<(f64, Vec<f64>), ResilienceError> {
    let k = f_max.len();
    if d_children.len() != k {
        return Err(ResilienceError::DimensionMismatch {
            expected: k,
            got: d_children.len(),
        });
    }
    if k == 0 {
        return Err(ResilienceError::InvalidInput("node without outgoing links"));
    }
    if k > MAX_ENUMERATION_DEGREE {
        return Err(ResilienceError::DegreeTooLarge {
            node: NodeId(usize::MAX),
            degree: k,
        });
    }
    if f_max.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(ResilienceError::InvalidInput("f_max must be positive"));
    }
    if d_children
        .iter()
        .any(|d| matches!(d, ExtendedReal::Finite(x) if !(*x >= 0.0)))
    {
        return Err(ResilienceError::InvalidInput("d values must be nonnegative"));
    }
    if !(lambda >= 0.0) {
        return Err(ResilienceError::InvalidInput("lambda must be nonnegative"));
    }
    let capacity: f64 = f_max.iter().sum();
    let budget = capacity - lambda;
    if budget <= 0.0 {
        return Ok((0.0, vec![0.0; k]));
    }
    if budget > capacity {
        return Err(ResilienceError::InfeasibleBudget { budget, capacity });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut x = vec![0.0; k];
    for free in 0..k {
        for mask in 0u32..(1 << (k - 1)) {
            let mut bit = 0;
            let mut fixed = 0.0;
            for e in 0..k {
                if e == free {
                    continue;
                }
                x[e] = if mask >> bit & 1 == 1 { f_max[e] } else { 0.0 };
                fixed += x[e];
                bit += 1;
            }
            let rest = budget - fixed;
            if rest < 0.0 || rest > f_max[free] {
                continue;
            }
            x[free] = rest;
            let value = cv(&x, d_children);
            let better = match &best {
                None => true,
                Some((v, bx)) => {
                    let scale = 1e-12 * v.abs().max(1.0);
                    value < v - scale || (value <= v + scale && lex_less(&x, bx))
                }
            };
            if better {
                best = Some((value, x.clone()));
            }
        }
    }
    Ok(best.expect("the budget face is nonempty"))
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Less) => return true,
            Some(Ordering::Greater) => return false,
            _ => {}
        }
    }
    false
}

/// Output of the backward recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct DValues {
    /// `d_v` per node, `+inf` at the destination.
    pub d: Vec<ExtendedReal>,
    /// Minimising profile per routing node, over its out-links in order.
    pub x_star: Vec<Vec<f64>>,
}

impl DValues {
    pub fn d0(&self) -> f64 {
        self.d[0].to_f64()
    }
}

/// Runs the recursion from the deepest layer to the origin.
pub fn compute_d(
    topology: &Topology,
    f_max: &[f64],
    equilibrium: &EquilibriumFlow,
) -> Result<DValues, ResilienceError> {
    if !topology.is_tree_like() {
        return Err(ResilienceError::NotTreeLike);
    }
    if f_max.len() != topology.link_count() {
        return Err(ResilienceError::DimensionMismatch {
            expected: topology.link_count(),
            got: f_max.len(),
        });
    }
    let n = topology.node_count();
    let mut d = vec![ExtendedReal::Infinite; n];
    let mut x_star = vec![Vec::new(); n - 1];
    for layer in topology.layers().iter().rev() {
        for &v in layer {
            let links = topology.out_links(v);
            if links.len() > MAX_ENUMERATION_DEGREE {
                return Err(ResilienceError::DegreeTooLarge {
                    node: v,
                    degree: links.len(),
                });
            }
            let caps: Vec<f64> = links.iter().map(|e| f_max[e.0]).collect();
            let children: Vec<ExtendedReal> =
                links.iter().map(|&e| d[topology.link(e).head.0]).collect();
            let (value, x) = minimize_cv(&caps, &children, equilibrium.throughput(v))?;
            d[v.0] = ExtendedReal::Finite(value);
            x_star[v.0] = x;
        }
    }
    Ok(DValues { d, x_star })
}

/// Per-link capacity reductions realising `d_0`: each link of a minimising
/// profile is reduced directly when that is the cheaper option, otherwise
/// the head node's own profile is applied. The total equals `d_0`.
pub fn critical_profile(topology: &Topology, values: &DValues) -> Vec<f64> {
    let mut reduction = vec![0.0; topology.link_count()];
    let mut stack = vec![topology.origin()];
    while let Some(v) = stack.pop() {
        for (&LinkId(e), &x) in topology.out_links(v).iter().zip(&values.x_star[v.0]) {
            let head = topology.link(LinkId(e)).head;
            match values.d[head.0] {
                ExtendedReal::Finite(dh) if dh < x => stack.push(head),
                _ => reduction[e] = x,
            }
        }
    }
    reduction
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResilienceReport {
    /// `R_v` per routing node.
    pub r_v: Vec<f64>,
    pub r: f64,
    pub c: f64,
    pub cut: CutReport,
    pub lambda0: f64,
    /// Present only for tree-like topologies.
    pub d: Option<DValues>,
}

impl ResilienceReport {
    pub fn d0(&self) -> Option<f64> {
        self.d.as_ref().map(DValues::d0)
    }

    pub fn c_minus_lambda0(&self) -> f64 {
        self.c - self.lambda0
    }

    pub fn r_le_d0(&self) -> Option<bool> {
        self.d0().map(|d0| self.r <= d0 + CAPACITY_TOLERANCE)
    }

    pub fn d0_le_c_minus_lambda0(&self) -> Option<bool> {
        self.d0()
            .map(|d0| d0 <= self.c_minus_lambda0() + CAPACITY_TOLERANCE)
    }
}

/// `R` and `C` only; valid on any topology.
pub fn static_report(
    topology: &Topology,
    f_max: &[f64],
    equilibrium: &EquilibriumFlow,
) -> ResilienceReport {
    let (mut r_v, r) = residual_capacity(topology, f_max, equilibrium);
    r_v.truncate(topology.node_count() - 1);
    let cut = topology.min_cut(f_max);
    ResilienceReport {
        r_v,
        r,
        c: cut.capacity,
        cut,
        lambda0: equilibrium.lambda0(),
        d: None,
    }
}

/// Full report with `d_0`, checking `R <= d_0 <= C - lambda0`.
pub fn bounds_report(
    topology: &Topology,
    f_max: &[f64],
    equilibrium: &EquilibriumFlow,
) -> Result<ResilienceReport, ResilienceError> {
    let mut report = static_report(topology, f_max, equilibrium);
    report.d = Some(compute_d(topology, f_max, equilibrium)?);
    if report.r_le_d0() != Some(true) || report.d0_le_c_minus_lambda0() != Some(true) {
        return Err(ResilienceError::BoundViolation {
            r: report.r,
            d0: report.d0().unwrap_or(f64::NAN),
            c_minus_lambda0: report.c_minus_lambda0(),
        });
    }
    Ok(report)
}
