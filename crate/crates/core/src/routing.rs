//! Locally responsive distributed routing.
//!
//! The built-in family is the weighted exp-residual policy
//!
//! ```text
//! G^v_e(rho^v) = w_e h_e(rho_e) / sum_{j in E_v^+} w_j h_j(rho_j),
//! h_e(rho) = exp(-eta * rho / (rho_max_e - rho)),   h_e(rho_max_e) = 0.
//! ```
//!
//! `h_e` is decreasing and vanishes at saturation, so the split sends no
//! flow to a full link and the share of every other link can only grow when
//! one link gets denser. Shares are computed in log space, which keeps them
//! well defined even when every `h_e` underflows.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::FlowLaw;
use crate::topology::{LinkId, NodeId, Topology};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoutingError {
    #[error("node {0} is not a routing (non-destination) node")]
    UnknownNode(NodeId),
    #[error("density {rho} on link {link} outside [0, {rho_max}]")]
    DensityOutOfRange { link: usize, rho: f64, rho_max: f64 },
    #[error("expected {expected} densities, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("link subset must be a nonempty proper subset of the outgoing links")]
    EmptyOrFullSubset,
    #[error("invalid routing parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("target flow violates conservation at node {node} (imbalance {imbalance})")]
    FlowNotBalanced { node: NodeId, imbalance: f64 },
    #[error("target flow {flow} on link {link} is not strictly below f_max = {f_max}")]
    FlowAtCapacity { link: usize, flow: f64, f_max: f64 },
    #[error("target flow {flow} on link {link} is not strictly positive")]
    NonPositiveFlow { link: usize, flow: f64 },
}

const MIN_GAP: f64 = 1e-200;

/// Exp-residual routing policy over a fixed topology.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingPolicy {
    eta: f64,
    weights: Vec<f64>,
    rho_max: Vec<f64>,
}

impl RoutingPolicy {
    /// `weights` has one strictly positive entry per link.
    pub fn new(topology: &Topology, eta: f64, weights: Vec<f64>) -> Result<Self, RoutingError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(RoutingError::InvalidParameter("eta must be positive"));
        }
        if weights.len() != topology.link_count() {
            return Err(RoutingError::DimensionMismatch {
                expected: topology.link_count(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(RoutingError::InvalidParameter("weights must be positive"));
        }
        Ok(Self {
            eta,
            weights,
            rho_max: topology.rho_max(),
        })
    }

    /// Equal weights everywhere.
    pub fn uniform(topology: &Topology, eta: f64) -> Result<Self, RoutingError> {
        Self::new(topology, eta, vec![1.0; topology.link_count()])
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `ln(w_e h_e)` at gap `rho_max - rho`, `-inf` at saturation.
    #[inline]
    pub(crate) fn log_score(&self, e: usize, gap: f64) -> f64 {
        if gap <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let occupancy = (self.rho_max[e] - gap) / gap;
        log(self.weights[e]) - self.eta * occupancy
    }

    /// `d ln h_e / d rho` at gap `rho_max - rho`.
    #[inline]
    pub(crate) fn log_h_slope(&self, e: usize, gap: f64) -> f64 {
        if gap <= 0.0 {
            return 0.0;
        }
        -self.eta * self.rho_max[e] / (gap * gap)
    }

    /// Split over `links` given per-link gaps (indexed by link id) and
    /// activity flags; inactive links get exactly zero. Writes into `out`
    /// and returns false when no link is active (all zeros).
    pub(crate) fn split_by_gap(
        &self,
        links: &[LinkId],
        gaps: &[f64],
        active: &[bool],
        out: &mut [f64],
    ) -> bool {
        let mut top = f64::NEG_INFINITY;
        for (k, &LinkId(e)) in links.iter().enumerate() {
            let s = if active[e] {
                // Integrator stages may step past saturation; keep the
                // split continuous there.
                self.log_score(e, gaps[e].max(MIN_GAP * self.rho_max[e]))
            } else {
                f64::NEG_INFINITY
            };
            out[k] = s;
            top = top.max(s);
        }
        if top == f64::NEG_INFINITY {
            out[..links.len()].iter_mut().for_each(|g| *g = 0.0);
            return false;
        }
        let mut total = 0.0;
        for g in out[..links.len()].iter_mut() {
            *g = exp(*g - top);
            total += *g;
        }
        out[..links.len()].iter_mut().for_each(|g| *g /= total);
        true
    }

    /// Routing split `G^v(rho^v)` over `E_v^+`.
    ///
    /// Coordinates at `rho_max` receive exactly zero; when every coordinate
    /// is saturated the zero vector is returned.
    pub fn route(
        &self,
        topology: &Topology,
        node: NodeId,
        rho_v: &[f64],
    ) -> Result<Vec<f64>, RoutingError> {
        let links = self.node_links(topology, node)?;
        self.check_densities(links, rho_v, true)?;
        let mut gaps = vec![0.0; self.rho_max.len()];
        let mut active = vec![false; self.rho_max.len()];
        for (&LinkId(e), &rho) in links.iter().zip(rho_v) {
            gaps[e] = self.rho_max[e] - rho;
            active[e] = rho < self.rho_max[e];
        }
        let mut out = vec![0.0; links.len()];
        self.split_by_gap(links, &gaps, &active, &mut out);
        Ok(out)
    }

    /// Restricted map `G^J` over a nonempty proper subset `J` of `E_v^+`:
    /// the limit of [`route`](Self::route) as every link outside `J` saturates.
    pub fn restricted(
        &self,
        topology: &Topology,
        node: NodeId,
        subset: &[LinkId],
        x: &[f64],
    ) -> Result<Vec<f64>, RoutingError> {
        let links = self.node_links(topology, node)?;
        let proper = !subset.is_empty()
            && subset.len() < links.len()
            && subset.iter().all(|e| links.contains(e))
            && subset
                .iter()
                .enumerate()
                .all(|(i, e)| !subset[..i].contains(e));
        if !proper {
            return Err(RoutingError::EmptyOrFullSubset);
        }
        self.check_densities(subset, x, false)?;
        let mut gaps = vec![0.0; self.rho_max.len()];
        let active = vec![true; self.rho_max.len()];
        for (&LinkId(e), &rho) in subset.iter().zip(x) {
            gaps[e] = self.rho_max[e] - rho;
        }
        let mut out = vec![0.0; subset.len()];
        self.split_by_gap(subset, &gaps, &active, &mut out);
        Ok(out)
    }

    /// Weights that make `target` (one flow per link) an equilibrium: at
    /// `rho° = mu^{-1}(target)` every node splits its throughput exactly in
    /// proportion to `target`.
    pub fn calibrate<F: FlowLaw>(
        topology: &Topology,
        flows: &[F],
        target: &[f64],
        lambda0: f64,
        eta: f64,
    ) -> Result<Self, RoutingError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(RoutingError::InvalidParameter("eta must be positive"));
        }
        let m = topology.link_count();
        if flows.len() != m || target.len() != m {
            return Err(RoutingError::DimensionMismatch {
                expected: m,
                got: target.len().min(flows.len()),
            });
        }
        for (e, (&f, law)) in target.iter().zip(flows).enumerate() {
            if !(f > 0.0) {
                return Err(RoutingError::NonPositiveFlow { link: e, flow: f });
            }
            if f >= law.f_max() {
                return Err(RoutingError::FlowAtCapacity {
                    link: e,
                    flow: f,
                    f_max: law.f_max(),
                });
            }
        }
        check_conservation(topology, target, lambda0)?;

        let rho_max = topology.rho_max();
        let mut weights = vec![0.0; m];
        for v in topology.routing_nodes() {
            let links = topology.out_links(v);
            let throughput: f64 = links.iter().map(|e| target[e.0]).sum();
            let mut top = f64::NEG_INFINITY;
            for &LinkId(e) in links {
                let rho = flows[e]
                    .inverse(target[e])
                    .ok_or(RoutingError::FlowAtCapacity {
                        link: e,
                        flow: target[e],
                        f_max: flows[e].f_max(),
                    })?;
                let occupancy = rho / (rho_max[e] - rho);
                weights[e] = log(target[e] / throughput) + eta * occupancy;
                top = top.max(weights[e]);
            }
            let mut total = 0.0;
            for &LinkId(e) in links {
                weights[e] = exp(weights[e] - top);
                total += weights[e];
            }
            for &LinkId(e) in links {
                weights[e] /= total;
            }
        }
        Self::new(topology, eta, weights)
    }

    fn node_links<'t>(
        &self,
        topology: &'t Topology,
        node: NodeId,
    ) -> Result<&'t [LinkId], RoutingError> {
        if node.0 + 1 >= topology.node_count() {
            return Err(RoutingError::UnknownNode(node));
        }
        Ok(topology.out_links(node))
    }

    fn check_densities(
        &self,
        links: &[LinkId],
        rho: &[f64],
        closed: bool,
    ) -> Result<(), RoutingError> {
        if links.len() != rho.len() {
            return Err(RoutingError::DimensionMismatch {
                expected: links.len(),
                got: rho.len(),
            });
        }
        for (&LinkId(e), &r) in links.iter().zip(rho) {
            let ok = if closed {
                (0.0..=self.rho_max[e]).contains(&r)
            } else {
                (0.0..self.rho_max[e]).contains(&r)
            };
            if !ok {
                return Err(RoutingError::DensityOutOfRange {
                    link: e,
                    rho: r,
                    rho_max: self.rho_max[e],
                });
            }
        }
        Ok(())
    }
}

/// Checks that `flow` is a feasible equilibrium flow pattern for inflow
/// `lambda0` (conservation at every non-destination node).
pub(crate) fn check_conservation(
    topology: &Topology,
    flow: &[f64],
    lambda0: f64,
) -> Result<(), RoutingError> {
    for v in topology.routing_nodes() {
        let out: f64 = topology.out_links(v).iter().map(|e| flow[e.0]).sum();
        let inflow = if v == topology.origin() {
            lambda0
        } else {
            topology.in_links(v).iter().map(|e| flow[e.0]).sum()
        };
        let imbalance = out - inflow;
        if imbalance.abs() > 1e-9 * inflow.abs().max(1.0) {
            return Err(RoutingError::FlowNotBalanced { node: v, imbalance });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub point: Vec<f64>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomCheckReport {
    pub node: NodeId,
    pub samples: usize,
    pub simplex_violations: Vec<Violation>,
    pub limit_violations: Vec<Violation>,
    pub cooperativity_violations: Vec<Violation>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomCheckOptions {
    pub samples: usize,
    /// Allowed deviation of the shares from the simplex.
    pub simplex_tolerance: f64,
    /// Slack for the monotone limit trend and the sign of finite-difference
    /// cross derivatives.
    pub tolerance: f64,
    /// Upper bound on a share at occupancy `1 - 1e-8`.
    pub limit_envelope: f64,
    pub seed: u64,
}

impl Default for AxiomCheckOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            simplex_tolerance: 1e-12,
            tolerance: 1e-6,
            limit_envelope: 1e-6,
            seed: 0,
        }
    }
}

/// Samples `Gamma_v` and checks an arbitrary policy `g` at one node against
/// the simplex property and routing axioms (a) and (b).
///
/// `rho_max` lists the density capacities of the node's outgoing links, in
/// the same order `g` expects its arguments. Violations are collected, not
/// raised.
pub fn check_axioms<G>(
    g: G,
    node: NodeId,
    rho_max: &[f64],
    options: AxiomCheckOptions,
) -> AxiomCheckReport
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let k = rho_max.len();
    let tol = options.tolerance;
    let simplex_tol = options.simplex_tolerance;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = AxiomCheckReport {
        node,
        samples: options.samples,
        simplex_violations: Vec::new(),
        limit_violations: Vec::new(),
        cooperativity_violations: Vec::new(),
        pass: true,
    };
    let mut x = vec![0.0; k];
    for _ in 0..options.samples {
        for (xi, &rm) in x.iter_mut().zip(rho_max) {
            *xi = rng.gen::<f64>() * rm;
        }

        let p = g(&x);
        let sum_err = (p.iter().sum::<f64>() - 1.0).abs();
        let neg = p.iter().fold(0.0f64, |m, &v| m.max(-v));
        if sum_err > simplex_tol || neg > simplex_tol || p.len() != k {
            report.simplex_violations.push(Violation {
                point: x.clone(),
                magnitude: sum_err.max(neg),
            });
        }

        if k >= 2 {
            for e in 0..k {
                let others_interior = (0..k).any(|j| j != e && x[j] <= 0.5 * rho_max[j]);
                let mut y = x.clone();
                let mut last = f64::INFINITY;
                let mut worst_rise = 0.0f64;
                for exponent in 2..=6 {
                    y[e] = rho_max[e] * (1.0 - libm::pow(10.0, -f64::from(exponent)));
                    let share = g(&y)[e];
                    worst_rise = worst_rise.max(share - last);
                    last = share;
                }
                y[e] = rho_max[e] * (1.0 - 1e-8);
                let share = g(&y)[e];
                worst_rise = worst_rise.max(share - last);
                let over = if others_interior {
                    share - options.limit_envelope
                } else {
                    0.0
                };
                if worst_rise > tol || over > 0.0 {
                    report.limit_violations.push(Violation {
                        point: y,
                        magnitude: worst_rise.max(share),
                    });
                }
            }

            for e in 0..k {
                let step = 1e-6 * rho_max[e];
                let mut y = x.clone();
                y[e] = y[e].clamp(step, rho_max[e] - 2.0 * step);
                let centre = y[e];
                y[e] = centre + step;
                let up = g(&y);
                y[e] = centre - step;
                let down = g(&y);
                y[e] = centre;
                for j in (0..k).filter(|&j| j != e) {
                    let derivative = (up[j] - down[j]) / (2.0 * step);
                    if derivative < -tol {
                        report.cooperativity_violations.push(Violation {
                            point: y.clone(),
                            magnitude: -derivative,
                        });
                    }
                }
            }
        }
    }
    report.pass = report.simplex_violations.is_empty()
        && report.limit_violations.is_empty()
        && report.cooperativity_violations.is_empty();
    report
}

impl RoutingPolicy {
    /// [`check_axioms`] applied to this policy at `node`.
    pub fn check_axioms(
        &self,
        topology: &Topology,
        node: NodeId,
        options: AxiomCheckOptions,
    ) -> Result<AxiomCheckReport, RoutingError> {
        let links = self.node_links(topology, node)?;
        let rho_max: Vec<f64> = links.iter().map(|e| self.rho_max[e.0]).collect();
        Ok(check_axioms(
            |x| {
                self.route(topology, node, x)
                    .unwrap_or_else(|_| vec![f64::NAN; x.len()])
            },
            node,
            &rho_max,
            options,
        ))
    }
}
