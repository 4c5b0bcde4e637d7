//! Equilibrium densities by node-wise monotone bisection.
//!
//! At node `v` with inflow `lambda_v` the equilibrium satisfies
//! `mu_e(rho_e) = lambda_v * w_e * h_e(rho_e) * p` for every out-link, where
//! `p = 1 / sum_k w_k h_k(rho_k)`. For fixed `p` each equation has a unique
//! root `rho_e(p)` (left side increasing, right side decreasing in
//! `rho_e`), and `sum_e mu_e(rho_e(p))` is increasing in `p`, so an outer
//! bisection on `ln p` enforcing `sum_e mu_e = lambda_v` pins down the
//! solution.

use alloc::vec;
use alloc::vec::Vec;

use libm::log;

use super::{gaps_of, Model, Rates, SimError};
use crate::flow::FlowLaw;
use crate::routing::RoutingPolicy;
use crate::topology::{LinkId, Topology};

const ITERATIONS: usize = 200;

/// Equilibrium density vector for inflow `lambda0`, with all links active.
pub fn solve_equilibrium<F: FlowLaw>(
    topology: &Topology,
    flows: &[F],
    policy: &RoutingPolicy,
    lambda0: f64,
) -> Result<Vec<f64>, SimError> {
    let m = topology.link_count();
    if flows.len() != m {
        return Err(SimError::DimensionMismatch {
            expected: m,
            got: flows.len(),
        });
    }
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(SimError::InvalidOptions("lambda0 must be nonnegative"));
    }
    let mut rho = vec![0.0; m];
    let mut flow = vec![0.0; m];
    for v in topology.routing_nodes() {
        let lambda = if v.0 == 0 {
            lambda0
        } else {
            topology.in_links(v).iter().map(|e| flow[e.0]).sum()
        };
        let links = topology.out_links(v);
        let capacity: f64 = links.iter().map(|e| flows[e.0].f_max()).sum();
        if lambda >= capacity {
            return Err(SimError::NoEquilibrium {
                node: v,
                inflow: lambda,
                capacity,
            });
        }
        if lambda == 0.0 {
            continue;
        }
        solve_node(flows, policy, links, lambda, &mut rho);
        for &LinkId(e) in links {
            flow[e] = flows[e].flow_at_gap(flows[e].rho_max() - rho[e]);
        }
    }

    let model = Model::new(topology, flows, Some(policy), lambda0);
    let mut rates = Rates::new(topology);
    let xi = vec![true; m];
    let chi = vec![true; topology.node_count()];
    model.evaluate(&gaps_of(topology, &rho), &xi, &chi, &mut rates);
    let tolerance = 1e-8 * lambda0.max(1.0);
    for v in topology.routing_nodes() {
        let residual = topology
            .out_links(v)
            .iter()
            .map(|e| (rates.inflow[e.0] - rates.outflow[e.0]).abs())
            .fold(0.0, f64::max);
        if !(residual <= tolerance) {
            return Err(SimError::NonConvergence { node: v, residual });
        }
    }
    Ok(rho)
}

/// Solves one node in place, writing `rho` for its out-links.
fn solve_node<F: FlowLaw>(
    flows: &[F],
    policy: &RoutingPolicy,
    links: &[LinkId],
    lambda: f64,
    rho: &mut [f64],
) {
    let total = |log_p: f64, rho: &mut [f64]| -> f64 {
        links
            .iter()
            .map(|&LinkId(e)| {
                let gap = link_gap(&flows[e], policy, e, log(lambda) + log_p);
                rho[e] = flows[e].rho_max() - gap;
                flows[e].flow_at_gap(gap)
            })
            .sum()
    };
    let (mut lo, mut hi) = (-1000.0f64, 1000.0f64);
    for _ in 0..ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if total(mid, rho) < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever end balances best.
    let low = total(lo, rho);
    let high = total(hi, rho);
    let best = if (low - lambda).abs() < (high - lambda).abs() {
        lo
    } else {
        hi
    };
    total(best, rho);
}

/// Gap at which `ln mu_e = log_scale + ln(w_e h_e)`.
fn link_gap<F: FlowLaw>(law: &F, policy: &RoutingPolicy, e: usize, log_scale: f64) -> f64 {
    // phi(gap) = ln mu - log_scale - ln(w h); decreasing in the gap.
    let phi = |gap: f64| log(law.flow_at_gap(gap)) - log_scale - policy.log_score(e, gap);
    let (mut lo, mut hi) = (0.0f64, law.rho_max());
    for _ in 0..ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
