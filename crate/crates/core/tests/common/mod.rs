//! Random instance generators shared by the integration tests.

#![allow(dead_code)]

use flownet_core::resilience::EquilibriumFlow;
use flownet_core::{FlowFunction, LinkSpec, RoutingPolicy, Topology};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A validated network with linear laws and an equilibrium flow.
pub struct Instance {
    pub topology: Topology,
    pub f_max: Vec<f64>,
    pub flow: Vec<f64>,
    pub lambda0: f64,
}

impl Instance {
    pub fn laws(&self) -> Vec<FlowFunction> {
        self.topology
            .links()
            .iter()
            .zip(&self.f_max)
            .map(|(l, &c)| FlowFunction::linear(c, l.rho_max).unwrap())
            .collect()
    }

    pub fn equilibrium(&self) -> EquilibriumFlow {
        EquilibriumFlow::new(&self.topology, &self.f_max, self.flow.clone(), self.lambda0).unwrap()
    }

    pub fn calibrated_policy(&self, eta: f64) -> RoutingPolicy {
        RoutingPolicy::calibrate(&self.topology, &self.laws(), &self.flow, self.lambda0, eta).unwrap()
    }
}

/// Random DAG on `2..=max_nodes` nodes where every node lies on an
/// origin-destination path.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> Topology {
    let n = rng.gen_range(2..=max_nodes);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for v in 0..n - 1 {
        for _ in 0..rng.gen_range(1..=2) {
            edges.push((v, rng.gen_range(v + 1..n)));
        }
    }
    for v in 1..n {
        if !edges.iter().any(|&(_, h)| h == v) {
            edges.push((rng.gen_range(0..v), v));
        }
    }
    let links = edges
        .iter()
        .enumerate()
        .map(|(i, &(t, h))| LinkSpec::new(format!("e{i}"), t, h, rng.gen_range(0.5..2.0)))
        .collect();
    Topology::new(n, links).unwrap()
}

/// Random tree-like network: a rooted tree of routing nodes with at most
/// `layers` layers and out-degree `1..=max_degree`, every leaf edge going
/// to the destination.
pub fn random_tree(rng: &mut ChaCha8Rng, layers: usize, max_degree: usize) -> Topology {
    // (tail, child index or None for the destination)
    let mut edges: Vec<(usize, Option<usize>)> = Vec::new();
    let mut depth = vec![0usize];
    let mut next = 0;
    while next < depth.len() {
        let v = next;
        next += 1;
        for _ in 0..rng.gen_range(1..=max_degree) {
            if depth[v] + 1 < layers && depth.len() < 12 && rng.gen_bool(0.45) {
                depth.push(depth[v] + 1);
                edges.push((v, Some(depth.len() - 1)));
            } else {
                edges.push((v, None));
            }
        }
    }
    let dest = depth.len();
    let links = edges
        .iter()
        .enumerate()
        .map(|(i, &(t, h))| LinkSpec::new(format!("e{i}"), t, h.unwrap_or(dest), rng.gen_range(0.5..2.0)))
        .collect();
    Topology::new(dest + 1, links).unwrap()
}

/// Capacities in `[0.5, 4]` and a strictly interior equilibrium flow,
/// split top-down with random proportions. Retries until every link is
/// strictly below capacity.
pub fn random_instance(rng: &mut ChaCha8Rng, topology: Topology) -> Instance {
    let m = topology.link_count();
    loop {
        let f_max: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..4.0)).collect();
        let cut = topology.min_cut(&f_max).capacity;
        let lambda0 = cut * rng.gen_range(0.1..0.9);
        let mut flow = vec![0.0; m];
        let mut ok = true;
        for v in topology.routing_nodes() {
            let inflow = if v.0 == 0 {
                lambda0
            } else {
                topology.in_links(v).iter().map(|e| flow[e.0]).sum()
            };
            let links = topology.out_links(v);
            let weights: Vec<f64> = links.iter().map(|e| f_max[e.0] * rng.gen_range(0.5..1.5)).collect();
            let total: f64 = weights.iter().sum();
            for (e, w) in links.iter().zip(&weights) {
                flow[e.0] = inflow * w / total;
                ok &= flow[e.0] > 1e-3 && flow[e.0] < 0.97 * f_max[e.0];
            }
        }
        if ok {
            return Instance {
                topology,
                f_max,
                flow,
                lambda0,
            };
        }
    }
}
