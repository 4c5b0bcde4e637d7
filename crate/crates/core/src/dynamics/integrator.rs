//! Rosenbrock integration of the switched dynamics with saturation events.
//!
//! The state is integrated in gap coordinates `rho_max - rho`, augmented with
//! the per-link inflow/outflow integrals and the cumulative arrivals at the
//! destination. The method is the L-stable 2(3) Rosenbrock pair of
//! Shampine and Reichelt with an analytic Jacobian. When several outgoing
//! links of one node approach capacity together, the routing split
//! rebalances them on a time scale proportional to the squared gap; the
//! linear solves replace one row of each such group by the (analytic) group
//! sum so the slow total-mass direction stays well conditioned.

use alloc::vec;
use alloc::vec::Vec;

use libm::pow;

use super::{
    node_activity, Jacobian, Model, NetworkState, Rates, Sample, SampleMode, SaturationEvent,
    SimError, SimOptions, Trajectory,
};
use crate::flow::FlowLaw;
use crate::linalg::Lu;
use crate::routing::RoutingPolicy;
use crate::topology::{LinkId, NodeId, Topology};

const GAMMA: f64 = 0.292_893_218_813_452_5; // 1 / (2 + sqrt 2)
const E32: f64 = 7.414_213_562_373_095; // 6 + sqrt 2

/// Integrates the network from `rho0` over `[0, options.horizon]`.
pub fn simulate<F: FlowLaw>(
    topology: &Topology,
    flows: &[F],
    policy: &RoutingPolicy,
    rho0: &[f64],
    lambda0: f64,
    options: &SimOptions,
) -> Result<Trajectory, SimError> {
    options.validate()?;
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(SimError::InvalidOptions("lambda0 must be nonnegative"));
    }
    super::check_densities(topology, rho0)?;
    Integrator::new(topology, flows, policy, lambda0, options).run(rho0)
}

struct Factor {
    lu: Lu,
    hg: f64,
}

struct Integrator<'a, F> {
    model: Model<'a, F>,
    options: &'a SimOptions,
    m: usize,
    rho_max: Vec<f64>,
    snap: Vec<f64>,
    xi: Vec<bool>,
    chi: Vec<bool>,
    groups: Vec<(NodeId, Vec<usize>)>,
    rates: Rates,
    jac: Jacobian,
}

impl<'a, F: FlowLaw> Integrator<'a, F> {
    fn new(
        topology: &'a Topology,
        flows: &'a [F],
        policy: &'a RoutingPolicy,
        lambda0: f64,
        options: &'a SimOptions,
    ) -> Self {
        let m = topology.link_count();
        let rho_max = topology.rho_max();
        let snap = rho_max.iter().map(|r| options.snap_tolerance * r).collect();
        Self {
            model: Model::new(topology, flows, Some(policy), lambda0),
            options,
            m,
            rho_max,
            snap,
            xi: vec![true; m],
            chi: vec![true; topology.node_count()],
            groups: Vec::new(),
            rates: Rates::new(topology),
            jac: Jacobian::new(m),
        }
    }

    fn dim(&self) -> usize {
        3 * self.m + 1
    }

    /// Augmented derivative `[d gap, inflow, outflow, lambda_n]`.
    fn deriv(&mut self, z: &[f64], out: &mut [f64]) {
        let m = self.m;
        self.model
            .evaluate(&z[..m], &self.xi, &self.chi, &mut self.rates);
        for e in 0..m {
            let (i, o) = (self.rates.inflow[e], self.rates.outflow[e]);
            out[e] = o - i;
            out[m + e] = i;
            out[2 * m + e] = o;
        }
        out[3 * m] = self.rates.arrivals();
    }

    fn refresh_jacobian(&mut self, z: &[f64]) {
        let m = self.m;
        self.model
            .evaluate(&z[..m], &self.xi, &self.chi, &mut self.rates);
        self.model
            .jacobian(&z[..m], &self.xi, &self.chi, &self.rates, &mut self.jac);
        let topology = self.model.topology;
        self.groups.clear();
        for v in topology.routing_nodes() {
            if !self.chi[v.0] {
                continue;
            }
            let active: Vec<usize> = topology
                .out_links(v)
                .iter()
                .map(|e| e.0)
                .filter(|&e| self.xi[e])
                .collect();
            if active.len() >= 2 {
                self.groups.push((v, active));
            }
        }
    }

    /// `I - h*gamma*J` on the gap block, with group-sum rows.
    fn factor(&self, h: f64) -> Option<Factor> {
        let m = self.m;
        let hg = h * GAMMA;
        let mut w = vec![0.0; m * m];
        for e in 0..m {
            for k in 0..m {
                let mut j = self.jac.inflow[e * m + k];
                if k == e {
                    j -= self.jac.outflow[e];
                }
                w[e * m + k] = -hg * j;
            }
            w[e * m + e] += 1.0;
        }
        let topology = self.model.topology;
        for (v, group) in &self.groups {
            let leader = group[0];
            let row = &mut w[leader * m..(leader + 1) * m];
            row.iter_mut().for_each(|x| *x = 0.0);
            if v.0 != 0 {
                for &LinkId(k) in topology.in_links(*v) {
                    row[k] -= hg * self.jac.slope[k];
                }
            }
            for &k in group {
                row[k] += 1.0 + hg * self.jac.outflow[k];
            }
        }
        Lu::factor(m, w).map(|lu| Factor { lu, hg })
    }

    /// Solves `W k = b` in place on the augmented vector.
    fn solve(&self, factor: &Factor, b: &mut [f64]) {
        let m = self.m;
        for (_, group) in &self.groups {
            let total: f64 = group.iter().map(|&e| b[e]).sum();
            b[group[0]] = total;
        }
        factor.lu.solve_in_place(&mut b[..m]);
        let hg = factor.hg;
        for e in 0..m {
            let row = &self.jac.inflow[e * m..(e + 1) * m];
            let dot: f64 = row.iter().zip(&b[..m]).map(|(j, k)| j * k).sum();
            b[m + e] -= hg * dot;
            b[2 * m + e] -= hg * self.jac.outflow[e] * b[e];
        }
        let dot: f64 = self
            .jac
            .arrivals
            .iter()
            .zip(&b[..m])
            .map(|(j, k)| j * k)
            .sum();
        b[3 * m] -= hg * dot;
    }

    /// One Rosenbrock step of size `h` from `z` (derivative `f0`). Writes the
    /// new state into `znew`, its derivative into `f2`, and returns the
    /// scaled error norm, or `None` if the stage matrix is singular.
    fn attempt(
        &mut self,
        z: &[f64],
        f0: &[f64],
        h: f64,
        znew: &mut [f64],
        f2: &mut [f64],
    ) -> Option<f64> {
        let n = self.dim();
        let factor = self.factor(h)?;
        let mut k1 = f0.to_vec();
        self.solve(&factor, &mut k1);

        let mut stage: Vec<f64> = (0..n).map(|i| z[i] + 0.5 * h * k1[i]).collect();
        let mut f1 = vec![0.0; n];
        self.deriv(&stage, &mut f1);

        let mut k2: Vec<f64> = (0..n).map(|i| f1[i] - k1[i]).collect();
        self.solve(&factor, &mut k2);
        for i in 0..n {
            k2[i] += k1[i];
            znew[i] = z[i] + h * k2[i];
        }
        self.deriv(znew, f2);

        for i in 0..n {
            stage[i] = f2[i] - E32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]);
        }
        let k3 = &mut stage;
        self.solve(&factor, k3);

        let (rtol, atol) = (self.options.rtol, self.options.atol);
        let m = self.m;
        let mut norm = 0.0f64;
        for i in 0..n {
            let err = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
            let magnitude = if i < m {
                (self.rho_max[i] - z[i])
                    .abs()
                    .max((self.rho_max[i] - znew[i]).abs())
            } else {
                z[i].abs().max(znew[i].abs())
            };
            norm = norm.max(err.abs() / (atol + rtol * magnitude));
        }
        if !norm.is_finite() {
            return Some(f64::INFINITY);
        }
        Some(norm)
    }

    /// Active links that moved (downwards) into their snap band.
    fn crossing(&self, z: &[f64], znew: &[f64]) -> bool {
        (0..self.m).any(|e| self.xi[e] && znew[e] <= self.snap[e] && znew[e] < z[e])
    }

    fn sample(&mut self, z: &[f64], t: f64) -> Sample {
        let m = self.m;
        self.model
            .evaluate(&z[..m], &self.xi, &self.chi, &mut self.rates);
        let rho = (0..m)
            .map(|e| {
                if self.xi[e] {
                    self.rho_max[e] - z[e]
                } else {
                    self.rho_max[e]
                }
            })
            .collect();
        Sample {
            state: NetworkState {
                t,
                rho,
                xi: self.xi.clone(),
                chi: self.chi.clone(),
                lambda: self.rates.lambda.clone(),
                f: self.rates.flow.clone(),
            },
            arrivals: z[3 * m],
        }
    }

    /// Snaps every active link inside its band whose density is rising.
    fn snap_links(
        &mut self,
        z: &mut [f64],
        reference: Option<&[f64]>,
        t: f64,
        trajectory: &mut Trajectory,
    ) -> bool {
        let m = self.m;
        let mut drift = vec![0.0; self.dim()];
        self.deriv(z, &mut drift);
        let mut any = false;
        for e in 0..m {
            if !self.xi[e] || z[e] > self.snap[e] {
                continue;
            }
            let rising = match reference {
                Some(before) => z[e] < before[e],
                None => drift[e] < 0.0,
            };
            if rising {
                trajectory.snap_mass[e] += z[e];
                z[e] = 0.0;
                self.xi[e] = false;
                trajectory.events.push(SaturationEvent { t, link: LinkId(e) });
                any = true;
            }
        }
        if any {
            self.chi = node_activity(self.model.topology, &self.xi);
        }
        any
    }

    fn run(mut self, rho0: &[f64]) -> Result<Trajectory, SimError> {
        let m = self.m;
        let n = self.dim();
        let opts = self.options;
        let horizon = opts.horizon;

        let mut z = vec![0.0; n];
        for e in 0..m {
            z[e] = self.rho_max[e] - rho0[e];
            self.xi[e] = rho0[e] < self.rho_max[e];
        }
        self.chi = node_activity(self.model.topology, &self.xi);

        let mut trajectory = Trajectory {
            samples: Vec::new(),
            events: Vec::new(),
            initial_rho: rho0.to_vec(),
            inflow_integral: vec![0.0; m],
            outflow_integral: vec![0.0; m],
            snap_mass: vec![0.0; m],
            accepted_steps: 0,
            rejected_steps: 0,
        };
        self.snap_links(&mut z, None, 0.0, &mut trajectory);
        let first = self.sample(&z, 0.0);
        trajectory.samples.push(first);

        let mut t = 0.0;
        let mut h = opts.initial_step.min(opts.max_step);
        let mut next_checkpoint = opts.checkpoint_interval.min(horizon);
        let mut f0 = vec![0.0; n];
        self.deriv(&z, &mut f0);
        self.refresh_jacobian(&z);
        let mut znew = vec![0.0; n];
        let mut f2 = vec![0.0; n];

        while t < horizon {
            let target = next_checkpoint.min(horizon);
            let lands = h >= target - t;
            let step = if lands { target - t } else { h };
            if step < 1e-14 * t.max(1.0) && !lands {
                return Err(SimError::StepSizeUnderflow { t });
            }

            let err = self
                .attempt(&z, &f0, step, &mut znew, &mut f2)
                .unwrap_or(f64::INFINITY);
            if err > 1.0 {
                trajectory.rejected_steps += 1;
                let shrink = if err.is_finite() {
                    (0.9 * pow(err, -1.0 / 3.0)).max(0.2)
                } else {
                    0.2
                };
                h = step * shrink;
                if h < 1e-14 * t.max(1.0) {
                    return Err(SimError::StepSizeUnderflow { t });
                }
                continue;
            }
            trajectory.accepted_steps += 1;
            let grow = if err > 0.0 {
                (0.9 * pow(err, -1.0 / 3.0)).clamp(0.2, 5.0)
            } else {
                5.0
            };

            if self.crossing(&z, &znew) {
                // Locate the first entry into a snap band by bisecting the
                // step fraction.
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let mut probe = vec![0.0; n];
                let mut probe_f = vec![0.0; n];
                let mut located = znew.clone();
                for _ in 0..64 {
                    if (hi - lo) * step <= 1e-14 * t.max(1.0) {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    match self.attempt(&z, &f0, mid * step, &mut probe, &mut probe_f) {
                        Some(_) if self.crossing(&z, &probe) => {
                            hi = mid;
                            located.copy_from_slice(&probe);
                        }
                        Some(_) => lo = mid,
                        None => break,
                    }
                }
                let event_t = t + hi * step;
                let before = z.clone();
                z.copy_from_slice(&located);
                t = event_t;
                if t >= next_checkpoint {
                    next_checkpoint += opts.checkpoint_interval;
                }
                self.snap_links(&mut z, Some(&before), t, &mut trajectory);
                let s = self.sample(&z, t);
                trajectory.samples.push(s);
                self.deriv(&z, &mut f0);
                self.refresh_jacobian(&z);
                h = (hi * step).max(opts.initial_step.min(1e-6));
                continue;
            }

            z.copy_from_slice(&znew);
            f0.copy_from_slice(&f2);
            if lands {
                t = target;
                next_checkpoint += opts.checkpoint_interval;
            } else {
                t += step;
            }
            self.refresh_jacobian(&z);
            if lands || opts.sample_mode == SampleMode::EveryStep {
                let s = self.sample(&z, t);
                trajectory.samples.push(s);
            }
            h = (step * grow).min(opts.max_step);
            if lands {
                // A checkpoint-shortened step says nothing about the next one.
                h = h.max(step.min(opts.max_step));
            }
        }

        trajectory.inflow_integral.copy_from_slice(&z[m..2 * m]);
        trajectory.outflow_integral.copy_from_slice(&z[2 * m..3 * m]);
        Ok(trajectory)
    }
}
