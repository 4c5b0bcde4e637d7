//! Admissible perturbations, their magnitude, and empirical margin sweeps.
//!
//! A perturbation replaces every flow law `mu_e` by a reduced law
//! `mu~_e <= mu_e` with the same monotonicity. Its magnitude is
//! `sum_e sup_rho (mu_e - mu~_e)`. Sweeps enumerate per-link scalings, run
//! the perturbed dynamics from the unperturbed equilibrium and bracket the
//! smallest magnitude that destroys the transferring property.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use libm::log;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    classify_transferring, simulate, Classification, SampleMode, SimError, SimOptions, Trajectory,
};
use crate::flow::{FlowFunction, FlowLaw, PerturbedFlow, Reduction};
use crate::resilience::{
    bounds_report, critical_profile, f_max_of, static_report, EquilibriumFlow, ResilienceError,
};
use crate::routing::RoutingPolicy;
use crate::topology::Topology;

/// Default number of grid points per link for sup estimates.
pub const DEFAULT_MAGNITUDE_GRID: usize = 10_000;

const ADMISSIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbationError {
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scale {scale} on link {link} is outside (0, 1]")]
    ScaleOutOfRange { link: usize, scale: f64 },
    #[error("clip level {clip} on link {link} must be in [0, f_max)")]
    InvalidClip { link: usize, clip: f64 },
    #[error("perturbed law on link {link} is not admissible at rho = {rho}: {reason}")]
    NotAdmissible {
        link: usize,
        rho: f64,
        reason: &'static str,
    },
    #[error("{combinations} grid combinations exceed the cap {cap} and subsampling is disabled")]
    BudgetExceeded { combinations: usize, cap: usize },
    #[error("invalid sweep: {0}")]
    InvalidSweep(&'static str),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Resilience(#[from] ResilienceError),
}

/// Reduced flow laws with their per-link sup gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub flows: Vec<PerturbedFlow>,
    /// `delta_e = sup (mu_e - mu~_e)`.
    pub delta: Vec<f64>,
}

impl Perturbation {
    /// The identity perturbation.
    pub fn none(base: &[FlowFunction]) -> Self {
        Self {
            flows: base.iter().copied().map(PerturbedFlow::unperturbed).collect(),
            delta: vec![0.0; base.len()],
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.delta.iter().sum()
    }

    pub fn f_max_perturbed(&self) -> Vec<f64> {
        self.flows.iter().map(FlowLaw::f_max).collect()
    }

    /// Per-link scales, if this is a pure scaling.
    pub fn scales(&self) -> Option<Vec<f64>> {
        self.flows
            .iter()
            .map(|f| match f.reduction {
                Reduction::Scale(s) => Some(s),
                Reduction::Clip(_) => None,
            })
            .collect()
    }
}

/// `mu~_e = s_e mu_e` with `0 < s_e <= 1`.
pub fn make_scaling_perturbation(
    base: &[FlowFunction],
    scales: &[f64],
) -> Result<Perturbation, PerturbationError> {
    if scales.len() != base.len() {
        return Err(PerturbationError::DimensionMismatch {
            expected: base.len(),
            got: scales.len(),
        });
    }
    let mut flows = Vec::with_capacity(base.len());
    let mut delta = Vec::with_capacity(base.len());
    for (e, (&mu, &s)) in base.iter().zip(scales).enumerate() {
        if !(s > 0.0 && s <= 1.0) {
            return Err(PerturbationError::ScaleOutOfRange { link: e, scale: s });
        }
        let law = PerturbedFlow {
            base: mu,
            reduction: Reduction::Scale(s),
        };
        delta.push(law.sup_gap());
        flows.push(law);
    }
    Ok(Perturbation { flows, delta })
}

/// `mu~_e = max(mu_e - c_e, 0)` with `0 <= c_e < f_max_e`.
pub fn make_clipped_perturbation(
    base: &[FlowFunction],
    clips: &[f64],
) -> Result<Perturbation, PerturbationError> {
    if clips.len() != base.len() {
        return Err(PerturbationError::DimensionMismatch {
            expected: base.len(),
            got: clips.len(),
        });
    }
    let mut flows = Vec::with_capacity(base.len());
    for (e, (&mu, &c)) in base.iter().zip(clips).enumerate() {
        if !(c >= 0.0 && c < mu.f_max()) {
            return Err(PerturbationError::InvalidClip { link: e, clip: c });
        }
        let law = PerturbedFlow {
            base: mu,
            reduction: Reduction::Clip(c),
        };
        check_admissible(e, &mu, &law, DEFAULT_MAGNITUDE_GRID)?;
        flows.push(law);
    }
    let delta = flows.iter().map(PerturbedFlow::sup_gap).collect();
    Ok(Perturbation { flows, delta })
}

/// Grid check that `mu~ <= mu`, that `mu~` is nondecreasing, and that it is
/// strictly increasing wherever it is positive.
pub fn check_admissible<F: FlowLaw, G: FlowLaw>(
    link: usize,
    mu: &F,
    mu_tilde: &G,
    points: usize,
) -> Result<(), PerturbationError> {
    let rho_max = mu.rho_max();
    let points = points.max(2);
    let (mut previous, mut previous_base) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..points {
        let rho = rho_max * i as f64 / points as f64;
        let gap = rho_max - rho;
        let (a, b) = (mu.flow_at_gap(gap), mu_tilde.flow_at_gap(gap));
        if b > a + ADMISSIBILITY_TOLERANCE * a.abs().max(1.0) {
            return Err(PerturbationError::NotAdmissible {
                link,
                rho,
                reason: "perturbed flow exceeds the base flow",
            });
        }
        // Strictness is only testable where the base law resolves it.
        if b < previous || (b > 0.0 && b == previous && a - previous_base > 1e-14 * a.max(1.0)) {
            return Err(PerturbationError::NotAdmissible {
                link,
                rho,
                reason: "perturbed flow is not increasing",
            });
        }
        previous = b;
        previous_base = a;
    }
    Ok(())
}

/// Sup-gap estimate with a one-sided error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeEstimate {
    pub value: f64,
    /// The true magnitude lies in `[value, value + error_bound]`.
    pub error_bound: f64,
}

/// Estimates `sum_e sup_rho (mu_e - mu~_e)` on a uniform density grid
/// plus the `rho -> rho_max` limit. Both laws are nondecreasing, so on
/// each cell the gap is at most `mu(right) - mu~(left)`.
pub fn perturbation_magnitude<F: FlowLaw, G: FlowLaw>(
    mu: &[F],
    mu_tilde: &[G],
    points: usize,
) -> Result<MagnitudeEstimate, PerturbationError> {
    if mu.len() != mu_tilde.len() {
        return Err(PerturbationError::DimensionMismatch {
            expected: mu.len(),
            got: mu_tilde.len(),
        });
    }
    let points = points.max(1);
    let mut value = 0.0;
    let mut bound = 0.0;
    for (e, (a, b)) in mu.iter().zip(mu_tilde).enumerate() {
        let rho_max = a.rho_max();
        let at = |i: usize| {
            let gap = rho_max - rho_max * i as f64 / points as f64;
            (a.flow_at_gap(gap), b.flow_at_gap(gap))
        };
        let mut sup = a.f_max() - b.f_max();
        let mut upper = sup;
        let mut left = at(0);
        for i in 0..=points {
            let here = at(i);
            let diff = here.0 - here.1;
            if diff < -ADMISSIBILITY_TOLERANCE * here.0.abs().max(1.0) {
                return Err(PerturbationError::NotAdmissible {
                    link: e,
                    rho: rho_max * i as f64 / points as f64,
                    reason: "perturbed flow exceeds the base flow",
                });
            }
            sup = sup.max(diff);
            if i > 0 {
                upper = upper.max(here.0 - left.1);
            }
            left = here;
        }
        value += sup.max(0.0);
        bound += (upper - sup).max(0.0);
    }
    Ok(MagnitudeEstimate {
        value,
        error_bound: bound,
    })
}

/// Runs the perturbed dynamics from `rho0` and classifies the result.
pub fn simulate_perturbed(
    topology: &Topology,
    perturbation: &Perturbation,
    policy: &RoutingPolicy,
    rho0: &[f64],
    lambda0: f64,
    options: &SimOptions,
) -> Result<(Trajectory, Classification), SimError> {
    let trajectory = simulate(topology, &perturbation.flows, policy, rho0, lambda0, options)?;
    let class = classify_transferring(&trajectory, lambda0, options.rel_tol, options.window())?;
    Ok((trajectory, class))
}

/// `count` scale vectors whose scaling perturbation has exactly the given
/// magnitude, with reductions drawn uniformly from the simplex (and
/// rejected when some scale would leave `(0, 1]`).
pub fn sample_magnitude_sphere(
    base: &[FlowFunction],
    magnitude: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, PerturbationError> {
    let m = base.len();
    let capacity: f64 = base.iter().map(FlowLaw::f_max).sum();
    if m == 0 || !(magnitude >= 0.0) || magnitude >= capacity {
        return Err(PerturbationError::InvalidSweep(
            "magnitude must be below the total capacity",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1_000 * count.max(1) {
            return Err(PerturbationError::InvalidSweep(
                "magnitude sphere has no admissible scalings",
            ));
        }
        let weights: Vec<f64> = (0..m)
            .map(|_| -log(1.0 - rng.gen::<f64>()))
            .collect();
        let total: f64 = weights.iter().sum();
        let scales: Vec<f64> = weights
            .iter()
            .zip(base)
            .map(|(w, mu)| 1.0 - magnitude * w / total / mu.f_max())
            .collect();
        if scales.iter().all(|&s| s > 0.0 && s <= 1.0) {
            out.push(scales);
        }
    }
    Ok(out)
}

/// Scale-space sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Scale levels tried on every link.
    pub grid: Vec<f64>,
    /// Combination cap; above it the grid is subsampled.
    pub max_combinations: usize,
    pub subsample: bool,
    pub seed: u64,
    /// End points of rays `s(theta) = 1 - theta (1 - end)` to bisect.
    pub rays: Vec<Vec<f64>>,
    /// Also bisect along the ray of the minimising reduction profile.
    pub critical_ray: bool,
    /// Magnitude resolution of ray bisection.
    pub ray_tolerance: f64,
    /// Undecided runs are repeated once at twice the horizon.
    pub rerun_undecided: bool,
    pub options: SimOptions,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: (0..10).map(|i| (10 - i) as f64 / 10.0).collect(),
            max_combinations: 100_000,
            subsample: true,
            seed: 0,
            rays: Vec::new(),
            critical_ray: true,
            ray_tolerance: 1e-3,
            rerun_undecided: true,
            options: SimOptions {
                sample_mode: SampleMode::Checkpoints,
                ..SimOptions::default()
            },
        }
    }
}

/// The concrete grid points of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    /// Grid-index vectors; scales are `grid[index]`.
    pub points: Vec<Vec<usize>>,
    pub total_combinations: usize,
    pub subsampled: bool,
}

impl SweepSpec {
    fn validate(&self) -> Result<(), PerturbationError> {
        if self.grid.is_empty() || self.grid.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(PerturbationError::InvalidSweep("grid scales must be in (0, 1]"));
        }
        if !(self.ray_tolerance > 0.0) {
            return Err(PerturbationError::InvalidSweep("ray tolerance must be positive"));
        }
        self.options.validate()?;
        Ok(())
    }

    /// Enumerates the grid, or draws a seeded subsample of
    /// `max_combinations` distinct points when it is larger.
    pub fn plan(&self, links: usize) -> Result<SweepPlan, PerturbationError> {
        self.validate()?;
        let g = self.grid.len();
        let total = u32::try_from(links)
            .ok()
            .and_then(|m| g.checked_pow(m))
            .unwrap_or(usize::MAX);
        if total <= self.max_combinations {
            let mut points = Vec::with_capacity(total);
            let mut index = vec![0usize; links];
            for _ in 0..total {
                points.push(index.clone());
                for digit in index.iter_mut().rev() {
                    *digit += 1;
                    if *digit < g {
                        break;
                    }
                    *digit = 0;
                }
            }
            return Ok(SweepPlan {
                points,
                total_combinations: total,
                subsampled: false,
            });
        }
        if !self.subsample {
            return Err(PerturbationError::BudgetExceeded {
                combinations: total,
                cap: self.max_combinations,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut seen = BTreeSet::new();
        let mut points = Vec::with_capacity(self.max_combinations);
        while points.len() < self.max_combinations {
            let index: Vec<usize> = (0..links).map(|_| rng.gen_range(0..g)).collect();
            if seen.insert(index.clone()) {
                points.push(index);
            }
        }
        Ok(SweepPlan {
            points,
            total_combinations: total,
            subsampled: true,
        })
    }

    pub fn scales_of(&self, index: &[usize]) -> Vec<f64> {
        index.iter().map(|&i| self.grid[i]).collect()
    }
}

/// Outcome of one perturbed run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub scales: Vec<f64>,
    pub magnitude: f64,
    pub classification: Classification,
    pub events: usize,
    pub final_average: f64,
    /// Horizon of the run that produced the classification.
    pub horizon: f64,
}

/// Bisection along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayResult {
    pub end: Vec<f64>,
    /// Largest magnitude on the ray classified transferring.
    pub transferring: f64,
    /// Smallest magnitude on the ray classified otherwise, if any.
    pub non_transferring: Option<f64>,
    pub samples: Vec<SweepSample>,
}

impl RayResult {
    /// Midpoint of the final bracket.
    pub fn threshold(&self) -> Option<f64> {
        self.non_transferring.map(|hi| 0.5 * (self.transferring + hi))
    }
}

/// Static reference values reported next to the empirical bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct References {
    pub r: f64,
    pub d0: Option<f64>,
    pub c_minus_lambda0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    pub total_combinations: usize,
    pub subsampled: bool,
    /// Grid samples, sorted by magnitude then scales.
    pub samples: Vec<SweepSample>,
    pub rays: Vec<RayResult>,
    /// Largest transferring magnitude found (empirical).
    pub max_transferring: Option<f64>,
    /// Smallest non-transferring magnitude found (empirical).
    pub min_non_transferring: Option<f64>,
    pub references: References,
    /// Non-transferring samples below `R`.
    pub below_r_violations: usize,
    /// Grid neighbours where further scaling restored transferring, after
    /// re-running both at twice the horizon.
    pub monotonicity_violations: usize,
    pub undecided: usize,
}

/// Shared inputs of every sweep run.
#[derive(Debug, Clone, Copy)]
pub struct SweepContext<'a> {
    pub topology: &'a Topology,
    pub base: &'a [FlowFunction],
    pub policy: &'a RoutingPolicy,
    pub rho0: &'a [f64],
    pub lambda0: f64,
    pub options: SimOptions,
    pub rerun_undecided: bool,
}

impl<'a> SweepContext<'a> {
    fn run_with(&self, scales: &[f64], options: &SimOptions) -> Result<SweepSample, PerturbationError> {
        let perturbation = make_scaling_perturbation(self.base, scales)?;
        let (trajectory, classification) = simulate_perturbed(
            self.topology,
            &perturbation,
            self.policy,
            self.rho0,
            self.lambda0,
            options,
        )?;
        Ok(SweepSample {
            scales: scales.to_vec(),
            magnitude: perturbation.magnitude(),
            classification,
            events: trajectory.events.len(),
            final_average: trajectory.window_average(options.window())?,
            horizon: options.horizon,
        })
    }

    fn doubled(&self) -> SimOptions {
        SimOptions {
            horizon: 2.0 * self.options.horizon,
            ..self.options
        }
    }

    /// Simulates one scaling, repeating an undecided run at twice the
    /// horizon when configured.
    pub fn run_sample(&self, scales: &[f64]) -> Result<SweepSample, PerturbationError> {
        let sample = self.run_with(scales, &self.options)?;
        if sample.classification == Classification::Undecided && self.rerun_undecided {
            return self.run_with(scales, &self.doubled());
        }
        Ok(sample)
    }

    /// Bisects `theta` on `s(theta) = 1 - theta (1 - end)` down to `tolerance`
    /// in magnitude. Anything not transferring counts as the upper side.
    pub fn bisect_ray(&self, end: &[f64], tolerance: f64) -> Result<RayResult, PerturbationError> {
        let at = |theta: f64| -> Vec<f64> { end.iter().map(|&s| 1.0 - theta * (1.0 - s)).collect() };
        let full = make_scaling_perturbation(self.base, end)?.magnitude();
        let mut samples = Vec::new();
        let last = self.run_sample(end)?;
        let breaks = last.classification != Classification::Transferring;
        samples.push(last);
        if !breaks || full == 0.0 {
            return Ok(RayResult {
                end: end.to_vec(),
                transferring: full,
                non_transferring: None,
                samples,
            });
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while (hi - lo) * full > tolerance {
            let mid = 0.5 * (lo + hi);
            let sample = self.run_sample(&at(mid))?;
            if sample.classification == Classification::Transferring {
                lo = mid;
            } else {
                hi = mid;
            }
            samples.push(sample);
        }
        Ok(RayResult {
            end: end.to_vec(),
            transferring: lo * full,
            non_transferring: Some(hi * full),
            samples,
        })
    }
}

/// A sweep resolved against a concrete network: grid, rays and references.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSweep {
    pub spec: SweepSpec,
    pub plan: SweepPlan,
    pub rays: Vec<Vec<f64>>,
    pub references: References,
}

impl ResolvedSweep {
    pub fn new(
        topology: &Topology,
        base: &[FlowFunction],
        rho0: &[f64],
        lambda0: f64,
        spec: &SweepSpec,
    ) -> Result<Self, PerturbationError> {
        let m = topology.link_count();
        let plan = spec.plan(m)?;
        for ray in &spec.rays {
            make_scaling_perturbation(base, ray)?;
        }
        let f_max = f_max_of(base);
        let equilibrium = EquilibriumFlow::from_densities(topology, base, rho0, lambda0)?;
        let mut rays = spec.rays.clone();
        let references = if topology.is_tree_like() {
            let report = bounds_report(topology, &f_max, &equilibrium)?;
            let values = report.d.as_ref().expect("tree-like report has d values");
            if spec.critical_ray {
                if let Some(end) = critical_ray(topology, base, &critical_profile(topology, values)) {
                    rays.push(end);
                }
            }
            References {
                r: report.r,
                d0: report.d0(),
                c_minus_lambda0: report.c_minus_lambda0(),
            }
        } else {
            let report = static_report(topology, &f_max, &equilibrium);
            References {
                r: report.r,
                d0: None,
                c_minus_lambda0: report.c_minus_lambda0(),
            }
        };
        Ok(Self {
            spec: spec.clone(),
            plan,
            rays,
            references,
        })
    }

    pub fn context<'a>(
        &self,
        topology: &'a Topology,
        base: &'a [FlowFunction],
        policy: &'a RoutingPolicy,
        rho0: &'a [f64],
        lambda0: f64,
    ) -> SweepContext<'a> {
        SweepContext {
            topology,
            base,
            policy,
            rho0,
            lambda0,
            options: self.spec.options,
            rerun_undecided: self.spec.rerun_undecided,
        }
    }

    pub fn grid_scales(&self) -> Vec<Vec<f64>> {
        self.plan
            .points
            .iter()
            .map(|index| self.spec.scales_of(index))
            .collect()
    }

    /// Merges per-sample results (in plan order) and ray results. Grid
    /// neighbours that violate monotonicity along decreasing scales are
    /// re-run at twice the horizon; surviving violations are counted.
    pub fn finish(
        &self,
        context: &SweepContext<'_>,
        mut samples: Vec<SweepSample>,
        rays: Vec<RayResult>,
    ) -> Result<SweepResult, PerturbationError> {
        if samples.len() != self.plan.points.len() {
            return Err(PerturbationError::DimensionMismatch {
                expected: self.plan.points.len(),
                got: samples.len(),
            });
        }
        let by_index: BTreeMap<&[usize], usize> = self
            .plan
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_slice(), i))
            .collect();
        let mut suspects = BTreeSet::new();
        for (i, point) in self.plan.points.iter().enumerate() {
            if samples[i].classification == Classification::Transferring {
                continue;
            }
            // Further scaling decreases scales, i.e. increases grid indices
            // when the grid is ordered decreasingly.
            for link in 0..point.len() {
                let mut next = point.clone();
                next[link] += 1;
                if next[link] >= self.spec.grid.len() {
                    continue;
                }
                if self.spec.grid[next[link]] >= self.spec.grid[point[link]] {
                    continue;
                }
                if let Some(&j) = by_index.get(next.as_slice()) {
                    if samples[j].classification == Classification::Transferring {
                        suspects.insert(i);
                        suspects.insert(j);
                    }
                }
            }
        }
        let doubled = context.doubled();
        for &i in &suspects {
            if samples[i].horizon < doubled.horizon {
                samples[i] = context.run_with(&samples[i].scales.clone(), &doubled)?;
            }
        }
        let mut monotonicity_violations = 0;
        for &i in &suspects {
            if samples[i].classification == Classification::Transferring {
                continue;
            }
            let point = &self.plan.points[i];
            for link in 0..point.len() {
                let mut next = point.clone();
                next[link] += 1;
                if next[link] >= self.spec.grid.len()
                    || self.spec.grid[next[link]] >= self.spec.grid[point[link]]
                {
                    continue;
                }
                if let Some(&j) = by_index.get(next.as_slice()) {
                    if samples[j].classification == Classification::Transferring {
                        monotonicity_violations += 1;
                    }
                }
            }
        }

        samples.sort_by(compare_samples);
        let all = samples.iter().chain(rays.iter().flat_map(|r| r.samples.iter()));
        let mut max_transferring: Option<f64> = None;
        let mut min_non_transferring: Option<f64> = None;
        let mut undecided = 0;
        let mut below_r_violations = 0;
        for sample in all {
            match sample.classification {
                Classification::Transferring => {
                    max_transferring = Some(max_transferring.map_or(sample.magnitude, |m| m.max(sample.magnitude)));
                }
                class => {
                    if class == Classification::Undecided {
                        undecided += 1;
                    }
                    min_non_transferring =
                        Some(min_non_transferring.map_or(sample.magnitude, |m| m.min(sample.magnitude)));
                    if sample.magnitude < self.references.r - 1e-6 {
                        below_r_violations += 1;
                    }
                }
            }
        }
        Ok(SweepResult {
            grid: self.spec.grid.clone(),
            total_combinations: self.plan.total_combinations,
            subsampled: self.plan.subsampled,
            samples,
            rays,
            max_transferring,
            min_non_transferring,
            references: self.references,
            below_r_violations,
            monotonicity_violations,
            undecided,
        })
    }
}

fn compare_samples(a: &SweepSample, b: &SweepSample) -> Ordering {
    a.magnitude
        .total_cmp(&b.magnitude)
        .then_with(|| {
            a.scales
                .iter()
                .zip(&b.scales)
                .map(|(x, y)| y.total_cmp(x))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// End point of the ray through a reduction profile, extended to one and a
/// half times the profile (or just short of a zero scale).
pub fn critical_ray(topology: &Topology, base: &[FlowFunction], reduction: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(reduction.len(), topology.link_count());
    let limit = reduction
        .iter()
        .zip(base)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, mu)| mu.f_max() / x)
        .fold(f64::INFINITY, f64::min);
    if !limit.is_finite() {
        return None;
    }
    let theta = 1.5f64.min(0.99 * limit);
    Some(
        reduction
            .iter()
            .zip(base)
            .map(|(x, mu)| 1.0 - theta * x / mu.f_max())
            .collect(),
    )
}

/// Runs a full sweep sequentially.
pub fn empirical_margin_sweep(
    topology: &Topology,
    base: &[FlowFunction],
    policy: &RoutingPolicy,
    rho0: &[f64],
    lambda0: f64,
    spec: &SweepSpec,
) -> Result<SweepResult, PerturbationError> {
    let resolved = ResolvedSweep::new(topology, base, rho0, lambda0, spec)?;
    let context = resolved.context(topology, base, policy, rho0, lambda0);
    let samples = resolved
        .grid_scales()
        .iter()
        .map(|s| context.run_sample(s))
        .collect::<Result<Vec<_>, _>>()?;
    let rays = resolved
        .rays
        .iter()
        .map(|end| context.bisect_ray(end, spec.ray_tolerance))
        .collect::<Result<Vec<_>, _>>()?;
    resolved.finish(&context, samples, rays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::LinkSpec;

    fn figure1_laws() -> Vec<FlowFunction> {
        [3.0, 1.5, 0.75, 0.75]
            .iter()
            .map(|&c| FlowFunction::linear(c, 1.0).unwrap())
            .collect()
    }

    #[test]
    fn figure1_scaling() {
        let p = make_scaling_perturbation(&figure1_laws(), &[1.0, 1.0, 0.6, 0.6]).unwrap();
        assert!((p.magnitude() - 0.6).abs() < 1e-15);
        let caps = p.f_max_perturbed();
        assert!((caps[2] - 0.45).abs() < 1e-15 && (caps[3] - 0.45).abs() < 1e-15);
        assert!(caps[2] + caps[3] < 1.0);
        assert_eq!(
            make_scaling_perturbation(&figure1_laws(), &[1.0; 4]).unwrap().magnitude(),
            0.0
        );
        let single = [FlowFunction::linear(4.0, 1.0).unwrap()];
        assert_eq!(make_scaling_perturbation(&single, &[0.5]).unwrap().magnitude(), 2.0);
        assert!(matches!(
            make_scaling_perturbation(&single, &[0.0]),
            Err(PerturbationError::ScaleOutOfRange { .. })
        ));
        assert!(make_scaling_perturbation(&single, &[1.2]).is_err());
    }

    #[test]
    fn clipped_magnitude() {
        let base = [FlowFunction::rational_exponential(1.0, 1.0, 1.0).unwrap()];
        let p = make_clipped_perturbation(&base, &[0.2]).unwrap();
        assert_eq!(p.magnitude(), 0.2);
        let estimate = perturbation_magnitude(&base, &p.flows, 10_000).unwrap();
        assert!((estimate.value - 0.2).abs() < 1e-12);
        assert!(estimate.error_bound < 1e-3);
        assert!(make_clipped_perturbation(&base, &[1.0]).is_err());
    }

    #[test]
    fn identity_magnitude_is_zero() {
        let base = figure1_laws();
        let estimate = perturbation_magnitude(&base, &base, 1000).unwrap();
        assert_eq!(estimate.value, 0.0);
    }

    #[test]
    fn magnitude_rejects_larger_law() {
        let small = [FlowFunction::linear(1.0, 1.0).unwrap()];
        let big = [FlowFunction::linear(2.0, 1.0).unwrap()];
        assert!(matches!(
            perturbation_magnitude(&small, &big, 100),
            Err(PerturbationError::NotAdmissible { .. })
        ));
    }

    #[test]
    fn plan_enumerates_and_subsamples() {
        let spec = SweepSpec::default();
        let plan = spec.plan(2).unwrap();
        assert_eq!(plan.points.len(), 100);
        assert!(!plan.subsampled);
        assert_eq!(spec.scales_of(&plan.points[1]), vec![1.0, 0.9]);

        let capped = SweepSpec {
            max_combinations: 50,
            ..SweepSpec::default()
        };
        let a = capped.plan(3).unwrap();
        assert!(a.subsampled);
        assert_eq!(a.points.len(), 50);
        assert_eq!(a, capped.plan(3).unwrap());
        let strict = SweepSpec {
            subsample: false,
            ..capped
        };
        assert!(matches!(
            strict.plan(3),
            Err(PerturbationError::BudgetExceeded { combinations: 1000, cap: 50 })
        ));
    }

    #[test]
    fn sphere_samples_have_exact_magnitude() {
        let base = figure1_laws();
        let scales = sample_magnitude_sphere(&base, 0.6, 25, 7).unwrap();
        assert_eq!(scales.len(), 25);
        for s in &scales {
            let m = make_scaling_perturbation(&base, s).unwrap().magnitude();
            assert!((m - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn single_link_ray_threshold() {
        let t = Topology::new(2, vec![LinkSpec::new("e", 0, 1, 1.0)]).unwrap();
        let base = [FlowFunction::linear(5.0, 1.0).unwrap()];
        let policy = RoutingPolicy::uniform(&t, 1.0).unwrap();
        let rho0 = [0.4];
        let spec = SweepSpec {
            grid: vec![1.0, 0.5, 0.2],
            rays: vec![vec![0.01]],
            ..SweepSpec::default()
        };
        let result = empirical_margin_sweep(&t, &base, &policy, &rho0, 2.0, &spec).unwrap();
        for ray in &result.rays {
            assert!((ray.threshold().unwrap() - 3.0).abs() < 0.01, "{:?}", ray.threshold());
        }
        assert_eq!(result.references.d0, Some(3.0));
        assert_eq!(result.below_r_violations, 0);
        assert_eq!(result.samples.len(), 3);
        assert_eq!(result.samples[0].classification, Classification::Transferring);
        assert_eq!(result.samples[2].classification, Classification::NotTransferring);
    }
}
