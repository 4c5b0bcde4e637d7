//! Parallel scale-space sweep.

use flownet_core::perturbation::{RayResult, ResolvedSweep};
use flownet_core::{PerturbationError, SweepResult, SweepSpec};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::format::{num, opt};
use crate::output::all_samples;
use crate::spec::Network;

/// Runs grid samples and ray bisections on the rayon pool. Results do not
/// depend on scheduling: samples are collected in plan order.
pub fn run(network: &Network, rho0: &[f64], spec: &SweepSpec) -> Result<SweepResult, PerturbationError> {
    let resolved = ResolvedSweep::new(&network.topology, &network.laws, rho0, network.lambda0, spec)?;
    let context = resolved.context(&network.topology, &network.laws, &network.policy, rho0, network.lambda0);
    let samples = resolved
        .grid_scales()
        .par_iter()
        .map(|s| context.run_sample(s))
        .collect::<Result<Vec<_>, _>>()?;
    let rays = resolved
        .rays
        .par_iter()
        .map(|end| context.bisect_ray(end, spec.ray_tolerance))
        .collect::<Result<Vec<RayResult>, _>>()?;
    resolved.finish(&context, samples, rays)
}

fn scales_object(network: &Network, scales: &[f64]) -> Value {
    Value::Object(
        network
            .link_names()
            .iter()
            .zip(scales)
            .map(|(n, &s)| (n.to_string(), num(s)))
            .collect::<Map<_, _>>(),
    )
}

pub fn to_json(network: &Network, spec: &SweepSpec, result: &SweepResult) -> Value {
    let samples: Vec<Value> = all_samples(result)
        .into_iter()
        .map(|s| {
            json!({
                "magnitude": num(s.magnitude),
                "scales": scales_object(network, &s.scales),
                "classification": s.classification.to_string(),
                "events": s.events,
                "final_average": num(s.final_average),
                "horizon": num(s.horizon),
            })
        })
        .collect();
    let rays: Vec<Value> = result
        .rays
        .iter()
        .map(|r| {
            json!({
                "end": scales_object(network, &r.end),
                "transferring": num(r.transferring),
                "non_transferring": opt(r.non_transferring),
                "threshold": opt(r.threshold()),
                "runs": r.samples.len(),
            })
        })
        .collect();
    json!({
        "network": network.name,
        "grid": result.grid.iter().map(|&g| num(g)).collect::<Vec<_>>(),
        "seed": spec.seed,
        "horizon": num(spec.options.horizon),
        "total_combinations": result.total_combinations,
        "subsampled": result.subsampled,
        "bracket": {
            "empirical": true,
            "max_transferring": opt(result.max_transferring),
            "min_non_transferring": opt(result.min_non_transferring),
        },
        "references": {
            "R": num(result.references.r),
            "d0": opt(result.references.d0),
            "C_minus_lambda0": num(result.references.c_minus_lambda0),
        },
        "below_R_violations": result.below_r_violations,
        "monotonicity_violations": result.monotonicity_violations,
        "undecided": result.undecided,
        "rays": rays,
        "samples": samples,
    })
}
