//! The four subcommands. Each returns the text for standard output and the
//! exit code; files go to the output directory.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use flownet_core::dynamics::SampleMode;
use flownet_core::perturbation::{make_scaling_perturbation, simulate_perturbed};
use flownet_core::routing::AxiomCheckOptions;
use flownet_core::{Classification, Perturbation, SimOptions, SweepSpec};
use serde_json::{json, Value};

use crate::error::{CliError, ANALYSIS_FAILURE, INTERNAL_ERROR};
use crate::format::{num, sig};
use crate::report::{self, table, Analysis};
use crate::spec::{self, parse_assignment, Network};
use crate::{output, sweep};

/// Global flags.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub seed: u64,
    pub out: PathBuf,
    pub horizon: Option<f64>,
    /// Relative tolerance of the transferring decision.
    pub tol: Option<f64>,
    /// `link=s` scaling assignments.
    pub scales: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub exit: i32,
}

impl Settings {
    fn options(&self, base: SimOptions) -> Result<SimOptions, CliError> {
        let mut options = base;
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(CliError::Input(format!("--horizon must be positive, got {h}")));
            }
            options.horizon = h;
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol < 0.5) {
                return Err(CliError::Input(format!("--tol must be in (0, 0.5), got {tol}")));
            }
            options.rel_tol = tol;
        }
        Ok(options)
    }

    fn no_scales(&self, command: &str) -> Result<(), CliError> {
        if self.scales.is_empty() {
            Ok(())
        } else {
            Err(CliError::Input(format!("--scale does not apply to `{command}`")))
        }
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf, CliError> {
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub fn analyze(spec_path: &Path, settings: &Settings) -> Result<Outcome, CliError> {
    settings.no_scales("analyze")?;
    let network = Network::load(spec_path)?;
    let analysis = Analysis::run(&network)?;
    let path = write_json(&settings.out, "report.json", &analysis.to_json(&network))?;
    let mut stdout = analysis.to_table(&network);
    stdout.push_str(&format!("report: {}\n", path.display()));
    Ok(Outcome { stdout, exit: 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Equilibrium,
    File(PathBuf),
}

impl std::str::FromStr for Init {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "equilibrium" {
            Self::Equilibrium
        } else {
            Self::File(PathBuf::from(s))
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub init: Init,
    pub perturbation: Option<PathBuf>,
    pub sample_mode: SampleMode,
    pub rtol: Option<f64>,
}

fn scaling_from_flags(network: &Network, settings: &Settings) -> Result<Option<Perturbation>, CliError> {
    if settings.scales.is_empty() {
        return Ok(None);
    }
    let pairs = settings
        .scales
        .iter()
        .map(|a| parse_assignment(a))
        .collect::<Result<Vec<_>, _>>()?;
    let scales = network.per_link(&pairs, 1.0, "--scale")?;
    Ok(Some(make_scaling_perturbation(&network.laws, &scales)?))
}

pub fn simulate(spec_path: &Path, settings: &Settings, args: &SimulateArgs) -> Result<Outcome, CliError> {
    let network = Network::load(spec_path)?;
    let mut options = settings.options(SimOptions {
        sample_mode: args.sample_mode,
        ..SimOptions::default()
    })?;
    if let Some(rtol) = args.rtol {
        options.rtol = rtol;
    }
    let perturbation = match (scaling_from_flags(&network, settings)?, &args.perturbation) {
        (Some(_), Some(_)) => {
            return Err(CliError::Input("give either --scale or --perturbation, not both".into()))
        }
        (Some(p), None) => p,
        (None, Some(path)) => spec::load_perturbation(path, &network)?,
        (None, None) => Perturbation::none(&network.laws),
    };
    let rho0 = match &args.init {
        Init::Equilibrium => report::equilibrium(&network)?.0,
        Init::File(path) => spec::load_initial_state(path, &network)?,
    };
    let (traj, class) = simulate_perturbed(
        &network.topology,
        &perturbation,
        &network.policy,
        &rho0,
        network.lambda0,
        &options,
    )?;
    let path = write_file(&settings.out, "trajectory.csv", |w| {
        output::write_trajectory(w, &network, &traj)
    })?;

    let names = network.link_names();
    let final_state = &traj.final_sample().state;
    let failed: Vec<String> = final_state.chi[..network.topology.node_count() - 1]
        .iter()
        .enumerate()
        .filter(|(_, &c)| !c)
        .map(|(v, _)| v.to_string())
        .collect();
    let mass = traj.mass_balance_residual().into_iter().fold(0.0, f64::max);
    let mut rows = vec![
        vec!["classification".to_string(), class.to_string()],
        vec!["lambda0".into(), sig(network.lambda0)],
        vec!["perturbation magnitude".into(), sig(perturbation.magnitude())],
        vec!["horizon".into(), sig(traj.horizon())],
        vec![
            "final window average".into(),
            sig(traj.window_average(options.window())?),
        ],
        vec!["time average".into(), sig(traj.time_average())],
        vec![
            "failed nodes".into(),
            if failed.is_empty() { "none".into() } else { failed.join(" ") },
        ],
        vec!["max mass residual".into(), sig(mass)],
        vec![
            "steps".into(),
            format!("{} accepted, {} rejected", traj.accepted_steps, traj.rejected_steps),
        ],
    ];
    for ev in &traj.events {
        rows.push(vec!["event".into(), format!("t={} link={} saturated", sig(ev.t), names[ev.link.0])]);
    }
    rows.push(vec!["trajectory".into(), path.display().to_string()]);
    let mut stdout = table(&rows);
    let exit = if class == Classification::Undecided {
        stdout.push_str("warning: undecided at this horizon; try a longer --horizon\n");
        ANALYSIS_FAILURE
    } else {
        0
    };
    Ok(Outcome { stdout, exit })
}

#[derive(Debug, Clone, Default)]
pub struct MarginArgs {
    pub sweep: Option<PathBuf>,
    pub grid: Option<Vec<f64>>,
    /// Each ray is a comma-separated list of `link=s` end scales.
    pub rays: Vec<String>,
    pub max_combinations: Option<usize>,
    pub no_subsample: bool,
    pub no_critical_ray: bool,
    pub ray_tolerance: Option<f64>,
    pub threads: Option<usize>,
}

pub fn margin(spec_path: &Path, settings: &Settings, args: &MarginArgs) -> Result<Outcome, CliError> {
    settings.no_scales("margin")?;
    let network = Network::load(spec_path)?;
    let mut spec = SweepSpec {
        seed: settings.seed,
        ..SweepSpec::default()
    };
    spec.options = settings.options(spec.options)?;
    if let Some(path) = &args.sweep {
        spec::load_sweep(path)?.apply(&network, &mut spec)?;
    }
    if let Some(grid) = &args.grid {
        spec.grid = grid.clone();
    }
    if let Some(n) = args.max_combinations {
        spec.max_combinations = n;
    }
    if args.no_subsample {
        spec.subsample = false;
    }
    if args.no_critical_ray {
        spec.critical_ray = false;
    }
    if let Some(t) = args.ray_tolerance {
        spec.ray_tolerance = t;
    }
    for ray in &args.rays {
        let pairs = ray
            .split(',')
            .map(parse_assignment)
            .collect::<Result<Vec<_>, _>>()?;
        spec.rays.push(network.per_link(&pairs, 1.0, "--ray")?);
    }
    let (rho0, _) = report::equilibrium(&network)?;

    let result = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("--threads: {e}")))?
            .install(|| sweep::run(&network, &rho0, &spec)),
        None => sweep::run(&network, &rho0, &spec),
    }?;

    let json_path = write_json(&settings.out, "sweep.json", &sweep::to_json(&network, &spec, &result))?;
    let csv_path = write_file(&settings.out, "sweep.csv", |w| output::write_sweep(w, &network, &result))?;

    let or_none = |x: Option<f64>| x.map_or_else(|| "none".to_string(), sig);
    let names = network.link_names();
    let mut rows = vec![
        vec!["grid combinations".to_string(), result.total_combinations.to_string()],
        vec![
            "grid runs".into(),
            format!(
                "{}{}",
                result.samples.len(),
                if result.subsampled { " (seeded subsample)" } else { "" }
            ),
        ],
        vec!["max transferring magnitude".into(), or_none(result.max_transferring)],
        vec!["min non-transferring magnitude".into(), or_none(result.min_non_transferring)],
    ];
    for ray in &result.rays {
        let end: Vec<String> = names
            .iter()
            .zip(&ray.end)
            .filter(|(_, &s)| s != 1.0)
            .map(|(n, &s)| format!("{n}={}", sig(s)))
            .collect();
        let what = match ray.threshold() {
            Some(t) => format!(
                "threshold {} in [{}, {}]",
                sig(t),
                sig(ray.transferring),
                sig(ray.non_transferring.unwrap_or(t))
            ),
            None => format!("transferring up to magnitude {}", sig(ray.transferring)),
        };
        rows.push(vec![format!("ray {}", end.join(",")), what]);
    }
    rows.push(vec!["undecided runs".into(), result.undecided.to_string()]);
    rows.push(vec!["monotonicity violations".into(), result.monotonicity_violations.to_string()]);
    rows.push(vec!["below-R violations".into(), result.below_r_violations.to_string()]);
    rows.push(vec!["results".into(), format!("{} {}", json_path.display(), csv_path.display())]);
    let mut stdout = String::from("empirical bracket (no tightness claim)\n");
    stdout.push_str(&table(&rows));
    let refs = &result.references;
    stdout.push_str(&format!(
        "R={} d0={} C-l0={}\n",
        sig(refs.r),
        refs.d0.map_or_else(|| "n/a".to_string(), sig),
        sig(refs.c_minus_lambda0)
    ));
    let exit = if result.below_r_violations > 0 {
        stdout.push_str("error: a perturbation below R broke the transferring property\n");
        INTERNAL_ERROR
    } else {
        0
    };
    Ok(Outcome { stdout, exit })
}

pub fn check(spec_path: &Path, settings: &Settings, samples: usize) -> Result<Outcome, CliError> {
    settings.no_scales("check")?;
    if samples == 0 {
        return Err(CliError::Input("--samples must be at least 1".into()));
    }
    let network = Network::load(spec_path)?;
    let t = &network.topology;
    let names = network.link_names();
    let f_max: Vec<f64> = network.laws.iter().map(flownet_core::FlowLaw::f_max).collect();
    let cut = t.min_cut(&f_max);
    let layers: Vec<String> = t
        .layers()
        .iter()
        .enumerate()
        .map(|(j, layer)| {
            let nodes: Vec<String> = layer.iter().map(|v| v.0.to_string()).collect();
            format!("V{j}={{{}}}", nodes.join(","))
        })
        .collect();
    let mut rows = vec![
        vec!["nodes".to_string(), t.node_count().to_string()],
        vec!["links".into(), t.link_count().to_string()],
        vec!["layers".into(), layers.join(" ")],
        vec!["j*".into(), t.j_star().to_string()],
        vec!["tree-like".into(), t.is_tree_like().to_string()],
        vec!["min cut C".into(), sig(cut.capacity)],
    ];
    let mut nodes = Vec::new();
    let mut pass = true;
    for v in t.routing_nodes() {
        let options = AxiomCheckOptions {
            samples,
            seed: settings.seed.wrapping_add(v.0 as u64),
            ..AxiomCheckOptions::default()
        };
        let r = network.policy.check_axioms(t, v, options)?;
        pass &= r.pass;
        let links: Vec<&str> = t.out_links(v).iter().map(|e| names[e.0]).collect();
        rows.push(vec![
            format!("node {}", v.0),
            format!(
                "{} [{}] simplex {} limit {} cooperativity {}",
                if r.pass { "pass" } else { "FAIL" },
                links.join(" "),
                r.simplex_violations.len(),
                r.limit_violations.len(),
                r.cooperativity_violations.len()
            ),
        ]);
        let worst = |v: &[flownet_core::routing::Violation]| num(v.iter().map(|x| x.magnitude).fold(0.0, f64::max));
        nodes.push(json!({
            "node": v.0,
            "links": links,
            "samples": r.samples,
            "simplex_violations": r.simplex_violations.len(),
            "limit_violations": r.limit_violations.len(),
            "cooperativity_violations": r.cooperativity_violations.len(),
            "worst": {
                "simplex": worst(&r.simplex_violations),
                "limit": worst(&r.limit_violations),
                "cooperativity": worst(&r.cooperativity_violations),
            },
            "pass": r.pass,
        }));
    }
    let json = json!({
        "network": network.name,
        "valid": true,
        "nodes": t.node_count(),
        "links": t.link_count(),
        "j_star": t.j_star(),
        "tree_like": t.is_tree_like(),
        "C": num(cut.capacity),
        "seed": settings.seed,
        "axioms": nodes,
        "pass": pass,
    });
    let path = write_json(&settings.out, "check.json", &json)?;
    rows.push(vec!["axioms".into(), if pass { "pass" } else { "FAIL" }.into()]);
    rows.push(vec!["report".into(), path.display().to_string()]);
    Ok(Outcome {
        stdout: table(&rows),
        exit: if pass { 0 } else { ANALYSIS_FAILURE },
    })
}
