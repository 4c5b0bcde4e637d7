//! Network, perturbation, initial-state and sweep files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use flownet_core::perturbation::{make_clipped_perturbation, make_scaling_perturbation};
use flownet_core::{
    FlowFunction, LinkId, LinkSpec, Perturbation, RoutingPolicy, SweepSpec, Topology,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// A spec file problem, located by line and/or field where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecParseError {
    pub source: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for SpecParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(column) = self.column {
                write!(f, ":{column}")?;
            }
        }
        if let Some(field) = &self.field {
            write!(f, ": field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for SpecParseError {}

/// Source text plus its name, for locating diagnostics.
struct Source<'a> {
    name: &'a str,
    text: &'a str,
}

impl Source<'_> {
    fn error(&self, field: impl Into<String>, message: impl Into<String>, needle: Option<&str>) -> SpecParseError {
        let line = needle.and_then(|n| {
            self.text
                .lines()
                .position(|l| l.contains(n))
                .map(|i| i + 1)
        });
        SpecParseError {
            source: self.name.to_string(),
            line,
            column: None,
            field: Some(field.into()),
            message: message.into(),
        }
    }

    fn parse<T: DeserializeOwned>(&self) -> Result<T, SpecParseError> {
        serde_json::from_str(self.text).map_err(|e| SpecParseError {
            source: self.name.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
            field: None,
            message: strip_position(&e.to_string()),
        })
    }
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

fn read(path: &Path) -> Result<String, SpecParseError> {
    std::fs::read_to_string(path).map_err(|e| SpecParseError {
        source: path.display().to_string(),
        line: None,
        column: None,
        field: None,
        message: format!("cannot read file: {e}"),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    nodes: usize,
    lambda0: f64,
    links: Vec<RawLink>,
    #[serde(default)]
    routing: Option<RawRouting>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    id: String,
    from: usize,
    to: usize,
    rho_max: f64,
    flow: RawFlow,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    shape: String,
    f_max: f64,
    #[serde(default)]
    alpha: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRouting {
    #[serde(default)]
    family: Option<String>,
    #[serde(default)]
    eta: Option<f64>,
    #[serde(default)]
    weights: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    calibrate_to: Option<BTreeMap<String, f64>>,
}

/// A validated network specification.
#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub topology: Topology,
    pub laws: Vec<FlowFunction>,
    pub policy: RoutingPolicy,
    pub lambda0: f64,
    /// Calibration target `f°`, when the routing section asks for one.
    pub target: Option<Vec<f64>>,
}

/// Variant name of an error, e.g. `CycleDetected`.
fn variant<E: fmt::Debug>(e: &E) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or_default()
        .to_string()
}

impl Network {
    pub fn load(path: &Path) -> Result<Self, SpecParseError> {
        let text = read(path)?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, SpecParseError> {
        let src = Source { name, text };
        let raw: RawNetwork = src.parse()?;
        if !(raw.lambda0 >= 0.0 && raw.lambda0.is_finite()) {
            return Err(src.error("lambda0", "must be a nonnegative number", Some("\"lambda0\"")));
        }
        let mut specs = Vec::with_capacity(raw.links.len());
        let mut laws = Vec::with_capacity(raw.links.len());
        for (i, l) in raw.links.iter().enumerate() {
            let needle = format!("\"{}\"", l.id);
            let at = |field: &str, message: String| {
                src.error(format!("links[{i}].{field}"), message, Some(&needle))
            };
            if !(l.rho_max > 0.0 && l.rho_max.is_finite()) {
                return Err(at("rho_max", format!("must be positive, got {}", l.rho_max)));
            }
            if !(l.flow.f_max > 0.0 && l.flow.f_max.is_finite()) {
                return Err(at("flow.f_max", format!("must be positive, got {}", l.flow.f_max)));
            }
            let law = match l.flow.shape.as_str() {
                "linear" => {
                    if l.flow.alpha.is_some() {
                        return Err(at("flow.alpha", "only applies to the rational-exponential shape".into()));
                    }
                    FlowFunction::linear(l.flow.f_max, l.rho_max)
                }
                "rational-exponential" => {
                    let alpha = l.flow.alpha.unwrap_or(1.0);
                    if !(alpha > 0.0 && alpha.is_finite()) {
                        return Err(at("flow.alpha", format!("must be positive, got {alpha}")));
                    }
                    FlowFunction::rational_exponential(l.flow.f_max, l.rho_max, alpha)
                }
                other => {
                    return Err(at(
                        "flow.shape",
                        format!("unknown shape `{other}` (expected `linear` or `rational-exponential`)"),
                    ))
                }
            }
            .map_err(|e| at("flow", e.to_string()))?;
            laws.push(law);
            specs.push(LinkSpec::new(l.id.clone(), l.from, l.to, l.rho_max));
        }
        let topology = Topology::new(raw.nodes, specs).map_err(|e| {
            let needle = match &e {
                flownet_core::TopologyError::DanglingLink { link, .. }
                | flownet_core::TopologyError::DuplicateLink(link)
                | flownet_core::TopologyError::InvalidDensityCapacity { link, .. } => Some(format!("\"{link}\"")),
                _ => None,
            };
            src.error("links", format!("{}: {e}", variant(&e)), needle.as_deref())
        })?;

        let routing = raw.routing.unwrap_or(RawRouting {
            family: None,
            eta: None,
            weights: None,
            calibrate_to: None,
        });
        let routing_error = |field: &str, message: String| {
            src.error(format!("routing.{field}"), message, Some("\"routing\""))
        };
        if let Some(family) = &routing.family {
            if family != "exp-residual" {
                return Err(routing_error(
                    "family",
                    format!("unknown family `{family}` (expected `exp-residual`)"),
                ));
            }
        }
        let eta = routing.eta.unwrap_or(1.0);
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(routing_error("eta", format!("must be positive, got {eta}")));
        }
        let per_link = |map: &BTreeMap<String, f64>, field: &str| -> Result<Vec<f64>, SpecParseError> {
            for key in map.keys() {
                if topology.link_by_name(key).is_none() {
                    return Err(routing_error(field, format!("unknown link `{key}`")));
                }
            }
            topology
                .links()
                .iter()
                .map(|l| {
                    map.get(&l.name)
                        .copied()
                        .ok_or_else(|| routing_error(field, format!("missing link `{}`", l.name)))
                })
                .collect()
        };
        let (policy, target) = match (&routing.weights, &routing.calibrate_to) {
            (Some(_), Some(_)) => {
                return Err(routing_error(
                    "weights",
                    "give either `weights` or `calibrate_to`, not both".into(),
                ))
            }
            (Some(w), None) => {
                let weights = per_link(w, "weights")?;
                if let Some((l, w)) = topology
                    .links()
                    .iter()
                    .zip(&weights)
                    .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
                {
                    return Err(routing_error(
                        &format!("weights.{}", l.name),
                        format!("weights must be positive, got {w}"),
                    ));
                }
                let policy = RoutingPolicy::new(&topology, eta, weights)
                    .map_err(|e| routing_error("weights", e.to_string()))?;
                (policy, None)
            }
            (None, Some(t)) => {
                let target = per_link(t, "calibrate_to")?;
                let policy = RoutingPolicy::calibrate(&topology, &laws, &target, raw.lambda0, eta)
                    .map_err(|e| routing_error("calibrate_to", format!("{}: {e}", variant(&e))))?;
                (policy, Some(target))
            }
            (None, None) => (
                RoutingPolicy::uniform(&topology, eta).map_err(|e| routing_error("eta", e.to_string()))?,
                None,
            ),
        };
        Ok(Self {
            name: name.to_string(),
            topology,
            laws,
            policy,
            lambda0: raw.lambda0,
            target,
        })
    }

    pub fn link_names(&self) -> Vec<&str> {
        self.topology.links().iter().map(|l| l.name.as_str()).collect()
    }

    fn link(&self, name: &str, field: &str) -> Result<LinkId, SpecParseError> {
        self.topology.link_by_name(name).ok_or_else(|| SpecParseError {
            source: self.name.clone(),
            line: None,
            column: None,
            field: Some(field.to_string()),
            message: format!("unknown link `{name}`"),
        })
    }

    /// Per-link values from `(link name, value)` pairs; unnamed links get
    /// `default`.
    pub fn per_link(&self, pairs: &[(String, f64)], default: f64, field: &str) -> Result<Vec<f64>, SpecParseError> {
        let mut out = vec![default; self.topology.link_count()];
        for (name, value) in pairs {
            out[self.link(name, field)?.0] = *value;
        }
        Ok(out)
    }
}

/// Parses `link=value`.
pub fn parse_assignment(arg: &str) -> Result<(String, f64), SpecParseError> {
    let bad = |message: String| SpecParseError {
        source: "command line".into(),
        line: None,
        column: None,
        field: None,
        message,
    };
    let (name, value) = arg
        .split_once('=')
        .ok_or_else(|| bad(format!("expected <link>=<value>, got `{arg}`")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| bad(format!("`{value}` is not a number in `{arg}`")))?;
    Ok((name.trim().to_string(), value))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    #[serde(default)]
    scales: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    clip: Option<BTreeMap<String, f64>>,
}

/// Perturbation file: `{"scales": {link: s}}` or `{"clip": {link: c}}`.
/// Links not listed are left unperturbed.
pub fn load_perturbation(path: &Path, network: &Network) -> Result<Perturbation, SpecParseError> {
    let text = read(path)?;
    let name = path.display().to_string();
    let src = Source { name: &name, text: &text };
    let raw: RawPerturbation = src.parse()?;
    let pairs = |m: &BTreeMap<String, f64>| m.iter().map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>();
    let relocate = |mut e: SpecParseError| {
        e.source = name.clone();
        e
    };
    match (&raw.scales, &raw.clip) {
        (Some(s), None) => {
            let scales = network.per_link(&pairs(s), 1.0, "scales").map_err(relocate)?;
            make_scaling_perturbation(&network.laws, &scales)
                .map_err(|e| src.error("scales", e.to_string(), None))
        }
        (None, Some(c)) => {
            let clips = network.per_link(&pairs(c), 0.0, "clip").map_err(relocate)?;
            make_clipped_perturbation(&network.laws, &clips)
                .map_err(|e| src.error("clip", e.to_string(), None))
        }
        _ => Err(src.error("scales", "give exactly one of `scales` or `clip`", None)),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    rho: BTreeMap<String, f64>,
}

/// Initial state file: `{"rho": {link: density}}` covering every link.
pub fn load_initial_state(path: &Path, network: &Network) -> Result<Vec<f64>, SpecParseError> {
    let text = read(path)?;
    let name = path.display().to_string();
    let src = Source { name: &name, text: &text };
    let raw: RawInit = src.parse()?;
    let mut rho = Vec::with_capacity(network.topology.link_count());
    for key in raw.rho.keys() {
        if network.topology.link_by_name(key).is_none() {
            return Err(src.error(format!("rho.{key}"), "unknown link", Some(&format!("\"{key}\""))));
        }
    }
    for l in network.topology.links() {
        let value = *raw
            .rho
            .get(&l.name)
            .ok_or_else(|| src.error("rho", format!("missing link `{}`", l.name), None))?;
        if !(0.0..=l.rho_max).contains(&value) {
            return Err(src.error(
                format!("rho.{}", l.name),
                format!("density {value} outside [0, {}]", l.rho_max),
                Some(&format!("\"{}\"", l.name)),
            ));
        }
        rho.push(value);
    }
    Ok(rho)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub max_combinations: Option<usize>,
    #[serde(default)]
    pub subsample: Option<bool>,
    #[serde(default)]
    pub rays: Option<Vec<BTreeMap<String, f64>>>,
    #[serde(default)]
    pub critical_ray: Option<bool>,
    #[serde(default)]
    pub ray_tolerance: Option<f64>,
    #[serde(default)]
    pub rerun_undecided: Option<bool>,
}

pub fn load_sweep(path: &Path) -> Result<RawSweep, SpecParseError> {
    let text = read(path)?;
    let name = path.display().to_string();
    Source { name: &name, text: &text }.parse()
}

impl RawSweep {
    /// Applies the file's settings on top of `spec`.
    pub fn apply(&self, network: &Network, spec: &mut SweepSpec) -> Result<(), SpecParseError> {
        if let Some(grid) = &self.grid {
            spec.grid = grid.clone();
        }
        if let Some(n) = self.max_combinations {
            spec.max_combinations = n;
        }
        if let Some(b) = self.subsample {
            spec.subsample = b;
        }
        if let Some(b) = self.critical_ray {
            spec.critical_ray = b;
        }
        if let Some(t) = self.ray_tolerance {
            spec.ray_tolerance = t;
        }
        if let Some(b) = self.rerun_undecided {
            spec.rerun_undecided = b;
        }
        for (i, ray) in self.rays.iter().flatten().enumerate() {
            let pairs: Vec<(String, f64)> = ray.iter().map(|(k, v)| (k.clone(), *v)).collect();
            spec.rays.push(network.per_link(&pairs, 1.0, &format!("rays[{i}]"))?);
        }
        Ok(())
    }
}
