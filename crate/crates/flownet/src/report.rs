//! Resilience analysis of a network spec, as JSON and as a text table.

use flownet_core::resilience::{bounds_report, f_max_of, static_report};
use flownet_core::{solve_equilibrium, EquilibriumFlow, NodeId, ResilienceReport};
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::format::{num, opt, sig};
use crate::spec::Network;

/// Equilibrium densities and the matching equilibrium flow. With a
/// calibration target the flow is the target itself; otherwise node
/// throughputs are pushed through the routing shares at the equilibrium,
/// which keeps conservation exact instead of inverting the flow laws.
pub fn equilibrium(network: &Network) -> Result<(Vec<f64>, EquilibriumFlow), CliError> {
    let t = &network.topology;
    let rho0 = solve_equilibrium(t, &network.laws, &network.policy, network.lambda0)?;
    let flow = match &network.target {
        Some(target) => target.clone(),
        None => {
            let mut flow = vec![0.0; t.link_count()];
            for v in t.routing_nodes() {
                let throughput = if v == t.origin() {
                    network.lambda0
                } else {
                    t.in_links(v).iter().map(|e| flow[e.0]).sum()
                };
                let links = t.out_links(v);
                let rho_v: Vec<f64> = links.iter().map(|e| rho0[e.0]).collect();
                let shares = network.policy.route(t, v, &rho_v)?;
                for (e, g) in links.iter().zip(shares) {
                    flow[e.0] = throughput * g;
                }
            }
            flow
        }
    };
    let f_max = f_max_of(&network.laws);
    let eq = EquilibriumFlow::new(t, &f_max, flow, network.lambda0)?;
    Ok((rho0, eq))
}

pub struct Analysis {
    pub report: ResilienceReport,
    pub equilibrium: EquilibriumFlow,
    pub tree_like: bool,
}

impl Analysis {
    pub fn run(network: &Network) -> Result<Self, CliError> {
        let (_, equilibrium) = equilibrium(network)?;
        let f_max = f_max_of(&network.laws);
        let tree_like = network.topology.is_tree_like();
        let report = if tree_like {
            bounds_report(&network.topology, &f_max, &equilibrium)?
        } else {
            static_report(&network.topology, &f_max, &equilibrium)
        };
        Ok(Self {
            report,
            equilibrium,
            tree_like,
        })
    }

    pub fn note(&self) -> Option<&'static str> {
        (!self.tree_like).then_some("NotTreeLike: d_v and d_0 need a tree-like topology; only R and C are reported")
    }

    /// `R=... d0=... C-l0=...`
    pub fn reference_line(&self) -> String {
        let r = &self.report;
        format!(
            "R={} d0={} C-l0={}",
            sig(r.r),
            r.d0().map_or_else(|| "n/a".to_string(), sig),
            sig(r.c_minus_lambda0())
        )
    }

    pub fn to_json(&self, network: &Network) -> Value {
        let t = &network.topology;
        let r = &self.report;
        let names = network.link_names();
        let node_map = |values: &mut dyn Iterator<Item = (usize, Value)>| -> Value {
            Value::Object(values.map(|(v, x)| (v.to_string(), x)).collect::<Map<_, _>>())
        };
        let flow: Map<String, Value> = names
            .iter()
            .zip(self.equilibrium.flow())
            .map(|(n, &f)| (n.to_string(), num(f)))
            .collect();
        let (d_v, x_star) = match &r.d {
            Some(values) => (
                node_map(&mut values.d.iter().enumerate().map(|(v, d)| (v, num(d.to_f64())))),
                node_map(&mut values.x_star.iter().enumerate().map(|(v, x)| {
                    let per_link: Map<String, Value> = t
                        .out_links(NodeId(v))
                        .iter()
                        .zip(x)
                        .map(|(e, &x)| (names[e.0].to_string(), num(x)))
                        .collect();
                    (v, Value::Object(per_link))
                })),
            ),
            None => (Value::Null, Value::Null),
        };
        json!({
            "network": network.name,
            "lambda0": num(network.lambda0),
            "tree_like": self.tree_like,
            "equilibrium_flow": flow,
            "R_v": node_map(&mut r.r_v.iter().enumerate().map(|(v, &x)| (v, num(x)))),
            "R": num(r.r),
            "C": num(r.c),
            "cut_witness": {
                "nodes": r.cut.cut_node_set.iter().map(|v| v.0).collect::<Vec<_>>(),
                "links": r.cut.crossing_links.iter().map(|e| names[e.0]).collect::<Vec<_>>(),
                "capacity": num(r.cut.capacity),
            },
            "C_minus_lambda0": num(r.c_minus_lambda0()),
            "d_v": d_v,
            "d_0": opt(r.d0()),
            "x_star": x_star,
            "bounds": {
                "R_le_d0": r.r_le_d0(),
                "d0_le_C_minus_lambda0": r.d0_le_c_minus_lambda0(),
            },
            "note": self.note(),
        })
    }

    pub fn to_table(&self, network: &Network) -> String {
        let t = &network.topology;
        let r = &self.report;
        let names = network.link_names();
        let mut rows = vec![vec!["node".to_string(), "R_v".into(), "d_v".into(), "x*".into()]];
        for v in 0..t.node_count() {
            let r_v = r.r_v.get(v).map_or_else(|| "-".to_string(), |&x| sig(x));
            let (d, x) = match &r.d {
                Some(values) => (
                    sig(values.d[v].to_f64()),
                    values
                        .x_star
                        .get(v)
                        .map(|x| {
                            t.out_links(NodeId(v))
                                .iter()
                                .zip(x)
                                .map(|(e, &x)| format!("{}={}", names[e.0], sig(x)))
                                .collect::<Vec<_>>()
                                .join(" ")
                        })
                        .unwrap_or_else(|| "-".into()),
                ),
                None => ("-".into(), "-".into()),
            };
            rows.push(vec![v.to_string(), r_v, d, x]);
        }
        let mut out = format!("network  {}\nlambda0  {}\n\n", network.name, sig(network.lambda0));
        out.push_str(&table(&rows));
        out.push('\n');
        let ok = |b: Option<bool>| match b {
            Some(true) => "ok",
            Some(false) => "VIOLATED",
            None => "n/a",
        };
        let summary = vec![
            vec!["R".to_string(), sig(r.r)],
            vec!["C".into(), sig(r.c)],
            vec!["d0".into(), r.d0().map_or_else(|| "n/a".into(), sig)],
            vec!["C - lambda0".into(), sig(r.c_minus_lambda0())],
            vec![
                "min cut".into(),
                format!(
                    "U = {{{}}} crossing {}",
                    r.cut
                        .cut_node_set
                        .iter()
                        .map(|v| v.0.to_string())
                        .collect::<Vec<_>>()
                        .join(", "),
                    r.cut
                        .crossing_links
                        .iter()
                        .map(|e| names[e.0])
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
            ],
            vec!["R <= d0".into(), ok(r.r_le_d0()).into()],
            vec!["d0 <= C - lambda0".into(), ok(r.d0_le_c_minus_lambda0()).into()],
        ];
        out.push_str(&table(&summary));
        if let Some(note) = self.note() {
            out.push_str(&format!("note: {note}\n"));
        }
        out.push_str(&self.reference_line());
        out.push('\n');
        out
    }
}

/// Left-aligned columns separated by two spaces.
pub fn table(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c + 1 == row.len() {
                line.push_str(cell);
            } else {
                line.push_str(&format!("{cell:<width$}  ", width = widths[c]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
