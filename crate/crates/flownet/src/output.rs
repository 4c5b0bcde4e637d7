//! Trajectory and sweep CSV files.

use std::io::{self, Write};

use flownet_core::perturbation::SweepSample;
use flownet_core::{SweepResult, Trajectory};

use crate::format::sig;
use crate::spec::Network;

/// One row per sample, events appended as `# event ...` comment lines.
pub fn write_trajectory<W: Write>(mut w: W, network: &Network, traj: &Trajectory) -> io::Result<()> {
    let names = network.link_names();
    let routing_nodes = network.topology.node_count() - 1;
    let mut header = vec!["t".to_string()];
    for prefix in ["rho", "f", "xi"] {
        header.extend(names.iter().map(|n| format!("{prefix}_{n}")));
    }
    header.extend((0..routing_nodes).map(|v| format!("chi_{v}")));
    header.push("lambda_n".into());
    header.push("avg_lambda_n".into());
    writeln!(w, "{}", header.join(","))?;

    for s in &traj.samples {
        let st = &s.state;
        let mut row = Vec::with_capacity(header.len());
        row.push(sig(st.t));
        row.extend(st.rho.iter().map(|&x| sig(x)));
        row.extend(st.f.iter().map(|&x| sig(x)));
        row.extend(st.xi.iter().map(|&b| u8::from(b).to_string()));
        row.extend(st.chi[..routing_nodes].iter().map(|&b| u8::from(b).to_string()));
        row.push(sig(s.lambda_n()));
        let average = if st.t > 0.0 { s.arrivals / st.t } else { s.lambda_n() };
        row.push(sig(average));
        writeln!(w, "{}", row.join(","))?;
    }
    for ev in &traj.events {
        writeln!(w, "# event t={} link={} saturated", sig(ev.t), names[ev.link.0])?;
    }
    Ok(())
}

/// Every grid and ray sample, ordered by magnitude.
pub fn all_samples(result: &SweepResult) -> Vec<&SweepSample> {
    let mut all: Vec<&SweepSample> = result
        .samples
        .iter()
        .chain(result.rays.iter().flat_map(|r| r.samples.iter()))
        .collect();
    all.sort_by(|a, b| {
        a.magnitude
            .total_cmp(&b.magnitude)
            .then_with(|| {
                a.scales
                    .iter()
                    .zip(&b.scales)
                    .map(|(x, y)| y.total_cmp(x))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    all.dedup_by(|a, b| a.scales == b.scales && a.horizon == b.horizon);
    all
}

/// `magnitude,s_<id>...,classification,events`
pub fn write_sweep<W: Write>(mut w: W, network: &Network, result: &SweepResult) -> io::Result<()> {
    let names = network.link_names();
    let scales: Vec<String> = names.iter().map(|n| format!("s_{n}")).collect();
    writeln!(w, "magnitude,{},classification,events", scales.join(","))?;
    for s in all_samples(result) {
        let scales: Vec<String> = s.scales.iter().map(|&x| sig(x)).collect();
        writeln!(
            w,
            "{},{},{},{}",
            sig(s.magnitude),
            scales.join(","),
            s.classification,
            s.events
        )?;
    }
    Ok(())
}
