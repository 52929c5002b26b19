//! Snapshots (flat little-endian f64 plus a JSON header), CSV tables and SVG rate plots.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::MonotoneGraph;
use crate::grid::{Field, Grid, Unit};
use crate::harness::RateTable;
use crate::solver::{StepRecord, Trajectory};

/// Largest grid written as CSV alongside the binary snapshot.
pub const CSV_NODE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
    pub unit: Unit,
    /// Always `"f64-le"`.
    pub dtype: String,
    /// Node order; the first axis varies fastest.
    pub layout: String,
    pub nodes: usize,
    pub t: Option<f64>,
}

impl SnapshotHeader {
    fn of(field: &Field, t: Option<f64>) -> Self {
        let g = field.grid();
        let d = g.dim();
        Self {
            dim: d,
            extents: g.extents()[..d].to_vec(),
            cells: g.cells()[..d].to_vec(),
            unit: field.unit(),
            dtype: "f64-le".into(),
            layout: "first-axis-fastest".into(),
            nodes: g.nodes(),
            t,
        }
    }
}

/// Writes `<stem>.bin` and `<stem>.json`, plus `<stem>.csv` for small grids.
pub fn write_snapshot(dir: &Path, stem: &str, field: &Field, t: Option<f64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let bytes: Vec<u8> = field.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.join(format!("{stem}.bin")), bytes)?;
    let header = SnapshotHeader::of(field, t);
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&header)?)?;
    if field.grid().nodes() <= CSV_NODE_LIMIT {
        fs::write(dir.join(format!("{stem}.csv")), field_csv(field))?;
    }
    Ok(())
}

pub fn read_snapshot(dir: &Path, stem: &str) -> Result<(SnapshotHeader, Field)> {
    let header: SnapshotHeader = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
    if header.dtype != "f64-le" || bytes.len() != 8 * header.nodes {
        return Err(Error::Invariant(format!("snapshot {stem}: unexpected payload")));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let grid = Grid::new(&header.extents, &header.cells)?;
    let field = Field::new(grid, values, header.unit)?;
    Ok((header, field))
}

/// `x,y,z,value` (only the grid's axes are written).
pub fn field_csv(field: &Field) -> String {
    let g = field.grid();
    let d = g.dim();
    let axes = ["x", "y", "z"];
    let mut s = axes[..d].join(",");
    s.push_str(",value\n");
    for (i, v) in field.values().iter().enumerate() {
        let c = g.center(i);
        for x in &c[..d] {
            s.push_str(&format!("{x:.12e},"));
        }
        s.push_str(&format!("{v:.17e}\n"));
    }
    s
}

/// One row per time level.
pub fn ledger_csv(ledger: &[StepRecord]) -> String {
    let mut s = String::from(
        "t,mean_phi,mean_drift,min_theta,max_theta,phase_energy,interaction_energy,grad_mu_sq,phi_t_sq,\
         coupling_work,energy_balance_residual,theta_energy,grad_theta_sq,trace_theta_sq,beta_l1,beta_l2,\
         enthalpy_residual,newton_phase,newton_thermal,coupling_iterations,retried\n",
    );
    for r in ledger {
        let reals = [
            r.t,
            r.mean_phi,
            r.mean_drift,
            r.min_theta,
            r.max_theta,
            r.phase_energy,
            r.interaction_energy,
            r.grad_mu_sq,
            r.phi_t_sq,
            r.coupling_work,
            r.energy_balance_residual,
            r.theta_energy,
            r.grad_theta_sq,
            r.trace_theta_sq,
            r.beta_l1,
            r.beta_l2,
            r.enthalpy_residual,
        ];
        for x in reals {
            s.push_str(&format!("{x:.12e},"));
        }
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.newton_phase, r.newton_thermal, r.coupling_iterations, r.retried
        ));
    }
    s
}

/// Writes `summary.json`, `ledger.csv` and snapshots of every field at the
/// levels `0, stride, 2 stride, ...` and the final level.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, stride: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.json");
    fs::write(&summary, serde_json::to_string_pretty(&traj.summary)?)?;
    written.push(summary);
    let ledger = dir.join("ledger.csv");
    fs::write(&ledger, ledger_csv(&traj.ledger))?;
    written.push(ledger);
    let last = traj.len() - 1;
    let snaps = dir.join("snapshots");
    for (n, s) in traj.states.iter().enumerate() {
        if n != 0 && n != last && (stride == 0 || n % stride != 0) {
            continue;
        }
        for (name, f) in [("theta", &s.theta), ("mu", &s.mu), ("phi", &s.phi), ("xi", &s.xi)] {
            write_snapshot(&snaps, &format!("{name}_{n:05}"), f, Some(s.t))?;
        }
    }
    written.push(snaps);
    Ok(written)
}

/// `r,J_lambda,beta_lambda,beta_hat_lambda` on `count` equispaced points of `[lo, hi]`.
pub fn graph_table_csv(graph: MonotoneGraph, lambda: f64, lo: f64, hi: f64, count: usize) -> Result<String> {
    let mut s = String::from("r,J_lambda,beta_lambda,beta_hat_lambda\n");
    let y = graph.yosida_view(lambda);
    for k in 0..count {
        let r = if count > 1 { lo + (hi - lo) * k as f64 / (count - 1) as f64 } else { lo };
        s.push_str(&format!(
            "{r:.12e},{:.12e},{:.12e},{:.12e}\n",
            y.resolvent(r)?,
            y.value(r)?,
            y.moreau(r)?
        ));
    }
    Ok(s)
}

/// Parses a `rung,value,ratio` table.
pub fn parse_rate_csv(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::Invariant(format!("rate table line {}: {line:?}", i + 1));
        let rung = parts.next().and_then(|x| x.trim().parse().ok()).ok_or_else(bad)?;
        let value = parts.next().and_then(|x| x.trim().parse().ok()).ok_or_else(bad)?;
        rows.push((rung, value));
    }
    Ok(rows)
}

/// Log-log plot of `value` against the relative ladder parameter `2^{-rung}`.
pub fn rate_plot_svg(title: &str, rows: &[(usize, f64)]) -> Result<String> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(k, v)| (-(k as f64) * std::f64::consts::LN_2 / std::f64::consts::LN_10, v.log10()))
        .collect();
    if pts.is_empty() {
        return Err(Error::Invariant("no positive values to plot".into()));
    }
    let (w, h, m) = (480.0, 360.0, 60.0);
    let span = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let (lo, hi) = (lo.floor(), hi.ceil());
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        w / 2.0,
        escape(title)
    );
    s.push_str(&format!(
        "<path d=\"M{m} {m} V{} H{}\" fill=\"none\" stroke=\"black\"/>\n",
        h - m,
        w - m
    ));
    for e in (x0 as i64)..=(x1 as i64) {
        let x = sx(e as f64);
        s.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/><text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">1e{e}</text>\n",
            h - m,
            h - m + 5.0,
            h - m + 18.0
        ));
    }
    for e in (y0 as i64)..=(y1 as i64) {
        let y = sy(e as f64);
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{m}\" y2=\"{y}\" stroke=\"black\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">1e{e}</text>\n",
            m - 5.0,
            m - 8.0,
            y + 3.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">relative ladder parameter 2^-rung</text>\n",
        w / 2.0,
        h - 15.0
    ));
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
        path.join(" ")
    ));
    for &(x, y) in &pts {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>\n",
            sx(x),
            sy(y)
        ));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<name>.csv` for a rate table.
pub fn write_rate_table(dir: &Path, table: &RateTable) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", table.name));
    fs::write(&path, table.to_csv())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(&[1.0, 2.0], &[5, 3]).unwrap();
        let f = Field::from_fn(g, Unit::Temperature, |x| 1.0 + x[0].sin() * x[1]).unwrap();
        write_snapshot(dir.path(), "theta", &f, Some(0.25)).unwrap();
        let (h, back) = read_snapshot(dir.path(), "theta").unwrap();
        assert_eq!(back, f);
        assert_eq!(h.t, Some(0.25));
        assert_eq!(h.cells, vec![5, 3]);
        assert!(dir.path().join("theta.csv").exists());
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let g = Grid::unit_square(4);
        let f = Field::constant(g, 2.0, Unit::Generic);
        let s = field_csv(&f);
        assert_eq!(s.lines().count(), 17);
        assert!(s.starts_with("x,y,value\n"));
    }

    #[test]
    fn rate_csv_roundtrip() {
        let t = RateTable::new("t", &[0.4, 0.2, 0.1], &[1.0, 0.5, 0.0]);
        let rows = parse_rate_csv(&t.to_csv()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1], (1, 0.5));
        assert!(t.rows[2].floored);
        let svg = rate_plot_svg("gap <eps>", &rows).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("&lt;eps&gt;"));
    }

    #[test]
    fn graph_table_shape() {
        let s = graph_table_csv(MonotoneGraph::Indicator, 0.1, -2.0, 2.0, 5).unwrap();
        let rows: Vec<&str> = s.lines().collect();
        assert_eq!(rows.len(), 6);
        assert!(rows[1].starts_with("-2.0"));
    }
}
