//! Distances between the interface curves of two runs at matching times.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::fmt_num;
use crate::simulation::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveDistance {
    pub linf: f64,
    /// Root mean square over the compared points (the discrete L2 norm on [0, 1]).
    pub l2: f64,
    /// Positions where both curves exist.
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMetrics {
    pub t: f64,
    pub fluid_fluid: Option<CurveDistance>,
    pub fluid_solid: Option<CurveDistance>,
}

fn times_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Linear interpolation of a 1-periodic sampled curve; `None` if a
/// neighbouring sample is missing.
pub fn periodic_interpolate(x: &[f64], y: &[Option<f64>], at: f64) -> Option<f64> {
    let n = x.len();
    if n == 0 {
        return None;
    }
    let at = x[0] + (at - x[0]).rem_euclid(1.0);
    let pos = x.partition_point(|v| *v <= at);
    let (xl, yl) = (x[pos - 1], y[pos - 1]?);
    let (xr, yr) = if pos < n { (x[pos], y[pos]?) } else { (x[0] + 1.0, y[0]?) };
    if xr == xl {
        return Some(yl);
    }
    Some(yl + (yr - yl) * (at - xl) / (xr - xl))
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-14)
}

fn distance(xa: &[f64], ya: &[Option<f64>], xb: &[f64], yb: &[Option<f64>]) -> Option<CurveDistance> {
    let same = same_grid(xa, xb);
    let mut linf: f64 = 0.0;
    let mut sq = 0.0;
    let mut points = 0;
    for (k, x) in xa.iter().enumerate() {
        let b = if same { yb[k] } else { periodic_interpolate(xb, yb, *x) };
        if let (Some(a), Some(b)) = (ya[k], b) {
            let e = (a - b).abs();
            linf = linf.max(e);
            sq += e * e;
            points += 1;
        }
    }
    (points > 0).then(|| CurveDistance {
        linf,
        l2: (sq / points as f64).sqrt(),
        points,
    })
}

/// Distances of `b` from `a`, with `b` resampled onto the grid of `a`.
pub fn compare_snapshots(a: &Snapshot, b: &Snapshot) -> Result<SnapshotMetrics> {
    if !times_match(a.t, b.t) {
        return Err(Error::Comparison(format!("snapshot times {} and {} differ", a.t, b.t)));
    }
    if a.x.windows(2).any(|w| w[1] <= w[0]) || b.x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Comparison("x positions must increase".into()));
    }
    Ok(SnapshotMetrics {
        t: a.t,
        fluid_fluid: distance(&a.x, &a.y_ff, &b.x, &b.y_ff),
        fluid_solid: distance(&a.x, &a.y_fs, &b.x, &b.y_fs),
    })
}

/// Metrics at every time present in both runs; an error if there is none.
pub fn compare_runs(a: &[Snapshot], b: &[Snapshot]) -> Result<Vec<SnapshotMetrics>> {
    let mut out = Vec::new();
    for sa in a {
        if let Some(sb) = b.iter().find(|sb| times_match(sa.t, sb.t)) {
            out.push(compare_snapshots(sa, sb)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Comparison("the runs share no snapshot time".into()));
    }
    Ok(out)
}

pub fn write_metrics(path: &Path, metrics: &[SnapshotMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Comparison(e.to_string()))?;
    let err = |e: csv::Error| Error::Comparison(e.to_string());
    w.write_record(["t", "linf_ff", "l2_ff", "points_ff", "linf_fs", "l2_fs", "points_fs"])
        .map_err(err)?;
    let cols = |d: Option<CurveDistance>| match d {
        Some(d) => [fmt_num(d.linf), fmt_num(d.l2), d.points.to_string()],
        None => [String::new(), String::new(), "0".into()],
    };
    for m in metrics {
        let [a, b, c] = cols(m.fluid_fluid);
        let [d, e, f] = cols(m.fluid_solid);
        w.write_record([fmt_num(m.t), a, b, c, d, e, f]).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}
