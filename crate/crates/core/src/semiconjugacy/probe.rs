//! Upper semicontinuity of the fiber size under C⁰ perturbation, probed.

use serde::{Deserialize, Serialize};

use super::fibers::fiber_analysis;
use super::field::{compute_h, SeriesOptions};
use crate::cones::grid_points;
use crate::da_maps::MapModel;
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::torus_linear::wrapped_delta;

/// Nodes per axis of the grid on which `d_C0(f, g)` is measured is capped so
/// that the grid has at most this many points.
const DISTANCE_SAMPLES: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub grid: usize,
    pub series: SeriesOptions,
    pub rho: f64,
    /// Distance below which the inequality is claimed; defaults to twice the
    /// smallest nonzero perturbation distance.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub label: String,
    pub d_c0: f64,
    pub lambda: f64,
    pub delta_lambda: f64,
    /// `d_c0 < δ`: the row is checked. Other rows are informational.
    pub claimed: bool,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemicontinuityReport {
    pub lambda_f: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub rows: Vec<ProbeRow>,
    pub violations: usize,
}

/// `sup ‖f(x) − g(x)‖` over a grid, measured on the torus.
pub fn c0_distance(f: &MapModel<f64>, g: &MapModel<f64>) -> Result<f64> {
    let n = f.n();
    if g.n() != n {
        return Err(Error::BadGeometry("maps act on different dimensions".into()));
    }
    let per_axis = (DISTANCE_SAMPLES as f64).powf(1.0 / n as f64).floor().max(2.0) as usize;
    let mut pts = grid_points(n, per_axis);
    for s in f.supports().iter().chain(g.supports()) {
        let m = 8usize;
        for u in grid_points(n, m) {
            pts.push(s.center.iter().zip(&u).map(|(c, t)| c + s.radius * (2.0 * t - 1.0 + 1.0 / m as f64)).collect());
        }
    }
    let (mut fx, mut gx) = (vec![0.0; n], vec![0.0; n]);
    let mut best = 0.0f64;
    for p in &pts {
        f.eval_slice(p, &mut fx);
        g.eval_slice(p, &mut gx);
        let d: Vec<f64> = fx.iter().zip(&gx).map(|(&a, &b)| wrapped_delta(a, b)).collect();
        best = best.max(norm2(&d));
    }
    Ok(best)
}

fn lambda_upper(map: &MapModel<f64>, opts: &ProbeOptions) -> Result<f64> {
    let field = compute_h(map, opts.grid, &opts.series)?;
    Ok(fiber_analysis(&field, opts.rho)?.lambda_upper)
}

/// Tabulates `(d_C0(f, g), Λ(g) − Λ(f))` and flags `Λ(g) ≥ Λ(f) + ε` among
/// perturbations closer than `δ`.
pub fn semicontinuity_probe(
    f: &MapModel<f64>,
    perturbations: &[(String, MapModel<f64>)],
    epsilon: f64,
    opts: &ProbeOptions,
) -> Result<SemicontinuityReport> {
    let lambda_f = lambda_upper(f, opts)?;
    let dists: Vec<f64> = perturbations.iter().map(|(_, g)| c0_distance(f, g)).collect::<Result<_>>()?;
    let delta = opts.delta.unwrap_or_else(|| 2.0 * dists.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min));
    let mut rows = Vec::with_capacity(perturbations.len());
    for ((label, g), &d) in perturbations.iter().zip(&dists) {
        let lambda = lambda_upper(g, opts)?;
        let delta_lambda = lambda - lambda_f;
        let claimed = d < delta;
        rows.push(ProbeRow { label: label.clone(), d_c0: d, lambda, delta_lambda, claimed, violation: claimed && delta_lambda >= epsilon });
    }
    let violations = rows.iter().filter(|r| r.violation).count();
    Ok(SemicontinuityReport { lambda_f, epsilon, delta, rows, violations })
}
