//! Brouwer degree of `Π∘H` on a small disk, in projected dimension 1 or 2.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::field::ConjugacyEval;
use crate::error::{Error, Result};
use crate::torus_linear::LinearPart;

/// Boundary samples of a 2-disk before adaptive refinement.
const BOUNDARY_SAMPLES: usize = 1000;
/// Edges whose angle increment exceeds this are bisected.
const MAX_TURN: f64 = std::f64::consts::FRAC_PI_4;
const MAX_BISECT: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorSide {
    Stable,
    Unstable,
}

/// Orthogonal projection onto `E^s_A` or `E^u_A`, in orthonormal coordinates
/// of that subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub side: ProjectorSide,
    /// Orthonormal basis of the range, as columns.
    pub basis: DMatrix<f64>,
}

impl Projector {
    pub fn new(lin: &LinearPart<f64>, side: ProjectorSide) -> Self {
        let r = match side {
            ProjectorSide::Stable => lin.stable_range(),
            ProjectorSide::Unstable => lin.unstable_range(),
        };
        let frame = lin.eigenbasis().columns(r.start, r.len()).into_owned();
        let basis = frame.qr().q();
        Projector { side, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|j| self.basis.column(j).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

/// The box `center + Σ sᵢ·axesᵢ`, `s ∈ [−1, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
}

impl Disk {
    pub fn at(&self, s: &[f64]) -> Vec<f64> {
        let mut p = self.center.clone();
        for (axis, &t) in self.axes.iter().zip(s) {
            p.iter_mut().zip(axis).for_each(|(a, b)| *a += t * b);
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub d: usize,
    pub degree: i64,
    /// Smallest `‖Π H(∂disk) − Π y‖` over the samples.
    pub boundary_distance: f64,
    /// Error allowance: twice the evaluator's residual.
    pub limit: f64,
    pub boundary_samples: usize,
    /// A nonzero degree puts the ball of this radius around `Π y` inside the
    /// image of the disk (0 otherwise).
    pub ball_radius: f64,
    pub attained: bool,
}

fn image<E, P>(eval: &E, proj: &Projector, param: &P, s: &[f64], y: &[f64]) -> Result<Vec<f64>>
where
    E: ConjugacyEval + ?Sized,
    P: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let h = eval.h(&param(s)?)?;
    Ok(proj.apply(&h).iter().zip(y).map(|(a, b)| a - b).collect())
}

fn unit_square_boundary(t: f64) -> [f64; 2] {
    // counterclockwise, t ∈ [0, 4)
    let (k, u) = (t.floor() as i32, t - t.floor());
    match k.rem_euclid(4) {
        0 => [-1.0 + 2.0 * u, -1.0],
        1 => [1.0, -1.0 + 2.0 * u],
        2 => [1.0 - 2.0 * u, 1.0],
        _ => [-1.0, 1.0 - 2.0 * u],
    }
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    cross.atan2(dot)
}

/// Degree of `Π∘H` on `disk` at `Π y`; `residual` bounds the evaluation error of `H`.
pub fn degree_open_image<E: ConjugacyEval + ?Sized>(
    eval: &E,
    residual: f64,
    proj: &Projector,
    disk: &Disk,
    y: &[f64],
) -> Result<DegreeReport> {
    if disk.center.len() != eval.dim() || disk.axes.iter().any(|a| a.len() != eval.dim()) {
        return Err(Error::BadGeometry("disk has the wrong dimension".into()));
    }
    degree_on_patch(eval, residual, proj, disk.axes.len(), &|s: &[f64]| Ok(disk.at(s)), y)
}

/// As [`degree_open_image`] for a curved `d`-parameter patch `[−1, 1]^d → ℝⁿ`.
pub fn degree_on_patch<E, P>(eval: &E, residual: f64, proj: &Projector, d_param: usize, param: &P, y: &[f64]) -> Result<DegreeReport>
where
    E: ConjugacyEval + ?Sized,
    P: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let d = proj.dim();
    if d_param != d {
        return Err(Error::BadGeometry(format!("patch has {d_param} parameters, projector range is {d}-dimensional")));
    }
    if y.len() != eval.dim() {
        return Err(Error::BadGeometry("target has the wrong dimension".into()));
    }
    let py = proj.apply(y);
    let limit = 2.0 * residual;
    let (degree, min_dist, samples) = match d {
        1 => {
            let lo = image(eval, proj, param, &[-1.0], &py)?[0];
            let hi = image(eval, proj, param, &[1.0], &py)?[0];
            let deg = ((hi > 0.0) as i64 - (hi < 0.0) as i64 - (lo > 0.0) as i64 + (lo < 0.0) as i64) / 2;
            (deg, lo.abs().min(hi.abs()), 2)
        }
        2 => {
            let eval_at = |t: f64| image(eval, proj, param, &unit_square_boundary(t), &py);
            let mut total = 0.0;
            let mut min_dist = f64::INFINITY;
            let mut samples = 0;
            let h = 4.0 / BOUNDARY_SAMPLES as f64;
            let mut prev = eval_at(0.0)?;
            for k in 0..BOUNDARY_SAMPLES {
                let (t0, t1) = (k as f64 * h, (k + 1) as f64 * h);
                let end = eval_at(t1)?;
                // refine the edge until every increment is small
                let mut stack = vec![(t0, prev.clone(), t1, end.clone(), 0usize)];
                while let Some((a, pa, b, pb, depth)) = stack.pop() {
                    let turn = angle_between(&pa, &pb);
                    if turn.abs() <= MAX_TURN || depth >= MAX_BISECT {
                        total += turn;
                        min_dist = min_dist.min(pa[0].hypot(pa[1]));
                        samples += 1;
                    } else {
                        let mid = 0.5 * (a + b);
                        let pm = eval_at(mid)?;
                        stack.push((mid, pm.clone(), b, pb, depth + 1));
                        stack.push((a, pa, mid, pm, depth + 1));
                    }
                }
                prev = end;
            }
            ((total / std::f64::consts::TAU).round() as i64, min_dist, samples)
        }
        other => return Err(Error::UnsupportedDimension(other)),
    };
    if !(min_dist > limit) {
        return Err(Error::BoundaryTooClose { distance: min_dist, limit });
    }
    Ok(DegreeReport {
        d,
        degree,
        boundary_distance: min_dist,
        limit,
        boundary_samples: samples,
        ball_radius: if degree != 0 { min_dist - limit } else { 0.0 },
        attained: degree != 0,
    })
}
