//! Growth of center disks tangent to a certified cone.

use serde::{Deserialize, Serialize};

use super::cone::ConeField;
use super::leaf::{cumulative, push, Pusher};
use crate::da_maps::MapModel;
use crate::error::{Error, Result};
use crate::torus_linear::{LiftPoint, Side, TorusPoint};

/// Boundary samples of a 2-dimensional disk.
const CIRCLE_POINTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub d: usize,
    /// First iterate whose diameter is at least `2δ₁`.
    pub n: usize,
    /// Diameter after each iterate, starting with the initial one.
    pub diameters: Vec<f64>,
    /// `ceil(log(2δ₁/diam₀)/log λ)`.
    pub predicted: usize,
    pub rate: f64,
}

/// Iterates a disk of dimension `d = field.dim()` (1 or 2), centered at `x`
/// and spanned by the cone's `F` frame, until its diameter reaches `2δ₁`.
///
/// For `d = 1` the diameter is the arc length of the image curve; for `d = 2`
/// it is the largest chord between images of the boundary circle, a lower
/// bound for the intrinsic diameter. Fails with `GrowthStalled` when the
/// diameter drops below half of `diam₀·λⁿ`, or when `max_n` is exhausted.
pub fn disk_growth_check(
    map: &MapModel<f64>,
    x: &TorusPoint<f64>,
    field: &ConeField<f64>,
    diam0: f64,
    delta1: f64,
    rate: f64,
    max_n: usize,
) -> Result<GrowthReport> {
    if !(diam0 > 0.0 && delta1 > 0.0 && rate > 1.0) {
        return Err(Error::Precondition("disk growth needs diam₀, δ₁ > 0 and rate λ > 1".into()));
    }
    let d = field.dim();
    let target = 2.0 * delta1;
    let predicted = if diam0 >= target { 0 } else { ((target / diam0).ln() / rate.ln()).ceil() as usize };
    let cone = field.at(x.to_lift());
    let frame = cone.f_frame();
    let c = x.coords();
    let r = 0.5 * diam0;
    let disk_point = |u: &[f64]| -> Vec<f64> {
        (0..c.len()).map(|i| c[i] + r * u.iter().enumerate().map(|(j, &t)| frame[(i, j)] * t).sum::<f64>()).collect()
    };
    let mut diameters = vec![diam0];
    let stalled = |step: usize, diameter: f64| {
        let bound = 0.5 * diam0 * rate.powi(step as i32);
        (diameter < bound).then_some(Error::GrowthStalled { step, diameter, bound })
    };
    let done = |n: usize, diameters: Vec<f64>| GrowthReport { d, n, diameters, predicted, rate };
    if diam0 >= target {
        return Ok(done(0, diameters));
    }
    match d {
        1 => {
            let m = 16;
            let mut pts: Vec<Vec<f64>> = (0..=2 * m).map(|i| disk_point(&[(i as f64 - m as f64) / m as f64])).collect();
            let pusher = Pusher { map, side: Side::Uu };
            let h = target / 64.0;
            for step in 1..=max_n {
                pts = push(&pusher, &pts, m, h)?.0;
                let diameter = *cumulative(&pts).last().unwrap();
                diameters.push(diameter);
                if let Some(e) = stalled(step, diameter) {
                    return Err(e);
                }
                if diameter >= target {
                    return Ok(done(step, diameters));
                }
            }
        }
        2 => {
            let mut pts: Vec<Vec<f64>> = (0..CIRCLE_POINTS)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / CIRCLE_POINTS as f64;
                    disk_point(&[a.cos(), a.sin()])
                })
                .collect();
            for step in 1..=max_n {
                pts = pts.iter().map(|p| map.eval_lift(&LiftPoint::new(p.clone())).coords).collect();
                let mut diameter = 0.0f64;
                for (i, p) in pts.iter().enumerate() {
                    for q in &pts[i + 1..] {
                        diameter = diameter.max(p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
                    }
                }
                diameters.push(diameter);
                if let Some(e) = stalled(step, diameter) {
                    return Err(e);
                }
                if diameter >= target {
                    return Ok(done(step, diameters));
                }
            }
        }
        _ => return Err(Error::UnsupportedDimension(d)),
    }
    let last = *diameters.last().unwrap();
    Err(Error::GrowthStalled { step: max_n, diameter: last, bound: target })
}
