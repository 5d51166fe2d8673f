//! Saturated center disks: a center disk through an avoiding point, thickened
//! by strong leaves.

use serde::{Deserialize, Serialize};

use super::balls::OpenBall;
use crate::cones::{avoidance_search, grow_leaf_with, AvoidanceOptions, Ball, ConeField, LeafOptions};
use crate::da_maps::MapModel;
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::torus_linear::{Bundle, LiftPoint, Side, TorusPoint};

const MAX_PULL: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskOptions {
    /// Length `L` of the strong segment the avoidance search runs on.
    pub length: f64,
    /// Length `l` of the saturating strong segments (0: center disk alone).
    pub saturation: f64,
    /// Radius of the linear center disk.
    pub center_radius: f64,
    /// Cloud points per parameter axis.
    pub resolution: usize,
    pub horizon: usize,
    pub avoidance: AvoidanceOptions,
}

impl Default for DiskOptions {
    fn default() -> Self {
        DiskOptions {
            length: 1.0,
            saturation: 0.1,
            center_radius: 0.05,
            resolution: 9,
            horizon: 100,
            avoidance: AvoidanceOptions { leaf_tol: 1e-8, ..Default::default() },
        }
    }
}

/// `D₁` (stable side) or `D₂` (unstable side).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturatedDisk {
    pub side: Side,
    /// Iterates between the ball and the segment: `f^{∓k}(U)` holds the segment.
    pub k: usize,
    /// `f^{∓k}(center of U)`, the base point of the segment.
    pub base: Vec<f64>,
    /// The avoiding point the disk is built on.
    pub anchor: Vec<f64>,
    pub min_clearance: f64,
    /// Unit vectors spanning the linear center disk (empty when the side has no
    /// separate center bundle).
    pub center_frame: Vec<Vec<f64>>,
    pub center_radius: f64,
    pub saturation: f64,
    pub dim: usize,
    /// Smallest inner margin of the center-disk tangents in the certified
    /// center cone at the anchor (`None` without a center disk).
    pub tangency_margin: Option<f64>,
    /// Smallest strong-cone margin over the saturating leaves of the cloud.
    pub strong_margin: Option<f64>,
    pub points: Vec<Vec<f64>>,
    pub leaf_tol: f64,
}

impl SaturatedDisk {
    /// Parameter dimensions: the center disk's, then one for the strong leaf.
    pub fn param_dim(&self) -> usize {
        self.center_frame.len() + usize::from(self.saturation > 0.0)
    }

    /// Point with parameters `s ∈ [−1, 1]^{dim}`.
    pub fn point(&self, map: &MapModel<f64>, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.point_with_margin(map, s)?.0)
    }

    fn point_with_margin(&self, map: &MapModel<f64>, s: &[f64]) -> Result<(Vec<f64>, Option<f64>)> {
        let dc = self.center_frame.len();
        let mut c = self.anchor.clone();
        for (e, &t) in self.center_frame.iter().zip(s) {
            c.iter_mut().zip(e).for_each(|(a, b)| *a += self.center_radius * t * b);
        }
        if self.saturation <= 0.0 {
            return Ok((c, None));
        }
        let leaf = grow_leaf_with(map, &TorusPoint::new(c.clone()), self.side, self.saturation, self.leaf_tol, None, &LeafOptions::default())?;
        let p = leaf.point_at(leaf.anchor_arc + 0.5 * self.saturation * s[dc]);
        // keep the lift next to the center point
        let lifted = p.iter().zip(&c).map(|(a, b)| b + crate::torus_linear::wrapped_delta(*a, *b)).collect();
        Ok((lifted, Some(leaf.tangent_cone_margin)))
    }
}

fn param_grid(d: usize, m: usize) -> Vec<Vec<f64>> {
    let m = m.max(2);
    crate::cones::grid_points(d, m).into_iter().map(|u| u.iter().map(|t| -1.0 + 2.0 * t * m as f64 / (m - 1) as f64).collect()).collect()
}

/// Iterates `x` `k` times forward (`Uu`: toward the segment) or backward.
fn push(map: &MapModel<f64>, x: &[f64], k: usize, forward: bool) -> Result<Vec<f64>> {
    let mut p = LiftPoint::new(x.to_vec());
    for _ in 0..k {
        p = if forward { map.eval_lift(&p) } else { map.inverse_lift(&p)? };
    }
    Ok(p.coords.iter().map(|t| crate::torus_linear::wrap01(*t)).collect())
}

/// Smallest `k` such that the strong segment of length `L` through
/// `f^{∓k}(center)` maps back into `ball`; returns `(k, base)`.
fn pull_segment(map: &MapModel<f64>, ball: &OpenBall, side: Side, length: f64, tol: f64) -> Result<(usize, Vec<f64>)> {
    // ss segments grow under f⁻¹, uu segments under f
    let away_forward = side == Side::Uu;
    for k in 0..=MAX_PULL {
        let base = push(map, &ball.center, k, away_forward)?;
        let leaf = grow_leaf_with(map, &TorusPoint::new(base.clone()), side, length, tol, None, &LeafOptions::default())?;
        let mut inside = true;
        for p in &leaf.points {
            let back = push(map, p, k, !away_forward)?;
            if !ball.contains(&back) {
                inside = false;
                break;
            }
        }
        if inside {
            return Ok((k, base));
        }
    }
    Err(Error::SearchFailed { step: MAX_PULL, reason: format!("no iterate of the ball holds a strong segment of length {length}") })
}

fn build(map: &MapModel<f64>, ball: &OpenBall, side: Side, opts: &DiskOptions) -> Result<SaturatedDisk> {
    let lin = map.linear();
    let (k, base) = pull_segment(map, ball, side, opts.length, opts.avoidance.leaf_tol)?;
    let balls: Vec<Ball> = map.supports().iter().map(Ball::from).collect();
    let found = avoidance_search(map, &TorusPoint::new(base.clone()), side, opts.length, &balls, opts.horizon, &opts.avoidance)?;
    let anchor = found.point.clone();
    let strong = lin.strong_bundle(side);
    let weak = match side {
        Side::Uu => Bundle::Wu,
        Side::Ss => Bundle::Ws,
    };
    let center_frame: Vec<Vec<f64>> = if strong == weak {
        Vec::new()
    } else {
        lin.range(weak)
            .map(|j| {
                let col: Vec<f64> = lin.eigenbasis().column(j).iter().copied().collect();
                let nn = norm2(&col);
                col.into_iter().map(|t| t / nn).collect()
            })
            .collect()
    };
    let tangency_margin = if center_frame.is_empty() {
        None
    } else {
        let cone = ConeField::center(lin, side, opts.avoidance.theta)?.at(LiftPoint::new(anchor.clone()));
        Some(center_frame.iter().map(|e| cone.inner_margin(e)).fold(f64::INFINITY, f64::min))
    };
    let mut disk = SaturatedDisk {
        side,
        k,
        base,
        anchor,
        min_clearance: found.min_clearance,
        center_frame,
        center_radius: opts.center_radius,
        saturation: opts.saturation,
        dim: 0,
        tangency_margin,
        strong_margin: None,
        points: Vec::new(),
        leaf_tol: opts.avoidance.leaf_tol,
    };
    disk.dim = disk.param_dim();
    let mut margin: Option<f64> = None;
    for s in param_grid(disk.dim, opts.resolution) {
        let (p, m) = disk.point_with_margin(map, &s)?;
        if let Some(m) = m {
            margin = Some(margin.map_or(m, |a| a.min(m)));
        }
        disk.points.push(p);
    }
    disk.strong_margin = margin;
    Ok(disk)
}

/// `D₁` from `U₁` (stable side) and `D₂` from `U₂` (unstable side).
pub fn saturated_disk_pair(map: &MapModel<f64>, u1: &OpenBall, u2: &OpenBall, opts: &DiskOptions) -> Result<(SaturatedDisk, SaturatedDisk)> {
    if !map.is_torus() {
        return Err(Error::Precondition("saturated disks need a torus map".into()));
    }
    if !(opts.length > 0.0 && opts.saturation >= 0.0 && opts.center_radius > 0.0) {
        return Err(Error::Precondition("disk lengths must be positive".into()));
    }
    Ok((build(map, u1, Side::Ss, opts)?, build(map, u2, Side::Uu, opts)?))
}
