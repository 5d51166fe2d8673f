//! Polyline approximations of local strong leaves.
//!
//! A short seed segment along the linear strong direction is placed at
//! `f^{-k}(x)` (`f^{k}(x)` for the ss side) and pushed `k` times; pushing
//! contracts direction errors by the ratio of strong to center rates, so the
//! result approximates the leaf through `x`.

use serde::{Deserialize, Serialize};

use super::cone::ConeField;
use crate::da_maps::MapModel;
use crate::error::{Error, Result};
use crate::torus_linear::{LiftPoint, Side, TorusPoint};

/// Geometry and accuracy knobs of [`grow_strong_leaf`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafOptions {
    /// Largest distance between consecutive polyline points, as a fraction of L.
    pub spacing: f64,
    /// Size of the strong cone the tangents must stay in.
    pub theta: f64,
    /// Cap on the number of pushes.
    pub max_pushes: usize,
}

impl Default for LeafOptions {
    fn default() -> Self {
        LeafOptions { spacing: 1.0 / 256.0, theta: 1.0, max_pushes: 400 }
    }
}

/// A polyline through a point, tangent to the strong cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongSegment {
    pub side: Side,
    /// Lift coordinates.
    pub points: Vec<Vec<f64>>,
    /// Cumulative arc length, starting at 0.
    pub arc: Vec<f64>,
    /// Arc-length position of the image of the seed center (≈ x).
    pub anchor_arc: f64,
    pub length: f64,
    /// Smallest `−B(t)/‖t‖²` over the segment tangents (positive inside).
    pub tangent_cone_margin: f64,
    /// Distance between the tracked anchor and the requested point.
    pub anchor_error: f64,
    pub pushes: usize,
}

impl StrongSegment {
    /// Point at arc-length `s` (clamped).
    pub fn point_at(&self, s: f64) -> Vec<f64> {
        let s = s.clamp(0.0, self.length);
        let i = match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => return self.points[i].clone(),
            Err(i) => i.clamp(1, self.arc.len() - 1),
        };
        let t = (s - self.arc[i - 1]) / (self.arc[i] - self.arc[i - 1]);
        self.points[i - 1].iter().zip(&self.points[i]).map(|(a, b)| a + t * (b - a)).collect()
    }

    /// Unit tangent near arc-length `s`.
    pub fn tangent_at(&self, s: f64) -> Vec<f64> {
        let i = self.arc.partition_point(|&a| a < s).clamp(1, self.arc.len() - 1);
        let d: Vec<f64> = self.points[i].iter().zip(&self.points[i - 1]).map(|(a, b)| a - b).collect();
        let n = crate::linalg::norm2(&d);
        d.into_iter().map(|x| x / n).collect()
    }

    /// Distance from `p` (lift) to the polyline.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        self.points
            .windows(2)
            .map(|w| segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let ap: Vec<f64> = p.iter().zip(a).map(|(x, y)| x - y).collect();
    let l2: f64 = ab.iter().map(|x| x * x).sum();
    let t = if l2 > 0.0 { (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / l2).clamp(0.0, 1.0) } else { 0.0 };
    ap.iter().zip(&ab).map(|(x, y)| (x - t * y).powi(2)).sum::<f64>().sqrt()
}

/// Arc-length position of the polyline point nearest to `p`.
fn nearest_arc(pts: &[Vec<f64>], arc: &[f64], p: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (i, w) in pts.windows(2).enumerate() {
        let ab: Vec<f64> = w[1].iter().zip(&w[0]).map(|(x, y)| x - y).collect();
        let ap: Vec<f64> = p.iter().zip(&w[0]).map(|(x, y)| x - y).collect();
        let l2: f64 = ab.iter().map(|x| x * x).sum();
        if l2 == 0.0 {
            continue;
        }
        let t = (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / l2).clamp(0.0, 1.0);
        let d = ap.iter().zip(&ab).map(|(x, y)| (x - t * y).powi(2)).sum::<f64>();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, arc[i] + t * (arc[i + 1] - arc[i])));
        }
    }
    best.map(|(_, s)| s)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub(super) struct Pusher<'a> {
    pub(super) map: &'a MapModel<f64>,
    pub(super) side: Side,
}

impl Pusher<'_> {
    /// One step along the leaf's expanding direction.
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = LiftPoint::new(x.to_vec());
        Ok(match self.side {
            Side::Uu => self.map.eval_lift(&p).coords,
            Side::Ss => self.map.inverse_lift(&p)?.coords,
        })
    }
    fn backward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = LiftPoint::new(x.to_vec());
        Ok(match self.side {
            Side::Uu => self.map.inverse_lift(&p)?.coords,
            Side::Ss => self.map.eval_lift(&p).coords,
        })
    }
}

/// Pushes a polyline one step, inserting pre-image midpoints until every
/// image edge is at most `h`. Returns the new polyline and anchor index.
pub(super) fn push(pusher: &Pusher, pts: &[Vec<f64>], anchor: usize, h: f64) -> Result<(Vec<Vec<f64>>, usize)> {
    let images: Vec<Vec<f64>> = pts.iter().map(|p| pusher.forward(p)).collect::<Result<_>>()?;
    let mut out = vec![images[0].clone()];
    let mut new_anchor = 0;
    for i in 1..pts.len() {
        // refine edge (pts[i-1], pts[i]) adaptively
        let mut stack = vec![(pts[i - 1].clone(), images[i - 1].clone(), pts[i].clone(), images[i].clone(), 0u32)];
        let mut pieces = Vec::new();
        while let Some((a, fa, b, fb, depth)) = stack.pop() {
            if dist(&fa, &fb) <= h || depth >= 40 {
                pieces.push(fb);
                continue;
            }
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let fm = pusher.forward(&m)?;
            // right half is processed after the left half
            stack.push((m.clone(), fm.clone(), b, fb, depth + 1));
            stack.push((a, fa, m, fm, depth + 1));
        }
        out.extend(pieces);
        if i == anchor {
            new_anchor = out.len() - 1;
        }
    }
    Ok((out, new_anchor))
}

fn tangent_margin(field: &ConeField<f64>, pts: &[Vec<f64>]) -> f64 {
    let cone = field.at(LiftPoint::new(pts[0].clone()));
    pts.windows(2)
        .filter_map(|w| {
            let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            (crate::linalg::norm2(&d) > 0.0).then(|| cone.inner_margin(&d))
        })
        .fold(f64::INFINITY, f64::min)
}

pub(super) fn cumulative(pts: &[Vec<f64>]) -> Vec<f64> {
    let mut arc = vec![0.0];
    for w in pts.windows(2) {
        arc.push(arc.last().unwrap() + dist(&w[0], &w[1]));
    }
    arc
}

/// Grows the local strong leaf of `side` through `x`, of arc length `length`
/// centered (in arc length) at `x`. `tol` bounds the direction error of the
/// seed after the pushes.
pub fn grow_strong_leaf(
    map: &MapModel<f64>,
    x: &TorusPoint<f64>,
    side: Side,
    length: f64,
    tol: f64,
) -> Result<StrongSegment> {
    grow_leaf_with(map, x, side, length, tol, None, &LeafOptions::default())
}

/// [`grow_strong_leaf`] with an explicit seed direction and options.
pub fn grow_leaf_with(
    map: &MapModel<f64>,
    x: &TorusPoint<f64>,
    side: Side,
    length: f64,
    tol: f64,
    seed_direction: Option<Vec<f64>>,
    opts: &LeafOptions,
) -> Result<StrongSegment> {
    if !(length > 0.0 && tol > 0.0) {
        return Err(Error::Precondition("leaf length and tolerance must be positive".into()));
    }
    let lin = map.linear();
    let n = map.n();
    let field = ConeField::strong(lin, side, opts.theta)?;
    let strong = lin.strong_bundle(side);
    let e: Vec<f64> = match seed_direction {
        Some(d) if d.len() == n => {
            let nd = crate::linalg::norm2(&d);
            d.iter().map(|v| v / nd).collect()
        }
        Some(_) => return Err(Error::BadGeometry("seed direction has the wrong dimension".into())),
        None => {
            let c = lin.eigenbasis().column(lin.range(strong).start);
            let nc = c.norm();
            c.iter().map(|v| v / nc).collect()
        }
    };
    // direction errors contract by (next rate / strong rate) per push
    let kappa = lin.strong_expansion(side);
    let cm = lin.column_moduli();
    let other = match side {
        Side::Uu => lin.range(strong).start.checked_sub(1).map(|i| cm[i]),
        Side::Ss => cm.get(lin.range(strong).end).map(|&m| 1.0 / m),
    }
    .unwrap_or(1.0)
    .max(1.0);
    let ratio = (kappa / other).max(1.0 + 1e-3);
    let k = ((1.0 / tol).ln() / ratio.ln()).ceil().max(1.0) as usize;
    let k = k.min(opts.max_pushes);
    let h = opts.spacing * length;
    let pusher = Pusher { map, side };

    let mut z = x.coords().to_vec();
    for _ in 0..k {
        z = pusher.backward(&z)?.into_iter().map(|t| t - t.floor()).collect();
    }
    let mut half = 0.6 * length / kappa.powi(k as i32);
    loop {
        let m = 8usize;
        let mut pts: Vec<Vec<f64>> = (0..=2 * m)
            .map(|i| {
                let t = half * (i as f64 - m as f64) / m as f64;
                z.iter().zip(&e).map(|(a, b)| a + t * b).collect()
            })
            .collect();
        let mut anchor = m;
        let mut margin = tangent_margin(&field, &pts);
        if margin < 0.0 {
            return Err(Error::ConeEscape { step: 0, margin });
        }
        for step in 1..=k {
            let (p, a) = push(&pusher, &pts, anchor, h)?;
            pts = p;
            anchor = a;
            // integer translates keep the lift coordinates small
            let shift: Vec<f64> = pts[anchor].iter().map(|t| t.floor()).collect();
            for q in pts.iter_mut() {
                q.iter_mut().zip(&shift).for_each(|(t, s)| *t -= s);
            }
            let mg = tangent_margin(&field, &pts);
            if mg < 0.0 {
                return Err(Error::ConeEscape { step, margin: mg });
            }
            margin = margin.min(mg);
        }
        let shift: Vec<f64> = pts[anchor].iter().zip(x.coords()).map(|(p, q)| (q - p).round()).collect();
        for q in pts.iter_mut() {
            q.iter_mut().zip(&shift).for_each(|(t, s)| *t += s);
        }
        let arc = cumulative(&pts);
        // inversion error in f^{-k}(x) is stretched along the leaf; re-anchor
        // at the polyline point nearest to x
        let a = nearest_arc(&pts, &arc, x.coords()).unwrap_or(arc[anchor]);
        let total = *arc.last().unwrap();
        if a >= 0.5 * length && total - a >= 0.5 * length {
            // trim to [a − L/2, a + L/2]
            let full = StrongSegment {
                side,
                points: pts,
                arc,
                anchor_arc: a,
                length: total,
                tangent_cone_margin: margin,
                anchor_error: 0.0,
                pushes: k,
            };
            return Ok(trim(&full, a - 0.5 * length, a + 0.5 * length, x.coords()));
        }
        if half >= length {
            return Err(Error::SearchFailed {
                step: k,
                reason: format!("leaf reached only {total:.3e} of the requested length {length}"),
            });
        }
        half = (half * 4.0).min(length);
    }
}

fn trim(seg: &StrongSegment, s0: f64, s1: f64, x: &[f64]) -> StrongSegment {
    let mut points = vec![seg.point_at(s0)];
    for (p, &s) in seg.points.iter().zip(&seg.arc) {
        if s > s0 && s < s1 {
            points.push(p.clone());
        }
    }
    points.push(seg.point_at(s1));
    let arc = cumulative(&points);
    let anchor_arc = seg.anchor_arc - s0;
    let length = *arc.last().unwrap();
    let mut out = StrongSegment { points, arc, anchor_arc, length, anchor_error: 0.0, ..seg.clone() };
    out.anchor_error = dist(&out.point_at(anchor_arc), x);
    out
}
