//! Nested-segment avoidance search and the grid-wide SH-Saddle certificate.
//!
//! Outside the avoided balls the map is its linear part `A`, so the nested
//! segments `D_j` are straight and their images are computed exactly: points
//! are dyadic rationals `P/2^K` reduced mod 1, directions `A^j w` are exact
//! integer vectors. The returned point is such a dyadic rational and its orbit
//! is re-simulated exactly, so the clearance from the balls holds for the true
//! orbit, not only for a floating-point pseudo-orbit.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{Float, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::certify::{certify_along, CertifyOptions, Direction, OrbitConeCertificate};
use super::cone::ConeField;
use super::leaf::{grow_leaf_with, LeafOptions, StrongSegment};
use crate::da_maps::{MapModel, SupportBall};
use crate::error::{Error, Result};
use crate::torus_linear::{wrapped_delta, IntMatrix, LiftPoint, Side, TorusPoint};

/// Bits of the dyadic direction vector `w`.
const DIR_BITS: u32 = 60;
/// Extra bits beyond the expected shrinking of the nested intervals.
const GUARD_BITS: u32 = 64;

/// A ball on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl From<&SupportBall<f64>> for Ball {
    fn from(s: &SupportBall<f64>) -> Self {
        Ball { center: s.center.clone(), radius: s.radius }
    }
}

/// Signed clearance `min_b (d(p, c_b) − r_b)` on the torus.
pub fn clearance(p: &[f64], balls: &[Ball]) -> f64 {
    balls
        .iter()
        .map(|b| {
            let d2: f64 = p.iter().zip(&b.center).map(|(&x, &c)| wrapped_delta(x, c).powi(2)).sum();
            d2.sqrt() - b.radius
        })
        .fold(f64::INFINITY, f64::min)
}

/// Parameter intervals `σ ∈ [lo, hi]` where `q + σu` meets some ball (in the lift).
fn blocked_intervals(q: &[f64], u: &[f64], lo: f64, hi: f64, balls: &[Ball]) -> Vec<(f64, f64)> {
    let un: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if un == 0.0 || balls.is_empty() {
        return Vec::new();
    }
    // chunks of length ≤ 1/2: with radii < 1/4 each chunk meets at most the
    // nearest integer translate of each center
    let chunks = (((hi - lo) * un) / 0.5).ceil().max(1.0) as usize;
    let a = un * un;
    let mut out = Vec::new();
    for k in 0..chunks {
        let mid = lo + (hi - lo) * (k as f64 + 0.5) / chunks as f64;
        let p: Vec<f64> = q.iter().zip(u).map(|(a, b)| a + mid * b).collect();
        for b in balls {
            let c: Vec<f64> = b.center.iter().zip(&p).map(|(&c, &x)| c + (x - c).round()).collect();
            let qc: Vec<f64> = q.iter().zip(&c).map(|(x, y)| x - y).collect();
            let bb: f64 = u.iter().zip(&qc).map(|(x, y)| x * y).sum();
            let cc: f64 = qc.iter().map(|x| x * x).sum::<f64>() - b.radius * b.radius;
            let disc = bb * bb - a * cc;
            if disc >= 0.0 {
                let s = disc.sqrt();
                // widen by 1e-12 in space so touching counts as blocked
                let pad = 1e-12 / un;
                let (s0, s1) = ((-bb - s) / a - pad, (-bb + s) / a + pad);
                if s1 >= lo && s0 <= hi {
                    out.push((s0.max(lo), s1.min(hi)));
                }
            }
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s0, s1) in out {
        match merged.last_mut() {
            Some(last) if s0 <= last.1 => last.1 = last.1.max(s1),
            _ => merged.push((s0, s1)),
        }
    }
    merged
}

/// Centers `σ*` with `[σ* − h, σ* + h] ⊂ [lo, hi]` free of blocked intervals,
/// choosing the one whose point is farthest from all balls (ties: smallest σ).
fn best_window(q: &[f64], u: &[f64], lo: f64, hi: f64, h: f64, balls: &[Ball]) -> Option<(f64, f64)> {
    let blocked = blocked_intervals(q, u, lo, hi, balls);
    let mut runs = Vec::new();
    let mut start = lo;
    for &(s0, s1) in &blocked {
        if s0 > start {
            runs.push((start, s0));
        }
        start = start.max(s1);
    }
    if hi > start {
        runs.push((start, hi));
    }
    let mut best: Option<(f64, f64)> = None;
    for (r0, r1) in runs {
        let (c0, c1) = (r0 + h, r1 - h);
        if c1 < c0 {
            continue;
        }
        const CANDIDATES: usize = 16;
        for i in 0..=CANDIDATES {
            let s = if c1 > c0 { c0 + (c1 - c0) * i as f64 / CANDIDATES as f64 } else { c0 };
            let p: Vec<f64> = q.iter().zip(u).map(|(a, b)| a + s * b).collect();
            let cl = clearance(&p, balls);
            if best.is_none_or(|(_, c)| cl > c) {
                best = Some((s, cl));
            }
            if c1 <= c0 {
                break;
            }
        }
    }
    best
}

/// `round(x · 2^bits)`, exact for every finite `x`.
fn dyadic(x: f64, bits: u32) -> BigInt {
    let (mantissa, exp, sign) = Float::integer_decode(x);
    let m = BigInt::from(mantissa) * sign;
    // x·2^bits = m·2^(exp + bits)
    let shift = exp as i64 + bits as i64;
    if shift >= 0 {
        m << shift as u32
    } else if shift < -64 {
        BigInt::zero()
    } else {
        let s = (-shift) as u32;
        (m + (BigInt::from(1) << (s - 1))) >> s
    }
}

fn dyadic_to_f64(v: &BigInt, bits: u32) -> f64 {
    let s = bits.saturating_sub(DIR_BITS);
    (v >> s).to_f64().unwrap_or(f64::NAN) * 2f64.powi(-((bits - s) as i32))
}

fn mat_big(m: &IntMatrix, v: &[BigInt]) -> Vec<BigInt> {
    (0..m.nrows())
        .map(|i| v.iter().enumerate().fold(BigInt::zero(), |acc, (j, x)| acc + x * m[(i, j)]))
        .collect()
}

fn reduce(v: Vec<BigInt>, mask: &BigInt) -> Vec<BigInt> {
    v.into_iter().map(|x| x & mask).collect()
}

/// A dyadic point `numerators / 2^log2_denominator` of the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactPoint {
    pub log2_denominator: u32,
    /// Decimal numerators in `[0, 2^log2_denominator)`.
    pub numerators: Vec<String>,
}

impl ExactPoint {
    pub fn to_f64(&self) -> Vec<f64> {
        self.numerators
            .iter()
            .map(|s| dyadic_to_f64(&s.parse::<BigInt>().expect("decimal numerator"), self.log2_denominator))
            .collect()
    }
}

/// Tuning of [`avoidance_search`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceOptions {
    /// Accuracy of the grown leaf.
    pub leaf_tol: f64,
    pub leaf: LeafOptions,
    /// Size of the center cone certified along the orbit.
    pub theta: f64,
    pub certify: CertifyOptions,
}

impl Default for AvoidanceOptions {
    fn default() -> Self {
        AvoidanceOptions { leaf_tol: 1e-8, leaf: LeafOptions::default(), theta: 1.0, certify: CertifyOptions::default() }
    }
}

/// Outcome of [`avoidance_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceResult {
    pub side: Side,
    pub start: Vec<f64>,
    /// The point `x^u` (uu) or `x^s` (ss), on the leaf segment through `start`.
    pub point: Vec<f64>,
    pub exact: Option<ExactPoint>,
    pub horizon: usize,
    /// Length of the nested sub-segments.
    pub sub_length: f64,
    /// Forward (uu) or backward (ss) orbit, torus coordinates.
    pub orbit: Vec<Vec<f64>>,
    /// Smallest clearance `d(orbit, center) − radius` over the orbit.
    pub min_clearance: f64,
    /// Distance from the point to the grown leaf polyline.
    pub leaf_deviation: f64,
    pub certificate: Option<OrbitConeCertificate>,
    /// No balls to avoid: the start point is returned as is.
    pub trivial: bool,
}

fn covers_supports(map: &MapModel<f64>, avoid: &[Ball]) -> bool {
    map.supports().iter().all(|s| {
        avoid.iter().any(|b| {
            let d2: f64 = s.center.iter().zip(&b.center).map(|(&x, &c)| wrapped_delta(x, c).powi(2)).sum();
            d2.sqrt() + s.radius <= b.radius * (1.0 + 1e-12)
        })
    })
}

/// Choose the sub-arc of `seg` of length `ell` (as a chord) whose midpoint is
/// farthest from the balls and whose chord is free of them.
fn initial_window(seg: &StrongSegment, ell: f64, balls: &[Ball]) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut candidates: Vec<(f64, f64)> = seg
        .arc
        .iter()
        .filter(|&&s| s >= 0.5 * ell && s <= seg.length - 0.5 * ell)
        .map(|&s| (s, clearance(&seg.point_at(s), balls)))
        .filter(|&(_, c)| c > 0.0)
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    for &(s, _) in candidates.iter().take(32) {
        let a = seg.point_at(s - 0.5 * ell);
        let b = seg.point_at(s + 0.5 * ell);
        let dir: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        if blocked_intervals(&mid, &dir, -0.5, 0.5, balls).is_empty() {
            return Some((mid, dir));
        }
    }
    None
}

/// Nested-segment search: a point of the strong leaf segment of
/// length `length` through `x` whose forward (uu) or backward (ss) orbit stays
/// outside `avoid` for `horizon` steps, with the center-cone certificate along it.
///
/// `avoid` must cover the map's supports (so the map is linear off it) and
/// have radii below 1/4. Sub-segments have length `L/κ`, κ the linear strong
/// expansion of the side, so each image is again a segment of length `L`.
pub fn avoidance_search(
    map: &MapModel<f64>,
    x: &TorusPoint<f64>,
    side: Side,
    length: f64,
    avoid: &[Ball],
    horizon: usize,
    opts: &AvoidanceOptions,
) -> Result<AvoidanceResult> {
    let Some(aut) = map.automorphism() else {
        return Err(Error::Precondition("avoidance search needs a torus map".into()));
    };
    if let Some(b) = avoid.iter().find(|b| !(b.radius > 0.0 && b.radius < 0.25)) {
        return Err(Error::Precondition(format!("ball radius {} outside (0, 1/4)", b.radius)));
    }
    let field = ConeField::center(map.linear(), side, opts.theta)?;
    let direction = match side {
        Side::Uu => Direction::Forward,
        Side::Ss => Direction::Backward,
    };
    if avoid.is_empty() {
        return Ok(AvoidanceResult {
            side,
            start: x.coords().to_vec(),
            point: x.coords().to_vec(),
            exact: None,
            horizon: 0,
            sub_length: length,
            orbit: vec![x.coords().to_vec()],
            min_clearance: f64::INFINITY,
            leaf_deviation: 0.0,
            certificate: None,
            trivial: true,
        });
    }
    if !covers_supports(map, avoid) {
        return Err(Error::Precondition("avoided balls must cover the map's supports".into()));
    }
    let kappa = map.linear().strong_expansion(side);
    if !(kappa > 1.0) {
        return Err(Error::Precondition(format!("strong expansion {kappa} of side {side:?} is not > 1")));
    }
    let ell = length / kappa;
    let m = match side {
        Side::Uu => aut.matrix().clone(),
        Side::Ss => aut.inverse_matrix().clone(),
    };
    let growth = (0..m.nrows()).map(|i| m.row(i).iter().map(|a| a.unsigned_abs()).sum::<u64>()).max().unwrap_or(1);
    let s_bits = ((horizon as f64) * (growth.max(2) as f64).log2()).ceil() as u32 + GUARD_BITS;
    let k_bits = s_bits + DIR_BITS;
    let mask: BigInt = (BigInt::from(1) << k_bits) - 1;

    let seg = grow_leaf_with(map, x, side, length, opts.leaf_tol, None, &opts.leaf)?;
    let (mid, dir) = initial_window(&seg, ell, avoid).ok_or_else(|| Error::SearchFailed {
        step: 0,
        reason: format!("no sub-segment of length {ell:.4} of the leaf through {:?} avoids the balls", x.coords()),
    })?;

    // D₀ = {x₀ + σ w : |σ| ≤ 1/2}, w the chord
    let x0: Vec<BigInt> = mid.iter().map(|&t| dyadic(t - t.floor(), k_bits) & &mask).collect();
    let w0: Vec<BigInt> = dir.iter().map(|&t| dyadic(t, DIR_BITS)).collect();
    let mut q = x0.clone();
    let mut w = w0.clone();
    let mut s_total = BigInt::zero();
    let mut h = 0.5;
    for step in 1..=horizon {
        q = reduce(mat_big(&m, &q), &mask);
        w = mat_big(&m, &w);
        let qf: Vec<f64> = q.iter().map(|v| dyadic_to_f64(v, k_bits)).collect();
        let wf: Vec<f64> = w.iter().map(|v| dyadic_to_f64(v, DIR_BITS)).collect();
        let wn = crate::linalg::norm2(&wf);
        let h_next = 0.5 * ell / wn;
        let (sigma, _) = best_window(&qf, &wf, -h, h, h_next, avoid).ok_or_else(|| Error::SearchFailed {
            step,
            reason: format!("image segment of length {:.4} has no free sub-segment of length {ell:.4}", 2.0 * h * wn),
        })?;
        let ds = dyadic(sigma, s_bits);
        q = q.iter().zip(&w).map(|(a, b)| (a + &ds * b) & &mask).collect();
        s_total += ds;
        h = h_next;
    }

    // exact point and exact re-simulation of its orbit
    let xu: Vec<BigInt> = x0.iter().zip(&w0).map(|(a, b)| (a + &s_total * b) & &mask).collect();
    let mut p = xu.clone();
    let mut orbit = Vec::with_capacity(horizon + 1);
    let mut min_clear = f64::INFINITY;
    for step in 0..=horizon {
        let pf: Vec<f64> = p.iter().map(|v| dyadic_to_f64(v, k_bits)).collect();
        let c = clearance(&pf, avoid);
        if c <= 1e-12 {
            return Err(Error::SearchFailed { step, reason: format!("exact orbit came within {c:.3e} of a ball") });
        }
        min_clear = min_clear.min(c);
        orbit.push(pf);
        p = reduce(mat_big(&m, &p), &mask);
    }
    let point = orbit[0].clone();
    // the leaf is stored near x in the lift; compare with the nearest translate
    let near: Vec<f64> = point.iter().zip(&mid).map(|(a, b)| a + (b - a).round()).collect();
    let leaf_deviation = seg.distance_to(&near);

    let lifts: Vec<LiftPoint<f64>> = orbit.iter().map(|o| LiftPoint::new(o.clone())).collect();
    let steps: Vec<DMatrix<f64>> = match side {
        Side::Uu => lifts[..horizon].iter().map(|o| map.jacobian(o)).collect(),
        Side::Ss => lifts[1..]
            .iter()
            .map(|o| map.jacobian(o).try_inverse().ok_or(Error::InverseFailed { residual: f64::NAN }))
            .collect::<Result<_>>()?,
    };
    let certificate = certify_along(&lifts, &steps, &field, direction, &opts.certify);
    Ok(AvoidanceResult {
        side,
        start: x.coords().to_vec(),
        point,
        exact: Some(ExactPoint { log2_denominator: k_bits, numerators: xu.iter().map(|v| v.to_string()).collect() }),
        horizon,
        sub_length: ell,
        orbit,
        min_clearance: min_clear,
        leaf_deviation,
        certificate: Some(certificate),
        trivial: false,
    })
}

/// Constants of [`sh_saddle_certify`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShSaddleOptions {
    pub grid: usize,
    pub length: f64,
    pub horizon: usize,
    pub avoidance: AvoidanceOptions,
}

impl ShSaddleOptions {
    /// Grid-sweep defaults: leaves to 1e−6 at spacing L/64, and 8 cone samples
    /// per step from 2 expansion starts.
    pub fn new(grid: usize, length: f64, horizon: usize) -> Self {
        let avoidance = AvoidanceOptions {
            leaf_tol: 1e-6,
            leaf: LeafOptions { spacing: 1.0 / 64.0, ..Default::default() },
            certify: CertifyOptions { samples_per_step: 8, expansion_starts: 2, ..Default::default() },
            ..Default::default()
        };
        ShSaddleOptions { grid, length, horizon, avoidance }
    }
}

/// Per-side outcome at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideOutcome {
    pub pass: bool,
    pub min_clearance: f64,
    pub invariance_margin: f64,
    pub max_rate: f64,
    pub leaf_deviation: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPointOutcome {
    pub index: usize,
    pub point: Vec<f64>,
    pub uu: SideOutcome,
    pub ss: SideOutcome,
}

/// Grid-wide (d₁, d₂) SH-Saddle certificate at a finite horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShSaddleReport {
    pub d1: usize,
    pub d2: usize,
    pub grid: usize,
    pub length: f64,
    pub lambda0: f64,
    pub c: f64,
    pub horizon: usize,
    pub points: usize,
    pub passed_uu: usize,
    pub passed_ss: usize,
    pub min_clearance: f64,
    pub min_invariance_margin: f64,
    pub min_rate: f64,
    pub pass: bool,
    pub outcomes: Vec<GridPointOutcome>,
}

impl ShSaddleReport {
    pub fn failures(&self) -> impl Iterator<Item = &GridPointOutcome> {
        self.outcomes.iter().filter(|o| !(o.uu.pass && o.ss.pass))
    }
}

fn side_outcome(r: Result<AvoidanceResult>, lambda0: f64) -> SideOutcome {
    match r {
        Ok(a) => {
            let (inv, rate) = a.certificate.as_ref().map_or((f64::INFINITY, f64::INFINITY), |c| (c.invariance_margin, c.max_rate));
            let cert_ok = a.certificate.as_ref().is_none_or(|c| c.pass);
            SideOutcome {
                pass: cert_ok && rate >= lambda0 * (1.0 - super::certify::CERT_SLACK),
                min_clearance: a.min_clearance,
                invariance_margin: inv,
                max_rate: rate,
                leaf_deviation: a.leaf_deviation,
                error: None,
            }
        }
        Err(e) => SideOutcome {
            pass: false,
            min_clearance: f64::NAN,
            invariance_margin: f64::NAN,
            max_rate: f64::NAN,
            leaf_deviation: f64::NAN,
            error: Some(e.to_string()),
        },
    }
}

/// Grid points `i/g` of `[0,1)ⁿ` in lexicographic order (first coordinate slowest).
pub fn grid_points(n: usize, g: usize) -> Vec<Vec<f64>> {
    let total = g.pow(n as u32);
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut p = vec![0.0; n];
            for i in (0..n).rev() {
                p[i] = (rem % g) as f64 / g as f64;
                rem /= g;
            }
            p
        })
        .collect()
}

/// Runs the avoidance search on both sides at every grid point, avoiding the
/// map's supports (or `avoid` when given).
pub fn sh_saddle_certify(map: &MapModel<f64>, opts: &ShSaddleOptions, avoid: Option<&[Ball]>) -> Result<ShSaddleReport> {
    if !map.is_torus() {
        return Err(Error::Precondition("SH-Saddle certification needs a torus map".into()));
    }
    let balls: Vec<Ball> = match avoid {
        Some(b) => b.to_vec(),
        None => map.supports().iter().map(Ball::from).collect(),
    };
    let lin = map.linear();
    let d1 = ConeField::center(lin, Side::Uu, 1.0)?.dim();
    let d2 = ConeField::center(lin, Side::Ss, 1.0)?.dim();
    let pts = grid_points(map.n(), opts.grid.max(1));
    let lambda0 = opts.avoidance.certify.lambda0;
    let outcomes: Vec<GridPointOutcome> = pts
        .into_par_iter()
        .enumerate()
        .map(|(index, p)| {
            let x = TorusPoint::new(p.clone());
            let run = |side| avoidance_search(map, &x, side, opts.length, &balls, opts.horizon, &opts.avoidance);
            GridPointOutcome {
                index,
                point: p,
                uu: side_outcome(run(Side::Uu), lambda0),
                ss: side_outcome(run(Side::Ss), lambda0),
            }
        })
        .collect();
    let fold = |f: &dyn Fn(&SideOutcome) -> f64| {
        outcomes.iter().flat_map(|o| [f(&o.uu), f(&o.ss)]).filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min)
    };
    let passed_uu = outcomes.iter().filter(|o| o.uu.pass).count();
    let passed_ss = outcomes.iter().filter(|o| o.ss.pass).count();
    Ok(ShSaddleReport {
        d1,
        d2,
        grid: opts.grid,
        length: opts.length,
        lambda0,
        c: opts.avoidance.certify.c,
        horizon: opts.horizon,
        points: outcomes.len(),
        passed_uu,
        passed_ss,
        min_clearance: fold(&|s| s.min_clearance),
        min_invariance_margin: fold(&|s| s.invariance_margin),
        min_rate: fold(&|s| s.max_rate),
        pass: passed_uu == outcomes.len() && passed_ss == outcomes.len(),
        outcomes,
    })
}
