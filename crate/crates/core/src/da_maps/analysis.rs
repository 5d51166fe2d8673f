//! Numerical checks of a map: finite-difference Jacobians, measured partial
//! hyperbolicity constants, and the "linear outside the supports" property.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::MapModel;
use crate::linalg::{co_norm2, op_norm2};
use crate::scalar::Scalar;
use crate::torus_linear::{LiftPoint, PHBounds};

/// Outcome of comparing the analytic Jacobian with central differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub points: usize,
    pub near_kink: usize,
    /// Largest relative error away from kinks.
    pub max_rel_error: f64,
    /// Largest relative error within 10 steps of a kink.
    pub max_rel_error_near_kink: f64,
    pub worst_point: Vec<f64>,
}

impl FdReport {
    /// 1e−6 away from kinks, 1e−4 near them.
    pub fn passes(&self) -> bool {
        self.max_rel_error <= 1e-6 && self.max_rel_error_near_kink <= 1e-4
    }
}

/// Relative max-entry error of the central-difference Jacobian at `x`; the
/// step is `step·max(1, ‖x‖∞)`.
pub fn fd_error<T: Scalar>(map: &MapModel<T>, x: &[T], step: T) -> T {
    let n = map.n();
    let step = step * x.iter().fold(T::one(), |a, v| a.max(v.abs()));
    let mut xp = x.to_vec();
    let mut fp = vec![T::zero(); n];
    let mut fm = vec![T::zero(); n];
    let j = map.jacobian(&LiftPoint::new(x.to_vec()));
    let mut err = T::zero();
    for c in 0..n {
        xp[c] = x[c] + step;
        map.eval_slice(&xp, &mut fp);
        xp[c] = x[c] - step;
        map.eval_slice(&xp, &mut fm);
        xp[c] = x[c];
        for r in 0..n {
            let fd = (fp[r] - fm[r]) / (step + step);
            err = err.max((fd - j[(r, c)]).abs());
        }
    }
    let scale = j.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    err / scale
}

/// Finite-difference check over `points`, relaxing the tolerance near kinks.
pub fn fd_check<T: Scalar>(map: &MapModel<T>, points: &[Vec<T>], step: T) -> FdReport {
    let vinv = op_norm2(map.linear().eigenbasis_inv());
    let mut rep = FdReport { points: points.len(), near_kink: 0, max_rel_error: 0.0, max_rel_error_near_kink: 0.0, worst_point: vec![] };
    let mut worst = -1.0;
    for x in points {
        let e = fd_error(map, x, step).f64();
        let h = step * x.iter().fold(T::one(), |a, v| a.max(v.abs()));
        let near = map.kink_distance(x).is_some_and(|d| d <= T::lit(10.0) * h * vinv);
        if near {
            rep.near_kink += 1;
            rep.max_rel_error_near_kink = rep.max_rel_error_near_kink.max(e);
        } else {
            rep.max_rel_error = rep.max_rel_error.max(e);
        }
        if e > worst {
            worst = e;
            rep.worst_point = x.iter().map(|v| v.f64()).collect();
        }
    }
    rep
}

/// Largest `‖f̃(x) − (A·x + shift)‖` over the points that lie outside every support.
pub fn linear_outside_defect<T: Scalar>(map: &MapModel<T>, points: &[Vec<T>]) -> (usize, f64) {
    let n = map.n();
    let a = map.linear_matrix();
    let mut out = vec![T::zero(); n];
    let mut count = 0;
    let mut worst = 0.0f64;
    for x in points.iter().filter(|x| !map.in_support(x)) {
        count += 1;
        map.eval_slice(x, &mut out);
        for i in 0..n {
            let lin = (0..n).fold(map.lift_shift()[i], |s, j| s + a[(i, j)] * x[j]);
            worst = worst.max((out[i] - lin).abs().f64());
        }
    }
    (count, worst)
}

/// Partial hyperbolicity constants measured on a `gridⁿ` grid.
///
/// Strong rates are the linear part's; the center interval is the envelope of
/// the co-norm and norm of the center block of `V⁻¹·Df·V` over grid points in
/// the supports, together with the linear center moduli. `None` without both
/// strong bundles.
pub fn measured_ph_bounds<T: Scalar>(map: &MapModel<T>, grid: usize) -> Option<PHBounds> {
    let mut b = map.linear().linear_ph_bounds()?;
    let n = map.n();
    let c = map.linear().center_range();
    let (lo_box, width) = if map.is_torus() {
        (vec![T::zero(); n], T::one())
    } else {
        // a cube around the supports of the Euclidean model
        let r = map.supports().iter().fold(T::zero(), |a, s| a.max(s.radius));
        (vec![-r; n], r + r)
    };
    let g = grid.max(1);
    let total = g.pow(n as u32);
    let chunk = g.pow(n.saturating_sub(1) as u32).max(1);
    let (lo, hi) = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|block| {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            let mut x = vec![T::zero(); n];
            for idx in block * chunk..((block + 1) * chunk).min(total) {
                let mut rem = idx;
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = lo_box[i] + width * T::lit((rem % g) as f64 + 0.5) / T::lit(g as f64);
                    rem /= g;
                }
                if !map.in_support(&x) {
                    continue;
                }
                let je = map.jacobian_eigen(&LiftPoint::new(x.clone()));
                let cb = je.view((c.start, c.start), (c.len(), c.len())).into_owned();
                lo = lo.min(co_norm2(&cb).f64());
                hi = hi.max(op_norm2(&cb).f64());
            }
            (lo, hi)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    b.lambda_c_minus = b.lambda_c_minus.min(lo);
    b.lambda_c_plus = b.lambda_c_plus.max(hi);
    Some(b)
}

/// Smallest `det Df` over `points`, with the point attaining it. A nonpositive
/// value means the map folds and is not a diffeomorphism.
pub fn min_jacobian_determinant<T: Scalar>(map: &MapModel<T>, points: &[Vec<T>]) -> (f64, Vec<T>) {
    points
        .par_iter()
        .map(|x| (map.jacobian(&LiftPoint::new(x.clone())).determinant().f64(), x.clone()))
        .reduce(|| (f64::INFINITY, Vec::new()), |a, b| if b.0 < a.0 { b } else { a })
}
