//! Hyperbolic splitting E^ss ⊕ E^ws ⊕ E^wu ⊕ E^uu of an integer matrix.

use std::ops::Range;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::integer::{determinant, unimodular_inverse, IntMatrix};
use crate::error::{Error, Result};
use crate::linalg::op_norm2;
use crate::scalar::Scalar;

/// Distance from the unit circle below which an eigenvalue counts as neutral.
pub const TOL_HYP: f64 = 1e-8;

/// The four invariant bundles, in eigenbasis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bundle {
    Ss,
    Ws,
    Wu,
    Uu,
}

impl Bundle {
    pub const ALL: [Bundle; 4] = [Bundle::Ss, Bundle::Ws, Bundle::Wu, Bundle::Uu];

    fn index(self) -> usize {
        self as usize
    }
}

/// Which strong direction a leaf or search refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Uu,
    Ss,
}

/// Partial hyperbolicity constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PHBounds {
    pub lambda_s: f64,
    pub lambda_c_minus: f64,
    pub lambda_c_plus: f64,
    pub lambda_u: f64,
}

impl PHBounds {
    pub fn is_valid(&self) -> bool {
        self.lambda_s > 0.0
            && self.lambda_s < 1.0
            && 1.0 < self.lambda_u
            && self.lambda_s < self.lambda_c_minus
            && self.lambda_c_minus <= self.lambda_c_plus
            && self.lambda_c_plus < self.lambda_u
    }
}

/// Real linear map with its eigen-structure, shared by toral automorphisms and
/// the Euclidean local models.
///
/// The eigenbasis `V` has one column per real eigenvalue and a column pair
/// `(p, q)` per complex pair `a ± ib` with `A[p q] = [p q]·[[a, b], [−b, a]]`.
/// Columns are grouped ss, ws, wu, uu and sorted by modulus inside each group.
#[derive(Clone, Debug)]
pub struct LinearPart<T: Scalar> {
    real: DMatrix<T>,
    real_inv: DMatrix<T>,
    eigenvalues: Vec<Complex<T>>,
    column_moduli: Vec<T>,
    moduli: Vec<T>,
    dims: [usize; 4],
    frames: [DMatrix<T>; 4],
    eigenbasis: DMatrix<T>,
    eigenbasis_inv: DMatrix<T>,
    block_form: DMatrix<T>,
}

/// A hyperbolic toral automorphism: integer matrix plus its splitting.
#[derive(Clone, Debug)]
pub struct ToralAutomorphism<T: Scalar> {
    matrix: IntMatrix,
    inverse_int: IntMatrix,
    det: i64,
    weak_band: (T, T),
    linear: LinearPart<T>,
}

impl<T: Scalar> std::ops::Deref for ToralAutomorphism<T> {
    type Target = LinearPart<T>;
    fn deref(&self) -> &LinearPart<T> {
        &self.linear
    }
}

struct Cluster<T> {
    value: Complex<T>,
    mult: usize,
}

fn cabs<T: Scalar>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

fn tol_sqrt_eps<T: Scalar>() -> T {
    T::eps().sqrt() * T::lit(10.0)
}

fn cluster_eigenvalues<T: Scalar>(mut ev: Vec<Complex<T>>) -> Vec<Cluster<T>> {
    ev.sort_by(|a, b| {
        a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap())
    });
    let tol = tol_sqrt_eps::<T>() * T::lit(10.0);
    let mut out: Vec<(Complex<T>, usize)> = Vec::new();
    for z in ev {
        if let Some((c, m)) = out.iter_mut().find(|(c, _)| {
            let d = *c - z;
            cabs(d) <= tol * (T::one() + cabs(z))
        }) {
            let k = T::lit(*m as f64);
            *c = (*c * k + z) / (k + T::one());
            *m += 1;
        } else {
            out.push((z, 1));
        }
    }
    // keep one representative per conjugate pair (im > 0) and the real ones
    let real_tol = tol;
    out.into_iter()
        .filter_map(|(c, m)| {
            if c.im.abs() <= real_tol * (T::one() + cabs(c)) {
                Some(Cluster { value: Complex::new(c.re, T::zero()), mult: m })
            } else if c.im > T::zero() {
                Some(Cluster { value: c, mult: m })
            } else {
                None
            }
        })
        .collect()
}

/// Orthonormal basis of the `dim` smallest right singular directions of `k`,
/// refusing if fewer than `dim` singular values are numerically zero.
fn null_space<T: Scalar>(k: DMatrix<T>, dim: usize, scale: T, at: f64) -> Result<DMatrix<T>> {
    let n = k.ncols();
    let svd = k.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let sv = svd.singular_values;
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[a].partial_cmp(&sv[b]).unwrap());
    let tol = tol_sqrt_eps::<T>() * scale;
    if idx.len() < dim || sv[idx[dim - 1]] > tol {
        return Err(Error::NotDiagonalizable { eigenvalue: at });
    }
    Ok(DMatrix::from_fn(n, dim, |r, c| vt[(idx[c], r)]))
}

fn normalize_sign<T: Scalar>(v: &mut DVector<T>) -> bool {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() + T::eps() * T::lit(64.0) {
            best = i;
        }
    }
    if v[best] < T::zero() {
        v.neg_mut();
        true
    } else {
        false
    }
}

impl<T: Scalar> ToralAutomorphism<T> {
    /// Splits `m` into strong/weak stable/unstable bundles relative to `weak_band = (low, high)`.
    pub fn new(m: &IntMatrix, weak_band: (f64, f64)) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::BadGeometry("matrix must be square and nonempty".into()));
        }
        if n > 32 {
            return Err(Error::BadGeometry("dimension above 32 is unsupported".into()));
        }
        let (low, high) = weak_band;
        if !(0.0 < low && low < 1.0 && 1.0 < high) {
            return Err(Error::BadGeometry(format!("weak band ({low}, {high}) must satisfy 0 < low < 1 < high")));
        }
        let det = determinant(m)?;
        if det.abs() != 1 {
            return Err(Error::NotUnimodular { det });
        }
        let real: DMatrix<T> = m.map(|x| T::lit(x as f64));
        let hyp_tol = TOL_HYP.max(T::eps().f64() * 10.0);
        let raw: Vec<Complex<T>> = real.clone().complex_eigenvalues().iter().cloned().collect();
        for z in &raw {
            let modulus = cabs(*z).f64();
            if (modulus - 1.0).abs() <= hyp_tol {
                return Err(Error::NotHyperbolic { modulus, tol: hyp_tol });
            }
        }
        let scale = T::one().max(op_norm2(&real));
        let id = DMatrix::<T>::identity(n, n);

        // eigen-blocks: (modulus, arg, columns, eigenvalue)
        let mut blocks: Vec<(T, T, Vec<DVector<T>>, Complex<T>)> = Vec::new();
        for cl in cluster_eigenvalues(raw) {
            let z = cl.value;
            if z.im == T::zero() {
                let ns = null_space(&real - &id * z.re, cl.mult, scale, z.re.f64())?;
                for c in 0..cl.mult {
                    let mut v: DVector<T> = ns.column(c).into_owned();
                    v.normalize_mut();
                    normalize_sign(&mut v);
                    blocks.push((z.re.abs(), if z.re < T::zero() { T::pi() } else { T::zero() }, vec![v], z));
                }
            } else {
                let (a, b) = (z.re, z.im);
                let k = &real * &real - &real * (a + a) + &id * (a * a + b * b);
                let ns = null_space(k, 2 * cl.mult, scale * scale, cabs(z).f64())?;
                let mut span: Vec<DVector<T>> = Vec::new();
                for _ in 0..cl.mult {
                    // next p: null direction with the largest residual off the current span
                    let mut best: Option<DVector<T>> = None;
                    for c in 0..ns.ncols() {
                        let mut cand: DVector<T> = ns.column(c).into_owned();
                        for s in &span {
                            let proj = s.dot(&cand);
                            cand -= s * proj;
                        }
                        if best.as_ref().is_none_or(|b| cand.norm() > b.norm()) {
                            best = Some(cand);
                        }
                    }
                    let p = best.expect("nonempty null space");
                    let q = (&p * a - &real * &p) / b;
                    let (p, q) = canonical_pair(p, q);
                    for v in [&p, &q] {
                        let mut w = v.clone();
                        for s in &span {
                            let proj = s.dot(&w);
                            w -= s * proj;
                        }
                        w.normalize_mut();
                        span.push(w);
                    }
                    blocks.push((cabs(z), z.im.atan2(z.re), vec![p, q], z));
                }
            }
        }
        blocks.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.partial_cmp(&y.1).unwrap()));

        let (lo, hi) = (T::lit(low), T::lit(high));
        let bundle_of = |modulus: T| {
            if modulus <= lo {
                Bundle::Ss
            } else if modulus < T::one() {
                Bundle::Ws
            } else if modulus < hi {
                Bundle::Wu
            } else {
                Bundle::Uu
            }
        };
        let mut cols: Vec<DVector<T>> = Vec::with_capacity(n);
        let mut eigenvalues = Vec::with_capacity(n);
        let mut column_moduli = Vec::with_capacity(n);
        let mut dims = [0usize; 4];
        let mut block_form = DMatrix::<T>::zeros(n, n);
        for b in Bundle::ALL {
            for (modulus, _, vs, z) in blocks.iter().filter(|blk| bundle_of(blk.0) == b) {
                let at = cols.len();
                if vs.len() == 1 {
                    block_form[(at, at)] = z.re;
                    eigenvalues.push(*z);
                } else {
                    block_form[(at, at)] = z.re;
                    block_form[(at, at + 1)] = z.im;
                    block_form[(at + 1, at)] = -z.im;
                    block_form[(at + 1, at + 1)] = z.re;
                    eigenvalues.push(*z);
                    eigenvalues.push(z.conj());
                }
                for v in vs {
                    cols.push(v.clone());
                    column_moduli.push(*modulus);
                }
                dims[b.index()] += vs.len();
            }
        }
        if cols.len() != n {
            return Err(Error::NotDiagonalizable { eigenvalue: f64::NAN });
        }
        let eigenbasis = DMatrix::from_columns(&cols);
        let eigenbasis_inv = eigenbasis
            .clone()
            .try_inverse()
            .ok_or(Error::NotDiagonalizable { eigenvalue: f64::NAN })?;
        let defect = op_norm2(&(&real * &eigenbasis - &eigenbasis * &block_form));
        if defect > tol_sqrt_eps::<T>() * scale {
            return Err(Error::NotDiagonalizable { eigenvalue: defect.f64() });
        }

        let mut start = 0;
        let frames = Bundle::ALL.map(|b| {
            let d = dims[b.index()];
            let block = eigenbasis.columns(start, d).into_owned();
            start += d;
            orthonormal_frame(block)
        });
        let mut moduli = column_moduli.clone();
        moduli.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let inverse_int = unimodular_inverse(m)?;
        let real_inv = inverse_int.map(|x| T::lit(x as f64));
        Ok(ToralAutomorphism {
            matrix: m.clone(),
            inverse_int,
            det: det as i64,
            weak_band: (lo, hi),
            linear: LinearPart {
                real,
                real_inv,
                eigenvalues,
                column_moduli,
                moduli,
                dims,
                frames,
                eigenbasis,
                eigenbasis_inv,
                block_form,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }
    pub fn inverse_matrix(&self) -> &IntMatrix {
        &self.inverse_int
    }
    pub fn det(&self) -> i64 {
        self.det
    }
    pub fn weak_band(&self) -> (T, T) {
        self.weak_band
    }
    pub fn linear(&self) -> &LinearPart<T> {
        &self.linear
    }
}

impl<T: Scalar> LinearPart<T> {
    /// Diagonal model `diag(d)` whose coordinate `i` belongs to `bundles[i]`.
    pub fn diagonal(d: &[f64], bundles: &[Bundle]) -> Result<Self> {
        let n = d.len();
        if n == 0 || bundles.len() != n {
            return Err(Error::BadGeometry("diagonal model needs one bundle per coordinate".into()));
        }
        for (&v, &b) in d.iter().zip(bundles) {
            let ok = match b {
                Bundle::Ss | Bundle::Ws => v.abs() < 1.0 && v != 0.0,
                Bundle::Wu | Bundle::Uu => v.abs() > 1.0,
            };
            if !ok {
                return Err(Error::NotHyperbolicLinearPart(format!("eigenvalue {v} inconsistent with bundle {b:?}")));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            (bundles[a] as usize).cmp(&(bundles[b] as usize)).then(d[a].abs().partial_cmp(&d[b].abs()).unwrap())
        });
        let mut dims = [0usize; 4];
        for b in bundles {
            dims[*b as usize] += 1;
        }
        let eigenbasis = DMatrix::from_fn(n, n, |r, c| if order[c] == r { T::one() } else { T::zero() });
        let eigenbasis_inv = eigenbasis.transpose();
        let real = DMatrix::from_fn(n, n, |r, c| if r == c { T::lit(d[r]) } else { T::zero() });
        let real_inv = DMatrix::from_fn(n, n, |r, c| if r == c { T::one() / T::lit(d[r]) } else { T::zero() });
        let block_form = DMatrix::from_fn(n, n, |r, c| if r == c { T::lit(d[order[r]]) } else { T::zero() });
        let column_moduli: Vec<T> = order.iter().map(|&i| T::lit(d[i].abs())).collect();
        let eigenvalues = order.iter().map(|&i| Complex::new(T::lit(d[i]), T::zero())).collect();
        let mut moduli = column_moduli.clone();
        moduli.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut start = 0;
        let frames = Bundle::ALL.map(|b| {
            let k = dims[b as usize];
            let f = eigenbasis.columns(start, k).into_owned();
            start += k;
            f
        });
        Ok(LinearPart { real, real_inv, eigenvalues, column_moduli, moduli, dims, frames, eigenbasis, eigenbasis_inv, block_form })
    }

    pub fn n(&self) -> usize {
        self.real.nrows()
    }
    /// `A` as a real matrix.
    pub fn real(&self) -> &DMatrix<T> {
        &self.real
    }
    /// `A⁻¹` (exact integer inverse, cast).
    pub fn real_inverse(&self) -> &DMatrix<T> {
        &self.real_inv
    }
    /// Eigenvalue moduli with multiplicity, ascending.
    pub fn moduli(&self) -> &[T] {
        &self.moduli
    }
    /// Eigenvalue attached to each eigenbasis column.
    pub fn eigenvalues(&self) -> &[Complex<T>] {
        &self.eigenvalues
    }
    pub fn column_moduli(&self) -> &[T] {
        &self.column_moduli
    }
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    pub fn dim(&self, b: Bundle) -> usize {
        self.dims[b.index()]
    }
    /// Orthonormal frame (n × dim) of a bundle.
    pub fn frame(&self, b: Bundle) -> &DMatrix<T> {
        &self.frames[b.index()]
    }
    /// Real eigenbasis `V`; eigen-coordinates are `V⁻¹x`.
    pub fn eigenbasis(&self) -> &DMatrix<T> {
        &self.eigenbasis
    }
    pub fn eigenbasis_inv(&self) -> &DMatrix<T> {
        &self.eigenbasis_inv
    }
    /// `D = V⁻¹AV`: diagonal with 2 × 2 rotation-scaling blocks.
    pub fn block_form(&self) -> &DMatrix<T> {
        &self.block_form
    }
    /// Eigenbasis column range of a bundle.
    pub fn range(&self, b: Bundle) -> Range<usize> {
        let start: usize = self.dims[..b.index()].iter().sum();
        start..start + self.dims[b.index()]
    }
    pub fn stable_range(&self) -> Range<usize> {
        0..self.dims[0] + self.dims[1]
    }
    pub fn unstable_range(&self) -> Range<usize> {
        self.dims[0] + self.dims[1]..self.n()
    }
    pub fn center_range(&self) -> Range<usize> {
        self.dims[0]..self.dims[0] + self.dims[1] + self.dims[2]
    }
    /// Bundle carrying the strong direction of a side: the strong bundle if
    /// present, else the whole weak bundle of that side (2-torus case).
    pub fn strong_bundle(&self, side: Side) -> Bundle {
        match side {
            Side::Uu if self.dims[3] > 0 => Bundle::Uu,
            Side::Uu => Bundle::Wu,
            Side::Ss if self.dims[0] > 0 => Bundle::Ss,
            Side::Ss => Bundle::Ws,
        }
    }
    /// Smallest (uu) or inverse-largest (ss) modulus on a side's strong bundle:
    /// the guaranteed per-step length expansion of strong segments.
    pub fn strong_expansion(&self, side: Side) -> T {
        let r = self.range(self.strong_bundle(side));
        let m = &self.column_moduli[r];
        match side {
            Side::Uu => m.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b)),
            Side::Ss => T::one() / m.iter().copied().fold(T::zero(), |a, b| a.max(b)),
        }
    }
    /// Modulus extrema `(min, max)` over a bundle, `None` when it is trivial.
    pub fn bundle_moduli(&self, b: Bundle) -> Option<(T, T)> {
        let m = &self.column_moduli[self.range(b)];
        let first = *m.first()?;
        Some(m.iter().fold((first, first), |(lo, hi), &x| (lo.min(x), hi.max(x))))
    }
    /// Invariance residual ‖A F − F (FᵀAF)‖ of a bundle frame.
    pub fn frame_residual(&self, b: Bundle) -> T {
        let f = self.frame(b);
        if f.ncols() == 0 {
            return T::zero();
        }
        op_norm2(&(&self.real * f - f * (f.transpose() * &self.real * f)))
    }
    /// Partial hyperbolicity constants of the linear map itself, if both strong bundles exist.
    pub fn linear_ph_bounds(&self) -> Option<PHBounds> {
        let (_, ss_hi) = self.bundle_moduli(Bundle::Ss)?;
        let (uu_lo, _) = self.bundle_moduli(Bundle::Uu)?;
        let c = self.center_range();
        let cm = &self.column_moduli[c];
        let lo = cm.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b));
        let hi = cm.iter().copied().fold(T::zero(), |a, b| a.max(b));
        Some(PHBounds { lambda_s: ss_hi.f64(), lambda_c_minus: lo.f64(), lambda_c_plus: hi.f64(), lambda_u: uu_lo.f64() })
    }
}

/// Rotates a complex-pair basis to principal axes (p ⊥ q, ‖p‖ ≥ ‖q‖) and scales ‖p‖ = 1.
fn canonical_pair<T: Scalar>(p: DVector<T>, q: DVector<T>) -> (DVector<T>, DVector<T>) {
    let two = T::lit(2.0);
    let t = (two * p.dot(&q)).atan2(p.norm_squared() - q.norm_squared()) / two;
    let (s, c) = t.sin_cos();
    let mut p2 = &p * c + &q * s;
    let mut q2 = &q * c - &p * s;
    let scale = p2.norm();
    p2 /= scale;
    q2 /= scale;
    if normalize_sign(&mut p2) {
        q2.neg_mut();
    }
    (p2, q2)
}

fn orthonormal_frame<T: Scalar>(block: DMatrix<T>) -> DMatrix<T> {
    let (n, d) = block.shape();
    if d == 0 {
        return DMatrix::zeros(n, 0);
    }
    let mut q = block.qr().q();
    // fix QR's sign ambiguity so frames are reproducible
    for c in 0..d {
        let mut col: DVector<T> = q.column(c).into_owned();
        normalize_sign(&mut col);
        q.set_column(c, &col);
    }
    q
}

/// Convenience wrapper with the operation's conventional name.
pub fn compute_splitting<T: Scalar>(m: &IntMatrix, weak_band: (f64, f64)) -> Result<ToralAutomorphism<T>> {
    ToralAutomorphism::new(m, weak_band)
}
