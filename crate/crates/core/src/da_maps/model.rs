//! `MapModel`: evaluation, Jacobians and inversion of a compiled `MapSpec`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::local::{to_dmatrix, FlattenParams, JacMode, LocalPiece, PlanarParams, MAX_N};
use super::spec::{ConstructionSpec, DomainSpec, MapSpec, MatrixFrame, SurgerySpec};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, norm2, op_norm2};
use crate::profiles::{ProfileRecord, SmoothCutoff};
use crate::scalar::Scalar;
use crate::torus_linear::{
    project, torus_dist2, IntMatrix, LiftPoint, LinearPart, PHBounds, ToralAutomorphism, TorusPoint,
};

/// What a support ball belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportKind {
    Construction,
    Surgery,
    Bump,
}

/// A ball outside of which a layer of the map is inactive.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportBall<T> {
    pub label: String,
    pub kind: SupportKind,
    pub center: Vec<T>,
    pub radius: T,
}

#[derive(Clone, Debug)]
enum Domain<T: Scalar> {
    Torus(ToralAutomorphism<T>),
    Euclidean(LinearPart<T>),
}

#[derive(Clone, Debug)]
struct SurgeryPiece<T> {
    center: Vec<T>,
    /// Sum of the local-piece perturbations at `center`.
    delta_p: Vec<T>,
    /// `B`, `B − I` and `B − A`, row-major.
    b: Vec<T>,
    b_minus_i: Vec<T>,
    b_minus_a: Vec<T>,
    cutoff: SmoothCutoff<T>,
    eta: T,
}

#[derive(Clone, Debug)]
struct BumpPiece<T> {
    center: Vec<T>,
    radius: T,
    amplitude: Vec<T>,
}

/// A derived-from-Anosov map (or a Euclidean local model) built from a [`MapSpec`].
///
/// The lift is `f̃(x) = A·x + Σ local pieces + lift_shift`, then each surgery
/// blends toward its affine target, then bumps are added. Pure and `Sync`.
#[derive(Clone, Debug)]
pub struct MapModel<T: Scalar> {
    spec: MapSpec,
    domain: Domain<T>,
    n: usize,
    a: DMatrix<T>,
    a_minus_i: DMatrix<T>,
    v: DMatrix<T>,
    v_inv: DMatrix<T>,
    d_minus_i: DMatrix<T>,
    shift: Vec<T>,
    pieces: Vec<LocalPiece<T>>,
    surgeries: Vec<SurgeryPiece<T>>,
    bumps: Vec<BumpPiece<T>>,
    supports: Vec<SupportBall<T>>,
}

/// Tolerance for "p is a fixed point".
pub const FIXED_TOL: f64 = 1e-9;

impl<T: Scalar> MapModel<T> {
    /// Compiles and validates a spec.
    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let domain = match &spec.domain {
            DomainSpec::Torus { matrix, weak_band } => {
                let n = matrix.len();
                if matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::BadGeometry("matrix must be square".into()));
                }
                let m = IntMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                Domain::Torus(ToralAutomorphism::new(&m, (weak_band[0], weak_band[1]))?)
            }
            DomainSpec::Euclidean { diagonal, bundles } => Domain::Euclidean(LinearPart::diagonal(diagonal, bundles)?),
        };
        let lin = match &domain {
            Domain::Torus(t) => t.linear(),
            Domain::Euclidean(l) => l,
        };
        let n = lin.n();
        if n > MAX_N {
            return Err(Error::UnsupportedDimension(n));
        }
        let shift = if spec.lift_shift.is_empty() {
            vec![T::zero(); n]
        } else if spec.lift_shift.len() == n && matches!(domain, Domain::Torus(_)) {
            spec.lift_shift.iter().map(|&k| T::lit(k as f64)).collect()
        } else {
            return Err(Error::BadGeometry("lift_shift needs one integer per coordinate on a torus".into()));
        };
        let a = lin.real().clone();
        let id = DMatrix::<T>::identity(n, n);
        let mut model = MapModel {
            spec: spec.clone(),
            n,
            a_minus_i: &a - &id,
            a,
            v: lin.eigenbasis().clone(),
            v_inv: lin.eigenbasis_inv().clone(),
            d_minus_i: lin.block_form() - &id,
            shift,
            pieces: vec![],
            surgeries: vec![],
            bumps: vec![],
            supports: vec![],
            domain,
        };
        for (i, c) in spec.constructions.iter().enumerate() {
            let piece = model.compile_construction(i, c)?;
            for (q, other) in model.pieces.iter().enumerate() {
                let d = model.dist(&piece.center, &other.center);
                if d <= T::lit(2.0) * piece.radius.max(other.radius) {
                    return Err(Error::OverlappingSupports {
                        a: model.supports[q].label.clone(),
                        b: piece.label.clone(),
                    });
                }
            }
            model.supports.push(SupportBall {
                label: piece.label.clone(),
                kind: SupportKind::Construction,
                center: piece.center.clone(),
                radius: piece.radius,
            });
            model.pieces.push(piece);
        }
        let nc = model.supports.len();
        for (i, s) in spec.surgeries.iter().enumerate() {
            let label = s.label.clone().unwrap_or_else(|| format!("surgery-{i}"));
            let piece = model.compile_surgery(s, &label)?;
            for (q, other) in model.surgeries.iter().enumerate() {
                let d = model.dist(&piece.center, &other.center);
                if d <= T::lit(2.0) * piece.cutoff.outer().max(other.cutoff.outer()) {
                    return Err(Error::OverlappingSupports { a: model.supports[nc + q].label.clone(), b: label });
                }
            }
            model.supports.push(SupportBall {
                label,
                kind: SupportKind::Surgery,
                center: piece.center.clone(),
                radius: piece.cutoff.outer(),
            });
            model.surgeries.push(piece);
        }
        for (i, b) in spec.bumps.iter().enumerate() {
            if b.center.len() != n || b.amplitude.len() != n || !(b.radius > 0.0) {
                return Err(Error::BadGeometry(format!("bump {i} malformed")));
            }
            if model.is_torus() && b.radius >= 0.5 {
                return Err(Error::BadGeometry(format!("bump {i} radius must be below 1/2")));
            }
            let center = model.canonical(&b.center);
            model.supports.push(SupportBall {
                label: format!("bump-{i}"),
                kind: SupportKind::Bump,
                center: center.clone(),
                radius: T::lit(b.radius),
            });
            model.bumps.push(BumpPiece {
                center,
                radius: T::lit(b.radius),
                amplitude: b.amplitude.iter().map(|&a| T::lit(a)).collect(),
            });
        }
        Ok(model)
    }

    fn canonical(&self, p: &[f64]) -> Vec<T> {
        if self.is_torus() {
            TorusPoint::new(p.iter().map(|&c| T::lit(c)).collect()).coords().to_vec()
        } else {
            p.iter().map(|&c| T::lit(c)).collect()
        }
    }

    fn compile_construction(&self, i: usize, c: &ConstructionSpec) -> Result<LocalPiece<T>> {
        let n = self.n;
        let label = c.label().map_or_else(|| format!("construction-{i}"), str::to_owned);
        if c.point().len() != n {
            return Err(Error::BadGeometry(format!("{label}: point has wrong dimension")));
        }
        let center = self.canonical(c.point());
        // centers must be fixed by the linear part
        let mut img = vec![T::zero(); n];
        crate::linalg::mat_vec(&self.a_minus_i, &center, &mut img);
        let defect = match self.domain {
            Domain::Torus(_) => img.iter().fold(0.0f64, |a, &t| a.max((t - t.round()).abs().f64())),
            Domain::Euclidean(_) => img.iter().fold(0.0f64, |a, &t| a.max(t.abs().f64())),
        };
        if defect > FIXED_TOL {
            return Err(Error::NotAFixedPoint { defect });
        }
        let lin = self.linear();
        let piece = match c {
            ConstructionSpec::PlanarMix { profile, eps, strong_cutoff, .. } => LocalPiece::planar(
                label.clone(),
                center,
                lin,
                &PlanarParams { profile, eps: *eps, strong_cutoff: *strong_cutoff },
            )?,
            ConstructionSpec::Flatten { factors, lambda, eps, delta, blend, strong_cutoff, .. } => {
                LocalPiece::flatten(
                    label.clone(),
                    center,
                    lin,
                    &FlattenParams {
                        factors,
                        lambda: *lambda,
                        eps: *eps,
                        delta: *delta,
                        blend,
                        strong_cutoff: *strong_cutoff,
                    },
                )?
            }
        };
        if self.is_torus() && piece.radius >= T::lit(0.5) {
            return Err(Error::BadGeometry(format!(
                "{label}: support radius {} does not inject into the torus",
                piece.radius.f64()
            )));
        }
        Ok(piece)
    }

    fn compile_surgery(&self, s: &SurgerySpec, label: &str) -> Result<SurgeryPiece<T>> {
        let n = self.n;
        if s.point.len() != n {
            return Err(Error::BadGeometry(format!("{label}: point has wrong dimension")));
        }
        if !(s.radius > 0.0) || (self.is_torus() && s.radius >= 0.5) {
            return Err(Error::BadGeometry(format!("{label}: radius must lie in (0, 1/2)")));
        }
        if !(s.inner_ratio > 0.0 && s.inner_ratio < 1.0) {
            return Err(Error::BadGeometry(format!("{label}: inner_ratio must lie in (0, 1)")));
        }
        let raw: DMatrix<T> = from_rows(&s.matrix)
            .filter(|m| m.shape() == (n, n))
            .ok_or_else(|| Error::BadGeometry(format!("{label}: target matrix must be {n}×{n}")))?;
        let b = match s.frame {
            MatrixFrame::Standard => raw,
            MatrixFrame::Eigen => &self.v * raw * &self.v_inv,
        };
        if b.clone().lu().determinant().abs() <= T::eps() {
            return Err(Error::BadGeometry(format!("{label}: target matrix is singular")));
        }
        let center = self.canonical(&s.point);
        let mut target = vec![T::zero(); n];
        let mut delta_p = vec![T::zero(); n];
        let mut jac = vec![T::zero(); n * n];
        self.eval_layers_inner(&center, &mut target, Some((&mut jac, JacMode::Delta)), self.surgeries.len(), false, &mut delta_p);
        let defect = if self.is_torus() { torus_dist2(&target, &center) } else { dist2(&target, &center) }
            .sqrt()
            .f64();
        if defect > FIXED_TOL {
            return Err(Error::NotAFixedPoint { defect });
        }
        let eta = match s.eta {
            Some(e) => T::lit(e),
            None => op_norm2(&(&b - to_dmatrix(n, &jac))),
        };
        let id = DMatrix::<T>::identity(n, n);
        let row_major = |m: &DMatrix<T>| (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|ij| m[ij]).collect();
        Ok(SurgeryPiece {
            center,
            delta_p,
            b_minus_i: row_major(&(&b - &id)),
            b_minus_a: row_major(&(&b - &self.a)),
            b: row_major(&b),
            cutoff: SmoothCutoff::new(T::lit(s.radius * s.inner_ratio), T::lit(s.radius), s.blend)?,
            eta,
        })
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn is_torus(&self) -> bool {
        matches!(self.domain, Domain::Torus(_))
    }
    /// Eigen-data of the linear part.
    pub fn linear(&self) -> &LinearPart<T> {
        match &self.domain {
            Domain::Torus(t) => t.linear(),
            Domain::Euclidean(l) => l,
        }
    }
    /// The toral automorphism, for torus maps.
    pub fn automorphism(&self) -> Option<&ToralAutomorphism<T>> {
        match &self.domain {
            Domain::Torus(t) => Some(t),
            Domain::Euclidean(_) => None,
        }
    }
    /// `A` as a real matrix.
    pub fn linear_matrix(&self) -> &DMatrix<T> {
        &self.a
    }
    pub fn lift_shift(&self) -> &[T] {
        &self.shift
    }
    pub fn supports(&self) -> &[SupportBall<T>] {
        &self.supports
    }
    /// Declared C¹ sizes of the surgeries, in order.
    pub fn surgery_etas(&self) -> Vec<T> {
        self.surgeries.iter().map(|s| s.eta).collect()
    }
    /// Profiles used by the local constructions.
    pub fn profile_records(&self) -> Vec<ProfileRecord> {
        self.pieces.iter().flat_map(|p| p.records.iter().cloned()).collect()
    }
    /// Whether the map is exactly linear (no layers at all).
    pub fn is_linear(&self) -> bool {
        self.pieces.is_empty() && self.surgeries.is_empty() && self.bumps.is_empty()
    }

    /// Claimed partial hyperbolicity constants: the linear part's, when it has
    /// both strong bundles. Measured bounds come from [`super::measured_ph_bounds`].
    pub fn ph_bounds(&self) -> Option<PHBounds> {
        self.linear().linear_ph_bounds()
    }

    #[inline]
    fn dist(&self, a: &[T], b: &[T]) -> T {
        if self.is_torus() {
            torus_dist2(a, b).sqrt()
        } else {
            dist2(a, b).sqrt()
        }
    }

    /// `z = x − (nearest lift of c)` and the integer offset of that lift.
    #[inline]
    fn offset(&self, x: &[T], c: &[T], z: &mut [T], m: &mut [T]) {
        let torus = self.is_torus();
        for i in 0..x.len() {
            let d = x[i] - c[i];
            let k = if torus { d.round() } else { T::zero() };
            z[i] = d - k;
            m[i] = k;
        }
    }

    /// Whether `x` lies in some support ball (of any layer).
    pub fn in_support(&self, x: &[T]) -> bool {
        self.supports.iter().any(|s| self.dist(x, &s.center) < s.radius)
    }

    /// Evaluates layers, optionally with the Jacobian (row-major, in `mode`).
    /// `surgeries` limits how many surgeries are applied; `bumps` toggles bumps.
    fn eval_layers(&self, x: &[T], out: &mut [T], jac: Option<(&mut [T], JacMode)>, surgeries: usize, bumps: bool) {
        let mut dsum = [T::zero(); MAX_N];
        self.eval_layers_inner(x, out, jac, surgeries, bumps, &mut dsum[..self.n]);
    }

    /// As `eval_layers`, also returning the summed local-piece perturbation in `dsum`.
    fn eval_layers_inner(
        &self,
        x: &[T],
        out: &mut [T],
        mut jac: Option<(&mut [T], JacMode)>,
        surgeries: usize,
        bumps: bool,
        dsum: &mut [T],
    ) {
        let n = self.n;
        dsum.iter_mut().for_each(|d| *d = T::zero());
        debug_assert_eq!(x.len(), n);
        let mut z = [T::zero(); MAX_N];
        let mut k = [T::zero(); MAX_N];
        let mut y = [T::zero(); MAX_N];
        let mut dy = [T::zero(); MAX_N];
        for i in 0..n {
            let mut s = self.shift[i];
            for j in 0..n {
                s += self.a[(i, j)] * x[j];
            }
            out[i] = s;
        }
        let base = match jac.as_ref().map(|(_, m)| *m) {
            Some(JacMode::Delta) => Some(&self.a),
            Some(JacMode::MinusIdentity) => Some(&self.a_minus_i),
            None => None,
        };
        if let (Some((j, _)), Some(b)) = (jac.as_mut(), base) {
            for r in 0..n {
                for c in 0..n {
                    j[r * n + c] = b[(r, c)];
                }
            }
        }
        for piece in &self.pieces {
            self.offset(x, &piece.center, &mut z[..n], &mut k[..n]);
            if dist2(&z[..n], &[T::zero(); MAX_N][..n]) >= piece.radius * piece.radius {
                continue;
            }
            for i in 0..n {
                let mut s = T::zero();
                for j in 0..n {
                    s += self.v_inv[(i, j)] * z[j];
                }
                y[i] = s;
                dy[i] = T::zero();
            }
            match jac.as_mut() {
                None => {
                    if !piece.eval(&y[..n], &mut dy[..n]) {
                        continue;
                    }
                }
                Some((j, mode)) => {
                    let mut m = [T::zero(); MAX_N * MAX_N];
                    if *mode == JacMode::MinusIdentity {
                        for r in 0..n {
                            for c in 0..n {
                                m[r * n + c] = self.d_minus_i[(r, c)];
                            }
                        }
                    }
                    if !piece.eval_jac(&y[..n], &mut dy[..n], &mut m[..n * n], *mode) {
                        continue;
                    }
                    // J = V·M·V⁻¹ (+ A in delta mode, which is already in `j`)
                    let mut mv = [T::zero(); MAX_N * MAX_N];
                    for r in 0..n {
                        for c in 0..n {
                            let mut s = T::zero();
                            for t in 0..n {
                                s += m[r * n + t] * self.v_inv[(t, c)];
                            }
                            mv[r * n + c] = s;
                        }
                    }
                    for r in 0..n {
                        for c in 0..n {
                            let mut s = T::zero();
                            for t in 0..n {
                                s += self.v[(r, t)] * mv[t * n + c];
                            }
                            match mode {
                                JacMode::Delta => j[r * n + c] += s,
                                JacMode::MinusIdentity => j[r * n + c] = s,
                            }
                        }
                    }
                }
            }
            for i in 0..n {
                let mut s = T::zero();
                for j in 0..n {
                    s += self.v[(i, j)] * dy[j];
                }
                out[i] += s;
                dsum[i] += s;
            }
        }
        for sp in self.surgeries.iter().take(surgeries) {
            self.offset(x, &sp.center, &mut z[..n], &mut k[..n]);
            let t = norm2(&z[..n]);
            if t >= sp.cutoff.outer() {
                continue;
            }
            let s = sp.cutoff.value(t);
            let ds = sp.cutoff.derivative(t);
            // f(p) + A·k + B·z − f(x) = (B − A)·z − (Δ(x) − Δ(p)), free of cancellation
            let mut diff = [T::zero(); MAX_N];
            for i in 0..n {
                let mut v = sp.delta_p[i] - dsum[i];
                for j in 0..n {
                    v += sp.b_minus_a[i * n + j] * z[j];
                }
                diff[i] = v;
            }
            if let Some((j, mode)) = jac.as_mut() {
                let bb = match mode {
                    JacMode::Delta => &sp.b,
                    JacMode::MinusIdentity => &sp.b_minus_i,
                };
                let g = if t > T::zero() { ds / t } else { T::zero() };
                for r in 0..n {
                    for c in 0..n {
                        let idx = r * n + c;
                        j[idx] += s * (bb[idx] - j[idx]) + diff[r] * g * z[c];
                    }
                }
            }
            for i in 0..n {
                out[i] += s * diff[i];
            }
        }
        if bumps {
            for bp in &self.bumps {
                self.offset(x, &bp.center, &mut z[..n], &mut k[..n]);
                let q = dist2(&z[..n], &[T::zero(); MAX_N][..n]) / (bp.radius * bp.radius);
                if q >= T::one() {
                    continue;
                }
                let u = T::one() - q;
                for i in 0..n {
                    out[i] += bp.amplitude[i] * u * u;
                }
                if let Some((j, _)) = jac.as_mut() {
                    let g = -T::lit(4.0) * u / (bp.radius * bp.radius);
                    for r in 0..n {
                        for c in 0..n {
                            j[r * n + c] += bp.amplitude[r] * g * z[c];
                        }
                    }
                }
            }
        }
    }

    /// `f̃(x)` into `out`; the allocation-free hot path.
    #[inline]
    pub fn eval_slice(&self, x: &[T], out: &mut [T]) {
        self.eval_layers(x, out, None, self.surgeries.len(), true);
    }

    /// `f̃(x)` and `Df̃(x)` (row-major) into the given buffers.
    pub fn eval_jac_slice(&self, x: &[T], out: &mut [T], jac: &mut [T]) {
        self.eval_layers(x, out, Some((jac, JacMode::Delta)), self.surgeries.len(), true);
    }

    /// `f̃(x)` and `Df̃(x) − I` (row-major), with the identity subtracted analytically.
    pub fn eval_jac_minus_identity_slice(&self, x: &[T], out: &mut [T], jac: &mut [T]) {
        self.eval_layers(x, out, Some((jac, JacMode::MinusIdentity)), self.surgeries.len(), true);
    }

    pub fn eval_lift(&self, x: &LiftPoint<T>) -> LiftPoint<T> {
        let mut out = vec![T::zero(); self.n];
        self.eval_slice(&x.coords, &mut out);
        LiftPoint::new(out)
    }

    /// The induced map on the torus (for Euclidean models: the lift reduced mod 1).
    pub fn eval(&self, x: &TorusPoint<T>) -> TorusPoint<T> {
        project(&self.eval_lift(&x.to_lift()))
    }

    pub fn jacobian(&self, x: &LiftPoint<T>) -> DMatrix<T> {
        let mut out = vec![T::zero(); self.n];
        let mut j = vec![T::zero(); self.n * self.n];
        self.eval_jac_slice(&x.coords, &mut out, &mut j);
        to_dmatrix(self.n, &j)
    }

    pub fn jacobian_minus_identity(&self, x: &LiftPoint<T>) -> DMatrix<T> {
        let mut out = vec![T::zero(); self.n];
        let mut j = vec![T::zero(); self.n * self.n];
        self.eval_jac_minus_identity_slice(&x.coords, &mut out, &mut j);
        to_dmatrix(self.n, &j)
    }

    /// Jacobian in eigen-coordinates, `V⁻¹·Df·V`.
    pub fn jacobian_eigen(&self, x: &LiftPoint<T>) -> DMatrix<T> {
        &self.v_inv * self.jacobian(x) * &self.v
    }

    /// Solves `f̃(x) = y`. Outside the supports this is `A⁻¹(y − shift)`;
    /// otherwise Newton from that guess (tolerance 1e−12 relative, ≤ 50 steps).
    pub fn inverse_lift(&self, y: &LiftPoint<T>) -> Result<LiftPoint<T>> {
        let n = self.n;
        let ainv = self.linear().real_inverse();
        let rhs: Vec<T> = y.coords.iter().zip(&self.shift).map(|(&a, &b)| a - b).collect();
        let mut x = vec![T::zero(); n];
        crate::linalg::mat_vec(ainv, &rhs, &mut x);
        if !self.in_support(&x) {
            return Ok(LiftPoint::new(x));
        }
        let tol = T::lit(1e-12).max(T::eps() * T::lit(16.0)) * (T::one() + norm2(&y.coords));
        let mut fx = vec![T::zero(); n];
        let mut j = vec![T::zero(); n * n];
        let mut res = T::max_value().unwrap();
        for _ in 0..50 {
            self.eval_jac_slice(&x, &mut fx, &mut j);
            let r: Vec<T> = fx.iter().zip(&y.coords).map(|(&a, &b)| a - b).collect();
            res = norm2(&r);
            if res <= tol {
                return Ok(LiftPoint::new(x));
            }
            let step = to_dmatrix(n, &j).lu().solve(&nalgebra::DVector::from_vec(r));
            let Some(step) = step else { break };
            // backtracking: the profiles are only C¹, so full steps can cycle
            let mut t = T::one();
            let mut trial = x.clone();
            for _ in 0..30 {
                for i in 0..n {
                    trial[i] = x[i] - t * step[i];
                }
                self.eval_slice(&trial, &mut fx);
                let rt = norm2(&fx.iter().zip(&y.coords).map(|(&a, &b)| a - b).collect::<Vec<_>>());
                if rt < res {
                    break;
                }
                t *= T::lit(0.5);
            }
            x.clone_from(&trial);
        }
        self.eval_slice(&x, &mut fx);
        let fin = norm2(&fx.iter().zip(&y.coords).map(|(&a, &b)| a - b).collect::<Vec<_>>());
        if fin <= tol {
            Ok(LiftPoint::new(x))
        } else {
            Err(Error::InverseFailed { residual: res.min(fin).f64() })
        }
    }

    /// Estimated distance (in eigen-coordinates) from `x` to the nearest point
    /// where some layer is only C¹; `None` when no layer is nearby.
    pub fn kink_distance(&self, x: &[T]) -> Option<T> {
        let n = self.n;
        let mut z = [T::zero(); MAX_N];
        let mut k = [T::zero(); MAX_N];
        let mut y = [T::zero(); MAX_N];
        let mut best: Option<T> = None;
        let mut keep = |d: T| best = Some(best.map_or(d, |b: T| b.min(d)));
        for piece in &self.pieces {
            self.offset(x, &piece.center, &mut z[..n], &mut k[..n]);
            // slightly enlarged ball: kinks at the support boundary matter from both sides
            if dist2(&z[..n], &[T::zero(); MAX_N][..n]).sqrt() > piece.radius * T::lit(1.01) + T::lit(1e-6) {
                continue;
            }
            for i in 0..n {
                y[i] = (0..n).fold(T::zero(), |s, j| s + self.v_inv[(i, j)] * z[j]);
            }
            keep(piece.kink_distance(&y[..n]));
        }
        for sp in &self.surgeries {
            self.offset(x, &sp.center, &mut z[..n], &mut k[..n]);
            let t = norm2(&z[..n]);
            keep((t - sp.cutoff.inner()).abs().min((t - sp.cutoff.outer()).abs()));
        }
        best
    }
}

#[inline]
fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}
