//! Local constructions evaluated in eigen-coordinates `y = V⁻¹(x − p)`.
//!
//! Each piece returns the perturbation `Δy` on top of the block form `D`, and
//! either `ΔJ` (added to `D`) or the fused `D − I + ΔJ` whose diagonal keeps
//! full relative precision where the map is tangent to the identity.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use super::spec::{BlendSpec, PlanarProfile};
use crate::profiles::{
    make_plateau_with_bound, make_scaled_plateau, make_trapezoid_profile, plateau_bound, CutoffKind, DecreasingProfile, ProfileRecord,
    SmoothCutoff,
};
use crate::scalar::Scalar;
use crate::torus_linear::{Bundle, LinearPart};

pub(crate) const MAX_N: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum JacMode {
    /// Fill `ΔJ` (the caller adds `D`).
    Delta,
    /// Fill `D − I + ΔJ` with fused diagonal terms.
    MinusIdentity,
}

/// Cutoff `ρ(w)` in the squared norm of the coordinates a construction leaves alone.
#[derive(Clone, Debug)]
struct StrongCutoff<T> {
    others: Vec<usize>,
    cutoff: Option<SmoothCutoff<T>>,
}

impl<T: Scalar> StrongCutoff<T> {
    fn new(n: usize, own: &[usize], delta_w: T) -> Result<Self> {
        let others: Vec<usize> = (0..n).filter(|i| !own.contains(i)).collect();
        let cutoff = if others.is_empty() {
            None
        } else {
            Some(SmoothCutoff::new(delta_w * T::lit(0.5), delta_w, CutoffKind::Polynomial)?)
        };
        Ok(StrongCutoff { others, cutoff })
    }

    /// `(ρ(w), ρ′(w))`.
    #[inline]
    fn eval(&self, y: &[T]) -> (T, T) {
        match &self.cutoff {
            None => (T::one(), T::zero()),
            Some(c) => {
                let w = self.others.iter().fold(T::zero(), |a, &k| a + y[k] * y[k]);
                (c.value(w), c.derivative(w))
            }
        }
    }

    fn outer(&self) -> T {
        self.cutoff.as_ref().map_or(T::zero(), SmoothCutoff::outer)
    }

    fn kinks(&self) -> Vec<T> {
        self.cutoff.as_ref().map_or(vec![], |c| vec![c.inner(), c.outer()])
    }

    fn w(&self, y: &[T]) -> T {
        self.others.iter().fold(T::zero(), |a, &k| a + y[k] * y[k])
    }
}

#[derive(Clone, Debug)]
struct Planar<T> {
    i1: usize,
    i2: usize,
    b1: T,
    b2: T,
    beta1: DecreasingProfile<T>,
    beta2: DecreasingProfile<T>,
    strong: StrongCutoff<T>,
}

#[derive(Clone, Debug)]
struct Factor<T> {
    range: Range<usize>,
    /// `D_F` row-major.
    block: Vec<T>,
    lambda: T,
    /// −1 for a contracting factor (h = (1 − r)y), +1 for an expanding one.
    sign: T,
    profile: DecreasingProfile<T>,
    blend: SmoothCutoff<T>,
    strong: StrongCutoff<T>,
}

#[derive(Clone, Debug)]
enum Kind<T> {
    Planar(Planar<T>),
    Flatten(Vec<Factor<T>>),
}

/// A compiled local construction.
#[derive(Clone, Debug)]
pub(crate) struct LocalPiece<T> {
    pub label: String,
    pub center: Vec<T>,
    /// Support radius in standard coordinates.
    pub radius: T,
    /// Squared eigen-coordinate norm beyond which the piece vanishes.
    pub support_r2: T,
    pub records: Vec<ProfileRecord>,
    kind: Kind<T>,
}

/// Parameters of a planar-mix piece, already validated by the caller's spec layer.
pub(crate) struct PlanarParams<'a> {
    pub profile: &'a PlanarProfile,
    pub eps: f64,
    pub strong_cutoff: Option<f64>,
}

pub(crate) struct FlattenParams<'a> {
    pub factors: &'a [Bundle],
    pub lambda: Option<f64>,
    pub eps: f64,
    pub delta: f64,
    pub blend: &'a BlendSpec,
    pub strong_cutoff: Option<f64>,
}

fn single_index<T: Scalar>(lin: &LinearPart<T>, b: Bundle) -> Result<usize> {
    let r = lin.range(b);
    if r.len() != 1 {
        return Err(Error::FrameMismatch(format!(
            "planar mixing needs one-dimensional {b:?} bundle, found dimension {}",
            r.len()
        )));
    }
    let i = r.start;
    let e = lin.eigenvalues()[i];
    if e.im != T::zero() || e.re <= T::zero() {
        return Err(Error::FrameMismatch(format!("planar mixing needs a positive real {b:?} eigenvalue")));
    }
    Ok(i)
}

impl<T: Scalar> LocalPiece<T> {
    pub fn planar(label: String, center: Vec<T>, lin: &LinearPart<T>, p: &PlanarParams) -> Result<Self> {
        if lin.dim(Bundle::Ws) + lin.dim(Bundle::Wu) != 2 {
            return Err(Error::FrameMismatch(format!(
                "planar mixing requested on a center of dimension {}",
                lin.dim(Bundle::Ws) + lin.dim(Bundle::Wu)
            )));
        }
        let i1 = single_index(lin, Bundle::Ws)?;
        let i2 = single_index(lin, Bundle::Wu)?;
        let lam = lin.eigenvalues()[i1].re.f64();
        let mu = lin.eigenvalues()[i2].re.f64();
        let b1 = 1.0 - lam;
        let b2 = mu - 1.0;
        let (beta1, beta2) = match *p.profile {
            PlanarProfile::Trapezoid { rho, l, r1 } => {
                let top = 2.0 * rho + l;
                if !(top < r1 && r1 < p.eps) {
                    return Err(Error::BadGeometry(format!(
                        "need 2ρ + l < r₁ < ε, got 2ρ + l = {top}, r₁ = {r1}, ε = {}",
                        p.eps
                    )));
                }
                (make_trapezoid_profile::<T>(b1, rho, l)?, make_trapezoid_profile::<T>(b2, rho, l)?)
            }
            PlanarProfile::Smooth { contracting_slope } => {
                let c = contracting_slope.unwrap_or(lam / 5.0);
                if !(c > 0.0 && c < lam / 4.0) {
                    return Err(Error::BadGeometry(format!("contracting slope {c} must lie in (0, λ/4 = {})", lam / 4.0)));
                }
                let beta1 = make_scaled_plateau::<T>(b1, p.eps, c)?;
                let ProfileRecord::ScaledPlateau { delta, .. } = *beta1.record() else { unreachable!() };
                let beta2 = DecreasingProfile::from_record(&ProfileRecord::ScaledPlateau { b: b2, eps: p.eps, delta })?;
                (beta1, beta2)
            }
        };
        let delta_w = p.strong_cutoff.unwrap_or(p.eps);
        positive("strong cutoff", delta_w)?;
        let strong = StrongCutoff::new(lin.n(), &[i1, i2], T::lit(delta_w))?;
        let support_r2 = beta1.support_end() + strong.outer();
        let records = vec![beta1.record().clone(), beta2.record().clone()];
        let radius = support_radius(lin, support_r2);
        Ok(LocalPiece {
            label,
            center,
            radius,
            support_r2,
            records,
            kind: Kind::Planar(Planar { i1, i2, b1: T::lit(b1), b2: T::lit(b2), beta1, beta2, strong }),
        })
    }

    pub fn flatten(label: String, center: Vec<T>, lin: &LinearPart<T>, p: &FlattenParams) -> Result<Self> {
        if p.factors.is_empty() {
            return Err(Error::BadGeometry("flatten needs at least one factor".into()));
        }
        let mut factors = Vec::new();
        let mut records = Vec::new();
        let mut support_r2 = T::zero();
        for (idx, &b) in p.factors.iter().enumerate() {
            if p.factors[..idx].contains(&b) {
                return Err(Error::BadGeometry(format!("factor {b:?} listed twice")));
            }
            let sign = match b {
                Bundle::Ws => -1.0,
                Bundle::Wu => 1.0,
                _ => return Err(Error::FrameMismatch(format!("flatten acts on weak bundles, not {b:?}"))),
            };
            let range = lin.range(b);
            let k = range.len();
            if k == 0 {
                return Err(Error::FrameMismatch(format!("{b:?} bundle is trivial at this point")));
            }
            let moduli: Vec<f64> = lin.column_moduli()[range.clone()].iter().map(|m| m.f64()).collect();
            let lo = moduli.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = moduli.iter().copied().fold(0.0, f64::max);
            let (lambda, bound) = if sign < 0.0 {
                let lambda = p.lambda.unwrap_or(hi);
                if !(hi <= lambda && lambda < 1.0) {
                    return Err(Error::BadGeometry(format!("target rate {lambda} must lie in [{hi}, 1)")));
                }
                if p.delta > (1.0 - lambda) * (1.0 + 1e-12) {
                    return Err(Error::BadGeometry(format!(
                        "blend radius δ = {} exceeds 1 − λ = {}",
                        p.delta,
                        1.0 - lambda
                    )));
                }
                (lambda, plateau_bound(lambda, lo, k))
            } else {
                let lambda = p.lambda.unwrap_or(lo);
                if !(1.0 < lambda && lambda <= lo) {
                    return Err(Error::BadGeometry(format!("target rate {lambda} must lie in (1, {lo}]")));
                }
                if p.delta > (lambda - 1.0) * (1.0 + 1e-12) {
                    return Err(Error::BadGeometry(format!(
                        "blend radius δ = {} exceeds λ − 1 = {}",
                        p.delta,
                        lambda - 1.0
                    )));
                }
                let spread = hi - lambda;
                let bound = if spread <= 0.0 { f64::INFINITY } else { (lambda - 1.0) / (k as f64 * spread) };
                (lambda, bound)
            };
            let profile = make_plateau_with_bound::<T>(bound, p.eps, p.delta)?;
            let blend = SmoothCutoff::new(T::lit(p.delta * p.blend.inner_ratio), T::lit(p.delta), p.blend.kind)?;
            let d = lin.block_form();
            let block: Vec<T> = range.clone().flat_map(|i| range.clone().map(move |j| d[(i, j)])).collect();
            let own: Vec<usize> = range.clone().collect();
            let delta_w = p.strong_cutoff.unwrap_or(p.eps);
            positive("strong cutoff", delta_w)?;
            let strong = StrongCutoff::new(lin.n(), &own, T::lit(delta_w))?;
            support_r2 = support_r2.max(profile.support_end() + strong.outer());
            records.push(profile.record().clone());
            factors.push(Factor { range, block, lambda: T::lit(lambda), sign: T::lit(sign), profile, blend, strong });
        }
        let radius = support_radius(lin, support_r2);
        Ok(LocalPiece { label, center, radius, support_r2, records, kind: Kind::Flatten(factors) })
    }

    /// Adds `Δy` to `dy`; returns whether the piece is active at `y`.
    pub fn eval(&self, y: &[T], dy: &mut [T]) -> bool {
        if norm_sq(y) >= self.support_r2 {
            return false;
        }
        match &self.kind {
            Kind::Planar(p) => p.eval(y, dy, None),
            Kind::Flatten(fs) => {
                let mut any = false;
                for f in fs {
                    any |= f.eval(y, dy, None);
                }
                any
            }
        }
    }

    /// Adds `Δy` to `dy` and fills `m` (row-major n × n, pre-set by the caller
    /// to `0` or `D − I`) according to `mode`.
    pub fn eval_jac(&self, y: &[T], dy: &mut [T], m: &mut [T], mode: JacMode) -> bool {
        if norm_sq(y) >= self.support_r2 {
            return false;
        }
        match &self.kind {
            Kind::Planar(p) => p.eval(y, dy, Some((m, mode))),
            Kind::Flatten(fs) => {
                let mut any = false;
                for f in fs {
                    any |= f.eval(y, dy, Some((&mut *m, mode)));
                }
                any
            }
        }
    }

    /// Smallest distance from any radial variable at `y` to a kink of the
    /// profiles or cutoffs, measured in that variable's own units and divided
    /// by its gradient bound, i.e. an estimate of the distance in `y`.
    pub fn kink_distance(&self, y: &[T]) -> T {
        let big = T::max_value().unwrap();
        let scaled = |t: T, kinks: &[T]| {
            let grad = T::lit(2.0) * t.sqrt() + T::eps();
            kinks.iter().fold(big, |a, &k| a.min((t - k).abs() / grad))
        };
        match &self.kind {
            Kind::Planar(p) => {
                let r = y[p.i1] * y[p.i1] + y[p.i2] * y[p.i2];
                let mut kinks = p.beta1.kinks();
                kinks.push(p.beta1.support_end());
                scaled(r, &kinks).min(scaled(p.strong.w(y), &p.strong.kinks()))
            }
            Kind::Flatten(fs) => fs.iter().fold(big, |a, f| {
                let r = f.range.clone().fold(T::zero(), |s, i| s + y[i] * y[i]);
                let mut kinks = f.profile.kinks();
                kinks.extend([f.blend.inner(), f.blend.outer()]);
                a.min(scaled(r, &kinks)).min(scaled(f.strong.w(y), &f.strong.kinks()))
            }),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::BadGeometry(format!("{name} must be positive, got {x}")))
    }
}

fn support_radius<T: Scalar>(lin: &LinearPart<T>, r2: T) -> T {
    crate::linalg::op_norm2(lin.eigenbasis()) * r2.sqrt()
}

#[inline]
fn norm_sq<T: Scalar>(y: &[T]) -> T {
    y.iter().fold(T::zero(), |a, &v| a + v * v)
}

impl<T: Scalar> Planar<T> {
    fn eval(&self, y: &[T], dy: &mut [T], jac: Option<(&mut [T], JacMode)>) -> bool {
        let (rw, drw) = self.strong.eval(y);
        if rw == T::zero() {
            return false;
        }
        let (i1, i2) = (self.i1, self.i2);
        let (y1, y2) = (y[i1], y[i2]);
        let r = y1 * y1 + y2 * y2;
        let bt1 = self.beta1.value(r);
        let bt2 = self.beta2.value(r);
        if bt1 == T::zero() && bt2 == T::zero() {
            return false;
        }
        dy[i1] += rw * bt1 * y1;
        dy[i2] -= rw * bt2 * y2;
        let Some((m, mode)) = jac else { return true };
        let n = y.len();
        let two = T::lit(2.0);
        let d1 = self.beta1.derivative(r);
        let d2 = self.beta2.derivative(r);
        m[i1 * n + i2] += rw * two * y1 * y2 * d1;
        m[i2 * n + i1] -= rw * two * y1 * y2 * d2;
        match mode {
            JacMode::Delta => {
                m[i1 * n + i1] += rw * (bt1 + two * y1 * y1 * d1);
                m[i2 * n + i2] -= rw * (bt2 + two * y2 * y2 * d2);
            }
            JacMode::MinusIdentity => {
                let (m1, m2) = (self.beta1.mass(r), self.beta2.mass(r));
                let one = T::one();
                m[i1 * n + i1] = -(one - rw) * self.b1 - rw * m1 + two * rw * y1 * y1 * d1;
                m[i2 * n + i2] = (one - rw) * self.b2 + rw * m2 - two * rw * y2 * y2 * d2;
            }
        }
        if drw != T::zero() {
            for &k in &self.strong.others {
                m[i1 * n + k] += two * y[k] * drw * bt1 * y1;
                m[i2 * n + k] -= two * y[k] * drw * bt2 * y2;
            }
        }
        true
    }
}

impl<T: Scalar> Factor<T> {
    fn eval(&self, y: &[T], dy: &mut [T], jac: Option<(&mut [T], JacMode)>) -> bool {
        let (rw, drw) = self.strong.eval(y);
        if rw == T::zero() {
            return false;
        }
        let k = self.range.len();
        let s0 = self.range.start;
        let yf = &y[self.range.clone()];
        let r = norm_sq(yf);
        if r >= self.profile.support_end() {
            return false;
        }
        let one = T::one();
        let two = T::lit(2.0);
        let beta = self.profile.value(r);
        let rb = self.blend.value(r);
        // P·y = (λI − D_F)·y and g₁ − D_F y = β·P·y; h − g₁ = (1 + σr)y − D_F y − β·P·y
        let mut py = [T::zero(); MAX_N];
        let mut hg = [T::zero(); MAX_N];
        let mut phi = [T::zero(); MAX_N];
        for i in 0..k {
            let mut dfy = T::zero();
            for j in 0..k {
                dfy += self.block[i * k + j] * yf[j];
            }
            py[i] = self.lambda * yf[i] - dfy;
            hg[i] = (one + self.sign * r) * yf[i] - dfy - beta * py[i];
            phi[i] = rb * hg[i] + beta * py[i];
            dy[s0 + i] += rw * phi[i];
        }
        let Some((m, mode)) = jac else { return true };
        let n = y.len();
        let db = self.profile.derivative(r);
        let drb = self.blend.derivative(r);
        let mass = self.profile.mass(r);
        for i in 0..k {
            for j in 0..k {
                let id = if i == j { one } else { T::zero() };
                let dfij = self.block[i * k + j];
                let p_ij = self.lambda * id - dfij;
                let yy = yf[i] * yf[j];
                let tail = two * db * py[i] * yf[j];
                let cross = two * drb * hg[i] * yf[j];
                let idx = (s0 + i) * n + s0 + j;
                match mode {
                    JacMode::Delta => {
                        let dh_minus_d = (one + self.sign * r) * id + two * self.sign * yy - dfij;
                        let dphi = rb * dh_minus_d + (one - rb) * (beta * p_ij + tail) + cross;
                        m[idx] += rw * dphi;
                    }
                    JacMode::MinusIdentity => {
                        let dh_i = self.sign * r * id + two * self.sign * yy;
                        let dg1_i = (self.lambda - one) * id - mass * p_ij + tail;
                        let dg_i = rb * dh_i + (one - rb) * dg1_i + cross;
                        m[idx] = (one - rw) * (dfij - id) + rw * dg_i;
                    }
                }
            }
        }
        if drw != T::zero() {
            for &c in &self.strong.others {
                for i in 0..k {
                    m[(s0 + i) * n + c] += two * y[c] * drw * phi[i];
                }
            }
        }
        true
    }
}

/// Row-major `n × n` buffer to `DMatrix`.
pub(crate) fn to_dmatrix<T: Scalar>(n: usize, m: &[T]) -> DMatrix<T> {
    DMatrix::from_row_slice(n, n, &m[..n * n])
}
