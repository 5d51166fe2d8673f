//! Scalar decay profiles β (value) with generating bumps ψ = −β′, and C¹ cutoffs.
//!
//! Values are evaluated from closed-form antiderivatives per piece. `mass(t)`
//! (= b − value(t)) is computed directly so that quantities like `1 − λ − β(r)`
//! keep full relative precision near `t = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Serializable description of a profile; rebuilding from it is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileRecord {
    /// Bump with ψ(t)·t ≤ c ≤ 0.9·min(ε, b), support [0, ε].
    Generic { b: f64, eps: f64 },
    /// Piecewise-linear trapezoid bump on [0, 2ρ + l].
    Trapezoid { b: f64, rho: f64, l: f64 },
    /// Plateau β ≡ 1 on [0, δ], log-smoothstep decay to 0 at ε, |β′|t ≤ c.
    Plateau { bound: f64, eps: f64, delta: f64 },
    /// Plateau β ≡ b on [0, δ], same log-smoothstep decay; |β′|t = 1.5b/ln(ε/δ) at most.
    ScaledPlateau { b: f64, eps: f64, delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Generic,
    Trapezoid,
    Plateau,
    ScaledPlateau,
}

#[derive(Clone, Debug)]
enum Shape<T> {
    Generic { c: T, ta: T, tb: T, r0: T },
    Trapezoid { rho: T, l: T, k: T, h: T },
    Plateau { delta: T, eps: T, s: T },
}

/// Non-increasing profile β with β(0) = b and β ≡ 0 past `support_end`.
#[derive(Clone, Debug)]
pub struct DecreasingProfile<T> {
    record: ProfileRecord,
    b: T,
    support_end: T,
    slope_bound: T,
    declared_c: T,
    shape: Shape<T>,
}

#[inline]
fn smoothstep<T: Scalar>(u: T) -> T {
    u * u * (T::lit(3.0) - T::lit(2.0) * u)
}

#[inline]
fn smoothstep_slope<T: Scalar>(u: T) -> T {
    T::lit(6.0) * u * (T::one() - u)
}

fn positive_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::BadGeometry(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Trapezoid profile of total mass `b` over `[0, 2ρ + l]`.
pub fn make_trapezoid_profile<T: Scalar>(b: f64, rho: f64, l: f64) -> Result<DecreasingProfile<T>> {
    DecreasingProfile::from_record(&ProfileRecord::Trapezoid { b, rho, l })
}

/// Generic profile of mass `b` with support `[0, ε]` and |β′(t)|·t ≤ 0.9·min(ε, b).
pub fn make_generic_profile<T: Scalar>(b: f64, eps: f64) -> Result<DecreasingProfile<T>> {
    DecreasingProfile::from_record(&ProfileRecord::Generic { b, eps })
}

/// Largest admissible slope constant `(1 − λ)/(k(λ − λ₁))` (infinite when λ₁ = λ).
pub fn plateau_bound(lambda: f64, lambda1: f64, k: usize) -> f64 {
    let spread = lambda - lambda1;
    if spread <= 0.0 {
        f64::INFINITY
    } else {
        (1.0 - lambda) / (k as f64 * spread)
    }
}

/// Plateau profile for the contracting-center construction.
pub fn make_plateau_profile<T: Scalar>(lambda: f64, lambda1: f64, k: usize, eps: f64, delta: f64) -> Result<DecreasingProfile<T>> {
    if !(0.0 < lambda1 && lambda1 <= lambda && lambda < 1.0) || k == 0 {
        return Err(Error::BadGeometry(format!("need 0 < λ₁ ≤ λ < 1 and k ≥ 1 (λ₁={lambda1}, λ={lambda}, k={k})")));
    }
    make_plateau_with_bound(plateau_bound(lambda, lambda1, k), eps, delta)
}

/// Plateau profile whose slope constant must stay strictly below `bound`.
pub fn make_plateau_with_bound<T: Scalar>(bound: f64, eps: f64, delta: f64) -> Result<DecreasingProfile<T>> {
    DecreasingProfile::from_record(&ProfileRecord::Plateau { bound, eps, delta })
}

/// Plateau profile of height `b` whose slope constant |β′|t stays at or below `c`;
/// δ is chosen as large as that allows.
pub fn make_scaled_plateau<T: Scalar>(b: f64, eps: f64, c: f64) -> Result<DecreasingProfile<T>> {
    positive_finite("c", c)?;
    let delta = eps * (-1.5 * b / c).exp();
    DecreasingProfile::from_record(&ProfileRecord::ScaledPlateau { b, eps, delta })
}

/// Stored slope constant for a plateau bound (strictly below it).
pub fn plateau_constant(bound: f64) -> f64 {
    0.9 * bound
}

impl<T: Scalar> DecreasingProfile<T> {
    /// Rebuilds a profile from its record, validating every constraint.
    pub fn from_record(record: &ProfileRecord) -> Result<Self> {
        match *record {
            ProfileRecord::Generic { b, eps } => {
                positive_finite("b", b)?;
                positive_finite("eps", eps)?;
                let c = 0.9 * eps.min(b);
                let tb = eps / 2.0;
                let ta = tb * (1.0 - b / c).exp();
                if !(ta.is_normal() && ta > 0.0) {
                    return Err(Error::BadGeometry(format!("b/ε = {} too large for a generic profile", b / eps)));
                }
                Ok(DecreasingProfile {
                    record: record.clone(),
                    b: T::lit(b),
                    support_end: T::lit(eps),
                    slope_bound: T::lit(c),
                    declared_c: T::lit(c),
                    shape: Shape::Generic { c: T::lit(c), ta: T::lit(ta), tb: T::lit(tb), r0: T::lit(eps) },
                })
            }
            ProfileRecord::Trapezoid { b, rho, l } => {
                positive_finite("b", b)?;
                positive_finite("rho", rho)?;
                positive_finite("l", l)?;
                let (bt, rt, lt) = (T::lit(b), T::lit(rho), T::lit(l));
                Ok(DecreasingProfile {
                    record: record.clone(),
                    b: bt,
                    support_end: rt + rt + lt,
                    // sup ψ(t)·t is attained at t = ρ + l and equals b
                    slope_bound: bt,
                    declared_c: bt,
                    shape: Shape::Trapezoid { rho: rt, l: lt, k: bt / (rt * (rt + lt)), h: bt / (rt + lt) },
                })
            }
            ProfileRecord::Plateau { bound, eps, delta } => {
                positive_finite("eps", eps)?;
                positive_finite("delta", delta)?;
                if bound.is_nan() || bound <= 0.0 {
                    return Err(Error::BadGeometry(format!("slope bound must be positive, got {bound}")));
                }
                if delta >= eps {
                    return Err(Error::BadGeometry(format!("plateau needs δ < ε (δ={delta}, ε={eps})")));
                }
                let s = (eps / delta).ln();
                let realized = 1.5 / s;
                let c = if bound.is_finite() { plateau_constant(bound) } else { realized };
                if realized > c {
                    return Err(Error::InfeasiblePlateau { max_delta: eps * (-1.5 / c).exp() });
                }
                Ok(DecreasingProfile {
                    record: record.clone(),
                    b: T::one(),
                    support_end: T::lit(eps),
                    slope_bound: T::lit(realized),
                    declared_c: T::lit(c),
                    shape: Shape::Plateau { delta: T::lit(delta), eps: T::lit(eps), s: T::lit(s) },
                })
            }
            ProfileRecord::ScaledPlateau { b, eps, delta } => {
                positive_finite("b", b)?;
                positive_finite("eps", eps)?;
                positive_finite("delta", delta)?;
                if delta >= eps {
                    return Err(Error::BadGeometry(format!("plateau needs δ < ε (δ={delta}, ε={eps})")));
                }
                let s = (eps / delta).ln();
                let slope = 1.5 * b / s;
                Ok(DecreasingProfile {
                    record: record.clone(),
                    b: T::lit(b),
                    support_end: T::lit(eps),
                    slope_bound: T::lit(slope),
                    declared_c: T::lit(slope),
                    shape: Shape::Plateau { delta: T::lit(delta), eps: T::lit(eps), s: T::lit(s) },
                })
            }
        }
    }

    pub fn record(&self) -> &ProfileRecord {
        &self.record
    }

    pub fn kind(&self) -> ProfileKind {
        match self.record {
            ProfileRecord::Generic { .. } => ProfileKind::Generic,
            ProfileRecord::Trapezoid { .. } => ProfileKind::Trapezoid,
            ProfileRecord::Plateau { .. } => ProfileKind::Plateau,
            ProfileRecord::ScaledPlateau { .. } => ProfileKind::ScaledPlateau,
        }
    }

    /// β(0).
    pub fn b(&self) -> T {
        self.b
    }

    pub fn support_end(&self) -> T {
        self.support_end
    }

    /// sup over t of |β′(t)|·t, attained by the construction.
    pub fn slope_bound(&self) -> T {
        self.slope_bound
    }

    /// The stored constant c (plateau kind: strictly below the admissible bound).
    pub fn declared_c(&self) -> T {
        self.declared_c
    }

    /// Whether |β′(t)|·t ≤ ε holds with ε the support end.
    pub fn satisfies_support_slope_bound(&self) -> bool {
        self.slope_bound <= self.support_end
    }

    /// Radii where the profile is only C¹.
    pub fn kinks(&self) -> Vec<T> {
        match self.shape {
            Shape::Generic { ta, tb, r0, .. } => vec![ta, tb, r0],
            Shape::Trapezoid { rho, l, .. } => vec![rho, rho + l, rho + rho + l],
            Shape::Plateau { delta, eps, .. } => vec![delta, eps],
        }
    }

    /// ∫₀ᵗ ψ = b − β(t), evaluated without cancellation.
    pub fn mass(&self, t: T) -> T {
        if t <= T::zero() {
            return T::zero();
        }
        let half = T::lit(0.5);
        match self.shape {
            Shape::Generic { c, ta, tb, r0 } => {
                if t <= ta {
                    c * t * t * half / (ta * ta)
                } else if t <= tb {
                    c * half + c * (t / ta).ln()
                } else if t < r0 {
                    self.b - self.value(t)
                } else {
                    self.b
                }
            }
            Shape::Trapezoid { rho, l, k, h } => {
                if t <= rho {
                    k * t * t * half
                } else if t <= rho + l {
                    k * rho * rho * half + (t - rho) * h
                } else {
                    self.b - self.value(t)
                }
            }
            Shape::Plateau { delta, eps, s } => {
                if t <= delta {
                    T::zero()
                } else if t >= eps {
                    self.b
                } else {
                    self.b * smoothstep((t / delta).ln() / s)
                }
            }
        }
    }

    /// β(t).
    pub fn value(&self, t: T) -> T {
        if t <= T::zero() {
            return self.b;
        }
        let half = T::lit(0.5);
        match self.shape {
            Shape::Generic { c, tb, r0, .. } => {
                if t <= tb {
                    self.b - self.mass(t)
                } else if t < r0 {
                    // remaining mass of the linear tail: ∫ₜ^{r0} (c/tb)(r0−s)/(r0−tb) ds
                    let d = r0 - t;
                    c / (tb * (r0 - tb)) * d * d * half
                } else {
                    T::zero()
                }
            }
            Shape::Trapezoid { rho, l, k, h } => {
                if t <= rho {
                    self.b - k * t * t * half
                } else if t <= rho + l {
                    self.b - rho * half * h - (t - rho) * h
                } else if t < rho + rho + l {
                    let d = rho + rho + l - t;
                    k * d * d * half
                } else {
                    T::zero()
                }
            }
            Shape::Plateau { .. } => self.b - self.mass(t),
        }
    }

    /// Generating bump ψ(t) = −β′(t) ≥ 0.
    pub fn psi(&self, t: T) -> T {
        if t < T::zero() {
            return T::zero();
        }
        match self.shape {
            Shape::Generic { c, ta, tb, r0 } => {
                if t <= ta {
                    c * t / (ta * ta)
                } else if t <= tb {
                    c / t
                } else if t < r0 {
                    c / tb * (r0 - t) / (r0 - tb)
                } else {
                    T::zero()
                }
            }
            Shape::Trapezoid { rho, l, k, h } => {
                if t <= rho {
                    k * t
                } else if t <= rho + l {
                    h
                } else if t < rho + rho + l {
                    k * (rho + rho + l - t)
                } else {
                    T::zero()
                }
            }
            Shape::Plateau { delta, eps, s } => {
                if t <= delta || t >= eps {
                    T::zero()
                } else {
                    self.b * smoothstep_slope((t / delta).ln() / s) / (s * t)
                }
            }
        }
    }

    /// β′(t).
    pub fn derivative(&self, t: T) -> T {
        -self.psi(t)
    }
}

/// Shape of the transition of a [`SmoothCutoff`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffKind {
    /// Smoothstep in t.
    Polynomial,
    /// Smoothstep of the squared linear coordinate: flatter start, used where
    /// max-norm contraction must survive the blend.
    Eased,
    /// Smoothstep in ln t; keeps |ρ′(t)|·t ≤ 1.5 / ln(δ_out/δ_in).
    Logarithmic,
}

/// C¹ monotone cutoff: 1 on [0, δ_in], 0 on [δ_out, ∞).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothCutoff<T> {
    inner: T,
    outer: T,
    kind: CutoffKind,
}

/// Polynomial cutoff.
pub fn make_cutoff<T: Scalar>(inner: T, outer: T) -> Result<SmoothCutoff<T>> {
    SmoothCutoff::new(inner, outer, CutoffKind::Polynomial)
}

impl<T: Scalar> SmoothCutoff<T> {
    pub fn new(inner: T, outer: T, kind: CutoffKind) -> Result<Self> {
        if !(inner > T::zero() && inner < outer) || !outer.is_finite() {
            return Err(Error::BadGeometry(format!("cutoff needs 0 < δ_in < δ_out (got {}, {})", inner.f64(), outer.f64())));
        }
        Ok(SmoothCutoff { inner, outer, kind })
    }

    pub fn inner(&self) -> T {
        self.inner
    }
    pub fn outer(&self) -> T {
        self.outer
    }
    pub fn kind(&self) -> CutoffKind {
        self.kind
    }

    #[inline]
    fn coordinate(&self, t: T) -> (T, T) {
        match self.kind {
            CutoffKind::Polynomial | CutoffKind::Eased => {
                let w = self.outer - self.inner;
                ((t - self.inner) / w, T::one() / w)
            }
            CutoffKind::Logarithmic => {
                let s = (self.outer / self.inner).ln();
                ((t / self.inner).ln() / s, T::one() / (s * t))
            }
        }
    }

    #[inline]
    pub fn value(&self, t: T) -> T {
        if t <= self.inner {
            T::one()
        } else if t >= self.outer {
            T::zero()
        } else {
            let u = self.coordinate(t).0;
            match self.kind {
                CutoffKind::Eased => T::one() - smoothstep(u * u),
                _ => T::one() - smoothstep(u),
            }
        }
    }

    #[inline]
    pub fn derivative(&self, t: T) -> T {
        if t <= self.inner || t >= self.outer {
            T::zero()
        } else {
            let (u, du) = self.coordinate(t);
            match self.kind {
                CutoffKind::Eased => -smoothstep_slope(u * u) * (u + u) * du,
                _ => -smoothstep_slope(u) * du,
            }
        }
    }

    /// sup |ρ′(t)|·t over the transition.
    pub fn log_slope_bound(&self) -> T {
        match self.kind {
            CutoffKind::Logarithmic => T::lit(1.5) / (self.outer / self.inner).ln(),
            CutoffKind::Polynomial => T::lit(1.5) * self.outer / (self.outer - self.inner),
            // max of 12u³(1−u²) on [0,1] is 2.2311, at u² = 3/5
            CutoffKind::Eased => T::lit(2.2312) * self.outer / (self.outer - self.inner),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::quadrature::piecewise;
    use super::*;
    use proptest::prelude::*;

    fn profiles() -> Vec<DecreasingProfile<f64>> {
        let lam = (3.0 - 5f64.sqrt()) / 2.0;
        vec![
            make_trapezoid_profile(1.0 - lam, 0.03, 0.02).unwrap(),
            make_trapezoid_profile(1.0 / lam - 1.0, 0.001, 0.004).unwrap(),
            make_generic_profile(0.5, 0.2).unwrap(),
            make_generic_profile(0.1, 0.3).unwrap(),
            make_plateau_profile(0.9, 0.5, 3, 1.0, 1e-9).unwrap(),
        ]
    }

    fn integral_of_psi(p: &DecreasingProfile<f64>) -> f64 {
        let mut breaks = p.kinks();
        // log-scale breakpoints resolve the 1/t pieces
        let mut t = p.support_end();
        while t > 1e-14 {
            breaks.push(t);
            t *= 0.25;
        }
        piecewise(&|t| p.psi(t), &breaks, p.support_end(), 1e-14)
    }

    #[test]
    fn trapezoid_mass_and_endpoints() {
        let lam = (3.0 - 5f64.sqrt()) / 2.0;
        let p: DecreasingProfile<f64> = make_trapezoid_profile(1.0 - lam, 0.03, 0.02).unwrap();
        assert!((integral_of_psi(&p) - (1.0 - lam)).abs() < 1e-10);
        assert_eq!(p.value(0.0), 1.0 - lam);
        assert_eq!(p.value(p.support_end()), 0.0);
        let k = (1.0 - lam) / (0.03 * 0.05);
        for r in [0.001, 0.01, 0.029] {
            assert!((p.derivative(r) + k * r).abs() < 1e-14);
        }
        assert_eq!(p.kind(), ProfileKind::Trapezoid);
        assert!(!p.satisfies_support_slope_bound());
    }

    #[test]
    fn every_profile_integrates_to_b() {
        for p in profiles() {
            assert!((integral_of_psi(&p) - p.b()).abs() < 1e-10, "{:?}", p.record());
        }
    }

    #[test]
    fn plateau_examples() {
        let p: DecreasingProfile<f64> = make_plateau_profile(0.9, 0.5, 3, 1.0, 1e-9).unwrap();
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(1.0), 0.0);
        assert_eq!(p.value(0.5e-9), 1.0);
        assert_eq!(p.derivative(0.5e-9), 0.0);
        assert!(p.declared_c() / plateau_bound(0.9, 0.5, 3) < 1.0);
        assert!(p.slope_bound() <= p.declared_c());
    }

    #[test]
    fn plateau_infeasible_reports_max_delta() {
        let err = make_plateau_profile::<f64>(0.9, 0.5, 3, 1.0, 0.1).unwrap_err();
        let Error::InfeasiblePlateau { max_delta } = err else { panic!("{err:?}") };
        let c: f64 = 0.9 / 12.0;
        assert!((max_delta - (-1.5 / c).exp()).abs() < 1e-20);
        assert!(make_plateau_profile::<f64>(0.9, 0.5, 3, 1.0, max_delta * 0.999).is_ok());
    }

    #[test]
    fn bad_trapezoid_rejected() {
        assert!(matches!(make_trapezoid_profile::<f64>(1.0, 0.0, 0.1), Err(Error::BadGeometry(_))));
        assert!(matches!(make_trapezoid_profile::<f64>(1.0, 0.1, -1.0), Err(Error::BadGeometry(_))));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-7;
        for p in profiles() {
            let end = p.support_end();
            let kinks = p.kinks();
            for i in 1..1000 {
                let t = end * 1.05 * i as f64 / 1000.0;
                if kinks.iter().any(|&k| (t - k).abs() < 10.0 * h) {
                    continue;
                }
                let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
                let scale = 1.0f64.max(p.psi(t).abs());
                assert!((fd - p.derivative(t)).abs() <= 1e-6 * scale, "{:?} t={t}", p.record());
            }
        }
    }

    #[test]
    fn slope_bound_holds_on_dense_samples() {
        for p in profiles() {
            let bound = p.slope_bound() * (1.0 + 1e-12);
            for i in 0..10_000 {
                // log-spaced samples reach the small-t regime of the plateau kind
                let t = p.support_end() * 1.1 * 10f64.powf(-12.0 * (1.0 - i as f64 / 9999.0));
                let d = p.derivative(t) * t;
                assert!(d <= 0.0 && -d <= bound, "{:?} t={t}", p.record());
            }
        }
        // generic kind meets the support-end bound of its own construction
        let g: DecreasingProfile<f64> = make_generic_profile(0.5, 0.2).unwrap();
        assert!(g.satisfies_support_slope_bound());
    }

    #[test]
    fn cutoff_examples() {
        for kind in [CutoffKind::Polynomial, CutoffKind::Eased, CutoffKind::Logarithmic] {
            let c = SmoothCutoff::new(0.1f64, 0.4, kind).unwrap();
            assert_eq!(c.value(0.0), 1.0);
            assert_eq!(c.value(0.4), 0.0);
            assert_eq!(c.derivative(0.1), 0.0);
            assert_eq!(c.derivative(0.4), 0.0);
            let mid = c.value(0.25);
            assert!(mid > 0.0 && mid < 1.0);
            let mut prev = 1.0;
            for i in 0..=100 {
                let v = c.value(0.5 * i as f64 / 100.0);
                assert!(v <= prev);
                prev = v;
            }
        }
        assert!(make_cutoff(0.3f64, 0.2).is_err());
        let c = SmoothCutoff::new(0.1f64, 0.4, CutoffKind::Eased).unwrap();
        let h = 1e-7;
        for i in 1..100 {
            let t = 0.1 + 0.3 * i as f64 / 100.0;
            let fd = (c.value(t + h) - c.value(t - h)) / (2.0 * h);
            assert!((fd - c.derivative(t)).abs() < 1e-6);
            assert!(-c.derivative(t) * t <= c.log_slope_bound());
        }
    }

    #[test]
    fn records_rebuild_bit_exactly() {
        for p in profiles() {
            let json = serde_json::to_string(p.record()).unwrap();
            let back: ProfileRecord = serde_json::from_str(&json).unwrap();
            let q = DecreasingProfile::<f64>::from_record(&back).unwrap();
            for i in 0..200 {
                let t = p.support_end() * i as f64 / 150.0;
                assert_eq!(p.value(t).to_bits(), q.value(t).to_bits());
            }
        }
    }

    #[test]
    fn single_precision_profile() {
        let p: DecreasingProfile<f32> = make_trapezoid_profile(0.5, 0.1, 0.1).unwrap();
        assert!((p.value(0.3) - 0.0).abs() < 1e-7);
        assert!((p.mass(0.05) - 0.5 / 0.02 * 0.05 * 0.05 / 2.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn profile_is_monotone(b in 0.01f64..3.0, rho in 1e-4f64..0.1, l in 1e-4f64..0.1,
                               s in 0.0f64..1.0, ds in 0.0f64..0.1) {
            let p: DecreasingProfile<f64> = make_trapezoid_profile(b, rho, l).unwrap();
            let t = s * p.support_end();
            prop_assert!(p.value(t + ds) <= p.value(t) + 1e-15);
            prop_assert!((p.value(t) + p.mass(t) - b).abs() < 1e-12);
        }

        #[test]
        fn cutoff_monotone(a in 1e-6f64..1.0, w in 1e-3f64..2.0, s in 0.0f64..1.0, ds in 0.0f64..0.5) {
            for kind in [CutoffKind::Polynomial, CutoffKind::Eased, CutoffKind::Logarithmic] {
                let c = SmoothCutoff::new(a, a + w, kind).unwrap();
                let t = s * (a + w) * 1.2;
                prop_assert!(c.value(t + ds) <= c.value(t) + 1e-15);
                prop_assert!(c.derivative(t) <= 0.0);
            }
        }
    }
}
