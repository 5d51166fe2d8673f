//! The named constructions: planar mixing, its 4-dimensional embedding, the
//! k-dimensional contracting center, general DA maps and Franks surgeries.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{MapModel, FIXED_TOL};
use super::spec::{BlendSpec, ConstructionSpec, DomainSpec, MapSpec, PlanarProfile, SurgerySpec};
use crate::error::{Error, Result};
use crate::linalg::{norm2, op_norm2};
use crate::profiles::CutoffKind;
use crate::scalar::Scalar;
use crate::torus_linear::{Bundle, LiftPoint, ToralAutomorphism, TorusPoint};

fn euclidean(diagonal: Vec<f64>, bundles: Vec<Bundle>, constructions: Vec<ConstructionSpec>) -> MapSpec {
    MapSpec {
        domain: DomainSpec::Euclidean { diagonal, bundles },
        constructions,
        surgeries: vec![],
        bumps: vec![],
        lift_shift: vec![],
    }
}

fn check_pair(lambda: f64, mu: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) || !(mu > 1.0) {
        return Err(Error::NotHyperbolicLinearPart(format!("need 0 < λ < 1 < μ, got λ = {lambda}, μ = {mu}")));
    }
    Ok(())
}

/// Planar mixing map `g(x, y) = (λx, μy) + (β₁(r)x, −β₂(r)y)`, `r = x² + y²`,
/// with trapezoid profiles of masses `1 − λ` and `μ − 1`. Radii are in `r` units.
pub fn mane_mix_2d<T: Scalar>(lambda: f64, mu: f64, rho: f64, l: f64, r1: f64, eps: f64) -> Result<MapModel<T>> {
    check_pair(lambda, mu)?;
    let c = ConstructionSpec::PlanarMix {
        label: Some("planar-mix".into()),
        point: vec![0.0, 0.0],
        eps,
        profile: PlanarProfile::Trapezoid { rho, l, r1 },
        strong_cutoff: None,
    };
    MapModel::from_spec(&euclidean(vec![lambda, mu], vec![Bundle::Ws, Bundle::Wu], vec![c]))
}

/// Profile parameters used by [`embed_center_4d`] for a given ε: `(ρ, l, r₁)`.
pub fn embed_profile_parameters(eps: f64) -> (f64, f64, f64) {
    (eps / 5.0, eps / 5.0, 0.8 * eps)
}

/// Planar mixing on the center of `diag(λ, μ, λ^ss, μ^uu)` acting on `(x, y, z, t)`,
/// switched off by `ρ(w)`, `w = z² + t²`, supported in `[0, δ_w]`.
///
/// Requires `δ_w ≤ 0.4ε` so that the map is linear wherever `‖·‖² ≥ ε`.
pub fn embed_center_4d<T: Scalar>(
    lambda_ss: f64,
    lambda: f64,
    mu: f64,
    mu_uu: f64,
    eps: f64,
    delta_w: f64,
) -> Result<MapModel<T>> {
    check_pair(lambda, mu)?;
    if !(0.0 < lambda_ss && lambda_ss < lambda && mu < mu_uu) {
        return Err(Error::NotHyperbolicLinearPart(format!(
            "need 0 < λss < λ < 1 < μ < μuu, got λss = {lambda_ss}, μuu = {mu_uu}"
        )));
    }
    if !(delta_w > 0.0 && delta_w <= 0.4 * eps) {
        return Err(Error::BadGeometry(format!("strong cutoff δ_w = {delta_w} must lie in (0, 0.4ε]")));
    }
    let (rho, l, r1) = embed_profile_parameters(eps);
    let c = ConstructionSpec::PlanarMix {
        label: Some("planar-mix".into()),
        point: vec![0.0; 4],
        eps,
        profile: PlanarProfile::Trapezoid { rho, l, r1 },
        strong_cutoff: Some(delta_w),
    };
    MapModel::from_spec(&euclidean(
        vec![lambda, mu, lambda_ss, mu_uu],
        vec![Bundle::Ws, Bundle::Wu, Bundle::Ss, Bundle::Uu],
        vec![c],
    ))
}

/// k-dimensional contracting center: plateau flattening to rate λ, blended on
/// `[δ/2, δ]` to the radial map `(1 − r)x`. Requires `δ ≤ 1 − λ`.
pub fn contracting_center_kd<T: Scalar>(eigenvalues: &[f64], lambda: f64, eps: f64, delta: f64) -> Result<MapModel<T>> {
    let k = eigenvalues.len();
    if k == 0 {
        return Err(Error::BadGeometry("need at least one eigenvalue".into()));
    }
    if eigenvalues.windows(2).any(|w| w[0] > w[1]) || eigenvalues.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::BadGeometry("eigenvalues must be ascending in (0, 1)".into()));
    }
    if !(eigenvalues[k - 1] < lambda && lambda < 1.0) {
        return Err(Error::BadGeometry(format!("λ = {lambda} must lie in (λ_k, 1)")));
    }
    if !(delta < eps) {
        return Err(Error::BadGeometry(format!("need δ < ε, got δ = {delta}, ε = {eps}")));
    }
    let c = ConstructionSpec::Flatten {
        label: Some("contracting-center".into()),
        point: vec![0.0; k],
        factors: vec![Bundle::Ws],
        lambda: Some(lambda),
        eps,
        delta,
        blend: BlendSpec { kind: CutoffKind::Eased, inner_ratio: 0.5 },
        strong_cutoff: None,
    };
    MapModel::from_spec(&euclidean(eigenvalues.to_vec(), vec![Bundle::Ws; k], vec![c]))
}

/// A DA map on the torus: `A` modified by local constructions at fixed points.
pub fn general_da<T: Scalar>(a: &ToralAutomorphism<T>, constructions: Vec<ConstructionSpec>) -> Result<MapModel<T>> {
    let m = a.matrix();
    let (lo, hi) = a.weak_band();
    let matrix = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
    let mut spec = MapSpec::linear_torus(matrix, [lo.f64(), hi.f64()]);
    spec.constructions = constructions;
    MapModel::from_spec(&spec)
}

/// Measured deviation of a surgery from its base over the surgery ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub label: String,
    pub c0_deviation: f64,
    pub c1_deviation: f64,
    pub declared_eta: f64,
    pub samples: usize,
}

/// Blends the base map toward `f(p) + B(x − p)` near a fixed point `p`.
///
/// The C⁰ and C¹ deviations are measured on a deterministic sample of the ball
/// (log-spaced radii, random directions); a C¹ deviation above `1.1·η` is an error.
pub fn franks_surgery<T: Scalar>(base: &MapModel<T>, spec: SurgerySpec) -> Result<(MapModel<T>, SurgeryReport)> {
    let n = base.n();
    if spec.point.len() != n {
        return Err(Error::BadGeometry("surgery point has wrong dimension".into()));
    }
    let p: Vec<T> = spec.point.iter().map(|&c| T::lit(c)).collect();
    let mut fp = vec![T::zero(); n];
    base.eval_slice(&p, &mut fp);
    let defect = if base.is_torus() {
        crate::torus_linear::torus_dist2(&fp, &p).sqrt()
    } else {
        norm2(&fp.iter().zip(&p).map(|(&a, &b)| a - b).collect::<Vec<_>>())
    };
    if defect.f64() > FIXED_TOL {
        return Err(Error::NotAFixedPoint { defect: defect.f64() });
    }
    let label = spec.label.clone().unwrap_or_else(|| format!("surgery-{}", base.spec().surgeries.len()));
    let radius = spec.radius;
    let inner = spec.radius * spec.inner_ratio;
    let mut full = base.spec().clone();
    full.surgeries.push(spec);
    let new = MapModel::<T>::from_spec(&full)?;
    let eta = new.surgery_etas().last().copied().unwrap_or_else(T::zero).f64();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5u64 << 32 | n as u64);
    let samples = 2048;
    let (mut c0, mut c1) = (0.0f64, 0.0f64);
    let (mut fa, mut fb) = (vec![T::zero(); n], vec![T::zero(); n]);
    let (mut ja, mut jb) = (vec![T::zero(); n * n], vec![T::zero(); n * n]);
    let (lmin, lmax) = (inner.max(radius * 1e-12).ln(), radius.ln());
    for s in 0..samples {
        let t = if s == 0 { 0.0 } else { (lmin + (lmax - lmin) * rng.random::<f64>()).exp() };
        let mut dir: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let dn = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-300);
        dir.iter_mut().for_each(|d| *d *= t / dn);
        let x: Vec<T> = p.iter().zip(&dir).map(|(&a, &d)| a + T::lit(d)).collect();
        base.eval_jac_slice(&x, &mut fa, &mut ja);
        new.eval_jac_slice(&x, &mut fb, &mut jb);
        let d0 = norm2(&fa.iter().zip(&fb).map(|(&a, &b)| a - b).collect::<Vec<_>>()).f64();
        let dj = DMatrix::from_fn(n, n, |i, j| jb[i * n + j] - ja[i * n + j]);
        c0 = c0.max(d0);
        c1 = c1.max(op_norm2(&dj).f64());
    }
    if c1 > 1.1 * eta + 1e-9 {
        return Err(Error::SurgeryTooLarge { measured: c1, declared: eta });
    }
    Ok((new, SurgeryReport { label, c0_deviation: c0, c1_deviation: c1, declared_eta: eta, samples }))
}

/// Stable index of a fixed point and the eigen-data behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    /// Number of eigenvalues of modulus < 1.
    pub index: usize,
    /// `(re, im)` pairs, sorted by modulus.
    pub eigenvalues: Vec<[f64; 2]>,
    pub moduli: Vec<f64>,
    /// Some modulus lies within 1e−6 of 1: the index is not robust.
    pub near_neutral: bool,
    /// Some eigenvalue is non-real.
    pub complex: bool,
    /// Non-real eigenvalues whose modulus is in the weak band `(λ_s, λ_u)` of the linear part.
    pub complex_center: bool,
    pub fixed_defect: f64,
    pub warning: Option<String>,
}

/// Counts Jacobian eigenvalues of modulus below one at a fixed point.
pub fn fixed_point_index<T: Scalar>(map: &MapModel<T>, p: &TorusPoint<T>) -> Result<IndexReport> {
    let x = p.to_lift();
    let fx = map.eval_lift(&x);
    let defect = if map.is_torus() {
        crate::torus_linear::torus_dist2(&fx.coords, &x.coords).sqrt().f64()
    } else {
        norm2(&fx.coords.iter().zip(&x.coords).map(|(&a, &b)| a - b).collect::<Vec<_>>()).f64()
    };
    if defect > FIXED_TOL {
        return Err(Error::NotAFixedPoint { defect });
    }
    let j = map.jacobian(&LiftPoint::new(x.coords.clone())).map(|v| v.f64());
    let mut ev: Vec<[f64; 2]> = j.complex_eigenvalues().iter().map(|z| [z.re, z.im]).collect();
    ev.sort_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])).then(a[1].total_cmp(&b[1])));
    let moduli: Vec<f64> = ev.iter().map(|z| z[0].hypot(z[1])).collect();
    let index = moduli.iter().filter(|&&m| m < 1.0).count();
    let near_neutral = moduli.iter().any(|m| (m - 1.0).abs() < 1e-6);
    let is_complex = |z: &[f64; 2]| z[1].abs() > 1e-9 * (1.0 + z[0].hypot(z[1]));
    let complex = ev.iter().any(is_complex);
    let lin = map.linear();
    let strong_s = lin.bundle_moduli(Bundle::Ss).map_or(0.0, |(_, hi)| hi.f64());
    let strong_u = lin.bundle_moduli(Bundle::Uu).map_or(f64::INFINITY, |(lo, _)| lo.f64());
    let complex_center = ev.iter().any(|z| {
        let m = z[0].hypot(z[1]);
        is_complex(z) && m > strong_s && m < strong_u
    });
    let warning = near_neutral.then(|| "eigenvalue modulus within 1e-6 of 1: fixed point is not hyperbolic".to_string());
    Ok(IndexReport { index, eigenvalues: ev, moduli, near_neutral, complex, complex_center, fixed_defect: defect, warning })
}
