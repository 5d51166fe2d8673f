//! Sampled certificates of cone invariance and expansion along finite orbits.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cone::{ConeField, ConeSpec};
use crate::da_maps::MapModel;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::torus_linear::LiftPoint;

/// Relative slack allowed for round-off in membership and rate checks.
pub const CERT_SLACK: f64 = 1e-12;
const MAX_WITNESSES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Constants and sampling density of a certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub lambda0: f64,
    pub c: f64,
    pub samples_per_step: usize,
    /// Number of starting steps `l` at which the cumulative expansion is sampled.
    pub expansion_starts: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { lambda0: 1.0, c: 1.0, samples_per_step: 64, expansion_starts: 8, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessKind {
    Invariance,
    Expansion,
}

/// A sampled vector that broke the certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeWitness {
    pub kind: WitnessKind,
    pub step: usize,
    /// Iterates after `step` (expansion witnesses only).
    pub iterates: usize,
    pub point: Vec<f64>,
    pub vector: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitConeCertificate {
    pub direction: Direction,
    pub orbit: Vec<Vec<f64>>,
    pub theta: f64,
    pub d: usize,
    pub lambda0: f64,
    pub c: f64,
    pub horizon: usize,
    pub samples_per_step: usize,
    /// Smallest `−B(w)/‖w‖²` of a pushed sample in its successor cone (≥ 0 inside).
    pub invariance_margin: f64,
    /// Largest λ₀ the samples support: min over `(l, n, v)` of `(‖Dⁿv‖/(C‖v‖))^{1/n}`.
    pub max_rate: f64,
    /// Per step, the smallest one-step max-norm ratio `‖Dv‖/‖v‖` over the samples.
    pub step_expansion: Vec<f64>,
    /// Worst slack: `min(invariance_margin, max_rate/λ₀ − 1)`.
    pub margin: f64,
    pub pass: bool,
    pub witnesses: Vec<ConeWitness>,
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.f64()).collect()
}

fn mul<T: Scalar>(m: &DMatrix<T>, v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    crate::linalg::mat_vec(m, v, &mut out);
    out
}

fn step_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Certifies a cone field along a given orbit `x₀, …, x_N` whose step
/// derivatives are `steps[l]: T_{x_l} → T_{x_{l+1}}`.
pub fn certify_along<T: Scalar>(
    orbit: &[LiftPoint<T>],
    steps: &[DMatrix<T>],
    field: &ConeField<T>,
    direction: Direction,
    opts: &CertifyOptions,
) -> OrbitConeCertificate {
    let horizon = steps.len();
    debug_assert_eq!(orbit.len(), horizon + 1);
    let cones: Vec<ConeSpec<T>> = orbit.iter().map(|x| field.at(x.clone())).collect();
    let mut witnesses = Vec::new();
    let mut inv_margin = f64::INFINITY;
    let mut step_expansion = Vec::with_capacity(horizon);
    let per = opts.samples_per_step.max(1);

    for l in 0..horizon {
        let mut rng = step_rng(opts.seed, 2 * l as u64);
        let mut worst_ratio = f64::INFINITY;
        for s in 0..per {
            let v = cones[l].sample(&mut rng, s % 2 == 0);
            let w = cones[l + 1].project(&mul(&steps[l], &v));
            let m = cones[l + 1].inner_margin(&w).f64();
            inv_margin = inv_margin.min(m);
            let ratio = (cones[l + 1].max_norm(&w) / cones[l].max_norm(&v)).f64();
            worst_ratio = worst_ratio.min(ratio);
            if m < -CERT_SLACK && witnesses.len() < MAX_WITNESSES {
                witnesses.push(ConeWitness {
                    kind: WitnessKind::Invariance,
                    step: l,
                    iterates: 1,
                    point: to_f64(&orbit[l].coords),
                    vector: to_f64(&v),
                    value: m,
                });
            }
        }
        step_expansion.push(worst_ratio);
    }

    // cumulative expansion from a spread of starting steps
    let mut log_rate = f64::INFINITY;
    let log_l0 = opts.lambda0.ln();
    let log_c = opts.c.ln();
    let starts = opts.expansion_starts.max(1).min(horizon.max(1));
    for k in 0..starts {
        let l = k * horizon / starts;
        if l >= horizon {
            break;
        }
        let mut rng = step_rng(opts.seed, 2 * l as u64 + 1);
        for s in 0..per {
            let v = cones[l].sample(&mut rng, s % 2 == 0);
            let v_norm = cones[l].max_norm(&v).f64();
            let mut u = v.clone();
            for n in 1..=horizon - l {
                u = cones[l + n].project(&mul(&steps[l + n - 1], &u));
                let r = (cones[l + n].max_norm(&u).f64() / v_norm).ln() - log_c;
                let rate = r / n as f64;
                log_rate = log_rate.min(rate);
                if r < n as f64 * log_l0 - CERT_SLACK * n as f64 && witnesses.len() < MAX_WITNESSES {
                    witnesses.push(ConeWitness {
                        kind: WitnessKind::Expansion,
                        step: l,
                        iterates: n,
                        point: to_f64(&orbit[l].coords),
                        vector: to_f64(&v),
                        value: rate.exp(),
                    });
                }
            }
        }
    }
    if horizon == 0 {
        inv_margin = 0.0;
        log_rate = f64::INFINITY;
    }
    let max_rate = log_rate.exp();
    let pass = inv_margin >= -CERT_SLACK && log_rate >= log_l0 - CERT_SLACK;
    OrbitConeCertificate {
        direction,
        orbit: orbit.iter().map(|x| to_f64(&x.coords)).collect(),
        theta: field.theta().f64(),
        d: field.dim(),
        lambda0: opts.lambda0,
        c: opts.c,
        horizon,
        samples_per_step: per,
        invariance_margin: inv_margin,
        max_rate,
        step_expansion,
        margin: inv_margin.min(max_rate / opts.lambda0 - 1.0),
        pass,
        witnesses,
    }
}

/// Forward orbit `x, f(x), …, f^N(x)` with step derivatives `Df(x_l)`.
pub fn forward_orbit<T: Scalar>(map: &MapModel<T>, x: &LiftPoint<T>, horizon: usize) -> (Vec<LiftPoint<T>>, Vec<DMatrix<T>>) {
    let mut orbit = vec![x.clone()];
    let mut steps = Vec::with_capacity(horizon);
    for l in 0..horizon {
        steps.push(map.jacobian(&orbit[l]));
        orbit.push(map.eval_lift(&orbit[l]));
    }
    (orbit, steps)
}

/// Backward orbit `x, f⁻¹(x), …` with step derivatives `Df(x_{l+1})⁻¹`.
pub fn backward_orbit<T: Scalar>(
    map: &MapModel<T>,
    x: &LiftPoint<T>,
    horizon: usize,
) -> Result<(Vec<LiftPoint<T>>, Vec<DMatrix<T>>)> {
    let mut orbit = vec![x.clone()];
    let mut steps = Vec::with_capacity(horizon);
    for l in 0..horizon {
        let prev = map.inverse_lift(&orbit[l])?;
        let j = map.jacobian(&prev);
        steps.push(j.try_inverse().ok_or(crate::error::Error::InverseFailed { residual: f64::NAN })?);
        orbit.push(prev);
    }
    Ok((orbit, steps))
}

/// Cone certificate along the forward orbit of `x`.
pub fn certify_forward_cones<T: Scalar>(
    map: &MapModel<T>,
    x: &LiftPoint<T>,
    field: &ConeField<T>,
    horizon: usize,
    opts: &CertifyOptions,
) -> OrbitConeCertificate {
    let (orbit, steps) = forward_orbit(map, x, horizon);
    certify_along(&orbit, &steps, field, Direction::Forward, opts)
}

/// Backward analogue, with the inverse map obtained by Newton iteration.
pub fn certify_backward_cones<T: Scalar>(
    map: &MapModel<T>,
    x: &LiftPoint<T>,
    field: &ConeField<T>,
    horizon: usize,
    opts: &CertifyOptions,
) -> Result<OrbitConeCertificate> {
    let (orbit, steps) = backward_orbit(map, x, horizon)?;
    Ok(certify_along(&orbit, &steps, field, Direction::Backward, opts))
}
