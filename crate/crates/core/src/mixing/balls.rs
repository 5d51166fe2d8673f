//! Open balls on the torus with quasi-uniform sample clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus_linear::{torus_dist2, wrap01};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Generator for an independent stream of a single 64-bit seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let (mut f, mut out) = (inv, 0.0);
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

/// Volume of the unit ball in ℝⁿ.
fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl OpenBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || center.is_empty() || center.len() > PRIMES.len() {
            return Err(Error::BadGeometry(format!("ball of radius {radius} in dimension {}", center.len())));
        }
        Ok(OpenBall { center: center.into_iter().map(wrap01).collect(), radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// The ball contains the whole torus (radius beyond its diameter `√n/2`).
    pub fn is_whole(&self) -> bool {
        self.radius > 0.5 * (self.dim() as f64).sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        torus_dist2(x, &self.center) < self.radius * self.radius
    }

    /// Typical distance between neighboring samples of a `k`-point cloud.
    pub fn spacing(&self, k: usize) -> f64 {
        let n = self.dim();
        if self.is_whole() {
            (1.0 / k as f64).powf(1.0 / n as f64)
        } else {
            self.radius * (unit_ball_volume(n) / k as f64).powf(1.0 / n as f64)
        }
    }

    /// `k` Halton points (Cranley–Patterson shifted by `rng`) in the ball,
    /// reduced mod 1. The first `k` points of a larger cloud from the same
    /// stream are exactly this cloud.
    pub fn cloud(&self, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let n = self.dim();
        let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut out = Vec::with_capacity(k);
        let mut i = 1u64;
        while out.len() < k {
            let u: Vec<f64> = (0..n).map(|j| (radical_inverse(i, PRIMES[j]) + shift[j]).fract()).collect();
            i += 1;
            if self.is_whole() {
                out.push(u);
                continue;
            }
            let p: Vec<f64> = u.iter().map(|t| 2.0 * t - 1.0).collect();
            if p.iter().map(|t| t * t).sum::<f64>() < 1.0 {
                out.push(self.center.iter().zip(&p).map(|(c, t)| wrap01(c + self.radius * t)).collect());
            }
        }
        out
    }
}
