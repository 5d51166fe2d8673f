//! Sample-based mixing: first iterate after which `fᵏ(U)` meets `V` for a
//! whole window of consecutive `k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::balls::{stream_rng, OpenBall};
use crate::da_maps::MapModel;
use crate::error::{Error, Result};
use crate::torus_linear::{torus_dist2, wrap01};

/// A self-map of the torus, iterated on `[0,1)ⁿ` representatives.
pub trait TorusMap: Sync {
    fn dim(&self) -> usize;
    /// `f(x)` reduced mod 1.
    fn step(&self, x: &[f64], out: &mut [f64]);
}

impl TorusMap for MapModel<f64> {
    fn dim(&self) -> usize {
        self.n()
    }
    fn step(&self, x: &[f64], out: &mut [f64]) {
        self.eval_slice(x, out);
        out.iter_mut().for_each(|t| *t = wrap01(*t));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOptions {
    /// Cloud size per `U`.
    pub samples: usize,
    pub horizon: usize,
    /// `fᵏ(U) ∩ V ≠ ∅` is required for every `k ∈ [N, N + window]`.
    pub window: usize,
    pub seed: u64,
}

impl Default for MixingOptions {
    fn default() -> Self {
        MixingOptions { samples: 4096, horizon: 200, window: 10, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStatus {
    Mixed,
    /// No window of hits found within the horizon at this sample budget
    /// (not a proof that the sets stay apart).
    HorizonExceeded,
}

/// Sample `x ∈ U` with `fᵏ(x) ∈ V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitWitness {
    pub k: usize,
    pub sample: usize,
    pub x: Vec<f64>,
    pub image: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub index: usize,
    pub u: OpenBall,
    pub v: OpenBall,
    pub status: PairStatus,
    pub first_hit: Option<usize>,
    /// `hits[k]`: some sample of `U` lands in `V` after `k` steps, `k = 0..=horizon`.
    pub hits: Vec<bool>,
    /// One witness per `k ∈ [N, N + window]`.
    pub witnesses: Vec<HitWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub options: MixingOptions,
    pub pairs: Vec<PairResult>,
    pub max_first_hit: Option<usize>,
    pub failures: usize,
    pub pass: bool,
}

impl MixingReport {
    /// Pair × iterate hit matrix as CSV (`pair,k0,k1,…`, entries 0/1).
    pub fn hits_csv(&self) -> String {
        let horizon = self.options.horizon;
        let mut s = String::from("pair");
        for k in 0..=horizon {
            s.push_str(&format!(",k{k}"));
        }
        s.push('\n');
        for p in &self.pairs {
            s.push_str(&p.index.to_string());
            for &h in &p.hits {
                s.push_str(if h { ",1" } else { ",0" });
            }
            s.push('\n');
        }
        s
    }
}

/// Re-runs the orbit of a stored witness and checks it lands in `v`.
pub fn verify_witness<M: TorusMap + ?Sized>(map: &M, w: &HitWitness, v: &OpenBall) -> bool {
    let mut x = w.x.clone();
    let mut y = vec![0.0; x.len()];
    for _ in 0..w.k {
        map.step(&x, &mut y);
        std::mem::swap(&mut x, &mut y);
    }
    x == w.image && torus_dist2(&x, &v.center) < v.radius * v.radius
}

fn run_pair<M: TorusMap + ?Sized>(map: &M, index: usize, u: &OpenBall, v: &OpenBall, opts: &MixingOptions) -> PairResult {
    let n = map.dim();
    let mut rng = stream_rng(opts.seed, 2 * index as u64);
    let cloud = u.cloud(opts.samples, &mut rng);
    let mut state: Vec<f64> = cloud.iter().flatten().copied().collect();
    let mut hits = Vec::with_capacity(opts.horizon + 1);
    // first sample index in V at each step
    let mut first: Vec<Option<usize>> = Vec::with_capacity(opts.horizon + 1);
    for k in 0..=opts.horizon {
        if k > 0 {
            state.par_chunks_mut(n * 256).for_each(|chunk| {
                let mut y = vec![0.0; n];
                for x in chunk.chunks_mut(n) {
                    map.step(x, &mut y);
                    x.copy_from_slice(&y);
                }
            });
        }
        let hit = state.par_chunks(n).position_first(|x| v.contains(x));
        hits.push(hit.is_some());
        first.push(hit);
    }
    let window = opts.window;
    let first_hit = (0..=opts.horizon.saturating_sub(window)).find(|&s| s + window <= opts.horizon && hits[s..=s + window].iter().all(|&h| h));
    let witnesses = match first_hit {
        Some(s) => (s..=s + window)
            .map(|k| {
                let sample = first[k].expect("hit");
                let x = cloud[sample].clone();
                let mut image = x.clone();
                let mut y = vec![0.0; n];
                for _ in 0..k {
                    map.step(&image, &mut y);
                    std::mem::swap(&mut image, &mut y);
                }
                HitWitness { k, sample, x, image }
            })
            .collect(),
        None => Vec::new(),
    };
    PairResult {
        index,
        u: u.clone(),
        v: v.clone(),
        status: if first_hit.is_some() { PairStatus::Mixed } else { PairStatus::HorizonExceeded },
        first_hit,
        hits,
        witnesses,
    }
}

/// Iterates a quasi-uniform cloud of each `U` and records when it meets `V`.
pub fn mixing_experiment<M: TorusMap + ?Sized>(map: &M, pairs: &[(OpenBall, OpenBall)], opts: &MixingOptions) -> Result<MixingReport> {
    if opts.samples == 0 {
        return Err(Error::Precondition("sample cloud must be nonempty".into()));
    }
    for (u, v) in pairs {
        if u.dim() != map.dim() || v.dim() != map.dim() {
            return Err(Error::BadGeometry("ball dimension differs from the map's".into()));
        }
        let h = u.spacing(opts.samples);
        if !u.is_whole() && u.radius < 4.0 * h {
            return Err(Error::Precondition(format!("ball radius {} below 4x sample spacing {h}", u.radius)));
        }
    }
    let results: Vec<PairResult> = pairs.iter().enumerate().map(|(i, (u, v))| run_pair(map, i, u, v, opts)).collect();
    let failures = results.iter().filter(|r| r.status != PairStatus::Mixed).count();
    Ok(MixingReport {
        options: *opts,
        max_first_hit: results.iter().filter_map(|r| r.first_hit).max(),
        failures,
        pass: failures == 0,
        pairs: results,
    })
}

/// `count` pairs of balls of radius `radius` with uniformly random centers.
pub fn random_ball_pairs(n: usize, count: usize, radius: f64, seed: u64) -> Result<Vec<(OpenBall, OpenBall)>> {
    use rand::Rng;
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, (1 << 32) + i as u64);
            let mut c = || (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
            let (a, b) = (c(), c());
            Ok((OpenBall::new(a, radius)?, OpenBall::new(b, radius)?))
        })
        .collect()
}
