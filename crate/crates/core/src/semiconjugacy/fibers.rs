//! Fibers of `H` on the grid: nodes with (numerically) equal images.
//!
//! Images are bucketed on `n + 1` diagonally shifted periodic grids of side
//! `s ≥ (n+1)·c`; any two images closer than `c` share a cell in at least one
//! of them. Candidate pairs are verified by distance, and verified pairs that
//! are grid neighbors are merged into components.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{node_coords, node_index, ConjugacyField};
use crate::error::{Error, Result};
use crate::torus_linear::torus_dist2;

/// Image distances below `max(residual, FLOOR)·SAFETY` count as equal.
const SAFETY: f64 = 4.0;
const FLOOR: f64 = 1e-14;
/// Runs longer than this are scanned against an anchor and by neighbor lookup.
const PAIRWISE_RUN: usize = 512;
const PAIRWISE_DIAMETER: usize = 2048;
const REPORTED_COMPONENTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberComponent {
    pub size: usize,
    pub diameter: f64,
    pub representative: Vec<f64>,
    /// `H` of the representative, mod ℤⁿ.
    pub image: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberWitness {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub distance: f64,
    pub image_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub grid: usize,
    pub cell: f64,
    pub rho: f64,
    pub residual: f64,
    /// Images closer than this are identified.
    pub threshold: f64,
    /// Largest verified same-image pair distance.
    pub lambda_lower: f64,
    /// Largest component diameter (meaningful up to one grid cell).
    pub lambda_upper: f64,
    pub witness: Option<FiberWitness>,
    pub nodes: usize,
    pub components: usize,
    pub non_singleton_nodes: usize,
    pub non_singleton_fraction: f64,
    /// Largest components, by diameter.
    pub largest: Vec<FiberComponent>,
    /// Every component diameter is below `rho` (user constant).
    pub rho_light: bool,
}

struct Dsu(Vec<u32>);

impl Dsu {
    fn find(&mut self, mut i: u32) -> u32 {
        while self.0[i as usize] != i {
            let p = self.0[self.0[i as usize] as usize];
            self.0[i as usize] = p;
            i = p;
        }
        i
    }
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi as usize] = lo;
        }
    }
}

fn wrapped_image(field: &ConjugacyField, idx: usize) -> Vec<f64> {
    let x = field.node_point(idx);
    x.iter().zip(field.node_value(idx)).map(|(a, b)| (a + b) - (a + b).floor()).collect()
}

fn mix(h: u64, k: u64) -> u64 {
    (h ^ k).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(29)
}

/// Grid neighbors (periodic, `3ⁿ − 1` adjacency).
fn are_neighbors(a: usize, b: usize, n: usize, g: usize) -> bool {
    let (ca, cb) = (node_coords(a, n, g), node_coords(b, n, g));
    ca.iter().zip(&cb).all(|(&p, &q)| {
        let d = p.abs_diff(q);
        d <= 1 || d == g - 1
    })
}

fn neighbor_offsets(n: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let off: Vec<i64> = (0..n)
            .map(|_| {
                let d = (c % 3) as i64 - 1;
                c /= 3;
                d
            })
            .collect();
        if off.iter().any(|&d| d != 0) {
            out.push(off);
        }
    }
    out
}

fn shifted(c: &[usize], off: &[i64], g: usize) -> Vec<usize> {
    c.iter().zip(off).map(|(&k, &d)| (k as i64 + d).rem_euclid(g as i64) as usize).collect()
}

struct Scan {
    dsu: Dsu,
    best: Option<(usize, usize, f64, f64)>,
}

impl Scan {
    fn verify(&mut self, field: &ConjugacyField, images: &HashMap<usize, Vec<f64>>, a: usize, b: usize, c2: f64) {
        let d_img = torus_dist2(&images[&a], &images[&b]);
        if d_img > c2 {
            return;
        }
        let dist = torus_dist2(&field.node_point(a), &field.node_point(b)).sqrt();
        if self.best.as_ref().is_none_or(|w| dist > w.2) {
            self.best = Some((a, b, dist, d_img.sqrt()));
        }
        if are_neighbors(a, b, field.n, field.grid) {
            self.dsu.union(a as u32, b as u32);
        }
    }
}

/// Fiber components of `H` on the grid of `field`, at resolution `rho`.
pub fn fiber_analysis(field: &ConjugacyField, rho: f64) -> Result<FiberReport> {
    let (n, g) = (field.n, field.grid);
    let cell = 1.0 / g as f64;
    if !(rho > 0.0) {
        return Err(Error::Precondition("rho must be positive".into()));
    }
    if cell > rho / 4.0 {
        return Err(Error::ResolutionTooCoarse { cell, limit: rho / 4.0 });
    }
    if !(field.residual <= rho / 10.0) {
        return Err(Error::Precondition(format!("field residual {} exceeds rho/10 = {}", field.residual, rho / 10.0)));
    }
    let total = field.nodes();
    if total > u32::MAX as usize {
        return Err(Error::Precondition("grid too large for fiber analysis".into()));
    }
    let threshold = SAFETY * field.residual.max(FLOOR);
    let c2 = threshold * threshold;
    let m = (1.0 / ((n + 1) as f64 * threshold * 1.01)).floor().max(1.0);
    let side = 1.0 / m;
    let offsets = neighbor_offsets(n);
    let mut scan = Scan { dsu: Dsu((0..total as u32).collect()), best: None };

    for j in 0..=n {
        let shift = j as f64 * side / (n + 1) as f64;
        let mut keys: Vec<(u64, u32)> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let key = wrapped_image(field, idx).iter().fold(0xCBF2_9CE4_8422_2325u64, |h, &t| {
                    let u = t + shift;
                    let u = u - u.floor();
                    mix(h, ((u * m).floor().min(m - 1.0)) as u64)
                });
                (key, idx as u32)
            })
            .collect();
        keys.par_sort_unstable();
        let mut start = 0;
        while start < keys.len() {
            let mut end = start + 1;
            while end < keys.len() && keys[end].0 == keys[start].0 {
                end += 1;
            }
            if end - start > 1 {
                let run: Vec<usize> = keys[start..end].iter().map(|k| k.1 as usize).collect();
                let images: HashMap<usize, Vec<f64>> = run.iter().map(|&i| (i, wrapped_image(field, i))).collect();
                if run.len() <= PAIRWISE_RUN {
                    for (p, &a) in run.iter().enumerate() {
                        for &b in &run[p + 1..] {
                            scan.verify(field, &images, a, b, c2);
                        }
                    }
                } else {
                    let members: HashSet<usize> = run.iter().copied().collect();
                    for &a in &run[1..] {
                        scan.verify(field, &images, run[0], a, c2);
                    }
                    for &a in &run {
                        let ca = node_coords(a, n, g);
                        for off in &offsets {
                            let b = node_index(&shifted(&ca, off, g), g);
                            if b > a && members.contains(&b) {
                                scan.verify(field, &images, a, b, c2);
                            }
                        }
                    }
                }
            }
            start = end;
        }
    }

    let mut groups: HashMap<u32, Vec<usize>> = HashMap::new();
    for i in 0..total as u32 {
        let r = scan.dsu.find(i);
        if r != i {
            groups.entry(r).or_default().push(i as usize);
        }
    }
    let mut comps: Vec<FiberComponent> = groups
        .into_iter()
        .map(|(root, mut members)| {
            members.push(root as usize);
            members.sort_unstable();
            FiberComponent {
                size: members.len(),
                diameter: component_diameter(&members, n, g),
                representative: field.node_point(members[0]),
                image: wrapped_image(field, members[0]),
            }
        })
        .collect();
    comps.sort_by(|a, b| b.diameter.total_cmp(&a.diameter).then_with(|| a.representative.partial_cmp(&b.representative).unwrap()));
    let non_singleton_nodes: usize = comps.iter().map(|c| c.size).sum();
    let lambda_upper = comps.first().map_or(0.0, |c| c.diameter);
    let components = total - non_singleton_nodes + comps.len();
    let witness = scan.best.map(|(a, b, d, di)| FiberWitness { a: field.node_point(a), b: field.node_point(b), distance: d, image_distance: di });
    comps.truncate(REPORTED_COMPONENTS);
    Ok(FiberReport {
        grid: g,
        cell,
        rho,
        residual: field.residual,
        threshold,
        lambda_lower: witness.as_ref().map_or(0.0, |w| w.distance),
        lambda_upper,
        witness,
        nodes: total,
        components,
        non_singleton_nodes,
        non_singleton_fraction: non_singleton_nodes as f64 / total as f64,
        largest: comps,
        rho_light: lambda_upper < rho,
    })
}

/// Diameter of a grid-connected node set, after unwrapping it into ℝⁿ.
fn component_diameter(members: &[usize], n: usize, g: usize) -> f64 {
    let set: HashSet<usize> = members.iter().copied().collect();
    let offsets = neighbor_offsets(n);
    let mut lifted: HashMap<usize, Vec<i64>> = HashMap::new();
    let mut queue = std::collections::VecDeque::new();
    let start = members[0];
    lifted.insert(start, node_coords(start, n, g).into_iter().map(|k| k as i64).collect());
    queue.push_back(start);
    while let Some(a) = queue.pop_front() {
        let la = lifted[&a].clone();
        let ca = node_coords(a, n, g);
        for off in &offsets {
            let b = node_index(&shifted(&ca, off, g), g);
            if set.contains(&b) && !lifted.contains_key(&b) {
                lifted.insert(b, la.iter().zip(off).map(|(p, d)| p + d).collect());
                queue.push_back(b);
            }
        }
    }
    let pts: Vec<Vec<f64>> = members.iter().map(|m| lifted[m].iter().map(|&k| k as f64 / g as f64).collect()).collect();
    if pts.len() <= PAIRWISE_DIAMETER {
        let mut best = 0.0f64;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                best = best.max(p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
            }
        }
        best.sqrt()
    } else {
        // bounding-box diagonal: an upper bound
        (0..n)
            .map(|i| {
                let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[i]), hi.max(p[i])));
                (hi - lo).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}
