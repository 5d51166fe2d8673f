//! The Franks semiconjugacy `H = Id + v` with `A∘H = H∘f̃`, by series.
//!
//! `A v(x) = φ(x) + v(f̃x)` with `φ = f̃ − A`. In eigen-coordinates (`ψ = V⁻¹φ`,
//! block-diagonal `D`) the unstable part is `Σ_{j≥0} D_u^{−(j+1)} ψ_u(f̃ʲx)` and
//! the stable part `−Σ_{j≥1} D_s^{j−1} ψ_s(f̃^{−j}x)`; both converge
//! geometrically and are cut when the tail bound drops below `tol/2`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::da_maps::MapModel;
use crate::error::{Error, Result};
use crate::linalg::{mat_vec, norm2, op_norm2};
use crate::torus_linear::{IntMatrix, LiftPoint};

const MAGIC: &[u8; 4] = b"SLCF";
const FORMAT_VERSION: u32 = 1;
/// Grids with at most this many nodes get their residual checked at every node.
const FULL_RESIDUAL_NODES: usize = 1 << 18;

/// Evaluation of `H` at arbitrary points of the lift.
pub trait ConjugacyEval {
    fn dim(&self) -> usize;
    /// `v(x)`, with `H(x) = x + v(x)`.
    fn displacement(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn h(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().zip(self.displacement(x)?).map(|(a, b)| a + b).collect())
    }
}

/// Knobs of [`compute_h`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// Bound on the truncation error of `v` (Euclidean norm).
    pub tol: f64,
    /// Cap on each truncation order.
    pub max_order: usize,
    /// Nodes (or node samples) at which the residual is re-evaluated.
    pub residual_samples: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { tol: 1e-9, max_order: 2000, residual_samples: 1 << 16 }
    }
}

/// Direct series evaluation of `v` for one map.
pub struct ConjugacySolver<'a> {
    map: &'a MapModel<f64>,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    /// `D^{-1}` on the unstable block, zero elsewhere.
    d_inv_u: DMatrix<f64>,
    /// `D` on the stable block, zero elsewhere.
    d_s: DMatrix<f64>,
    /// `ψ` off the supports: `V⁻¹m`.
    psi_linear: Vec<f64>,
    pub orders: (usize, usize),
    pub tail_bounds: (f64, f64),
    /// Measured `sup ‖ψ_u‖`, `sup ‖ψ_s‖` (with a 10% margin).
    pub psi_sup: (f64, f64),
    pub tol: f64,
}

fn wrap(x: &mut [f64]) {
    x.iter_mut().for_each(|t| *t -= t.floor());
}

fn block(m: &DMatrix<f64>, r: std::ops::Range<usize>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for i in r.clone() {
        for j in r.clone() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

/// Smallest `N` with `c·r^{N+shift}/(1 − r) ≤ target`.
fn order_for(c: f64, r: f64, shift: i32, target: f64, cap: usize) -> Result<(usize, f64)> {
    if c == 0.0 {
        return Ok((0, 0.0));
    }
    if !(r < 1.0) {
        return Err(Error::ToleranceUnreachable { order: usize::MAX, cap });
    }
    let tail = |k: usize| c * r.powi(k as i32 + shift) / (1.0 - r);
    let guess = ((target * (1.0 - r) / c).ln() / r.ln()).ceil() - shift as f64;
    let mut k = guess.max(0.0) as usize;
    if k > cap {
        return Err(Error::ToleranceUnreachable { order: k, cap });
    }
    while tail(k) > target {
        k += 1;
    }
    while k > 0 && tail(k - 1) <= target {
        k -= 1;
    }
    Ok((k, tail(k)))
}

impl<'a> ConjugacySolver<'a> {
    pub fn new(map: &'a MapModel<f64>, tol: f64, max_order: usize) -> Result<Self> {
        if !map.is_torus() {
            return Err(Error::Precondition("the semiconjugacy needs a torus map".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::Precondition("series tolerance must be positive".into()));
        }
        let lin = map.linear();
        let v = lin.eigenbasis().clone();
        let v_inv = lin.eigenbasis_inv().clone();
        let d = lin.block_form();
        let (su, ss) = (lin.unstable_range(), lin.stable_range());
        let d_u = d.view((su.start, su.start), (su.len(), su.len())).into_owned();
        let d_u_inv = d_u.clone().try_inverse().ok_or_else(|| Error::Precondition("singular unstable block".into()))?;
        let mut d_inv_u = DMatrix::zeros(lin.n(), lin.n());
        d_inv_u.view_mut((su.start, su.start), (su.len(), su.len())).copy_from(&d_u_inv);
        let d_s = block(d, ss.clone());
        let mut solver = ConjugacySolver {
            map,
            a: map.linear_matrix().clone(),
            a_inv: lin.real_inverse().clone(),
            v: v.clone(),
            psi_linear: {
                let mut w = vec![0.0; lin.n()];
                mat_vec(&v_inv, map.lift_shift(), &mut w);
                w
            },
            v_inv,
            d_inv_u,
            d_s,
            orders: (0, 0),
            tail_bounds: (0.0, 0.0),
            psi_sup: (0.0, 0.0),
            tol,
        };
        let (pu, ps) = solver.measure_psi();
        solver.psi_sup = (1.1 * pu, 1.1 * ps);
        let r_u = op_norm2(&d_u_inv);
        let r_s = op_norm2(&d.view((ss.start, ss.start), (ss.len(), ss.len())).into_owned());
        // ‖V‖(t_u + t_s) ≤ tol/2
        let target = tol / (4.0 * op_norm2(&v).max(1.0));
        let (nu, tu) = order_for(solver.psi_sup.0, r_u, 1, target, max_order)?;
        let (ns, ts) = order_for(solver.psi_sup.1, r_s, 0, target, max_order)?;
        solver.orders = (nu, ns);
        solver.tail_bounds = (tu * op_norm2(&v), ts * op_norm2(&v));
        Ok(solver)
    }

    /// `ψ(x) = V⁻¹(f̃x − Ax)`, split into unstable and stable parts.
    fn psi(&self, x: &[f64], fx: &[f64], out: &mut [f64]) {
        let n = x.len();
        let mut ax = vec![0.0; n];
        mat_vec(&self.a, x, &mut ax);
        let phi: Vec<f64> = fx.iter().zip(&ax).map(|(a, b)| a - b).collect();
        mat_vec(&self.v_inv, &phi, out);
    }

    /// sup of ‖ψ_u‖, ‖ψ_s‖ over a regular grid plus dense samples in each support.
    fn measure_psi(&self) -> (f64, f64) {
        let n = self.map.n();
        let lin = self.map.linear();
        let (su, ss) = (lin.unstable_range(), lin.stable_range());
        let per_axis = ((1u64 << 16) as f64).powf(1.0 / n as f64).floor().max(2.0) as usize;
        let mut pts: Vec<Vec<f64>> = crate::cones::grid_points(n, per_axis);
        let m = ((1u64 << 12) as f64).powf(1.0 / n as f64).ceil() as usize;
        for s in self.map.supports() {
            for u in crate::cones::grid_points(n, m) {
                let p: Vec<f64> = s.center.iter().zip(&u).map(|(c, t)| c + s.radius * (2.0 * t - 1.0 + 1.0 / m as f64)).collect();
                pts.push(p);
            }
        }
        let mut fx = vec![0.0; n];
        let mut psi = vec![0.0; n];
        let (mut pu, mut ps) = (0.0f64, 0.0f64);
        for p in &pts {
            self.map.eval_slice(p, &mut fx);
            self.psi(p, &fx, &mut psi);
            pu = pu.max(norm2(&psi[su.clone()]));
            ps = ps.max(norm2(&psi[ss.clone()]));
        }
        (pu, ps)
    }

    pub fn dim(&self) -> usize {
        self.map.n()
    }

    pub fn map(&self) -> &MapModel<f64> {
        self.map
    }

    /// `f̃(p)` and `ψ(p)`; off the supports `f̃ = A + m` and `ψ = V⁻¹m`.
    fn forward(&self, p: &[f64], fx: &mut [f64], psi: &mut [f64]) {
        if self.map.in_support(p) {
            self.map.eval_slice(p, fx);
            self.psi(p, fx, psi);
        } else {
            mat_vec(&self.a, p, fx);
            fx.iter_mut().zip(self.map.lift_shift()).for_each(|(a, b)| *a += b);
            psi.copy_from_slice(&self.psi_linear);
        }
    }

    /// `f̃⁻¹(q)` reduced mod ℤⁿ, and `ψ` there.
    fn backward(&self, q: &[f64], prev: &mut [f64], psi: &mut [f64]) -> Result<()> {
        let n = q.len();
        let rhs: Vec<f64> = q.iter().zip(self.map.lift_shift()).map(|(a, b)| a - b).collect();
        mat_vec(&self.a_inv, &rhs, prev);
        if self.map.in_support(prev) {
            prev.copy_from_slice(&self.map.inverse_lift(&LiftPoint::new(q.to_vec()))?.coords);
            wrap(prev);
            let mut fx = vec![0.0; n];
            self.map.eval_slice(prev, &mut fx);
            self.psi(prev, &fx, psi);
        } else {
            wrap(prev);
            psi.copy_from_slice(&self.psi_linear);
        }
        Ok(())
    }

    /// Series value of `v` at `x` (any lift; `v` is periodic).
    pub fn series(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let (nu, ns) = self.orders;
        let mut terms = vec![0.0; nu.max(ns) * n];
        let mut tmp = vec![0.0; n];
        let mut fx = vec![0.0; n];
        // unstable: Horner from the far end, acc = D_u^{-1}(ψ_j + acc)
        let mut p = x.to_vec();
        wrap(&mut p);
        for j in 0..nu {
            self.forward(&p, &mut fx, &mut terms[j * n..(j + 1) * n]);
            p.copy_from_slice(&fx);
            wrap(&mut p);
        }
        let mut yu = vec![0.0; n];
        for ps in terms[..nu * n].chunks_exact(n).rev() {
            for i in 0..n {
                tmp[i] = ps[i] + yu[i];
            }
            mat_vec(&self.d_inv_u, &tmp, &mut yu);
        }
        // stable: −Σ_{j=1}^{N_s} D_s^{j−1} ψ_s(x_{−j}), Horner acc = D_s acc + ψ_{−j}
        let mut q = x.to_vec();
        wrap(&mut q);
        let mut prev = vec![0.0; n];
        for j in 0..ns {
            self.backward(&q, &mut prev, &mut terms[j * n..(j + 1) * n])?;
            q.copy_from_slice(&prev);
        }
        let mut acc = vec![0.0; n];
        for ps in terms[..ns * n].chunks_exact(n).rev() {
            mat_vec(&self.d_s, &acc, &mut tmp);
            for i in 0..n {
                acc[i] = tmp[i] + ps[i];
            }
        }
        let lin = self.map.linear();
        let mut y = vec![0.0; n];
        for i in lin.unstable_range() {
            y[i] = yu[i];
        }
        for i in lin.stable_range() {
            y[i] = -acc[i];
        }
        let mut out = vec![0.0; n];
        mat_vec(&self.v, &y, &mut out);
        Ok(out)
    }

    /// `‖A·H(x) − H(f̃x)‖` with both values of `H` from the series; `v_x` may be
    /// a precomputed `v(x)`.
    pub fn residual_at(&self, x: &[f64], v_x: Option<&[f64]>) -> Result<f64> {
        let n = x.len();
        let vx = match v_x {
            Some(v) => v.to_vec(),
            None => self.series(x)?,
        };
        let mut fx = vec![0.0; n];
        self.map.eval_slice(x, &mut fx);
        let vfx = self.series(&fx)?;
        let mut av = vec![0.0; n];
        mat_vec(&self.a, &vx, &mut av);
        let mut ax = vec![0.0; n];
        mat_vec(&self.a, x, &mut ax);
        // A(x + v(x)) − (f̃x + v(f̃x)) = A v(x) − φ(x) − v(f̃x)
        let r: Vec<f64> = (0..n).map(|i| av[i] - (fx[i] - ax[i]) - vfx[i]).collect();
        Ok(norm2(&r))
    }
}

impl ConjugacyEval for ConjugacySolver<'_> {
    fn dim(&self) -> usize {
        self.map.n()
    }
    fn displacement(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.series(x)
    }
}

/// `v` on the regular grid `{i/G}ⁿ`, with its residual record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyField {
    pub n: usize,
    pub grid: usize,
    pub matrix: Vec<Vec<i64>>,
    /// `(N_u, N_s)`.
    pub orders: (usize, usize),
    pub tail_bounds: (f64, f64),
    pub tol: f64,
    /// sup of the series residual `‖A·H(x) − H(f̃x)‖` over the checked nodes.
    pub residual: f64,
    /// Same, at half-cell offset points.
    pub residual_offset: f64,
    /// Same with `H` interpolated from the grid (diagnostic; `v` is only Hölder).
    pub residual_interpolated: f64,
    /// Nodes used for each residual (all nodes on small grids).
    pub residual_nodes: usize,
    /// `max ‖v‖` over the grid.
    pub d_c0: f64,
    /// Constant added by [`normalize_lift`], for the record.
    pub lift_shift: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

/// Index ↔ multi-index on the grid (first coordinate slowest).
pub fn node_coords(index: usize, n: usize, g: usize) -> Vec<usize> {
    let mut rem = index;
    let mut c = vec![0; n];
    for i in (0..n).rev() {
        c[i] = rem % g;
        rem /= g;
    }
    c
}

pub fn node_index(c: &[usize], g: usize) -> usize {
    c.iter().fold(0, |acc, &k| acc * g + k)
}

impl ConjugacyField {
    pub fn nodes(&self) -> usize {
        self.grid.pow(self.n as u32)
    }

    pub fn node_point(&self, index: usize) -> Vec<f64> {
        node_coords(index, self.n, self.grid).into_iter().map(|k| k as f64 / self.grid as f64).collect()
    }

    pub fn node_value(&self, index: usize) -> &[f64] {
        &self.v[index * self.n..(index + 1) * self.n]
    }

    /// Periodic multilinear interpolation of `v`.
    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let (n, g) = (self.n, self.grid);
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for i in 0..n {
            let t = (x[i] - x[i].floor()) * g as f64;
            let k = t.floor();
            base[i] = (k as usize) % g;
            frac[i] = t - k;
        }
        let mut out = vec![0.0; n];
        let mut c = vec![0usize; n];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            for i in 0..n {
                let bit = (corner >> i) & 1;
                c[i] = (base[i] + bit) % g;
                w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
            }
            if w == 0.0 {
                continue;
            }
            let val = self.node_value(node_index(&c, g));
            for i in 0..n {
                out[i] += w * val[i];
            }
        }
        out
    }

    /// Writes the binary grid file: magic, version, n, G, A, orders, residual,
    /// then `v` node-major as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for x in [FORMAT_VERSION, self.n as u32, self.grid as u32] {
            w.write_all(&x.to_le_bytes())?;
        }
        for row in &self.matrix {
            for &a in row {
                w.write_all(&a.to_le_bytes())?;
            }
        }
        w.write_all(&(self.orders.0 as u32).to_le_bytes())?;
        w.write_all(&(self.orders.1 as u32).to_le_bytes())?;
        w.write_all(&self.residual.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.v.len() * 8);
        for x in &self.v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a binary grid file; the remaining metadata comes from `sidecar`
    /// when given.
    pub fn read_binary<R: Read>(mut r: R, sidecar: Option<ConjugacyField>) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a conjugacy field file".into()));
        }
        let mut u32s = [0u32; 3];
        for x in u32s.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *x = u32::from_le_bytes(b);
        }
        let [version, n, g] = u32s;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let (n, g) = (n as usize, g as usize);
        if n == 0 || n > 8 || g == 0 {
            return Err(Error::Format(format!("bad header n = {n}, G = {g}")));
        }
        let mut matrix = vec![vec![0i64; n]; n];
        for row in matrix.iter_mut() {
            for a in row.iter_mut() {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                *a = i64::from_le_bytes(b);
            }
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let nu = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let ns = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let residual = f64::from_le_bytes(b8);
        let len = g.checked_pow(n as u32).and_then(|k| k.checked_mul(n)).ok_or_else(|| Error::Format("grid too large".into()))?;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let v: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut f = sidecar.unwrap_or(ConjugacyField {
            n,
            grid: g,
            matrix: matrix.clone(),
            orders: (nu, ns),
            tail_bounds: (f64::NAN, f64::NAN),
            tol: f64::NAN,
            residual,
            residual_offset: f64::NAN,
            residual_interpolated: f64::NAN,
            residual_nodes: 0,
            d_c0: f64::NAN,
            lift_shift: vec![0.0; n],
            v: Vec::new(),
        });
        if f.n != n || f.grid != g || f.matrix != matrix {
            return Err(Error::Format("sidecar does not match the binary header".into()));
        }
        f.orders = (nu, ns);
        f.residual = residual;
        f.d_c0 = v.chunks_exact(n).map(norm2).fold(0.0, f64::max);
        f.v = v;
        Ok(f)
    }

    /// Binary file at `path` plus a JSON sidecar at `path.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(file))?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(sidecar_path(path), json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = match std::fs::read_to_string(sidecar_path(path)) {
            Ok(s) => Some(serde_json::from_str(&s).map_err(|e| Error::Format(e.to_string()))?),
            Err(_) => None,
        };
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file), sidecar)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

impl ConjugacyEval for ConjugacyField {
    fn dim(&self) -> usize {
        self.n
    }
    fn displacement(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.interpolate(x))
    }
}

fn sample_nodes(total: usize, samples: usize) -> Vec<usize> {
    if total <= FULL_RESIDUAL_NODES.max(samples) {
        return (0..total).collect();
    }
    let stride = total / samples;
    // odd stride avoids sampling a single sub-lattice
    let stride = stride | 1;
    (0..samples).map(|k| (k * stride) % total).collect()
}

/// Solves for `v` on the grid `{i/G}ⁿ` and measures the residual on the grid,
/// on the half-cell offset grid, and with interpolated `H`.
pub fn compute_h(map: &MapModel<f64>, grid: usize, opts: &SeriesOptions) -> Result<ConjugacyField> {
    if grid == 0 {
        return Err(Error::Precondition("grid resolution must be positive".into()));
    }
    let solver = ConjugacySolver::new(map, opts.tol, opts.max_order)?;
    let n = map.n();
    let total = grid.checked_pow(n as u32).ok_or_else(|| Error::Precondition("grid too large".into()))?;
    let mut v = vec![0.0; total * n];
    v.par_chunks_mut(n * 1024).enumerate().try_for_each(|(chunk, out)| -> Result<()> {
        for (k, slot) in out.chunks_mut(n).enumerate() {
            let idx = chunk * 1024 + k;
            let x: Vec<f64> = node_coords(idx, n, grid).into_iter().map(|c| c as f64 / grid as f64).collect();
            slot.copy_from_slice(&solver.series(&x)?);
        }
        Ok(())
    })?;
    let aut = map.automorphism().expect("torus map");
    let mut field = ConjugacyField {
        n,
        grid,
        matrix: (0..n).map(|i| (0..n).map(|j| aut.matrix()[(i, j)]).collect()).collect(),
        orders: solver.orders,
        tail_bounds: solver.tail_bounds,
        tol: opts.tol,
        residual: 0.0,
        residual_offset: 0.0,
        residual_interpolated: 0.0,
        residual_nodes: 0,
        d_c0: v.chunks_exact(n).map(norm2).fold(0.0, f64::max),
        lift_shift: vec![0.0; n],
        v,
    };
    let nodes = sample_nodes(total, opts.residual_samples);
    let half = 0.5 / grid as f64;
    let stats: Vec<(f64, f64, f64)> = nodes
        .par_iter()
        .map(|&idx| -> Result<(f64, f64, f64)> {
            let x = field.node_point(idx);
            let on = solver.residual_at(&x, Some(field.node_value(idx)))?;
            let xo: Vec<f64> = x.iter().map(|t| t + half).collect();
            let off = solver.residual_at(&xo, None)?;
            Ok((on, off, interpolated_residual(&field, map, &x)))
        })
        .collect::<Result<_>>()?;
    field.residual = stats.iter().map(|s| s.0).fold(0.0, f64::max);
    field.residual_offset = stats.iter().map(|s| s.1).fold(0.0, f64::max);
    field.residual_interpolated = stats.iter().map(|s| s.2).fold(0.0, f64::max);
    field.residual_nodes = nodes.len();
    Ok(field)
}

fn interpolated_residual(field: &ConjugacyField, map: &MapModel<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let a = map.linear_matrix();
    let mut fx = vec![0.0; n];
    map.eval_slice(x, &mut fx);
    let h: Vec<f64> = x.iter().zip(field.interpolate(x)).map(|(p, q)| p + q).collect();
    let hf: Vec<f64> = fx.iter().zip(field.interpolate(&fx)).map(|(p, q)| p + q).collect();
    let mut ah = vec![0.0; n];
    mat_vec(a, &h, &mut ah);
    norm2(&ah.iter().zip(&hf).map(|(p, q)| p - q).collect::<Vec<_>>())
}

/// The field of the lift `f̃ + m`: `v` shifted by the constant `(A − I)⁻¹m`.
pub fn normalize_lift(field: &ConjugacyField, m: &[i64]) -> Result<ConjugacyField> {
    let n = field.n;
    if m.len() != n {
        return Err(Error::BadGeometry(format!("lift shift has {} entries, expected {n}", m.len())));
    }
    let a: IntMatrix = DMatrix::from_fn(n, n, |i, j| field.matrix[i][j]);
    let a_minus: IntMatrix = DMatrix::from_fn(n, n, |i, j| a[(i, j)] - i64::from(i == j));
    let inv = DMatrix::from_fn(n, n, |i, j| a_minus[(i, j)] as f64)
        .try_inverse()
        .ok_or_else(|| Error::Precondition("A − I is singular".into()))?;
    let mf: Vec<f64> = m.iter().map(|&k| k as f64).collect();
    let mut w = vec![0.0; n];
    mat_vec(&inv, &mf, &mut w);
    let mut out = field.clone();
    for chunk in out.v.chunks_exact_mut(n) {
        chunk.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
    }
    out.lift_shift = field.lift_shift.iter().zip(&w).map(|(a, b)| a + b).collect();
    out.d_c0 = out.v.chunks_exact(n).map(norm2).fold(0.0, f64::max);
    Ok(out)
}
