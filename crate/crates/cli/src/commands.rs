//! One function per subcommand. Each returns whether its check passed; the
//! caller maps that to the exit code.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlelab::cones::{sh_saddle_certify, ShSaddleOptions};
use saddlelab::da_maps::{
    fd_check, fixed_point_index, franks_surgery, measured_ph_bounds, FdReport, IndexReport, MapModel, SupportKind,
    SurgeryReport,
};
use saddlelab::mixing::{
    mixing_experiment, perturbation_sweep, random_ball_pairs, transitivity_pipeline, MixingOptions, PipelineOptions,
    SweepOptions,
};
use saddlelab::semiconjugacy::{compute_h, fiber_analysis, SeriesOptions};
use saddlelab::torus_linear::{fixed_point_count, fixed_points_exact, PHBounds, TorusPoint, MAX_ENUMERATED};
use serde::Serialize;

use crate::recipe::Recipe;
use crate::report::{Envelope, Out, RecipeInfo};

/// Flags shared by every subcommand, resolved against the recipe's `[run]`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Flags {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub horizon: Option<usize>,
    pub tol: Option<f64>,
    pub rho: Option<f64>,
    pub pairs: Option<usize>,
}

pub struct Ctx<'a> {
    pub command: &'a str,
    pub recipe: &'a Recipe,
    pub flags: &'a Flags,
    pub out: Out,
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        self.flags.seed.or(self.recipe.run.seed).unwrap_or(0)
    }
    fn grid(&self, default: usize) -> usize {
        self.flags.grid.or(self.recipe.run.grid).unwrap_or(default)
    }
    fn horizon(&self, default: usize) -> usize {
        self.flags.horizon.or(self.recipe.run.horizon).unwrap_or(default)
    }
    fn tol(&self, default: f64) -> f64 {
        self.flags.tol.or(self.recipe.run.tol).unwrap_or(default)
    }
    fn rho(&self, default: f64) -> f64 {
        self.flags.rho.or(self.recipe.run.rho).unwrap_or(default)
    }
    fn pairs(&self, default: usize) -> usize {
        self.flags.pairs.or(self.recipe.run.pairs).unwrap_or(default)
    }
    fn mixing(&self, horizon: usize) -> MixingOptions {
        let d = MixingOptions::default();
        MixingOptions {
            samples: self.recipe.run.samples.unwrap_or(d.samples),
            horizon: self.horizon(horizon),
            window: self.recipe.run.window.unwrap_or(d.window),
            seed: self.seed(),
        }
    }

    fn write<C: Serialize, R: Serialize>(&mut self, file: &str, config: &C, result: &R) -> Result<()> {
        let env = Envelope {
            tool: "saddlelab",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            recipe: RecipeInfo { name: &self.recipe.name, sha256: &self.recipe.sha256 },
            config,
            result,
        };
        self.out.json(file, &env)
    }
}

#[derive(Serialize)]
struct SupportSummary {
    label: String,
    kind: SupportKind,
    center: Vec<f64>,
    radius: f64,
}

#[derive(Serialize)]
struct PointDerivative {
    label: String,
    point: Vec<f64>,
    /// `V⁻¹·Df·V` at the point (eigen-coordinates, ss/ws/wu/uu order).
    df_eigen: Vec<Vec<f64>>,
    /// Largest deviation of the center block from the identity.
    center_identity_defect: Option<f64>,
}

#[derive(Serialize)]
struct MapSummary {
    n: usize,
    torus: bool,
    linear_matrix: Vec<Vec<f64>>,
    eigenvalues: Vec<[f64; 2]>,
    moduli: Vec<f64>,
    dims: [usize; 4],
    block_form: Vec<Vec<f64>>,
    is_linear: bool,
    note: Option<String>,
    supports: Vec<SupportSummary>,
    surgery_etas: Vec<f64>,
    local_derivatives: Vec<PointDerivative>,
    claimed_ph_bounds: Option<PHBounds>,
    measured_ph_bounds: Option<PHBounds>,
    fd: FdReport,
    fd_pass: bool,
}

#[derive(Serialize)]
struct MakeMapConfig {
    ph_grid: usize,
    fd_points: usize,
    fd_step: f64,
    seed: u64,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Sample points for the finite-difference check: half uniform, half inside
/// the supports.
fn fd_points(map: &MapModel<f64>, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = map.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let supports = map.supports();
    (0..count)
        .map(|i| {
            if i % 2 == 1 && !supports.is_empty() {
                let b = &supports[rng.random_range(0..supports.len())];
                b.center.iter().map(|c| c + b.radius * rng.random_range(-0.7..0.7) / (n as f64).sqrt()).collect()
            } else if map.is_torus() {
                (0..n).map(|_| rng.random::<f64>()).collect()
            } else {
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
        })
        .collect()
}

pub fn make_map(ctx: &mut Ctx, map: &MapModel<f64>) -> Result<bool> {
    let config = MakeMapConfig { ph_grid: ctx.grid(if map.n() <= 2 { 64 } else { 8 }), fd_points: 1000, fd_step: 1e-6, seed: ctx.seed() };
    let lin = map.linear();
    let points = fd_points(map, config.fd_points, config.seed);
    let fd = fd_check(map, &points, config.fd_step);
    let center = lin.center_range();
    let mut local = Vec::new();
    let spec = map.spec();
    let labelled = spec
        .constructions
        .iter()
        .enumerate()
        .map(|(i, c)| (c.label().map_or_else(|| format!("construction-{i}"), str::to_string), c.point().to_vec()))
        .chain(spec.surgeries.iter().enumerate().map(|(i, s)| (s.label.clone().unwrap_or_else(|| format!("surgery-{i}")), s.point.clone())));
    for (label, point) in labelled {
        let j = map.jacobian_eigen(&saddlelab::torus_linear::LiftPoint::new(point.clone()));
        let defect = (!center.is_empty()).then(|| {
            center.clone().flat_map(|a| center.clone().map(move |b| (a, b))).map(|(a, b)| (j[(a, b)] - f64::from(a == b)).abs()).fold(0.0, f64::max)
        });
        local.push(PointDerivative { label, point, df_eigen: rows(&j), center_identity_defect: defect });
    }
    let is_linear = map.is_linear();
    let summary = MapSummary {
        n: map.n(),
        torus: map.is_torus(),
        linear_matrix: rows(map.linear_matrix()),
        eigenvalues: lin.eigenvalues().iter().map(|z| [z.re, z.im]).collect(),
        moduli: lin.moduli().to_vec(),
        dims: lin.dims(),
        block_form: rows(lin.block_form()),
        is_linear,
        note: is_linear.then(|| "map ≡ linear part".to_string()),
        supports: map
            .supports()
            .iter()
            .map(|s| SupportSummary { label: s.label.clone(), kind: s.kind, center: s.center.clone(), radius: s.radius })
            .collect(),
        surgery_etas: map.surgery_etas(),
        local_derivatives: local,
        claimed_ph_bounds: map.ph_bounds(),
        measured_ph_bounds: measured_ph_bounds(map, config.ph_grid),
        fd_pass: fd.passes(),
        fd,
    };
    ctx.write("map.json", &config, &summary)?;
    Ok(summary.fd_pass)
}

pub fn pipeline(ctx: &mut Ctx, map: &MapModel<f64>) -> Result<bool> {
    let mut opts = PipelineOptions::new(ctx.rho(0.05), ctx.pairs(20), ctx.horizon(200), ctx.seed());
    opts.mixing = ctx.mixing(200);
    if let Some(r) = ctx.recipe.run.ball_radius {
        opts.ball_radius = r;
    }
    opts.grid = ctx.flags.grid.or(ctx.recipe.run.grid);
    opts.series.tol = ctx.tol(opts.series.tol);
    let report = transitivity_pipeline(map, &opts)?;
    if let Some(m) = &report.mixing {
        ctx.out.text("mixing_hits.csv", &m.hits_csv())?;
    }
    if let Some(sh) = report.sh.as_ref().filter(|s| !s.pass) {
        ctx.write("sh_witnesses.json", &opts, &sh.failures)?;
    }
    ctx.write("pipeline.json", &opts, &report)?;
    Ok(report.pass)
}

pub fn certify_sh(ctx: &mut Ctx, map: &MapModel<f64>) -> Result<bool> {
    let opts = ShSaddleOptions::new(ctx.grid(8), 1.0, ctx.horizon(100));
    let report = sh_saddle_certify(map, &opts, None)?;
    ctx.write("certify_sh.json", &opts, &report)?;
    Ok(report.pass)
}

#[derive(Serialize)]
struct SemiconjConfig {
    grid: usize,
    series: SeriesOptions,
    rho: Option<f64>,
}

#[derive(Serialize)]
struct SemiconjSummary<'a> {
    field: &'a saddlelab::semiconjugacy::ConjugacyField,
    sup_v: f64,
    binary: &'static str,
}

fn series(ctx: &Ctx) -> SeriesOptions {
    let d = SeriesOptions::default();
    SeriesOptions { tol: ctx.tol(d.tol), ..d }
}

pub fn semiconj(ctx: &mut Ctx, map: &MapModel<f64>) -> Result<bool> {
    let config = SemiconjConfig { grid: ctx.grid(if map.n() <= 2 { 512 } else { 32 }), series: series(ctx), rho: None };
    let field = compute_h(map, config.grid, &config.series)?;
    let sup_v = field.v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    field.save(&ctx.out.path("conjugacy.bin"))?;
    ctx.write("semiconj.json", &config, &SemiconjSummary { field: &field, sup_v, binary: "conjugacy.bin" })?;
    Ok(true)
}

pub fn fibers(ctx: &mut Ctx, map: &MapModel<f64>) -> Result<bool> {
    let rho = ctx.rho(0.1);
    let config = SemiconjConfig { grid: ctx.grid((4.0 / rho).ceil() as usize), series: series(ctx), rho: Some(rho) };
    let field = compute_h(map, config.grid, &config.series)?;
    let report = fiber_analysis(&field, rho)?;
    ctx.write("fibers.json", &config, &report)?;
    Ok(report.rho_light)
}

#[derive(Serialize)]
struct MixConfig {
    pairs: usize,
    ball_radius: f64,
    mixing: MixingOptions,
}

pub fn mix(ctx: &mut Ctx, map: &MapModel<f64>) -> Result<bool> {
    let config = MixConfig { pairs: ctx.pairs(20), ball_radius: ctx.recipe.run.ball_radius.unwrap_or(0.1), mixing: ctx.mixing(200) };
    let pairs = random_ball_pairs(map.n(), config.pairs, config.ball_radius, config.mixing.seed)?;
    let report = mixing_experiment(map, &pairs, &config.mixing)?;
    ctx.out.text("mixing_hits.csv", &report.hits_csv())?;
    ctx.write("mixing.json", &config, &report)?;
    Ok(report.pass)
}

#[derive(Serialize)]
struct IndexRow {
    point: Vec<f64>,
    label: Option<String>,
    index: Option<IndexReport>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SurgeryResult {
    surgeries: Vec<SurgeryReport>,
    indices: Vec<IndexRow>,
}

fn index_row(map: &MapModel<f64>, point: Vec<f64>, label: Option<String>) -> IndexRow {
    match fixed_point_index(map, &TorusPoint::new(point.clone())) {
        Ok(r) => IndexRow { point, label, index: Some(r), error: None },
        Err(e) => IndexRow { point, label, index: None, error: Some(e.to_string()) },
    }
}

/// Re-applies the recipe's surgeries one at a time, then reports the index at
/// every surgery point and at the recipe's extra `index_points`.
pub fn surgery(ctx: &mut Ctx, _map: &MapModel<f64>) -> Result<bool> {
    let mut base_spec = ctx.recipe.spec.clone();
    let surgeries = std::mem::take(&mut base_spec.surgeries);
    if surgeries.is_empty() {
        bail!("recipe has no surgeries");
    }
    let mut map = MapModel::from_spec(&base_spec)?;
    let mut reports = Vec::new();
    for s in surgeries.iter().cloned() {
        let (next, rep) = franks_surgery(&map, s)?;
        map = next;
        reports.push(rep);
    }
    let mut indices: Vec<IndexRow> = surgeries.iter().zip(&reports).map(|(s, r)| index_row(&map, s.point.clone(), Some(r.label.clone()))).collect();
    indices.extend(ctx.recipe.run.index_points.iter().map(|p| index_row(&map, p.clone(), None)));
    let ok = indices.iter().all(|r| r.index.is_some());
    ctx.write("surgery.json", &ctx.recipe.run.index_points.clone(), &SurgeryResult { surgeries: reports, indices })?;
    Ok(ok)
}

#[derive(Serialize)]
struct FixedPoints {
    period: u32,
    count: String,
    points: Vec<Vec<String>>,
    /// Jacobian index of each point under the map (period 1 only).
    indices: Vec<IndexRow>,
}

pub fn fixed_points(ctx: &mut Ctx, map: &MapModel<f64>, period: u32) -> Result<bool> {
    let Some(a) = map.automorphism() else { bail!("fixed-points needs a torus recipe") };
    let count = fixed_point_count(a.matrix(), period)?;
    let exact = if count <= MAX_ENUMERATED { fixed_points_exact(a.matrix(), period)? } else { Vec::new() };
    let indices = if period == 1 {
        exact.iter().map(|p| index_row(map, p.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect(), None)).collect()
    } else {
        Vec::new()
    };
    let result = FixedPoints {
        period,
        count: count.to_string(),
        points: exact.iter().map(|p| p.iter().map(|r| r.to_string()).collect()).collect(),
        indices,
    };
    ctx.write("fixed_points.json", &period, &result)?;
    Ok(true)
}

pub fn sweep(ctx: &mut Ctx, map: &MapModel<f64>, count: usize, c1: f64) -> Result<bool> {
    let mut opts = SweepOptions::new(count, c1, ctx.seed());
    if let Some(p) = ctx.flags.pairs.or(ctx.recipe.run.pairs) {
        opts.pairs = p;
    }
    opts.mixing = ctx.mixing(opts.mixing.horizon);
    let report = perturbation_sweep(map, &opts)?;
    ctx.write("sweep.json", &opts, &report)?;
    Ok(true)
}
