//! The transitivity pipeline: cones, fibers, degree spot checks, mixing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::balls::stream_rng;
use super::disks::{saturated_disk_pair, DiskOptions, SaturatedDisk};
use super::experiment::{mixing_experiment, random_ball_pairs, MixingOptions, MixingReport};
use crate::cones::{sh_saddle_certify, GridPointOutcome, ShSaddleOptions};
use crate::da_maps::{BumpSpec, MapModel};
use crate::error::{Error, Result};
use crate::semiconjugacy::{
    compute_h, degree_on_patch, fiber_analysis, ConjugacySolver, DegreeReport, FiberReport, Projector, ProjectorSide,
    SeriesOptions,
};

pub const LAMBDA_LABEL: &str = "Λ < ρ_user (user-supplied constant; the theoretical ρ(f) is non-constructive)";
const REPORTED_SH_FAILURES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub rho: f64,
    pub sh: ShSaddleOptions,
    /// Semiconjugacy grid; `None` picks the coarsest `G` with `1/G ≤ ρ/4`.
    pub grid: Option<usize>,
    pub series: SeriesOptions,
    pub degree_checks: usize,
    pub disks: DiskOptions,
    /// Series tolerance of `H` in the degree checks.
    pub degree_tol: f64,
    pub pairs: usize,
    pub ball_radius: f64,
    pub mixing: MixingOptions,
}

impl PipelineOptions {
    pub fn new(rho: f64, pairs: usize, horizon: usize, seed: u64) -> Self {
        PipelineOptions {
            rho,
            sh: ShSaddleOptions::new(8, 1.0, 100),
            grid: None,
            series: SeriesOptions { tol: 1e-8, ..Default::default() },
            degree_checks: 2,
            disks: DiskOptions::default(),
            degree_tol: 1e-9,
            pairs,
            ball_radius: 0.1,
            mixing: MixingOptions { horizon, seed, ..Default::default() },
        }
    }

    pub fn semiconjugacy_grid(&self) -> usize {
        self.grid.unwrap_or_else(|| (4.0 / self.rho).ceil() as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub step: String,
    pub status: StepStatus,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShSummary {
    pub grid: usize,
    pub points: usize,
    pub d1: usize,
    pub d2: usize,
    pub passed_uu: usize,
    pub passed_ss: usize,
    pub min_clearance: f64,
    pub min_invariance_margin: f64,
    pub min_rate: f64,
    pub pass: bool,
    /// First failing grid points, with their errors (witnesses).
    pub failures: Vec<GridPointOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberStep {
    pub label: String,
    pub grid: usize,
    pub residual: f64,
    pub residual_offset: f64,
    pub residual_interpolated: f64,
    pub d_c0: f64,
    pub lambda_zero: bool,
    pub report: FiberReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeCheck {
    pub pair: usize,
    pub side: ProjectorSide,
    pub disk: Option<SaturatedDisk>,
    pub degree: Option<DegreeReport>,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub options: PipelineOptions,
    pub steps: Vec<StepVerdict>,
    pub sh: Option<ShSummary>,
    pub fibers: Option<FiberStep>,
    pub degree: Vec<DegreeCheck>,
    pub mixing: Option<MixingReport>,
    pub pass: bool,
    pub verdict: String,
}

fn verdict(step: &str, pass: bool, detail: String) -> StepVerdict {
    StepVerdict { step: step.into(), status: if pass { StepStatus::Pass } else { StepStatus::Fail }, detail }
}

fn degree_checks(map: &MapModel<f64>, opts: &PipelineOptions) -> Result<Vec<DegreeCheck>> {
    if opts.degree_checks == 0 {
        return Ok(Vec::new());
    }
    let solver = ConjugacySolver::new(map, opts.degree_tol, opts.series.max_order)?;
    let residual = opts.degree_tol;
    let pairs = random_ball_pairs(map.n(), opts.degree_checks, opts.ball_radius, opts.mixing.seed ^ 0xD15C)?;
    let mut out = Vec::new();
    for (i, (u1, u2)) in pairs.iter().enumerate() {
        let disks = saturated_disk_pair(map, u1, u2, &opts.disks);
        for (k, side) in [ProjectorSide::Stable, ProjectorSide::Unstable].into_iter().enumerate() {
            let check = match &disks {
                Err(e) => DegreeCheck { pair: i, side, disk: None, degree: None, error: Some(e.to_string()), pass: false },
                Ok(pair) => {
                    let disk = if k == 0 { &pair.0 } else { &pair.1 };
                    let proj = Projector::new(map.linear(), side);
                    let y = solver.series(&disk.anchor).map(|v| disk.anchor.iter().zip(v).map(|(a, b)| a + b).collect::<Vec<f64>>());
                    let result = y.and_then(|y| {
                        degree_on_patch(&solver, residual, &proj, disk.param_dim(), &|s: &[f64]| disk.point(map, s), &y)
                    });
                    match result {
                        Ok(r) => DegreeCheck { pair: i, side, disk: Some(disk.clone()), pass: r.degree != 0, degree: Some(r), error: None },
                        Err(e) => DegreeCheck { pair: i, side, disk: Some(disk.clone()), degree: None, error: Some(e.to_string()), pass: false },
                    }
                }
            };
            out.push(check);
        }
    }
    Ok(out)
}

/// Runs the four steps in order, stopping at the first failure.
pub fn transitivity_pipeline(map: &MapModel<f64>, opts: &PipelineOptions) -> Result<PipelineReport> {
    if !(opts.rho > 0.0) {
        return Err(Error::Precondition("rho_user must be positive".into()));
    }
    let mut report = PipelineReport {
        options: *opts,
        steps: Vec::new(),
        sh: None,
        fibers: None,
        degree: Vec::new(),
        mixing: None,
        pass: false,
        verdict: String::new(),
    };
    let names = ["sh-saddle", "fibers", "degree", "mixing"];
    let finish = |mut r: PipelineReport| {
        for name in &names[r.steps.len()..] {
            r.steps.push(StepVerdict { step: (*name).into(), status: StepStatus::Skipped, detail: "not run".into() });
        }
        r.pass = r.steps.iter().all(|s| s.status == StepStatus::Pass);
        r.verdict = if r.pass { "PASS".into() } else { "FAIL".into() };
        r
    };

    // (1) SH-Saddle
    let sh = sh_saddle_certify(map, &opts.sh, None)?;
    let summary = ShSummary {
        grid: sh.grid,
        points: sh.points,
        d1: sh.d1,
        d2: sh.d2,
        passed_uu: sh.passed_uu,
        passed_ss: sh.passed_ss,
        min_clearance: sh.min_clearance,
        min_invariance_margin: sh.min_invariance_margin,
        min_rate: sh.min_rate,
        pass: sh.pass,
        failures: sh.failures().take(REPORTED_SH_FAILURES).cloned().collect(),
    };
    report.steps.push(verdict(
        names[0],
        sh.pass,
        format!("({}, {}) SH-Saddle: {}/{} uu, {}/{} ss on a {}ⁿ grid", sh.d1, sh.d2, sh.passed_uu, sh.points, sh.passed_ss, sh.points, sh.grid),
    ));
    report.sh = Some(summary);
    if !sh.pass {
        return Ok(finish(report));
    }

    // (2) fibers
    let g = opts.semiconjugacy_grid();
    let fibers = compute_h(map, g, &opts.series).and_then(|field| {
        let fr = fiber_analysis(&field, opts.rho)?;
        Ok(FiberStep {
            label: LAMBDA_LABEL.into(),
            grid: g,
            residual: field.residual,
            residual_offset: field.residual_offset,
            residual_interpolated: field.residual_interpolated,
            d_c0: field.d_c0,
            lambda_zero: fr.lambda_upper == 0.0,
            report: fr,
        })
    });
    match fibers {
        Ok(f) => {
            let pass = f.report.rho_light;
            let branch = if f.lambda_zero { " (Λ = 0 at grid scale: conjugacy branch)" } else { "" };
            report.steps.push(verdict(names[1], pass, format!("{}: Λ upper {} vs ρ_user {}{}", LAMBDA_LABEL, f.report.lambda_upper, opts.rho, branch)));
            report.fibers = Some(f);
            if !pass {
                return Ok(finish(report));
            }
        }
        Err(e) => {
            report.steps.push(verdict(names[1], false, e.to_string()));
            return Ok(finish(report));
        }
    }

    // (3) degree spot checks
    match degree_checks(map, opts) {
        Ok(checks) => {
            let pass = checks.iter().all(|c| c.pass);
            let ok = checks.iter().filter(|c| c.pass).count();
            report.steps.push(verdict(names[2], pass, format!("{ok}/{} saturated-disk images with nonzero degree", checks.len())));
            report.degree = checks;
            if !pass {
                return Ok(finish(report));
            }
        }
        Err(e) => {
            report.steps.push(verdict(names[2], false, e.to_string()));
            return Ok(finish(report));
        }
    }

    // (4) mixing
    let pairs = random_ball_pairs(map.n(), opts.pairs, opts.ball_radius, opts.mixing.seed)?;
    let mix = mixing_experiment(map, &pairs, &opts.mixing)?;
    report.steps.push(verdict(
        names[3],
        mix.pass,
        format!(
            "{}/{} pairs mixed within horizon {} (window {}), max first hit {:?}",
            mix.pairs.len() - mix.failures,
            mix.pairs.len(),
            opts.mixing.horizon,
            opts.mixing.window,
            mix.max_first_hit
        ),
    ));
    report.mixing = Some(mix);
    Ok(finish(report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub count: usize,
    pub c1_size: f64,
    pub seed: u64,
    /// Bumps per perturbation.
    pub bumps: usize,
    /// Bump radii are drawn from this range.
    pub radius: (f64, f64),
    /// Points per axis of the grid on the bump's bounding box where the C¹
    /// size is measured.
    pub measure_grid: usize,
    pub sh: ShSaddleOptions,
    pub pairs: usize,
    pub ball_radius: f64,
    pub mixing: MixingOptions,
}

impl SweepOptions {
    pub fn new(count: usize, c1_size: f64, seed: u64) -> Self {
        SweepOptions {
            count,
            c1_size,
            seed,
            bumps: 1,
            radius: (0.05, 0.1),
            measure_grid: 64,
            sh: ShSaddleOptions::new(4, 1.0, 60),
            pairs: 4,
            ball_radius: 0.1,
            mixing: MixingOptions { horizon: 100, seed, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub bumps: Vec<BumpSpec>,
    /// Measured `max(sup‖g − f‖, sup‖Dg − Df‖)`.
    pub measured_c1: f64,
    pub sh_pass: bool,
    pub mixing_pass: bool,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub options: SweepOptions,
    pub entries: Vec<SweepEntry>,
    pub passed: usize,
    pub fraction: f64,
}

/// Measured C¹ size of `g − f` on grids over the bumps' bounding boxes.
fn c1_difference(f: &MapModel<f64>, g: &MapModel<f64>, bumps: &[BumpSpec], m: usize) -> f64 {
    let n = f.n();
    let mut best = 0.0f64;
    for b in bumps {
        let pts = crate::cones::grid_points(n, m.max(2));
        let local = pts
            .par_iter()
            .map(|u| {
                let x: Vec<f64> = b.center.iter().zip(u).map(|(c, t)| c + b.radius * (2.0 * t - 1.0)).collect();
                let (mut fx, mut gx) = (vec![0.0; n], vec![0.0; n]);
                let (mut jf, mut jg) = (vec![0.0; n * n], vec![0.0; n * n]);
                f.eval_jac_slice(&x, &mut fx, &mut jf);
                g.eval_jac_slice(&x, &mut gx, &mut jg);
                let d0 = crate::linalg::norm2(&fx.iter().zip(&gx).map(|(a, c)| a - c).collect::<Vec<_>>());
                let dj = nalgebra::DMatrix::from_fn(n, n, |i, j| jg[i * n + j] - jf[i * n + j]);
                d0.max(crate::linalg::op_norm2(&dj))
            })
            .reduce(|| 0.0, f64::max);
        best = best.max(local);
    }
    best
}

fn random_bumps(map: &MapModel<f64>, index: usize, opts: &SweepOptions) -> Result<(Vec<BumpSpec>, f64)> {
    if opts.c1_size <= 0.0 {
        return Ok((Vec::new(), 0.0));
    }
    let n = map.n();
    let mut rng = stream_rng(opts.seed, (2 << 32) + index as u64);
    let mut bumps: Vec<BumpSpec> = (0..opts.bumps)
        .map(|_| {
            let center: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let radius = rng.random_range(opts.radius.0..=opts.radius.1);
            let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nd = crate::linalg::norm2(&dir).max(1e-12);
            // a·(1 − s²/R²)² has sup |Db| = 8|a|/(3√3 R)
            let amp = opts.c1_size * radius.min(1.0) * 3.0 * 3f64.sqrt() / 8.0;
            BumpSpec { center, radius, amplitude: dir.iter().map(|d| amp * d / nd).collect() }
        })
        .collect();
    let mut spec = map.spec().clone();
    spec.bumps.extend(bumps.iter().cloned());
    let g = MapModel::from_spec(&spec)?;
    let measured = c1_difference(map, &g, &bumps, opts.measure_grid);
    if measured > opts.c1_size {
        // bumps are added to the map, so g − f is linear in the amplitudes
        let scale = opts.c1_size / measured * (1.0 - 1e-9);
        for b in &mut bumps {
            b.amplitude.iter_mut().for_each(|a| *a *= scale);
        }
        return Ok((bumps, measured * scale));
    }
    Ok((bumps, measured))
}

/// Random bump perturbations of C¹ size at most `c1_size`, each re-certified
/// (SH-Saddle on a coarse grid) and re-mixed.
pub fn perturbation_sweep(map: &MapModel<f64>, opts: &SweepOptions) -> Result<SweepReport> {
    if !(opts.c1_size >= 0.0) {
        return Err(Error::Precondition("c1_size must be nonnegative".into()));
    }
    let pairs = random_ball_pairs(map.n(), opts.pairs, opts.ball_radius, opts.seed)?;
    let mut entries = Vec::with_capacity(opts.count);
    for index in 0..opts.count {
        let run = || -> Result<SweepEntry> {
            let (bumps, measured_c1) = random_bumps(map, index, opts)?;
            let mut spec = map.spec().clone();
            spec.bumps.extend(bumps.iter().cloned());
            let g = MapModel::from_spec(&spec)?;
            let sh_pass = sh_saddle_certify(&g, &opts.sh, None)?.pass;
            let mixing_pass = mixing_experiment(&g, &pairs, &opts.mixing)?.pass;
            Ok(SweepEntry { index, bumps, measured_c1, sh_pass, mixing_pass, pass: sh_pass && mixing_pass, error: None })
        };
        entries.push(run().unwrap_or_else(|e| SweepEntry {
            index,
            bumps: Vec::new(),
            measured_c1: f64::NAN,
            sh_pass: false,
            mixing_pass: false,
            pass: false,
            error: Some(e.to_string()),
        }));
    }
    let passed = entries.iter().filter(|e| e.pass).count();
    Ok(SweepReport { options: *opts, fraction: if opts.count == 0 { 1.0 } else { passed as f64 / opts.count as f64 }, passed, entries })
}
