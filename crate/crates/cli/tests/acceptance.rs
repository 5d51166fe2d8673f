//! Acceptance run: every criterion at its pinned tolerance, one PASS/FAIL line
//! each, nonzero exit if any fails.
//!
//! `cargo test -p saddlelab-cli --test acceptance -- 4 7` runs a subset.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlelab::cones::{
    avoidance_search, certify_forward_cones, grid_points, planar_cone_guards, sh_saddle_certify, AvoidanceOptions, Ball,
    CertifyOptions, ConeField, ShSaddleOptions,
};
use saddlelab::da_maps::presets::{
    cat_matrix, int_matrix, mane_torus_spec, t4_matrix, t4_pre_surgery_spec, t4_surgeries, CAT_WEAK_BAND, T4_ETA,
    T4_POINTS, T4_SURGERY_RADIUS, T4_WEAK_BAND,
};
use saddlelab::da_maps::{
    contracting_center_kd, fd_check, fixed_point_index, franks_surgery, linear_outside_defect, mane_mix_2d, MapModel, MapSpec,
};
use saddlelab::linalg::op_norm_max;
use saddlelab::semiconjugacy::{
    compute_h, degree_open_image, fiber_analysis, ConjugacySolver, Disk, Projector, ProjectorSide, SeriesOptions,
};
use saddlelab::torus_linear::{fixed_point_count, fixed_points_exact, Bundle, LiftPoint, Side, TorusPoint};

const GOLDEN_LO: f64 = 0.381_966_011_250_105_1; // (3 − √5)/2
const GOLDEN_HI: f64 = 2.618_033_988_749_895; // (3 + √5)/2

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Output directories of the criterion-6 runs, reused by the determinism check.
#[derive(Default)]
struct Shared {
    runs: Option<(PathBuf, PathBuf)>,
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn(&mut Shared) -> Result<Outcome>,
}

fn recipes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes")
}

fn scratch(name: &str) -> Result<PathBuf> {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d)?;
    Ok(d)
}

fn saddlelab(command: &str, recipe: &str, out: &Path, jobs: &str) -> Result<Option<i32>> {
    let o = Command::new(env!("CARGO_BIN_EXE_saddlelab"))
        .args([command, "--recipe", recipes().join(recipe).to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs])
        .env_remove("SADDLELAB_JOBS")
        .output()?;
    if o.status.code() == Some(1) {
        eprintln!("{}", String::from_utf8_lossy(&o.stderr));
    }
    Ok(o.status.code())
}

fn json(path: PathBuf) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(&path).with_context(|| path.display().to_string())?;
    Ok(serde_json::from_str(&text)?)
}

fn model(spec: &MapSpec) -> Result<MapModel<f64>> {
    Ok(MapModel::from_spec(spec)?)
}

fn unit_sphere_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v *= radius / nrm);
    x
}

fn construction_fidelity(_: &mut Shared) -> Result<Outcome> {
    let (rho, l, r1, eps) = (0.04, 0.04, 0.16, 0.2);
    ensure!(2.0 * rho + l < r1 && r1 < eps);
    let g = mane_mix_2d::<f64>(GOLDEN_LO, GOLDEN_HI, rho, l, r1, eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let id_defect = (g.jacobian(&LiftPoint::new(vec![0.0, 0.0])) - DMatrix::identity(2, 2)).amax();

    let support = g.supports()[0].radius;
    let outside: Vec<Vec<f64>> = (0..1000)
        .map(|_| {
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            let d = support * (1.0 + 1e-9 + 2.0 * rng.random::<f64>());
            vec![d * t.cos(), d * t.sin()]
        })
        .collect();
    let (count, linear_defect) = linear_outside_defect(&g, &outside);

    let pts: Vec<Vec<f64>> = (0..1000).map(|_| (0..2).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
    let fd = fd_check(&g, &pts, 1e-6);
    let fd_worst = fd.max_rel_error.max(fd.max_rel_error_near_kink);

    outcome(
        id_defect <= 1e-12 && count == 1000 && linear_defect <= 1e-12 && fd_worst <= 1e-6,
        format!(
            "|Dg0 − I| = {id_defect:.1e}, |g − A| = {linear_defect:.1e} at {count} points outside radius {support:.3}, FD rel error {fd_worst:.1e} ({} near kinks)",
            fd.near_kink
        ),
    )
}

fn axis(n: usize, i: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, 1);
    m[(i, 0)] = 1.0;
    m
}

fn cone_invariance(_: &mut Shared) -> Result<Outcome> {
    let g = mane_mix_2d::<f64>(GOLDEN_LO, GOLDEN_HI, 0.04, 0.04, 0.16, 0.2)?;
    // |a| ≤ |b| with a = x, b = y
    let field = ConeField::constant(axis(2, 0), axis(2, 1), DMatrix::zeros(2, 0), 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut failed, mut min_margin, mut checked_steps) = (0, f64::INFINITY, 0usize);
    for i in 0..1000 {
        let x = LiftPoint::new(vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]);
        let opts = CertifyOptions { samples_per_step: 32, expansion_starts: 4, seed: i, ..Default::default() };
        let cert = certify_forward_cones(&g, &x, &field, 50, &opts);
        if !cert.pass {
            failed += 1;
        }
        for (l, p) in cert.orbit[..50].iter().enumerate() {
            if p.iter().map(|t| t * t).sum::<f64>().sqrt() > 1e-6 {
                min_margin = min_margin.min(cert.step_expansion[l] - 1.0);
                checked_steps += 1;
            }
        }
    }

    let mut guard_violations = 0;
    for _ in 0..1_000_000 {
        // log-spread scales so that points near the origin are sampled too
        let s = 10f64.powf(rng.random_range(-8.0..1.0));
        let (x, y) = (s * rng.random_range(-1.0..1.0), s * rng.random_range(-1.0..1.0));
        if x == 0.0 && y == 0.0 {
            continue;
        }
        let (g1, g2) = planar_cone_guards(x, y);
        if !(g1 > 0.0 && g2 > 0.0) {
            guard_violations += 1;
        }
    }
    let origin = planar_cone_guards(0.0, 0.0) == (0.0, 0.0);

    outcome(
        failed == 0 && min_margin > 0.0 && guard_violations == 0 && origin,
        format!(
            "{failed}/1000 orbits failed, min expansion margin {min_margin:.3e} over {checked_steps} steps, {guard_violations} guard violations in 1e6 samples, origin equality {origin}"
        ),
    )
}

fn contraction(_: &mut Shared) -> Result<Outcome> {
    let (eps, delta) = (1.1e12, 0.1);
    let g = contracting_center_kd::<f64>(&[0.3, 0.4, 0.5], 0.9, eps, delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut worst = 0.0f64;
    for s in 0..10_000 {
        // half in the radial/plateau part, half log-spread over the decay region
        let r = if s % 2 == 0 { delta * rng.random::<f64>() } else { (delta.ln() + rng.random::<f64>() * (2.0 * eps / delta).ln()).exp() };
        let x = unit_sphere_point(&mut rng, 3, r.sqrt());
        worst = worst.max(op_norm_max(&g.jacobian(&LiftPoint::new(x))));
    }

    let mut alpha_excess = f64::NEG_INFINITY;
    for k in 1..=1000 {
        let r = delta * k as f64 / 1000.0;
        let x = unit_sphere_point(&mut rng, 3, r.sqrt());
        let r = x.iter().map(|v| v * v).sum::<f64>();
        let y = g.eval_lift(&LiftPoint::new(x.clone())).coords;
        // the image is α·x; read α off the largest coordinate
        let i = (0..3).max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).unwrap();
        alpha_excess = alpha_excess.max(y[i] / x[i] - (1.0 - r));
    }
    // α = 1 − r exactly near the center, so the measurement sits at rounding level
    let alpha_ok = alpha_excess <= 2.0 * f64::EPSILON;

    let id_defect = (g.jacobian(&LiftPoint::new(vec![0.0; 3])) - DMatrix::identity(3, 3)).amax();
    outcome(
        worst < 1.0 && alpha_ok && id_defect <= 1e-12,
        format!("max ‖Dg‖∞ = {worst:.6}, max α(r) − (1 − r) = {alpha_excess:.1e}, |Dg0 − I| = {id_defect:.1e}"),
    )
}

fn semiconjugacy(_: &mut Shared) -> Result<Outcome> {
    let opts = SeriesOptions { tol: 1e-9, ..Default::default() };
    let mut rows = Vec::new();
    let mut pass = true;
    let mut prev = f64::INFINITY;
    for eps in [0.2, 0.1, 0.05] {
        let h = compute_h(&model(&mane_torus_spec(eps))?, 512, &opts)?;
        pass &= h.residual <= 1e-8 && h.residual_offset <= 4.0 * h.residual && h.d_c0 < prev;
        prev = h.d_c0;
        rows.push(format!("ε={eps}: residual {:.1e} / offset {:.1e}, d_C0 {:.4e}", h.residual, h.residual_offset, h.d_c0));
    }
    outcome(pass, rows.join("; "))
}

fn fibers(_: &mut Shared) -> Result<Outcome> {
    let g = 64;
    let h = compute_h(&model(&t4_pre_surgery_spec())?, g, &SeriesOptions { tol: 1e-8, ..Default::default() })?;
    let r = fiber_analysis(&h, 0.1)?;
    outcome(
        r.lambda_upper <= 2.0 / g as f64 && r.non_singleton_fraction <= 0.01,
        format!(
            "Λ upper {:.4} (≤ {:.4}), non-singleton nodes {}/{} ({:.3}%), residual {:.1e}",
            r.lambda_upper,
            2.0 / g as f64,
            r.non_singleton_nodes,
            r.nodes,
            100.0 * r.non_singleton_fraction,
            h.residual
        ),
    )
}

/// Cat-map mixing and the 𝕋⁴ pipeline through the binary with `jobs` workers.
fn mixing_runs(jobs: &str) -> Result<(PathBuf, PathBuf, Option<i32>, Option<i32>)> {
    let cat = scratch(&format!("mix-cat-jobs{jobs}"))?;
    let cat_code = saddlelab("mix", "cat.toml", &cat, jobs)?;
    let t4 = scratch(&format!("pipeline-t4-jobs{jobs}"))?;
    let t4_code = saddlelab("pipeline", "t4-three-surgeries.toml", &t4, jobs)?;
    Ok((cat, t4, cat_code, t4_code))
}

fn mixing(shared: &mut Shared) -> Result<Outcome> {
    let (cat, t4, cat_code, t4_code) = mixing_runs("1")?;
    let m = json(cat.join("mixing.json"))?;
    let n = m["result"]["max_first_hit"].as_u64();
    let window = m["result"]["options"]["window"].as_u64();
    let pairs = m["result"]["pairs"].as_array().map_or(0, |p| p.len());
    let cat_ok = cat_code == Some(0) && m["result"]["pass"] == true && n.is_some_and(|n| n <= 25) && window == Some(10) && pairs == 20;

    let p = json(t4.join("pipeline.json"))?;
    let cfg = &p["config"];
    let t4_ok = t4_code == Some(0)
        && p["result"]["verdict"] == "PASS"
        && cfg["rho"].as_f64() == Some(0.05)
        && cfg["pairs"].as_u64() == Some(20)
        && cfg["mixing"]["horizon"].as_u64() == Some(200);
    let t4_n = p["result"]["mixing"]["max_first_hit"].as_u64();
    shared.runs = Some((cat, t4));
    outcome(
        cat_ok && t4_ok,
        format!(
            "cat: exit {cat_code:?}, N = {n:?} over {pairs} pairs, window {window:?}; 𝕋⁴ pipeline: exit {t4_code:?}, verdict {}, N = {t4_n:?}",
            p["result"]["verdict"]
        ),
    )
}

fn avoid_and_sh(_: &mut Shared) -> Result<Outcome> {
    let f = model(&mane_torus_spec(0.0025))?;
    let balls: Vec<Ball> = f.supports().iter().map(Ball::from).collect();
    ensure!(balls.len() == 1 && (balls[0].radius - 0.05).abs() < 1e-12, "unexpected support {balls:?}");
    let opts = AvoidanceOptions {
        certify: CertifyOptions { samples_per_step: 8, expansion_starts: 2, ..Default::default() },
        ..Default::default()
    };
    let mut failures = 0;
    for p in grid_points(2, 16) {
        for side in [Side::Uu, Side::Ss] {
            match avoidance_search(&f, &TorusPoint::new(p.clone()), side, 1.0, &balls, 200, &opts) {
                Ok(r) if r.min_clearance > 0.0 && r.certificate.as_ref().is_none_or(|c| c.pass) => {}
                _ => failures += 1,
            }
        }
    }

    let post = model(&saddlelab::da_maps::presets::t4_post_surgery_spec()?)?;
    let rep = sh_saddle_certify(&post, &ShSaddleOptions::new(16, 1.0, 100), None)?;
    let sh_failures = rep.failures().count();
    outcome(
        failures == 0 && rep.pass && (rep.d1, rep.d2) == (1, 1),
        format!(
            "𝕋²: {failures} failed searches of 512; 𝕋⁴: {} points, (d1, d2) = ({}, {}), {sh_failures} failures, min rate {:.3}",
            rep.points, rep.d1, rep.d2, rep.min_rate
        ),
    )
}

fn surgery_indices(_: &mut Shared) -> Result<Outcome> {
    let mut f = model(&t4_pre_surgery_spec())?;
    for s in t4_surgeries(f.linear(), T4_ETA, T4_SURGERY_RADIUS) {
        f = franks_surgery(&f, s)?.0;
    }
    let idx = T4_POINTS.iter().map(|p| fixed_point_index(&f, &TorusPoint::new(p.to_vec()))).collect::<Result<Vec<_>, _>>()?;
    let pass = idx[0].index == 3 && idx[1].index == 1 && idx[2].complex_center && idx[3].index == 2;
    let describe = |i: usize| if idx[i].complex_center { format!("complex-center (index {})", idx[i].index) } else { idx[i].index.to_string() };
    outcome(pass, format!("p0: {}, p1: {}, p2: {}, p3: {}", describe(0), describe(1), describe(2), describe(3)))
}

/// Fixed-point counts against a floating-point determinant, and every
/// enumerated point checked to be fixed, exactly.
fn fixed_point_oracle(rows: &[Vec<i64>]) -> Result<(bool, String)> {
    let a = int_matrix(rows);
    let n = a.nrows();
    let af = a.map(|v| v as f64);
    let mut pass = true;
    let mut counts = Vec::new();
    let mut power = DMatrix::<i128>::identity(n, n);
    for m in 1..=4u32 {
        power = &power * a.map(|v| v as i128);
        let det = (af.pow(m) - DMatrix::identity(n, n)).determinant().abs().round() as u128;
        let count = fixed_point_count(&a, m)?;
        pass &= count == det;
        counts.push(count.to_string());
        if count <= 1_000_000 {
            let d = count as i128;
            let pts = fixed_points_exact(&a, m)?;
            let mut seen = HashSet::new();
            for x in &pts {
                // x ∈ (1/d)ℤⁿ; check (Aᵐ − I)(d·x) ≡ 0 mod d
                let dx: Vec<i128> = x.iter().map(|c| c.numer() * (d / c.denom())).collect();
                pass &= x.iter().all(|c| d % c.denom() == 0);
                pass &= (0..n).all(|i| ((0..n).map(|j| power[(i, j)] * dx[j]).sum::<i128>() - dx[i]) % d == 0);
                seen.insert(dx.iter().map(|v| v.rem_euclid(d)).collect::<Vec<_>>());
            }
            pass &= pts.len() as u128 == count && seen.len() == pts.len();
        }
    }
    Ok((pass, counts.join("/")))
}

fn oracles(_: &mut Shared) -> Result<Outcome> {
    let mut details = Vec::new();
    let mut pass = true;

    for (name, rows) in [("cat", cat_matrix()), ("𝕋⁴", t4_matrix())] {
        let (ok, counts) = fixed_point_oracle(&rows)?;
        pass &= ok;
        details.push(format!("{name} counts {counts}"));
    }

    let cat = model(&MapSpec::linear_torus(cat_matrix(), CAT_WEAK_BAND))?;
    let t4 = model(&MapSpec::linear_torus(t4_matrix(), T4_WEAK_BAND))?;
    let mut worst_rel = 0.0f64;
    for (f, bundle, rows) in [(&cat, Bundle::Wu, cat_matrix()), (&t4, Bundle::Uu, t4_matrix())] {
        let top = SymmetricEigen::new(int_matrix(&rows).map(|v| v as f64)).eigenvalues.max();
        let x = LiftPoint::new((0..f.n()).map(|i| 0.1 + 0.2 * i as f64).collect());
        for theta in [0.5, 1.0, 2.0] {
            let field = ConeField::around_bundles(f.linear(), &[bundle], theta)?;
            let oracle = top / f64::max(1.0, theta);
            let at = |lambda0: f64| certify_forward_cones(f, &x, &field, 20, &CertifyOptions { lambda0, ..Default::default() });
            let cert = at(oracle * (1.0 - 1e-6));
            let rel = (cert.max_rate / oracle - 1.0).abs();
            worst_rel = worst_rel.max(rel);
            pass &= cert.pass && rel < 0.01 && !at(oracle * 1.01).pass;
        }
    }
    details.push(format!("cone rate vs eigen oracle {:.1e}", worst_rel));

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut correct, mut total) = (0, 0);
    for (f, n) in [(&cat, 2usize), (&t4, 4)] {
        let s = ConjugacySolver::new(f, 1e-10, 2000)?;
        for side in [ProjectorSide::Stable, ProjectorSide::Unstable] {
            let proj = Projector::new(f.linear(), side);
            for k in 0..25 {
                let (disk, y, expected) = random_config(&mut rng, n, &proj, k % 5 != 0);
                let r = degree_open_image(&s, 0.0, &proj, &disk, &y)?;
                correct += usize::from(r.degree == expected);
                total += 1;
            }
        }
    }
    pass &= correct == total && total == 100;
    details.push(format!("degree {correct}/{total}"));
    outcome(pass, details.join(", "))
}

/// Random box in general position and a target inside (degree = sign of the
/// projected frame) or outside along the first axis (degree 0).
fn random_config(rng: &mut ChaCha8Rng, n: usize, proj: &Projector, inside: bool) -> (Disk, Vec<f64>, i64) {
    let d = proj.dim();
    loop {
        let center: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let axes: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let pa = DMatrix::from_fn(d, d, |i, j| proj.apply(&axes[j])[i]);
        let det = pa.determinant();
        if det.abs() < 1e-2 {
            continue;
        }
        let t: Vec<f64> = (0..d)
            .map(|i| {
                if inside || i > 0 {
                    rng.random_range(-0.8..0.8)
                } else {
                    rng.random_range(1.3..3.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }
                }
            })
            .collect();
        let disk = Disk { center, axes };
        let y = disk.at(&t);
        return (disk, y, if inside { det.signum() as i64 } else { 0 });
    }
}

fn files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p)?));
    }
    out.sort();
    Ok(out)
}

fn determinism(shared: &mut Shared) -> Result<Outcome> {
    let (cat1, t41) = match shared.runs.take() {
        Some(r) => r,
        None => {
            let (cat, t4, _, _) = mixing_runs("1")?;
            (cat, t4)
        }
    };
    let (cat2, t42, c, t) = mixing_runs("2")?;
    let mut compared = Vec::new();
    let mut pass = c == Some(0) && t == Some(0);
    for (a, b) in [(cat1, cat2), (t41, t42)] {
        let (fa, fb) = (files(&a)?, files(&b)?);
        pass &= !fa.is_empty() && fa == fb;
        compared.extend(fa.into_iter().map(|(name, bytes)| format!("{name} ({} B)", bytes.len())));
    }
    outcome(pass, format!("--jobs 1 vs 2, byte-identical: {}", compared.join(", ")))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "construction fidelity", budget: Some(Duration::from_secs(5)), run: construction_fidelity },
        Criterion { id: 2, name: "cone invariance and expansion", budget: Some(Duration::from_secs(30)), run: cone_invariance },
        Criterion { id: 3, name: "contracting center", budget: Some(Duration::from_secs(10)), run: contraction },
        Criterion { id: 4, name: "semiconjugacy", budget: Some(Duration::from_secs(120)), run: semiconjugacy },
        Criterion { id: 5, name: "fibers", budget: Some(Duration::from_secs(300)), run: fibers },
        Criterion { id: 6, name: "mixing", budget: Some(Duration::from_secs(600)), run: mixing },
        Criterion { id: 7, name: "SH-Saddle certification", budget: Some(Duration::from_secs(600)), run: avoid_and_sh },
        Criterion { id: 8, name: "surgery indices", budget: Some(Duration::from_secs(60)), run: surgery_indices },
        Criterion { id: 9, name: "oracle equivalences", budget: Some(Duration::from_secs(60)), run: oracles },
        Criterion { id: 10, name: "determinism across --jobs", budget: None, run: determinism },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)(&mut shared);
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => {
                let over = c.budget.filter(|&b| elapsed >= b);
                let detail = match over {
                    Some(b) => format!("{}; over the {} s budget", o.detail, b.as_secs()),
                    None => o.detail,
                };
                (o.pass && over.is_none(), detail)
            }
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!("criterion {:>2} {} {:<30} {:>8.1} s  {detail}", c.id, if pass { "PASS" } else { "FAIL" }, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
