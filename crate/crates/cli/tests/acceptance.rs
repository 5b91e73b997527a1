//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mixsar::functional::{
    empirical_covariance, fpca, l2_inner, scores, trapezoid_weights, uniform_grid, CurveSample,
};
use mixsar::geometry::{
    aitchison_inner, aitchison_norm, closure, ilr, ilr_inv, perturb, power, Composition,
};
use mixsar::model::{
    assemble_design, concentrated_loglik, delta_hat, fit_design, full_loglik, optimize_rho,
    sigma2_hat, FitOptions, MixedDesign, RhoMode,
};
use mixsar::simulation::{run_monte_carlo, SimConfig, SimReport};
use mixsar::spatial::{
    log_det_system, moran_statistic, row_normalize, SpatialFilter, WeightMatrix,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn study(rows: usize, cols: usize, rho: f64, alpha: f64, reps: usize) -> (SimReport, Duration) {
    let config = SimConfig {
        rows,
        cols,
        rho,
        alpha,
        reps,
        seed: 20240601,
        ..SimConfig::default()
    };
    let start = Instant::now();
    let report = run_monte_carlo(&config).expect("monte carlo run");
    (report, start.elapsed())
}

fn criterion_1() -> Outcome {
    let (r, elapsed) = study(10, 15, 0.4, 1.1, 100);
    let max_comp = r.beta_comp_bias.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let checks = [
        (-0.03..=0.015).contains(&r.rho_bias),
        (0.03..=0.11).contains(&r.rho_std),
        (0.03..=0.14).contains(&r.mse_mean),
        r.beta_bias.abs() <= 0.03,
        max_comp <= 0.01,
        elapsed <= Duration::from_secs(180),
    ];
    check(
        checks.iter().all(|c| *c),
        format!(
            "bias(rho)={:.4} std(rho)={:.4} MSE={:.4} bias(beta)={:.4} max|bias(beta^D)|={:.4} time={:.1}s",
            r.rho_bias,
            r.rho_std,
            r.mse_mean,
            r.beta_bias,
            max_comp,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let (well, _) = study(10, 30, 0.4, 1.1, 100);
    let (close, _) = study(10, 30, 0.4, 2.0, 100);
    let ratio = close.mse_mean / well.mse_mean;
    check(
        ratio >= 2.0,
        format!(
            "MSE alpha=2 {:.4} vs alpha=1.1 {:.4}, ratio {:.2}",
            close.mse_mean, well.mse_mean, ratio
        ),
    )
}

fn criterion_3() -> Outcome {
    let (small, _) = study(10, 15, 0.8, 1.1, 100);
    let (large, _) = study(30, 30, 0.8, 1.1, 100);
    check(
        large.rho_std < small.rho_std,
        format!(
            "std(rho) n=900 {:.4} vs n=150 {:.4}",
            large.rho_std, small.rho_std
        ),
    )
}

fn criterion_4() -> Outcome {
    let (a, _) = study(10, 30, 0.4, 1.1, 200);
    let (b, _) = study(10, 30, 0.8, 1.1, 200);
    check(
        a.rho_bias < 0.0 && b.rho_bias < 0.0,
        format!(
            "bias(rho) rho=0.4 {:.5}, rho=0.8 {:.5}",
            a.rho_bias, b.rho_bias
        ),
    )
}

fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> WeightMatrix {
    let mut raw = DMatrix::from_fn(n, n, |i, j| {
        if i != j && rng.random::<f64>() < 0.4 {
            rng.random::<f64>() + 0.05
        } else {
            0.0
        }
    });
    for i in 0..n {
        raw[(i, (i + 1) % n)] += 0.5;
    }
    row_normalize(raw).unwrap()
}

struct Instance {
    y: DVector<f64>,
    x: DMatrix<f64>,
    w: WeightMatrix,
}

fn instance(n: usize, rho: f64, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_weights(n, &mut rng);
    let x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let signal = DVector::from_fn(n, |i, _| {
        0.5 + x[(i, 0)] - 2.0 * x[(i, 1)] + 0.3 * x[(i, 2)]
    });
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = SpatialFilter::new(rho, &w)
        .unwrap()
        .solve(&(signal + eps))
        .unwrap();
    Instance { y, x, w }
}

fn design(inst: &Instance) -> MixedDesign<'_> {
    let a = inst.x.columns(0, 1).into_owned();
    let xi = inst.x.columns(1, 1).into_owned();
    let s = inst.x.columns(2, 1).into_owned();
    assemble_design(inst.y.clone(), &a, &xi, &s, &inst.w).unwrap()
}

fn normal_equations(z: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    (z.transpose() * z).try_inverse().unwrap() * (z.transpose() * rhs)
}

/// Laplace expansion along the first row.
fn cofactor_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = m.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[(0, j)] * cofactor_det(&minor)
        })
        .sum()
}

fn brute_moran(values: &[f64], w: &DMatrix<f64>) -> f64 {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut s0 = 0.0;
    for i in 0..n {
        for j in 0..n {
            num += w[(i, j)] * (values[i] - mean) * (values[j] - mean);
            s0 += w[(i, j)];
        }
    }
    let den: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    n as f64 / s0 * num / den
}

fn criterion_5() -> Outcome {
    // (a) δ̂ against dense normal equations.
    let mut err_a = 0.0f64;
    for s in 0..20 {
        let inst = instance(25, 0.5, 100 + s);
        let d = design(&inst);
        for rho in [-0.4, 0.2, 0.7] {
            let rhs = &inst.y - inst.w.lag(&inst.y) * rho;
            let diff = delta_hat(rho, &d).unwrap() - normal_equations(d.z(), &rhs);
            err_a = err_a.max(diff.amax());
        }
    }
    // (b) log-determinant against cofactor expansion.
    let mut err_b = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 2..=6 {
        for _ in 0..5 {
            let w = random_weights(n, &mut rng);
            for rho in [-0.9, -0.3, 0.0, 0.4, 0.95] {
                let a = DMatrix::identity(n, n) - w.matrix() * rho;
                let oracle = cofactor_det(&a).ln();
                err_b = err_b
                    .max((w.log_det(rho).unwrap() - oracle).abs())
                    .max((log_det_system(rho, &w).unwrap() - oracle).abs());
            }
        }
    }
    // (c) optimizer against a 0.001 grid.
    let mut err_c = 0.0f64;
    for s in 0..10 {
        let inst = instance(40, 0.6, 300 + s);
        let d = design(&inst);
        let best = (0..=1998)
            .map(|i| -0.999 + 0.001 * i as f64)
            .map(|r| (r, concentrated_loglik(r, &d).unwrap()))
            .fold(
                (0.0, f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            );
        err_c = err_c.max((optimize_rho(&d).unwrap() - best.0).abs());
    }
    // (d) Moran's I against the double sum.
    let mut err_d = 0.0f64;
    for n in [2usize, 5, 17, 50] {
        let w = random_weights(n, &mut rng);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect();
        err_d = err_d.max((moran_statistic(&v, &w).unwrap() - brute_moran(&v, w.matrix())).abs());
    }
    // (e) ρ pinned to zero is OLS.
    let mut err_e = 0.0f64;
    for s in 0..5 {
        let inst = instance(30, 0.5, 500 + s);
        let d = design(&inst);
        let options = FitOptions {
            rho: RhoMode::Fixed(0.0),
            diagnostics: false,
            wald: false,
            ..FitOptions::default()
        };
        let f = fit_design(&d, None, &options).unwrap();
        let ols = normal_equations(d.z(), &inst.y);
        err_e = err_e.max((DVector::from_vec(f.delta_hat) - ols).amax());
    }
    check(
        err_a <= 1e-8 && err_b <= 1e-10 && err_c <= 0.002 && err_d <= 1e-12 && err_e <= 1e-8,
        format!("(a) {err_a:.1e} (b) {err_b:.1e} (c) {err_c:.1e} (d) {err_d:.1e} (e) {err_e:.1e}"),
    )
}

fn random_comp(rng: &mut ChaCha8Rng, d: usize) -> Composition {
    let raw: Vec<f64> = (0..d)
        .map(|_| (rng.random::<f64>() * 6.0 - 3.0).exp())
        .collect();
    closure(&raw).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut iso, mut trip, mut lin, mut unit, mut general) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for case in 0..1000 {
        let d = 2 + case % 6;
        let x = random_comp(&mut rng, d);
        let y = random_comp(&mut rng, d);
        let a = rng.random::<f64>() * 4.0 - 2.0;
        let (ix, iy) = (ilr(&x), ilr(&y));

        iso = iso.max((aitchison_inner(&x, &y).unwrap() - ix.dot(&iy)).abs());

        let back = ilr_inv(&ix).unwrap();
        for (p, q) in back.parts().iter().zip(x.parts()) {
            trip = trip.max((p - q).abs());
        }

        let sum = ilr(&perturb(&x, &y).unwrap());
        let scaled = ilr(&power(&x, a).unwrap());
        for k in 0..d - 1 {
            lin = lin.max((sum.0[k] - ix.0[k] - iy.0[k]).abs());
            lin = lin.max((scaled.0[k] - a * ix.0[k]).abs());
        }

        // Literal identity: holds when β has unit Aitchison norm.
        let unit_beta = power(&y, 1.0 / aitchison_norm(&y)).unwrap();
        let shifted = perturb(
            &x,
            &power(&unit_beta, 1.0 / aitchison_norm(&unit_beta)).unwrap(),
        )
        .unwrap();
        let gain = aitchison_inner(&shifted, &unit_beta).unwrap()
            - aitchison_inner(&x, &unit_beta).unwrap();
        unit = unit.max((gain - 1.0).abs());
        // General β: the unit-direction shift adds ‖β‖ₐ, a shift by β/‖β‖ₐ² adds exactly one.
        let norm = aitchison_norm(&y);
        let base = aitchison_inner(&x, &y).unwrap();
        let by_unit = perturb(&x, &power(&y, 1.0 / norm).unwrap()).unwrap();
        let by_scaled = perturb(&x, &power(&y, 1.0 / (norm * norm)).unwrap()).unwrap();
        general = general
            .max((aitchison_inner(&by_unit, &y).unwrap() - base - norm).abs())
            .max((aitchison_inner(&by_scaled, &y).unwrap() - base - 1.0).abs());
    }
    check(
        iso <= 1e-10 && trip <= 1e-12 && lin <= 1e-10 && unit <= 1e-10 && general <= 1e-10,
        format!(
            "isometry {iso:.1e} round-trip {trip:.1e} linearity {lin:.1e} unit-shift {unit:.1e} general-shift {general:.1e} (1000 cases)"
        ),
    )
}

fn criterion_7() -> Outcome {
    let grid = uniform_grid(100);
    let w = trapezoid_weights(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 60;
    let mut values = DMatrix::zeros(n, 100);
    for i in 0..n {
        let c: Vec<f64> = (1..=6)
            .map(|j| rng.sample::<f64, _>(StandardNormal) / j as f64)
            .collect();
        for (t, &tt) in grid.iter().enumerate() {
            values[(i, t)] = c
                .iter()
                .enumerate()
                .map(|(j, cj)| cj * ((j + 1) as f64 * PI * tt).sin())
                .sum::<f64>()
                + 0.3 * tt;
        }
    }
    let sample = CurveSample::new(grid.clone(), values).unwrap();
    let basis = fpca(&sample).unwrap();

    let mut ortho = 0.0f64;
    for j in 0..basis.n_components() {
        for k in 0..=j {
            let v = l2_inner(&basis.eigenfunction(j), &basis.eigenfunction(k), &w).unwrap();
            ortho = ortho.max((v - if j == k { 1.0 } else { 0.0 }).abs());
        }
    }
    let cov = empirical_covariance(&sample).unwrap();
    let trace: f64 = (0..100).map(|t| w[t] * cov[(t, t)]).sum();
    let trace_err = (basis.eigenvalues.iter().sum::<f64>() - trace).abs() / trace;

    let m = 6;
    let a = scores(&sample, &basis, m).unwrap();
    let mut var_err = 0.0f64;
    for j in 0..m {
        let var = a.scores.column(j).iter().map(|v| v * v).sum::<f64>() / n as f64;
        var_err = var_err.max((var - basis.eigenvalues[j]).abs() / basis.eigenvalues[j]);
    }

    let raw: Vec<f64> = grid.iter().map(|t| (PI * t).cos() + t * t).collect();
    let norm = l2_inner(&raw, &raw, &w).unwrap().sqrt();
    let phi: Vec<f64> = raw.iter().map(|v| v / norm).collect();
    let rows = DMatrix::from_fn(8, 100, |i, t| (i as f64 - 3.3) * phi[t]);
    let rank_one = fpca(&CurveSample::new(grid.clone(), rows).unwrap()).unwrap();
    let first = rank_one.eigenfunction(0);
    let sign = l2_inner(&first, &phi, &w).unwrap().signum();
    let diff: Vec<f64> = first.iter().zip(&phi).map(|(a, b)| a - sign * b).collect();
    let recovery = l2_inner(&diff, &diff, &w).unwrap().sqrt();

    check(
        ortho <= 1e-8 && trace_err <= 1e-6 && var_err <= 1e-6 && recovery <= 1e-3,
        format!(
            "orthonormality {ortho:.1e} trace {trace_err:.1e} score-variance {var_err:.1e} rank-one {recovery:.1e}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let inst = instance(60, 0.4, 8);
    let d = design(&inst);
    let gaps: Vec<f64> = (0..10)
        .map(|i| -0.85 + 0.19 * i as f64)
        .map(|rho| {
            let full = full_loglik(
                rho,
                &delta_hat(rho, &d).unwrap(),
                sigma2_hat(rho, &d).unwrap(),
                &d,
            )
            .unwrap();
            full - concentrated_loglik(rho, &d).unwrap()
        })
        .collect();
    let spread = gaps.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
        - gaps.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    check(
        spread <= 1e-8,
        format!("spread of full - concentrated over 10 rho values: {spread:.1e}"),
    )
}

fn run_simulate(dir: &Path, workers: usize) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_mixsar"))
        .args([
            "simulate", "--rows", "10", "--cols", "15", "--rho", "0.4", "--alpha", "1.1",
        ])
        .args([
            "--reps",
            "20",
            "--seed",
            "42",
            "--workers",
            &workers.to_string(),
        ])
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("run mixsar");
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_simulate(&tmp.path().join("a"), 1);
    let b = run_simulate(&tmp.path().join("b"), 1);
    let c = run_simulate(&tmp.path().join("c"), 8);
    check(
        !a.is_empty() && a == b && a == c,
        format!(
            "{} output files compared across two runs and 1 vs 8 workers",
            a.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("small-lattice study row", criterion_1),
        ("eigen-gap sensitivity", criterion_2),
        ("consistency trend", criterion_3),
        ("negative bias of rho", criterion_4),
        ("oracle equivalence", criterion_5),
        ("geometry properties", criterion_6),
        ("FPCA properties", criterion_7),
        ("profile-likelihood identity", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {verdict} [{name}] {} ({:.1}s)",
            i + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
