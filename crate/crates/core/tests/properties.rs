use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mixsar::functional::{
    empirical_covariance, fpca, l2_inner, pve_truncate, scores, smooth_curves, uniform_grid,
    CurveSample,
};
use mixsar::geometry::ilr;
use mixsar::io::{
    default_ids, read_curves_long, read_weights_dense, read_weights_triplet, write_weights_dense,
    write_weights_triplet,
};
use mixsar::model::{
    assemble_design, concentrated_loglik, delta_hat, fit, full_loglik, sigma2_hat, FitInputs,
    FitOptions, FunctionalInput, RhoMode,
};
use mixsar::simulation::{
    gen_dataset, replication_rng, run_monte_carlo_with_workers, Covariates, SimConfig,
};
use mixsar::spatial::{
    knn_inverse_distance, log_det_system, moran_statistic, rook_lattice, row_normalize,
    DistanceMetric, WeightMatrix,
};

fn random_curves(seed: u64, n: usize) -> CurveSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = uniform_grid(100);
    let coefs: Vec<[f64; 4]> = (0..n)
        .map(|_| {
            [
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(-3.0..3.0),
            ]
        })
        .collect();
    let values = DMatrix::from_fn(n, grid.len(), |i, k| {
        let t = grid[k];
        let c = coefs[i];
        c[0] * t + c[1] * (5.0 * t).sin() + c[2] * (t * t * 9.0).cos() + c[3] * (t - 0.3).abs()
    });
    CurveSample::new(grid, values).unwrap()
}

/// A small simulated data set together with its weight matrix.
fn simulated(
    seed: u64,
    rows: usize,
    cols: usize,
    rho: f64,
) -> (Covariates, Vec<f64>, WeightMatrix) {
    let config = SimConfig {
        rows,
        cols,
        rho,
        ..SimConfig::default()
    };
    let w = rook_lattice(rows, cols).unwrap();
    let (cov, y) = gen_dataset(&config, &w, &mut replication_rng(seed, 0)).unwrap();
    (cov, y.iter().copied().collect(), w)
}

fn inputs<'w>(cov: &Covariates, y: &[f64], w: &'w WeightMatrix) -> FitInputs<'w> {
    FitInputs {
        y: y.to_vec(),
        functional: Some(FunctionalInput::Curves(cov.curves.clone())),
        compositions: Some(cov.compositions.clone()),
        scalars: Some(cov.scalars.clone()),
        scalar_names: None,
        weights: w,
    }
}

/// Design matrix rebuilt from the public building blocks.
fn design_matrix(cov: &Covariates, m: usize) -> DMatrix<f64> {
    let basis = fpca(&cov.curves).unwrap();
    let a = scores(&cov.curves, &basis, m).unwrap().scores;
    let n = cov.scalars.nrows();
    let xi: Vec<Vec<f64>> = cov.compositions.iter().map(|c| ilr(c).0).collect();
    let d1 = xi[0].len();
    let mut z = DMatrix::from_element(n, 1 + m + d1 + cov.scalars.ncols(), 1.0);
    for i in 0..n {
        for j in 0..m {
            z[(i, 1 + j)] = a[(i, j)];
        }
        for j in 0..d1 {
            z[(i, 1 + m + j)] = xi[i][j];
        }
        for j in 0..cov.scalars.ncols() {
            z[(i, 1 + m + d1 + j)] = cov.scalars[(i, j)];
        }
    }
    z
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fpca_basis_properties(seed in any::<u64>(), n in 6usize..30) {
        let sample = random_curves(seed, n);
        let k = empirical_covariance(&sample).unwrap();
        prop_assert!((&k - k.transpose()).amax() < 1e-12);
        let basis = fpca(&sample).unwrap();
        prop_assert!(basis.eigenvalues.iter().all(|&l| l >= -1e-10));
        prop_assert!(basis.eigenvalues.windows(2).all(|p| p[1] <= p[0] + 1e-12));
        let q = &basis.quadrature_weights;
        for j in 0..4 {
            for l in 0..4 {
                let ip = l2_inner(&basis.eigenfunction(j), &basis.eigenfunction(l), q).unwrap();
                let delta = if j == l { 1.0 } else { 0.0 };
                prop_assert!((ip - delta).abs() < 1e-8);
            }
        }
        // Parseval at full rank, and centred scores.
        let full = basis.n_components();
        let s = scores(&sample, &basis, full).unwrap().scores;
        let mean = sample.mean_curve();
        for i in 0..n {
            let centred: Vec<f64> = sample.values().row(i).iter().zip(&mean).map(|(x, m)| x - m).collect();
            let norm2 = l2_inner(&centred, &centred, q).unwrap();
            let sum2: f64 = s.row(i).iter().map(|a| a * a).sum();
            prop_assert!((sum2 - norm2).abs() <= 1e-6 * norm2.max(1e-12));
        }
        for j in 0..full.min(5) {
            prop_assert!(s.column(j).mean().abs() < 1e-8);
        }
    }

    #[test]
    fn duplicate_observations_do_not_change_smoothing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = [0.0, 0.2, 0.45, 0.7, 1.0];
        let mut plain = String::from("subject_id,t,value\n");
        let mut doubled = plain.clone();
        for s in ["a", "b", "c"] {
            for t in times {
                let v: f64 = rng.random_range(-1.0..1.0);
                let row = format!("{s},{t},{v}\n");
                plain.push_str(&row);
                doubled.push_str(&row);
                if rng.random_bool(0.5) {
                    doubled.push_str(&row);
                }
            }
        }
        let (_, a) = read_curves_long(plain.as_bytes()).unwrap();
        let (_, b) = read_curves_long(doubled.as_bytes()).unwrap();
        let sa = smooth_curves(&a, 0.3, 100).unwrap();
        let sb = smooth_curves(&b, 0.3, 100).unwrap();
        prop_assert_eq!(sa.values(), sb.values());
    }

    #[test]
    fn rook_neighbours_are_unit_steps(rows in 1usize..7, cols in 1usize..7) {
        prop_assume!(rows * cols >= 2);
        let w = rook_lattice(rows, cols).unwrap();
        for u in 0..rows * cols {
            let row_sum: f64 = (0..rows * cols).map(|v| w.get(u, v)).sum();
            prop_assert!((row_sum - 1.0).abs() < 1e-12);
            for v in 0..rows * cols {
                let steps = (u / cols).abs_diff(v / cols) + (u % cols).abs_diff(v % cols);
                prop_assert_eq!(w.get(u, v) > 0.0, steps == 1);
                prop_assert_eq!(w.get(u, v) > 0.0, w.get(v, u) > 0.0);
            }
        }
    }

    #[test]
    fn weight_builders_and_log_det(seed in any::<u64>(), n in 3usize..25, k in 1usize..5, rho in -0.95f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
        let w = knn_inverse_distance(&pts, DistanceMetric::Euclidean, k, 100.0).unwrap();
        for i in 0..n {
            prop_assert_eq!(w.get(i, i), 0.0);
            let row: Vec<f64> = (0..n).map(|j| w.get(i, j)).collect();
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(row.iter().filter(|&&x| x > 0.0).count() <= k);
        }
        let again = row_normalize(w.matrix().clone()).unwrap();
        prop_assert!((again.matrix() - w.matrix()).amax() < 1e-15);

        prop_assert_eq!(log_det_system(0.0, &w).unwrap(), 0.0);
        let lu = log_det_system(rho, &w).unwrap();
        prop_assert!((w.log_det(rho).unwrap() - lu).abs() < 1e-9);
        let h = 1e-6;
        let step = log_det_system(rho + h, &w).unwrap() - lu;
        prop_assert!(step.abs() < 1e-3);
    }

    #[test]
    fn moran_matches_double_sum(seed in any::<u64>(), n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
        let w = row_normalize(raw).unwrap();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let z: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let mut num = 0.0;
        let mut s0 = 0.0;
        for i in 0..n {
            for j in 0..n {
                num += w.get(i, j) * z[i] * z[j];
                s0 += w.get(i, j);
            }
        }
        let brute = n as f64 / s0 * num / z.iter().map(|x| x * x).sum::<f64>();
        prop_assert!((moran_statistic(&v, &w).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn weights_survive_file_round_trip(seed in any::<u64>(), n in 2usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]).collect();
        let w = knn_inverse_distance(&pts, DistanceMetric::Euclidean, 2, 100.0).unwrap();
        let ids = default_ids(n);
        let mut dense = Vec::new();
        write_weights_dense(&mut dense, &ids, &w).unwrap();
        let (ids_d, wd) = read_weights_dense(dense.as_slice(), false).unwrap();
        let mut trip = Vec::new();
        write_weights_triplet(&mut trip, &ids, &w).unwrap();
        let (ids_t, wt) = read_weights_triplet(trip.as_slice(), false).unwrap();
        prop_assert_eq!(&ids_d, &ids);
        prop_assert_eq!(wd.matrix(), w.matrix());
        // Triplet ids follow first appearance; compare through the labels.
        for (a, ia) in ids_t.iter().enumerate() {
            for (b, ib) in ids_t.iter().enumerate() {
                let i: usize = ia.parse::<usize>().unwrap() - 1;
                let j: usize = ib.parse::<usize>().unwrap() - 1;
                prop_assert_eq!(wt.get(a, b), w.get(i, j));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fitted_model_identities(seed in any::<u64>(), rows in 6usize..9, cols in 6usize..9, rho in -0.6f64..0.8) {
        let (cov, y, w) = simulated(seed, rows, cols, rho);
        let n = y.len();
        let result = fit(&inputs(&cov, &y, &w), &FitOptions::default()).unwrap();
        prop_assert!(result.sigma2_hat > 0.0);
        let comp = result.beta_comp_hat.as_ref().unwrap();
        prop_assert!((comp.parts().iter().sum::<f64>() - 1.0).abs() < 1e-10);

        let z = design_matrix(&cov, result.n_components);
        let yv = DVector::from_vec(y.clone());
        let wy = w.lag(&yv);
        let delta = DVector::from_vec(result.delta_hat.clone());
        let resid = &yv - &wy * result.rho_hat - &z * &delta;
        for (a, b) in resid.iter().zip(&result.residuals) {
            prop_assert!((a - b).abs() < 1e-10);
        }

        // R² and MSE from the reduced-form fitted values.
        let diag = result.diagnostics.as_ref().unwrap();
        let a = DMatrix::<f64>::identity(n, n) - w.matrix() * result.rho_hat;
        let fitted = a.lu().solve(&(&z * &delta)).unwrap();
        let sse: f64 = yv.iter().zip(fitted.iter()).map(|(y, f)| (y - f).powi(2)).sum();
        let mean = yv.mean();
        let sst: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
        prop_assert!((diag.mse_fitted - sse / n as f64).abs() < 1e-9);
        prop_assert!((diag.r_squared - (1.0 - sse / sst)).abs() < 1e-9);

        // β̂(t) lies in the span of the retained eigenfunctions.
        let basis = result.basis.as_ref().unwrap();
        let beta = result.beta_t_hat.as_ref().unwrap();
        let q = &basis.quadrature_weights;
        for j in 0..result.n_components + 3 {
            let ip = l2_inner(beta, &basis.eigenfunction(j), q).unwrap();
            let expect = if j < result.n_components { result.b_hat[j] } else { 0.0 };
            prop_assert!((ip - expect).abs() < 1e-8 * (1.0 + expect.abs()));
        }
        prop_assert_eq!(result.n_components, pve_truncate(&basis.eigenvalues, 0.7).unwrap());
    }

    #[test]
    fn profile_identity_and_ols_limit(seed in any::<u64>()) {
        let (cov, y, w) = simulated(seed, 7, 8, 0.4);
        let n = y.len() as f64;
        let basis = fpca(&cov.curves).unwrap();
        let m = pve_truncate(&basis.eigenvalues, 0.7).unwrap();
        let a = scores(&cov.curves, &basis, m).unwrap().scores;
        let xi = DMatrix::from_fn(y.len(), 2, |i, j| ilr(&cov.compositions[i]).0[j]);
        let design = assemble_design(DVector::from_vec(y.clone()), &a, &xi, &cov.scalars, &w).unwrap();
        let constant = -(n / 2.0) * ((2.0 * std::f64::consts::PI).ln() + 1.0);
        for k in 0..10 {
            let r = -0.9 + 0.19 * k as f64;
            let full = full_loglik(r, &delta_hat(r, &design).unwrap(), sigma2_hat(r, &design).unwrap(), &design).unwrap();
            let conc = concentrated_loglik(r, &design).unwrap();
            prop_assert!((full - conc - constant).abs() < 1e-8);
        }

        let options = FitOptions { rho: RhoMode::Fixed(0.0), wald: false, ..FitOptions::default() };
        let pinned = fit(&inputs(&cov, &y, &w), &options).unwrap();
        let z = design_matrix(&cov, m);
        let ols = z.clone().svd(true, true).solve(&DVector::from_vec(y.clone()), 1e-14).unwrap();
        for (a, b) in ols.iter().zip(&pinned.delta_hat) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn permutation_equivariance(seed in any::<u64>()) {
        let (cov, y, w) = simulated(seed, 6, 7, 0.5);
        let n = y.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted = Covariates {
            curves: cov.curves.select_rows(&order),
            compositions: order.iter().map(|&i| cov.compositions[i].clone()).collect(),
            scalars: cov.scalars.select_rows(order.iter()),
        };
        let py: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let pw = w.permuted(&order).unwrap();
        let options = FitOptions { wald: false, ..FitOptions::default() };
        let a = fit(&inputs(&cov, &y, &w), &options).unwrap();
        let b = fit(&inputs(&permuted, &py, &pw), &options).unwrap();
        prop_assert!((a.rho_hat - b.rho_hat).abs() < 1e-8);
        for (x, y) in a.delta_hat.iter().zip(&b.delta_hat) {
            prop_assert!((x - y).abs() < 1e-8);
        }
        let pinned = FitOptions { rho: RhoMode::Fixed(a.rho_hat), ..options };
        let a = fit(&inputs(&cov, &y, &w), &pinned).unwrap();
        let b = fit(&inputs(&permuted, &py, &pw), &pinned).unwrap();
        prop_assert!((a.sigma2_hat - b.sigma2_hat).abs() < 1e-8);
        for (x, y) in a.delta_hat.iter().zip(&b.delta_hat) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn monte_carlo_summaries(seed in any::<u64>(), reps in 2usize..6) {
        let config = SimConfig { rows: 5, cols: 6, reps, seed, ..SimConfig::default() };
        let one = run_monte_carlo_with_workers(&config, 1).unwrap();
        let many = run_monte_carlo_with_workers(&config, 4).unwrap();
        prop_assert_eq!(one.summary_csv().unwrap(), many.summary_csv().unwrap());
        prop_assert_eq!(one.replications_csv().unwrap(), many.replications_csv().unwrap());
        prop_assert!(one.beta_comp_bias.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(one.rho_std >= 0.0 && one.beta_std >= 0.0 && one.mse_std >= 0.0);
        prop_assert!(one.mse_mean >= 0.0);
    }
}
