//! Monte Carlo study on a rook lattice.
//!
//! Each replication draws curves `x(t) = Σ aⱼZⱼφⱼ(t)` with
//! `aⱼ = (-1)^{j+1} j^{-α/2}`, `Zⱼ ~ U[-√3, √3]`, `φⱼ(t) = √2 cos(jπt)`
//! (`j = 1..50`), compositions with ilr coordinates `N(ilr(μ), Σ)`, a scalar
//! `x ~ N(1, 0.5²)`, and the response
//!
//! ```text
//! y = (I - ρW)⁻¹ (∫x(t)β(t)dt + ⟨xᴰ, βᴰ⟩_A + xβ + 0.5ε)
//! ```
//!
//! then refits the model and records `ρ̂`, `β̂`, `MSE(β̂(t))` and `θ̂`.
//! Replication `r` draws from stream `r` of a ChaCha generator keyed by the
//! master seed, so results do not depend on scheduling or worker count.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{trapezoid_weights, uniform_grid, CurveSample, DEFAULT_GRID_SIZE};
use crate::geometry::{aitchison_inner, ilr, ilr_inv, Composition, IlrCoordinates};
use crate::model::{fit, FitInputs, FitOptions, FunctionalInput, RhoMode, DEFAULT_PVE};
use crate::spatial::{rook_lattice, SpatialFilter, WeightMatrix};

/// Number of basis terms in the generating series.
pub const N_TERMS: usize = 50;
/// Number of points at which `MSE(β̂(t))` is evaluated.
pub const MSE_POINTS: usize = 100;
pub const TRUE_BETA_COMP: [f64; 3] = [4.0 / 9.0, 2.0 / 9.0, 1.0 / 3.0];
pub const TRUE_BETA_SCALAR: f64 = 1.0;
pub const COMPOSITION_MEAN: [f64; 3] = [1.0 / 6.0, 1.0 / 3.0, 0.5];
pub const COMPOSITION_COV: [[f64; 2]; 2] = [[2.0, -1.5], [-1.5, 2.0]];
pub const SCALAR_MEAN: f64 = 1.0;
pub const SCALAR_SD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    pub rho: f64,
    pub alpha: f64,
    pub reps: usize,
    pub pve: f64,
    pub seed: u64,
    pub noise_scale: f64,
    pub grid_size: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rows: 10,
            cols: 15,
            rho: 0.4,
            alpha: 1.1,
            reps: 100,
            pve: DEFAULT_PVE,
            seed: 42,
            noise_scale: 0.5,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

impl SimConfig {
    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.rho.abs() < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if !(self.alpha > 1.0) {
            return bad(format!("alpha must exceed 1, got {}", self.alpha));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.pve > 0.0 && self.pve <= 1.0) {
            return bad(format!("pve must be in (0, 1], got {}", self.pve));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!(
                "noise_scale must be non-negative, got {}",
                self.noise_scale
            ));
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2".into());
        }
        if self.n() < 10 {
            return bad(format!("lattice {}x{} is too small", self.rows, self.cols));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "rows" | "R" => self.rows = parse(key, value)?,
            "cols" | "T" => self.cols = parse(key, value)?,
            "rho" | "rho_true" => self.rho = parse(key, value)?,
            "alpha" | "alpha_decay" => self.alpha = parse(key, value)?,
            "reps" | "n_reps" => self.reps = parse(key, value)?,
            "pve" => self.pve = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "noise_scale" => self.noise_scale = parse(key, value)?,
            "grid_size" => self.grid_size = parse(key, value)?,
            _ => return Err(Error::InvalidInput(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file over the defaults. `#` starts a
    /// comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut config = SimConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("line {}: expected key = value", lineno + 1))
            })?;
            config.set(k.trim(), v.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Ordered key/value view, used for manifests.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("rows", self.rows.to_string()),
            ("cols", self.cols.to_string()),
            ("rho", self.rho.to_string()),
            ("alpha", self.alpha.to_string()),
            ("reps", self.reps.to_string()),
            ("pve", self.pve.to_string()),
            ("seed", self.seed.to_string()),
            ("noise_scale", self.noise_scale.to_string()),
            ("grid_size", self.grid_size.to_string()),
        ]
    }
}

/// `φⱼ(t) = √2 cos(jπt)`.
pub fn cosine_basis(j: usize, t: f64) -> f64 {
    SQRT_2 * (j as f64 * PI * t).cos()
}

/// Coefficient `aⱼ = (-1)^{j+1} j^{-α/2}`.
pub fn decay_coefficient(j: usize, alpha: f64) -> f64 {
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    sign * (j as f64).powf(-alpha / 2.0)
}

/// Coefficient `bⱼ` of the true `β(t)`.
pub fn beta_coefficient(j: usize) -> f64 {
    if j == 1 {
        0.3
    } else {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        4.0 * sign / (j * j) as f64
    }
}

/// Draws `n` curves on `grid`.
pub fn gen_functional<R: Rng + ?Sized>(
    n: usize,
    alpha: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<CurveSample> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    let basis = DMatrix::from_fn(N_TERMS, grid.len(), |j, t| {
        decay_coefficient(j + 1, alpha) * cosine_basis(j + 1, grid[t])
    });
    let root3 = 3f64.sqrt();
    let dist = Uniform::new_inclusive(-root3, root3).expect("valid interval");
    let z = DMatrix::from_fn(n, N_TERMS, |_, _| rng.sample(dist));
    CurveSample::new(grid.to_vec(), z * basis)
}

/// The true coefficient function evaluated at `grid`.
pub fn true_beta_t(grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&t| {
            (1..=N_TERMS)
                .map(|j| beta_coefficient(j) * cosine_basis(j, t))
                .sum()
        })
        .collect()
}

/// Draws `n` compositions whose ilr coordinates are `N(ilr(mean), sigma)`.
pub fn gen_composition<R: Rng + ?Sized>(
    n: usize,
    mean: &Composition,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<Composition>> {
    let r = mean.dim() - 1;
    if sigma.shape() != (r, r) {
        return Err(Error::DimensionMismatch {
            context: "ilr covariance size",
            expected: r,
            found: sigma.nrows(),
        });
    }
    if (sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) {
        return Err(Error::InvalidInput(
            "ilr covariance must be symmetric".into(),
        ));
    }
    let l = Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::InvalidInput("ilr covariance must be positive definite".into()))?
        .l();
    let center = DVector::from_vec(ilr(mean).0);
    (0..n)
        .map(|_| {
            let e = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let eta = &center + &l * e;
            ilr_inv(&IlrCoordinates(eta.iter().copied().collect()))
        })
        .collect()
}

/// Covariates of one synthetic data set.
#[derive(Debug, Clone)]
pub struct Covariates {
    pub curves: CurveSample,
    pub compositions: Vec<Composition>,
    /// `n × q`.
    pub scalars: DMatrix<f64>,
}

/// True coefficients of the generating model.
#[derive(Debug, Clone)]
pub struct Coefficients {
    /// `β(t)` on the curves' grid.
    pub beta_t: Vec<f64>,
    pub beta_comp: Composition,
    pub beta_scalar: Vec<f64>,
}

impl Coefficients {
    pub fn reference_defaults(grid: &[f64]) -> Coefficients {
        Coefficients {
            beta_t: true_beta_t(grid),
            beta_comp: Composition::new(TRUE_BETA_COMP.to_vec()).expect("valid composition"),
            beta_scalar: vec![TRUE_BETA_SCALAR],
        }
    }
}

/// `∫xᵢβ + ⟨xᵢᴰ, βᴰ⟩_A + xᵢβ` for every unit; no intercept.
pub fn deterministic_signal(cov: &Covariates, coef: &Coefficients) -> Result<DVector<f64>> {
    let n = cov.curves.n_curves();
    if cov.compositions.len() != n || cov.scalars.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "covariate rows",
            expected: n,
            found: cov.compositions.len().min(cov.scalars.nrows()),
        });
    }
    if coef.beta_t.len() != cov.curves.grid_size() {
        return Err(Error::DimensionMismatch {
            context: "beta(t) grid",
            expected: cov.curves.grid_size(),
            found: coef.beta_t.len(),
        });
    }
    if coef.beta_scalar.len() != cov.scalars.ncols() {
        return Err(Error::DimensionMismatch {
            context: "scalar coefficients",
            expected: cov.scalars.ncols(),
            found: coef.beta_scalar.len(),
        });
    }
    let wq: Vec<f64> = trapezoid_weights(cov.curves.grid())
        .iter()
        .zip(&coef.beta_t)
        .map(|(w, b)| w * b)
        .collect();
    let integral = cov.curves.values() * DVector::from_vec(wq);
    let scalar = &cov.scalars * DVector::from_column_slice(&coef.beta_scalar);
    let mut signal = integral + scalar;
    for (i, c) in cov.compositions.iter().enumerate() {
        signal[i] += aitchison_inner(c, &coef.beta_comp)?;
    }
    Ok(signal)
}

/// Solves `(I - ρW)y = signal + noise_scale·ε`.
pub fn gen_response<R: Rng + ?Sized>(
    w: &WeightMatrix,
    rho: f64,
    cov: &Covariates,
    coef: &Coefficients,
    noise_scale: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let filter = SpatialFilter::new(rho, w)?;
    gen_response_filtered(&filter, cov, coef, noise_scale, rng)
}

/// [`gen_response`] with a prefactored `I - ρW`.
pub fn gen_response_filtered<R: Rng + ?Sized>(
    filter: &SpatialFilter,
    cov: &Covariates,
    coef: &Coefficients,
    noise_scale: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let signal = deterministic_signal(cov, coef)?;
    let eps = DVector::from_fn(signal.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    filter.solve(&(signal + eps * noise_scale))
}

/// Points `(j - 0.5)/100` at which `MSE(β̂(t))` is evaluated.
pub fn mse_points() -> Vec<f64> {
    (1..=MSE_POINTS)
        .map(|j| (j as f64 - 0.5) / MSE_POINTS as f64)
        .collect()
}

/// Piecewise-linear interpolation of `(grid, values)` at `t`.
pub fn interpolate(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let k = grid.partition_point(|g| *g <= t).clamp(1, grid.len() - 1);
    let (g0, g1) = (grid[k - 1], grid[k]);
    let s = (t - g0) / (g1 - g0);
    values[k - 1] + s * (values[k] - values[k - 1])
}

/// Mean squared error of `β̂(t)` against the true `β(t)` at [`mse_points`].
pub fn beta_t_mse(grid: &[f64], beta_hat: &[f64]) -> f64 {
    let points = mse_points();
    let truth = true_beta_t(&points);
    points
        .iter()
        .zip(&truth)
        .map(|(&t, b)| (interpolate(grid, beta_hat, t) - b).powi(2))
        .sum::<f64>()
        / points.len() as f64
}

/// Raw output of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub index: usize,
    pub rho_hat: f64,
    pub beta_hat: f64,
    pub mse_beta_t: f64,
    pub theta_hat: Vec<f64>,
    pub n_components: usize,
    /// `β̂(t)` on the simulation grid.
    pub beta_t_hat: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub rho_bias: f64,
    pub rho_std: f64,
    pub beta_bias: f64,
    pub beta_std: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
    /// Part-wise bias of `ilr⁻¹(mean θ̂)` against the true `βᴰ`.
    pub beta_comp_bias: Vec<f64>,
    pub beta_comp_sstd: f64,
    pub grid: Vec<f64>,
    pub replications: Vec<Replication>,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Generator for replication `index`: stream `index` of the master seed.
pub fn replication_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Everything replications share: lattice, factorized `I - ρW`, grid and
/// true coefficients.
struct Setup {
    w: WeightMatrix,
    filter: SpatialFilter,
    grid: Vec<f64>,
    coef: Coefficients,
    mean: Composition,
    sigma: DMatrix<f64>,
}

impl Setup {
    fn new(config: &SimConfig) -> Result<Setup> {
        config.validate()?;
        let w = rook_lattice(config.rows, config.cols)?;
        let filter = SpatialFilter::new(config.rho, &w)?;
        let grid = uniform_grid(config.grid_size);
        let coef = Coefficients::reference_defaults(&grid);
        Ok(Setup {
            w,
            filter,
            coef,
            grid,
            mean: Composition::new(COMPOSITION_MEAN.to_vec())?,
            sigma: DMatrix::from_fn(2, 2, |i, j| COMPOSITION_COV[i][j]),
        })
    }
}

/// Draws one synthetic data set for the given config and generator.
pub fn gen_dataset<R: Rng + ?Sized>(
    config: &SimConfig,
    w: &WeightMatrix,
    rng: &mut R,
) -> Result<(Covariates, DVector<f64>)> {
    let filter = SpatialFilter::new(config.rho, w)?;
    let grid = uniform_grid(config.grid_size);
    let setup = Setup {
        w: w.clone(),
        filter,
        coef: Coefficients::reference_defaults(&grid),
        grid,
        mean: Composition::new(COMPOSITION_MEAN.to_vec())?,
        sigma: DMatrix::from_fn(2, 2, |i, j| COMPOSITION_COV[i][j]),
    };
    draw(config, &setup, rng)
}

fn draw<R: Rng + ?Sized>(
    config: &SimConfig,
    setup: &Setup,
    rng: &mut R,
) -> Result<(Covariates, DVector<f64>)> {
    let n = config.n();
    let curves = gen_functional(n, config.alpha, &setup.grid, rng)?;
    let compositions = gen_composition(n, &setup.mean, &setup.sigma, rng)?;
    let normal = Normal::new(SCALAR_MEAN, SCALAR_SD).expect("valid normal");
    let scalars = DMatrix::from_fn(n, 1, |_, _| rng.sample(normal));
    let cov = Covariates {
        curves,
        compositions,
        scalars,
    };
    let y = gen_response_filtered(&setup.filter, &cov, &setup.coef, config.noise_scale, rng)?;
    Ok((cov, y))
}

fn replicate(config: &SimConfig, setup: &Setup, index: usize) -> Result<Replication> {
    let mut rng = replication_rng(config.seed, index);
    let (cov, y) = draw(config, setup, &mut rng)?;
    let inputs = FitInputs {
        y: y.iter().copied().collect(),
        functional: Some(FunctionalInput::Curves(cov.curves)),
        compositions: Some(cov.compositions),
        scalars: Some(cov.scalars),
        scalar_names: None,
        weights: &setup.w,
    };
    let options = FitOptions {
        pve: config.pve,
        grid_size: config.grid_size,
        derivative: false,
        rho: RhoMode::Free,
        diagnostics: false,
        wald: false,
    };
    let result = fit(&inputs, &options)?;
    let grid = result.grid.as_deref().unwrap_or(&setup.grid);
    let beta_t_hat = result.beta_t_hat.clone().unwrap_or_default();
    Ok(Replication {
        index,
        rho_hat: result.rho_hat,
        beta_hat: result.beta_scalar_hat[0],
        mse_beta_t: beta_t_mse(grid, &beta_t_hat),
        theta_hat: result.theta_hat,
        n_components: result.n_components,
        beta_t_hat,
    })
}

/// Runs the study on the current rayon pool.
pub fn run_monte_carlo(config: &SimConfig) -> Result<SimReport> {
    let start = Instant::now();
    let setup = Setup::new(config)?;
    // Factor the log-determinant spectrum once, before workers race for it.
    setup.w.log_det(config.rho)?;
    let results: Vec<Result<Replication>> = (0..config.reps)
        .into_par_iter()
        .map(|r| replicate(config, &setup, r))
        .collect();
    let mut reps = Vec::with_capacity(config.reps);
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(rep) => reps.push(rep),
            Err(source) => {
                return Err(Error::Replication {
                    replication: r,
                    seed: config.seed,
                    stream: r as u64,
                    source: Box::new(source),
                })
            }
        }
    }
    let mut report = aggregate(config, setup.grid, reps)?;
    report.elapsed = start.elapsed();
    Ok(report)
}

/// Runs the study on a dedicated pool of `workers` threads.
pub fn run_monte_carlo_with_workers(config: &SimConfig, workers: usize) -> Result<SimReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_monte_carlo(config))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn aggregate(config: &SimConfig, grid: Vec<f64>, reps: Vec<Replication>) -> Result<SimReport> {
    let (rho_mean, rho_std) = mean_std(reps.iter().map(|r| r.rho_hat));
    let (beta_mean, beta_std) = mean_std(reps.iter().map(|r| r.beta_hat));
    let (mse_mean, mse_std) = mean_std(reps.iter().map(|r| r.mse_beta_t));

    let r = TRUE_BETA_COMP.len() - 1;
    let mut theta_mean = vec![0.0; r];
    let mut totvar = 0.0;
    for (j, slot) in theta_mean.iter_mut().enumerate() {
        let (m, s) = mean_std(reps.iter().map(|rep| rep.theta_hat[j]));
        *slot = m;
        totvar += s * s;
    }
    let mean_comp = ilr_inv(&IlrCoordinates(theta_mean))?;
    let beta_comp_bias = mean_comp
        .parts()
        .iter()
        .zip(TRUE_BETA_COMP)
        .map(|(a, b)| a - b)
        .collect();

    Ok(SimReport {
        config: config.clone(),
        rho_bias: rho_mean - config.rho,
        rho_std,
        beta_bias: beta_mean - TRUE_BETA_SCALAR,
        beta_std,
        mse_mean,
        mse_std,
        beta_comp_bias,
        beta_comp_sstd: (totvar / r as f64).sqrt(),
        grid,
        replications: reps,
        elapsed: Duration::ZERO,
    })
}

impl SimReport {
    /// Aligned text table: one row per setting, stds in brackets.
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let cell = |m: f64, s: f64| format!("{m:.4} ({s:.4})");
        let comp = self
            .beta_comp_bias
            .iter()
            .map(|b| format!("{b:.4}"))
            .collect::<Vec<_>>()
            .join(", ");
        let header = [
            "rho",
            "n",
            "alpha",
            "reps",
            "bias(rho)",
            "bias(beta)",
            "MSE(beta(t))",
            "bias(beta^D)",
        ];
        let row = [
            format!("{}", c.rho),
            c.n().to_string(),
            format!("{}", c.alpha),
            c.reps.to_string(),
            cell(self.rho_bias, self.rho_std),
            cell(self.beta_bias, self.beta_std),
            cell(self.mse_mean, self.mse_std),
            format!("{comp} ({:.4})", self.beta_comp_sstd),
        ];
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.chars().count().max(r.chars().count()))
            .collect();
        let mut out = String::new();
        for line in [header.map(String::from).to_vec(), row.to_vec()] {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// One-row summary CSV with a header.
    pub fn summary_csv(&self) -> Result<String> {
        let c = &self.config;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "rho",
            "n",
            "alpha",
            "reps",
            "seed",
            "rho_bias",
            "rho_std",
            "beta_bias",
            "beta_std",
            "mse_mean",
            "mse_std",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        header.extend((1..=self.beta_comp_bias.len()).map(|k| format!("comp{k}_bias")));
        header.push("comp_sstd".into());
        w.write_record(&header)?;
        let mut row = vec![
            c.rho.to_string(),
            c.n().to_string(),
            c.alpha.to_string(),
            c.reps.to_string(),
            c.seed.to_string(),
        ];
        row.extend(
            [
                self.rho_bias,
                self.rho_std,
                self.beta_bias,
                self.beta_std,
                self.mse_mean,
                self.mse_std,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        row.extend(self.beta_comp_bias.iter().map(|v| v.to_string()));
        row.push(self.beta_comp_sstd.to_string());
        w.write_record(&row)?;
        finish(w)
    }

    /// Per-replication raw values.
    pub fn replications_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let r = self.beta_comp_bias.len() - 1;
        let mut header: Vec<String> = [
            "replication",
            "stream",
            "rho_hat",
            "beta_hat",
            "mse_beta_t",
            "m",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        header.extend((1..=r).map(|j| format!("theta{j}")));
        w.write_record(&header)?;
        for rep in &self.replications {
            let mut row = vec![
                rep.index.to_string(),
                rep.index.to_string(),
                rep.rho_hat.to_string(),
                rep.beta_hat.to_string(),
                rep.mse_beta_t.to_string(),
                rep.n_components.to_string(),
            ];
            row.extend(rep.theta_hat.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        finish(w)
    }

    /// Per-replication `β̂(t)` curves, one row per replication, plus a final
    /// row holding the true `β(t)`.
    pub fn curves_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["replication".to_string()];
        header.extend(self.grid.iter().map(|t| t.to_string()));
        w.write_record(&header)?;
        for rep in &self.replications {
            let mut row = vec![rep.index.to_string()];
            row.extend(rep.beta_t_hat.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        let mut truth = vec!["true".to_string()];
        truth.extend(true_beta_t(&self.grid).iter().map(|v| v.to_string()));
        w.write_record(&truth)?;
        finish(w)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
