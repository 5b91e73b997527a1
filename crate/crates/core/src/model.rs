//! The mixed-covariate spatial autoregressive model
//!
//! ```text
//! y = ρ W y + Z δ + ε,   ε ~ N(0, σ² I),   Z = [1 | A | ξ | x]
//! ```
//!
//! where `A` holds functional principal component scores, `ξ` the ilr
//! coordinates of the compositional covariate and `x` the scalar covariates.
//! For fixed `ρ` the maximizing `δ` and `σ²` have closed forms, so the
//! likelihood is profiled down to a one-dimensional function of `ρ`:
//!
//! ```text
//! ℓc(ρ) = -(n/2) ln σ̂²(ρ) + ln|I - ρW|
//! ```
//!
//! Because `Z` does not depend on `ρ`, `δ̂(ρ) = Z⁺y - ρ Z⁺Wy` is linear in
//! `ρ` and the residual vector is `e_y - ρ e_Wy`. [`MixedDesign`] projects
//! `y` and `Wy` once, after which every profile evaluation is `O(n)`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, QR};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::functional::{
    derivative_curves, fpca, pve_truncate, scores, smooth_curves, CurveSample, FpcaBasis,
    RawCurveObservations, DEFAULT_GRID_SIZE,
};
use crate::geometry::{ilr, ilr_inv, Composition};
use crate::optimize::grid_then_golden;
use crate::spatial::{morans_i, MoranReport, SpatialFilter, WeightMatrix};

/// Numerical stand-in for the open interval `(-1, 1)`.
pub const RHO_BOUND: f64 = 0.999;
/// Coarse grid size used before golden-section refinement.
pub const RHO_GRID_POINTS: usize = 201;
/// Final bracket width of the golden-section stage.
pub const RHO_TOLERANCE: f64 = 1e-8;
/// Default share of variance the retained components must explain.
pub const DEFAULT_PVE: f64 = 0.7;

/// Column-normalized pivots below this mark a column as collinear.
const RANK_TOLERANCE: f64 = 1e-9;

/// Which covariate family a design column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Intercept,
    Functional,
    Compositional,
    Scalar,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Block::Intercept => "intercept",
            Block::Functional => "functional scores",
            Block::Compositional => "compositional (ilr)",
            Block::Scalar => "scalar covariates",
        };
        f.write_str(s)
    }
}

/// Response, design matrix and weights, with the `ρ`-independent
/// projections cached.
#[derive(Debug, Clone)]
pub struct MixedDesign<'w> {
    y: DVector<f64>,
    wy: DVector<f64>,
    z: DMatrix<f64>,
    w: &'w WeightMatrix,
    labels: Vec<String>,
    blocks: Vec<Block>,
    widths: [usize; 3],
    coef_y: DVector<f64>,
    coef_wy: DVector<f64>,
    resid_y: DVector<f64>,
    resid_wy: DVector<f64>,
}

/// Builds `Z = [1 | scores | ilr | scalars]`. Zero-width blocks are dropped.
pub fn assemble_design<'w>(
    y: DVector<f64>,
    scores: &DMatrix<f64>,
    ilr_block: &DMatrix<f64>,
    scalars: &DMatrix<f64>,
    w: &'w WeightMatrix,
) -> Result<MixedDesign<'w>> {
    let q = scalars.ncols();
    let names: Vec<String> = (1..=q).map(|k| format!("beta{k}")).collect();
    assemble_design_named(y, scores, ilr_block, scalars, &names, w)
}

/// [`assemble_design`] with caller-supplied scalar column labels.
pub fn assemble_design_named<'w>(
    y: DVector<f64>,
    scores: &DMatrix<f64>,
    ilr_block: &DMatrix<f64>,
    scalars: &DMatrix<f64>,
    scalar_names: &[String],
    w: &'w WeightMatrix,
) -> Result<MixedDesign<'w>> {
    let n = y.len();
    for (context, rows) in [
        ("weight matrix size", w.n()),
        ("score rows", scores.nrows()),
        ("ilr rows", ilr_block.nrows()),
        ("scalar rows", scalars.nrows()),
    ] {
        if rows != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found: rows,
            });
        }
    }
    if scalar_names.len() != scalars.ncols() {
        return Err(Error::DimensionMismatch {
            context: "scalar labels",
            expected: scalars.ncols(),
            found: scalar_names.len(),
        });
    }
    if let Some(&unit) = w.isolated_units().first() {
        return Err(Error::IsolatedUnit { unit });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("response must be finite".into()));
    }

    let (m, r, q) = (scores.ncols(), ilr_block.ncols(), scalars.ncols());
    let p = 1 + m + r + q;
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "need more observations ({n}) than design columns ({p})"
        )));
    }
    let mut z = DMatrix::zeros(n, p);
    z.column_mut(0).fill(1.0);
    z.view_mut((0, 1), (n, m)).copy_from(scores);
    z.view_mut((0, 1 + m), (n, r)).copy_from(ilr_block);
    z.view_mut((0, 1 + m + r), (n, q)).copy_from(scalars);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("design matrix must be finite".into()));
    }

    let mut labels = vec!["alpha".to_string()];
    let mut blocks = vec![Block::Intercept];
    labels.extend((1..=m).map(|j| format!("b{j}")));
    blocks.extend(std::iter::repeat_n(Block::Functional, m));
    labels.extend((1..=r).map(|j| format!("theta{j}")));
    blocks.extend(std::iter::repeat_n(Block::Compositional, r));
    labels.extend(scalar_names.iter().cloned());
    blocks.extend(std::iter::repeat_n(Block::Scalar, q));

    check_rank(&z, &blocks)?;

    let wy = w.lag(&y);
    let qr = QR::new(z.clone());
    let (qmat, rmat) = (qr.q(), qr.r());
    let solve = |v: &DVector<f64>| -> Result<DVector<f64>> {
        rmat.solve_upper_triangular(&qmat.tr_mul(v))
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
    };
    let coef_y = solve(&y)?;
    let coef_wy = solve(&wy)?;
    let resid_y = &y - &z * &coef_y;
    let resid_wy = &wy - &z * &coef_wy;

    Ok(MixedDesign {
        y,
        wy,
        z,
        w,
        labels,
        blocks,
        widths: [m, r, q],
        coef_y,
        coef_wy,
        resid_y,
        resid_wy,
    })
}

fn check_rank(z: &DMatrix<f64>, blocks: &[Block]) -> Result<()> {
    let mut scaled = z.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::RankDeficient {
                block: format!("{} (column {j} is zero)", blocks[j]),
            });
        }
        col /= norm;
    }
    let r = QR::new(scaled).r();
    for (j, block) in blocks.iter().enumerate() {
        if r[(j, j)].abs() < RANK_TOLERANCE {
            return Err(Error::RankDeficient {
                block: format!("{block} (column {j})"),
            });
        }
    }
    Ok(())
}

impl<'w> MixedDesign<'w> {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn weights(&self) -> &'w WeightMatrix {
        self.w
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Widths of the functional, compositional and scalar blocks.
    pub fn block_widths(&self) -> (usize, usize, usize) {
        (self.widths[0], self.widths[1], self.widths[2])
    }

    pub fn n_coefficients(&self) -> usize {
        self.z.ncols()
    }

    /// Structural residuals `y - ρWy - Zδ`.
    pub fn residuals(&self, rho: f64, delta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.wy * rho - &self.z * delta
    }

    /// Copy of the design with `y` scaled by `c` (the covariates unchanged).
    pub fn with_scaled_response(&self, c: f64) -> Result<MixedDesign<'w>> {
        let (m, r, q) = self.block_widths();
        let scalar_names: Vec<String> = self.labels[1 + m + r..].to_vec();
        assemble_design_named(
            &self.y * c,
            &self.z.columns(1, m).into_owned(),
            &self.z.columns(1 + m, r).into_owned(),
            &self.z.columns(1 + m + r, q).into_owned(),
            &scalar_names,
            self.w,
        )
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidInput(format!(
            "ρ must lie in (-1, 1), got {rho}"
        )));
    }
    Ok(())
}

/// `δ̂(ρ) = (ZᵀZ)⁻¹Zᵀ(I - ρW)y`, via the cached QR projections.
pub fn delta_hat(rho: f64, design: &MixedDesign) -> Result<DVector<f64>> {
    check_rho(rho)?;
    Ok(&design.coef_y - &design.coef_wy * rho)
}

/// `σ̂²(ρ) = eᵀe / n` with `e = y - ρWy - Zδ̂(ρ)`.
pub fn sigma2_hat(rho: f64, design: &MixedDesign) -> Result<f64> {
    check_rho(rho)?;
    let e = &design.resid_y - &design.resid_wy * rho;
    Ok(e.norm_squared() / design.n() as f64)
}

/// Profile log-likelihood `-(n/2) ln σ̂²(ρ) + ln|I - ρW|`.
pub fn concentrated_loglik(rho: f64, design: &MixedDesign) -> Result<f64> {
    let s2 = sigma2_hat(rho, design)?;
    let scale = design.y.norm_squared() / design.n() as f64;
    if !(s2 > 1e-24 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Numerical(format!(
            "residual variance vanishes at ρ = {rho} (exact fit)"
        )));
    }
    let log_det = design.w.log_det(rho)?;
    Ok(-0.5 * design.n() as f64 * s2.ln() + log_det)
}

/// Full Gaussian log-likelihood of the SAR model.
pub fn full_loglik(
    rho: f64,
    delta: &DVector<f64>,
    sigma2: f64,
    design: &MixedDesign,
) -> Result<f64> {
    check_rho(rho)?;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "σ² must be positive, got {sigma2}"
        )));
    }
    if delta.len() != design.n_coefficients() {
        return Err(Error::DimensionMismatch {
            context: "coefficient vector",
            expected: design.n_coefficients(),
            found: delta.len(),
        });
    }
    let n = design.n() as f64;
    let e = design.residuals(rho, delta);
    Ok(-0.5 * n * (2.0 * PI * sigma2).ln() + design.w.log_det(rho)?
        - e.norm_squared() / (2.0 * sigma2))
}

/// Derivative of [`concentrated_loglik`] with respect to `ρ`.
pub fn concentrated_score(rho: f64, design: &MixedDesign) -> Result<f64> {
    check_rho(rho)?;
    let e = &design.resid_y - &design.resid_wy * rho;
    let ss = e.norm_squared();
    if !(ss > 0.0) {
        return Err(Error::Numerical(format!(
            "residual variance vanishes at ρ = {rho} (exact fit)"
        )));
    }
    Ok(design.n() as f64 * design.resid_wy.dot(&e) / ss + design.w.log_det_derivative(rho)?)
}

/// Maximizes the profile likelihood over `[-0.999, 0.999]`.
///
/// Value comparisons pin the argmax only to about `sqrt(ε)`, so the
/// golden-section result is polished by bisecting the analytic score.
pub fn optimize_rho(design: &MixedDesign) -> Result<f64> {
    let loglik = |r: f64| concentrated_loglik(r, design).unwrap_or(f64::NEG_INFINITY);
    let (rho, best) = grid_then_golden(
        loglik,
        -RHO_BOUND,
        RHO_BOUND,
        RHO_GRID_POINTS,
        RHO_TOLERANCE,
    )?;
    let score = |r: f64| concentrated_score(r, design).unwrap_or(f64::NAN);
    // Roundoff-level ties can drift the golden bracket past its nominal width.
    let mut lo = (rho - 1e-4).max(-RHO_BOUND);
    let mut hi = (rho + 1e-4).min(RHO_BOUND);
    let (s_lo, s_hi) = (score(lo), score(hi));
    if !(s_lo > 0.0 && s_hi < 0.0) {
        return Ok(rho);
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    Ok(if loglik(root) >= best - 1e-12 * best.abs().max(1.0) {
        root
    } else {
        rho
    })
}

/// How `ρ` is determined during a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum RhoMode {
    /// Maximize the profile likelihood.
    Free,
    /// Pin `ρ` to a value (e.g. `0` for the non-spatial model).
    Fixed(f64),
}

/// The functional covariate as supplied to [`fit`].
#[derive(Debug, Clone)]
pub enum FunctionalInput {
    /// Discrete observations, smoothed before FPCA.
    Raw {
        observations: RawCurveObservations,
        /// Defaults to twice the median observation spacing.
        bandwidth: Option<f64>,
    },
    /// Curves already on a shared grid.
    Curves(CurveSample),
}

/// Everything a fit consumes. Absent covariate families are `None`.
#[derive(Debug, Clone)]
pub struct FitInputs<'w> {
    pub y: Vec<f64>,
    pub functional: Option<FunctionalInput>,
    pub compositions: Option<Vec<Composition>>,
    /// `n × q` scalar covariates.
    pub scalars: Option<DMatrix<f64>>,
    pub scalar_names: Option<Vec<String>>,
    pub weights: &'w WeightMatrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOptions {
    pub pve: f64,
    pub grid_size: usize,
    /// Replace curves by their derivatives before FPCA.
    pub derivative: bool,
    pub rho: RhoMode,
    /// Compute fitted values, R², MSE and residual Moran's I.
    pub diagnostics: bool,
    /// Compute numerical-Hessian Wald standard errors.
    pub wald: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            pve: DEFAULT_PVE,
            grid_size: DEFAULT_GRID_SIZE,
            derivative: false,
            rho: RhoMode::Free,
            diagnostics: true,
            wald: true,
        }
    }
}

/// Goodness-of-fit quantities based on reduced-form fitted values.
#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    /// `(I - ρ̂W)⁻¹ Z δ̂`.
    pub fitted: Vec<f64>,
    pub r_squared: f64,
    pub mse_fitted: f64,
    /// Moran's I of the structural residuals; absent when undefined.
    pub residual_moran: Option<MoranReport>,
}

/// Wald inference from the inverse negative Hessian of the full likelihood.
#[derive(Debug, Clone, Serialize)]
pub struct WaldInference {
    /// `rho`, the design labels, then `sigma2`.
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl WaldInference {
    pub fn get(&self, label: &str) -> Option<(f64, f64, f64)> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some((self.std_errors[i], self.z_scores[i], self.p_values[i]))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub n: usize,
    pub rho_hat: f64,
    pub rho_mode: RhoMode,
    pub alpha_hat: f64,
    pub b_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub beta_scalar_hat: Vec<f64>,
    pub sigma2_hat: f64,
    /// `δ̂` in design-column order, with matching labels.
    pub delta_hat: Vec<f64>,
    pub labels: Vec<String>,
    pub n_components: usize,
    /// Evaluation grid of `beta_t_hat`.
    pub grid: Option<Vec<f64>>,
    pub beta_t_hat: Option<Vec<f64>>,
    pub beta_comp_hat: Option<Composition>,
    pub loglik: f64,
    pub residuals: Vec<f64>,
    pub diagnostics: Option<FitDiagnostics>,
    pub std_errors: Option<WaldInference>,
    #[serde(skip)]
    pub basis: Option<FpcaBasis>,
}

/// Runs the full estimation: smooth → FPCA → truncate → scores, ilr,
/// assemble `Z`, maximize over `ρ`, then reconstruct `β(t)` and `βᴰ`.
pub fn fit(inputs: &FitInputs, options: &FitOptions) -> Result<FitResult> {
    let n = inputs.y.len();
    if !(options.pve > 0.0 && options.pve <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "PVE must be in (0, 1], got {}",
            options.pve
        )));
    }

    // Functional block.
    let (score_block, basis) = match &inputs.functional {
        None => (DMatrix::zeros(n, 0), None),
        Some(input) => {
            let mut curves = match input {
                FunctionalInput::Curves(c) => c.clone(),
                FunctionalInput::Raw {
                    observations,
                    bandwidth,
                } => {
                    let h = bandwidth.unwrap_or_else(|| observations.default_bandwidth());
                    smooth_curves(observations, h, options.grid_size)?
                }
            };
            if options.derivative {
                curves = derivative_curves(&curves)?;
            }
            if curves.n_curves() != n {
                return Err(Error::DimensionMismatch {
                    context: "curve count",
                    expected: n,
                    found: curves.n_curves(),
                });
            }
            let basis = fpca(&curves)?;
            let m = pve_truncate(&basis.eigenvalues, options.pve)?;
            let a = scores(&curves, &basis, m)?;
            (a.scores, Some(basis))
        }
    };

    // Compositional block.
    let ilr_block = match &inputs.compositions {
        None => DMatrix::zeros(n, 0),
        Some(comps) => {
            if comps.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "composition count",
                    expected: n,
                    found: comps.len(),
                });
            }
            let d = comps.first().map(|c| c.dim()).unwrap_or(2);
            let mut block = DMatrix::zeros(n, d - 1);
            for (i, c) in comps.iter().enumerate() {
                if c.dim() != d {
                    return Err(Error::DimensionMismatch {
                        context: "composition parts",
                        expected: d,
                        found: c.dim(),
                    });
                }
                for (j, v) in ilr(c).0.into_iter().enumerate() {
                    block[(i, j)] = v;
                }
            }
            block
        }
    };

    let scalars = inputs
        .scalars
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(n, 0));
    let names = match &inputs.scalar_names {
        Some(names) => names.clone(),
        None => (1..=scalars.ncols()).map(|k| format!("beta{k}")).collect(),
    };
    let design = assemble_design_named(
        DVector::from_column_slice(&inputs.y),
        &score_block,
        &ilr_block,
        &scalars,
        &names,
        inputs.weights,
    )?;
    fit_design(&design, basis, options)
}

/// Estimation on an assembled design. `basis` is the FPCA basis behind the
/// functional block, if any.
pub fn fit_design(
    design: &MixedDesign,
    basis: Option<FpcaBasis>,
    options: &FitOptions,
) -> Result<FitResult> {
    let rho_hat = match options.rho {
        RhoMode::Free => optimize_rho(design)?,
        RhoMode::Fixed(r) => {
            check_rho(r)?;
            r
        }
    };
    let delta = delta_hat(rho_hat, design)?;
    let sigma2 = sigma2_hat(rho_hat, design)?;
    let loglik = full_loglik(rho_hat, &delta, sigma2, design)?;
    let residuals = design.residuals(rho_hat, &delta);

    let (m, r, _) = design.block_widths();
    let dv: Vec<f64> = delta.iter().copied().collect();
    let b_hat = dv[1..1 + m].to_vec();
    let theta_hat = dv[1 + m..1 + m + r].to_vec();
    let beta_scalar_hat = dv[1 + m + r..].to_vec();

    let (grid, beta_t_hat) = match &basis {
        Some(b) => (Some(b.grid.clone()), Some(b.reconstruct(&b_hat))),
        None => (None, None),
    };
    let beta_comp_hat = if r > 0 {
        Some(ilr_inv(&crate::geometry::IlrCoordinates(
            theta_hat.clone(),
        ))?)
    } else {
        None
    };

    let diagnostics = if options.diagnostics {
        Some(diagnose(design, rho_hat, &delta, &residuals)?)
    } else {
        None
    };

    let mut result = FitResult {
        n: design.n(),
        rho_hat,
        rho_mode: options.rho,
        alpha_hat: dv[0],
        b_hat,
        theta_hat,
        beta_scalar_hat,
        sigma2_hat: sigma2,
        delta_hat: dv,
        labels: design.labels.clone(),
        n_components: m,
        grid,
        beta_t_hat,
        beta_comp_hat,
        loglik,
        residuals: residuals.iter().copied().collect(),
        diagnostics,
        std_errors: None,
        basis,
    };
    if options.wald {
        result.std_errors = wald_std_errors(design, &result);
    }
    Ok(result)
}

fn diagnose(
    design: &MixedDesign,
    rho: f64,
    delta: &DVector<f64>,
    residuals: &DVector<f64>,
) -> Result<FitDiagnostics> {
    let n = design.n() as f64;
    let filter = SpatialFilter::new(rho, design.w)?;
    let fitted = filter.solve(&(&design.z * delta))?;
    let y = &design.y;
    let sse = (y - &fitted).norm_squared();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN };
    let resid: Vec<f64> = residuals.iter().copied().collect();
    Ok(FitDiagnostics {
        fitted: fitted.iter().copied().collect(),
        r_squared,
        mse_fitted: sse / n,
        residual_moran: morans_i(&resid, design.w).ok(),
    })
}

/// Numerical-Hessian Wald inference for `(ρ, δ, σ²)`. Returns `None` when
/// the Hessian is not negative definite at the estimate.
pub fn wald_std_errors(design: &MixedDesign, fit: &FitResult) -> Option<WaldInference> {
    let k = design.n_coefficients();
    let mut theta = Vec::with_capacity(k + 2);
    theta.push(fit.rho_hat);
    theta.extend_from_slice(&fit.delta_hat);
    theta.push(fit.sigma2_hat);
    let p = theta.len();

    let f = |t: &[f64]| -> f64 {
        let delta = DVector::from_column_slice(&t[1..=k]);
        full_loglik(t[0], &delta, t[k + 1], design).unwrap_or(f64::NAN)
    };
    let h: Vec<f64> = theta.iter().map(|v| 1e-5 * v.abs().max(1.0)).collect();
    let f0 = f(&theta);
    let mut hess = DMatrix::zeros(p, p);
    let mut t = theta.clone();
    for i in 0..p {
        t[i] = theta[i] + h[i];
        let fp = f(&t);
        t[i] = theta[i] - h[i];
        let fm = f(&t);
        t[i] = theta[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                t[i] = theta[i] + si * h[i];
                t[j] = theta[j] + sj * h[j];
                let v = f(&t);
                t[i] = theta[i];
                t[j] = theta[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let info = -hess;
    let chol = Cholesky::new(info)?;
    let cov = chol.inverse();
    let normal = Normal::standard();

    let mut labels = vec!["rho".to_string()];
    labels.extend(design.labels.iter().cloned());
    labels.push("sigma2".into());
    let std_errors: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let z_scores: Vec<f64> = theta.iter().zip(&std_errors).map(|(e, s)| e / s).collect();
    let p_values = z_scores.iter().map(|z| 2.0 * normal.sf(z.abs())).collect();
    Some(WaldInference {
        labels,
        estimates: theta,
        std_errors,
        z_scores,
        p_values,
    })
}
