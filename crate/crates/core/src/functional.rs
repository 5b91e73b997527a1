//! Functional covariates: kernel smoothing of discretely observed curves,
//! quadrature on a shared grid, and functional principal component analysis.
//!
//! Curves live on `[0, 1]` and are stored as values on a shared, strictly
//! increasing evaluation grid. Integrals use the trapezoid rule on that grid,
//! so "L²-orthonormal" below always means orthonormal under the trapezoid
//! weights.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of evaluation points for smoothed curves.
pub const DEFAULT_GRID_SIZE: usize = 100;

/// Raw curve values observed at shared time points.
#[derive(Debug, Clone)]
pub struct RawCurveObservations {
    times: Vec<f64>,
    /// One row per subject, one column per observation time.
    values: DMatrix<f64>,
}

impl RawCurveObservations {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidInput("no observation times".into()));
        }
        check_increasing(&times, "observation times")?;
        if times[0] < 0.0 || times[times.len() - 1] > 1.0 {
            return Err(Error::InvalidInput(
                "observation times must lie in [0, 1]".into(),
            ));
        }
        if values.ncols() != times.len() {
            return Err(Error::DimensionMismatch {
                context: "raw curve columns",
                expected: times.len(),
                found: values.ncols(),
            });
        }
        if values.nrows() == 0 {
            return Err(Error::InvalidInput("no subjects".into()));
        }
        check_finite(values.as_slice(), "raw curve values")?;
        Ok(RawCurveObservations { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    /// Twice the median spacing between consecutive observation times.
    pub fn default_bandwidth(&self) -> f64 {
        let mut gaps: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() {
            return 1.0;
        }
        gaps.sort_by(|a, b| a.total_cmp(b));
        let mid = gaps.len() / 2;
        let median = if gaps.len().is_multiple_of(2) {
            0.5 * (gaps[mid - 1] + gaps[mid])
        } else {
            gaps[mid]
        };
        2.0 * median
    }
}

/// Curves evaluated on a shared grid spanning `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CurveSample {
    grid: Vec<f64>,
    /// `n × G`, one row per subject.
    values: DMatrix<f64>,
}

impl CurveSample {
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points, got {}",
                grid.len()
            )));
        }
        check_increasing(&grid, "grid")?;
        let tol = 1e-12;
        if grid[0].abs() > tol || (grid[grid.len() - 1] - 1.0).abs() > tol {
            return Err(Error::InvalidInput("grid must span [0, 1]".into()));
        }
        if values.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "curve sample columns",
                expected: grid.len(),
                found: values.ncols(),
            });
        }
        check_finite(values.as_slice(), "curve values")?;
        Ok(CurveSample { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    pub fn grid_size(&self) -> usize {
        self.grid.len()
    }

    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.values.nrows() as f64;
        self.values.row_sum().iter().map(|s| s / n).collect()
    }

    /// Rows reordered by `order[i]` (for permutation checks and id joins).
    pub fn select_rows(&self, order: &[usize]) -> CurveSample {
        CurveSample {
            grid: self.grid.clone(),
            values: self.values.select_rows(order),
        }
    }
}

/// Eigen-decomposition of the empirical covariance operator.
#[derive(Debug, Clone, Serialize)]
pub struct FpcaBasis {
    pub grid: Vec<f64>,
    pub mean_curve: Vec<f64>,
    /// Non-increasing, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// One eigenfunction per row, evaluated on `grid`.
    #[serde(skip)]
    pub eigenfunctions: DMatrix<f64>,
    pub quadrature_weights: Vec<f64>,
}

impl FpcaBasis {
    pub fn n_components(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    pub fn eigenfunction(&self, j: usize) -> Vec<f64> {
        self.eigenfunctions.row(j).iter().copied().collect()
    }

    /// `sum_j coefficients[j] * phi_j(t)` on the grid.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Vec<f64> {
        let g = self.grid.len();
        let mut out = vec![0.0; g];
        for (j, c) in coefficients.iter().enumerate() {
            for (o, phi) in out.iter_mut().zip(self.eigenfunctions.row(j).iter()) {
                *o += c * phi;
            }
        }
        out
    }
}

/// FPC scores `a_ij = <x_i - mean, phi_j>`, one row per subject.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub scores: DMatrix<f64>,
}

impl ScoreMatrix {
    pub fn n_components(&self) -> usize {
        self.scores.ncols()
    }
}

fn check_increasing(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|t| !t.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "{what} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} must be finite")));
    }
    Ok(())
}

/// `size` equally spaced points from 0 to 1 inclusive.
pub fn uniform_grid(size: usize) -> Vec<f64> {
    let last = (size - 1) as f64;
    (0..size).map(|i| i as f64 / last).collect()
}

/// Trapezoid-rule weights for a (possibly non-uniform) grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let g = grid.len();
    if g < 2 {
        return vec![1.0; g];
    }
    (0..g)
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
            let right = if i + 1 < g {
                grid[i + 1] - grid[i]
            } else {
                0.0
            };
            0.5 * (left + right)
        })
        .collect()
}

/// Epanechnikov kernel `0.75 (1 - u²)` on `|u| <= 1`.
#[inline]
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

fn nadaraya_watson(times: &[f64], values: &[f64], at: f64, bandwidth: f64) -> f64 {
    let estimate = |h: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for (t, y) in times.iter().zip(values) {
            let k = epanechnikov((at - t) / h);
            num += k * y;
            den += k;
        }
        (den > 0.0).then(|| num / den)
    };
    estimate(bandwidth).unwrap_or_else(|| {
        // Empty window: widen to just past the nearest observation.
        let nearest = times
            .iter()
            .map(|t| (at - t).abs())
            .fold(f64::INFINITY, f64::min);
        estimate(nearest * (1.0 + 1e-6) + f64::MIN_POSITIVE)
            .expect("window reaches the nearest observation")
    })
}

/// Nadaraya–Watson smoothing onto `grid_size` equally spaced points.
pub fn smooth_curves(
    raw: &RawCurveObservations,
    bandwidth: f64,
    grid_size: usize,
) -> Result<CurveSample> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if grid_size < 2 {
        return Err(Error::InvalidInput("grid_size must be at least 2".into()));
    }
    if raw.times.len() < 2 {
        return Err(Error::InvalidInput(
            "smoothing needs at least 2 observation points".into(),
        ));
    }
    let grid = uniform_grid(grid_size);
    let rows: Vec<Vec<f64>> = (0..raw.n_subjects())
        .into_par_iter()
        .map(|i| {
            let y: Vec<f64> = raw.values.row(i).iter().copied().collect();
            grid.iter()
                .map(|&g| nadaraya_watson(&raw.times, &y, g, bandwidth))
                .collect()
        })
        .collect();
    let values = DMatrix::from_fn(rows.len(), grid_size, |i, j| rows[i][j]);
    CurveSample::new(grid, values)
}

/// Finite-difference derivative: central inside, one-sided at the ends.
pub fn derivative_curves(sample: &CurveSample) -> Result<CurveSample> {
    let g = sample.grid_size();
    if g < 3 {
        return Err(Error::InvalidInput(format!(
            "derivatives need at least 3 grid points, got {g}"
        )));
    }
    let t = &sample.grid;
    let x = &sample.values;
    let d = DMatrix::from_fn(x.nrows(), g, |i, k| {
        let (lo, hi) = match k {
            0 => (0, 1),
            k if k == g - 1 => (g - 2, g - 1),
            k => (k - 1, k + 1),
        };
        (x[(i, hi)] - x[(i, lo)]) / (t[hi] - t[lo])
    });
    CurveSample::new(t.clone(), d)
}

/// Trapezoid approximation of `∫ f g` given precomputed weights.
pub fn l2_inner(f: &[f64], g: &[f64], weights: &[f64]) -> Result<f64> {
    if f.len() != g.len() || f.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "l2_inner",
            expected: weights.len(),
            found: if f.len() != weights.len() {
                f.len()
            } else {
                g.len()
            },
        });
    }
    Ok(f.iter()
        .zip(g)
        .zip(weights)
        .map(|((a, b), w)| a * b * w)
        .sum())
}

fn centered(sample: &CurveSample) -> (Vec<f64>, DMatrix<f64>) {
    let mean = sample.mean_curve();
    let mut xc = sample.values.clone();
    for mut row in xc.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    (mean, xc)
}

/// `K(s,t) = (1/n) sum_i x_i(s) x_i(t) - xbar(s) xbar(t)` on the grid.
pub fn empirical_covariance(sample: &CurveSample) -> Result<DMatrix<f64>> {
    let n = sample.n_curves();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "covariance needs at least 2 curves, got {n}"
        )));
    }
    let (_, xc) = centered(sample);
    let mut k = xc.tr_mul(&xc) / n as f64;
    // Exact symmetry regardless of summation order.
    let g = k.nrows();
    for i in 0..g {
        for j in 0..i {
            let avg = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = avg;
            k[(j, i)] = avg;
        }
    }
    Ok(k)
}

/// Functional PCA by eigendecomposition of `D^½ K D^½`, `D` the trapezoid
/// weights. Every eigenpair is kept; eigenvalues are clamped at zero.
pub fn fpca(sample: &CurveSample) -> Result<FpcaBasis> {
    if sample.grid_size() < 2 {
        return Err(Error::InvalidInput("degenerate grid".into()));
    }
    let cov = empirical_covariance(sample)?;
    let weights = trapezoid_weights(&sample.grid);
    if weights.iter().any(|w| *w <= 0.0) {
        return Err(Error::InvalidInput("degenerate grid".into()));
    }
    let root: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let g = weights.len();
    let m = DMatrix::from_fn(g, g, |s, t| root[s] * cov[(s, t)] * root[t]);
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
    let mut eigenfunctions = DMatrix::zeros(g, g);
    for (row, &j) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(j);
        let mut phi: Vec<f64> = v.iter().zip(&root).map(|(v, r)| v / r).collect();
        let peak = phi
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if peak < 0.0 {
            phi.iter_mut().for_each(|p| *p = -*p);
        }
        for (t, p) in phi.into_iter().enumerate() {
            eigenfunctions[(row, t)] = p;
        }
    }

    Ok(FpcaBasis {
        grid: sample.grid.clone(),
        mean_curve: sample.mean_curve(),
        eigenvalues,
        eigenfunctions,
        quadrature_weights: weights,
    })
}

/// Smallest `l` whose cumulative eigenvalue share reaches `z`.
pub fn pve_truncate(eigenvalues: &[f64], z: f64) -> Result<usize> {
    if !(z > 0.0 && z <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "PVE must be in (0, 1], got {z}"
        )));
    }
    if eigenvalues.iter().any(|k| *k < 0.0 || !k.is_finite()) {
        return Err(Error::InvalidInput(
            "eigenvalues must be nonnegative".into(),
        ));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("all eigenvalues are zero".into()));
    }
    let target = z * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (l, k) in eigenvalues.iter().enumerate() {
        cum += k;
        if cum >= target {
            return Ok(l + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Scores of `sample` on the first `m` eigenfunctions, centered at the
/// basis mean curve.
pub fn scores(sample: &CurveSample, basis: &FpcaBasis, m: usize) -> Result<ScoreMatrix> {
    if m > basis.n_components() {
        return Err(Error::InvalidInput(format!(
            "requested {m} components, basis has {}",
            basis.n_components()
        )));
    }
    if sample.grid_size() != basis.grid.len() {
        return Err(Error::DimensionMismatch {
            context: "score grid",
            expected: basis.grid.len(),
            found: sample.grid_size(),
        });
    }
    let n = sample.n_curves();
    let w = &basis.quadrature_weights;
    let mut xc = sample.values.clone();
    for mut row in xc.row_iter_mut() {
        for (t, v) in row.iter_mut().enumerate() {
            *v = (*v - basis.mean_curve[t]) * w[t];
        }
    }
    let phi = basis.eigenfunctions.rows(0, m);
    let scores = if m == 0 {
        DMatrix::zeros(n, 0)
    } else {
        &xc * phi.transpose()
    };
    Ok(ScoreMatrix { scores })
}

/// Column means of a score matrix (diagnostic helper).
pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}
