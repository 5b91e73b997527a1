//! Spatial weight matrices and the quantities built from them: the
//! log-determinant `ln|I - ρW|` that enters the likelihood, the spatial
//! filter `(I - ρW)⁻¹`, and Moran's I.

use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector, Schur, LU};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-10;
/// Determinants smaller than this in magnitude count as singular.
const LOG_DET_FLOOR: f64 = -690.7755278982137; // ln(1e-300)

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Dense `n × n` spatial weights: zero diagonal, nonnegative entries, rows
/// summing to one (or all zero for an isolated unit).
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    weights: DMatrix<f64>,
    spectrum: OnceLock<Option<Vec<Complex<f64>>>>,
}

impl PartialEq for WeightMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
    }
}

impl WeightMatrix {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 || weights.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "weight matrix must be square and non-empty, got {}×{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "weight matrix diagonal must be zero (unit {i})"
                )));
            }
            let row = weights.row(i);
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "weights must be finite and nonnegative (row {i})"
                )));
            }
            let sum = row.sum();
            if sum != 0.0 && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "row {i} sums to {sum}; rows must sum to 1"
                )));
            }
        }
        Ok(WeightMatrix {
            weights,
            spectrum: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Indices of units with no neighbours.
    pub fn isolated_units(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.weights.row(i).iter().all(|w| *w == 0.0))
            .collect()
    }

    /// Spatial lag `W v`.
    pub fn lag(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.weights * v
    }

    /// The same matrix with units relabelled: new unit `i` is old `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<WeightMatrix> {
        let n = self.n();
        if order.len() != n {
            return Err(Error::DimensionMismatch {
                context: "permutation",
                expected: n,
                found: order.len(),
            });
        }
        WeightMatrix::new(DMatrix::from_fn(n, n, |i, j| {
            self.weights[(order[i], order[j])]
        }))
    }

    /// Nonzero entries as `(i, j, w)` triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// `ln|I - ρW|` using the cached eigenvalues of `W` when they are
    /// available and verified, otherwise a fresh LU factorization.
    ///
    /// The first call computes the spectrum (`O(n³)`); subsequent calls
    /// cost `O(n)`.
    pub fn log_det(&self, rho: f64) -> Result<f64> {
        match self.spectrum.get_or_init(|| self.verified_spectrum()) {
            Some(eigs) => log_det_from_spectrum(rho, eigs),
            None => log_det_system(rho, self),
        }
    }

    /// `d/dρ ln|I - ρW| = -tr(W (I - ρW)⁻¹)`.
    pub fn log_det_derivative(&self, rho: f64) -> Result<f64> {
        match self.spectrum.get_or_init(|| self.verified_spectrum()) {
            Some(eigs) => Ok(-eigs
                .iter()
                .map(|l| (l / (Complex::new(1.0, 0.0) - l * rho)).re)
                .sum::<f64>()),
            None => {
                let n = self.n();
                let lu = LU::new(DMatrix::identity(n, n) - &self.weights * rho);
                let inv_w = lu
                    .solve(&self.weights)
                    .ok_or_else(|| Error::Singular(format!("I - ρW is singular at ρ = {rho}")))?;
                Ok(-inv_w.trace())
            }
        }
    }

    fn verified_spectrum(&self) -> Option<Vec<Complex<f64>>> {
        let n = self.n();
        let schur = Schur::try_new(self.weights.clone(), 1e-14, 1000 * n.max(10))?;
        let eigs: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
        for rho in [-0.9, 0.5, 0.95] {
            let fast = log_det_from_spectrum(rho, &eigs).ok()?;
            let exact = log_det_system(rho, self).ok()?;
            if (fast - exact).abs() > 1e-9 * exact.abs().max(1.0) {
                return None;
            }
        }
        Some(eigs)
    }
}

fn log_det_from_spectrum(rho: f64, eigs: &[Complex<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut negative = 0usize;
    for l in eigs {
        let re = 1.0 - rho * l.re;
        let im = rho * l.im;
        if l.im.abs() <= 1e-12 && re < 0.0 {
            negative += 1;
        }
        total += 0.5 * (re * re + im * im).ln();
    }
    if !(total > LOG_DET_FLOOR) {
        return Err(Error::Singular(format!("I - ρW is singular at ρ = {rho}")));
    }
    if negative % 2 == 1 {
        return Err(Error::Numerical(format!(
            "det(I - ρW) is negative at ρ = {rho}"
        )));
    }
    Ok(total)
}

/// Binary rook contiguity on an `rows × cols` lattice (row-major labels),
/// row-normalized.
pub fn rook_lattice(rows: usize, cols: usize) -> Result<WeightMatrix> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(Error::InvalidInput(format!(
            "rook lattice needs at least 2 cells, got {rows}×{cols}"
        )));
    }
    let n = rows * cols;
    let mut adj = DMatrix::zeros(n, n);
    for r in 0..rows {
        for c in 0..cols {
            let u = r * cols + c;
            if r + 1 < rows {
                adj[(u, u + cols)] = 1.0;
                adj[(u + cols, u)] = 1.0;
            }
            if c + 1 < cols {
                adj[(u, u + 1)] = 1.0;
                adj[(u + 1, u)] = 1.0;
            }
        }
    }
    row_normalize(adj)
}

/// How pairwise distances between locations are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    /// Haversine distance in kilometres between `(longitude, latitude)`
    /// pairs given in degrees.
    GreatCircle,
}

impl DistanceMetric {
    pub fn distance(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        match self {
            DistanceMetric::Euclidean => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
            DistanceMetric::GreatCircle => {
                let (lon1, lat1) = (a[0].to_radians(), a[1].to_radians());
                let (lon2, lat2) = (b[0].to_radians(), b[1].to_radians());
                let h = ((lat2 - lat1) / 2.0).sin().powi(2)
                    + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
                2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
            }
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "greatcircle" | "great-circle" | "haversine" => Ok(DistanceMetric::GreatCircle),
            other => Err(Error::InvalidInput(format!("unknown metric '{other}'"))),
        }
    }
}

/// Inverse-distance weights over the `k` nearest units within `cutoff`,
/// row-normalized. Ties at equal distance go to the lower index.
pub fn knn_inverse_distance(
    locations: &[[f64; 2]],
    metric: DistanceMetric,
    k: usize,
    cutoff: f64,
) -> Result<WeightMatrix> {
    let n = locations.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 locations".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidInput(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    let mut raw = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        for j in (0..n).filter(|&j| j != i) {
            let d = metric.distance(locations[i], locations[j]);
            if !(d > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "units {i} and {j} are at zero distance"
                )));
            }
            cand.push((d, j));
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let kept: Vec<_> = cand
            .into_iter()
            .take(k)
            .filter(|(d, _)| *d <= cutoff)
            .collect();
        if kept.is_empty() {
            return Err(Error::IsolatedUnit { unit: i });
        }
        for (d, j) in kept {
            raw[(i, j)] = 1.0 / d;
        }
    }
    row_normalize(raw)
}

/// Divides every row by its sum.
pub fn row_normalize(mut raw: DMatrix<f64>) -> Result<WeightMatrix> {
    let n = raw.nrows();
    if raw.ncols() != n {
        return Err(Error::InvalidInput("weight matrix must be square".into()));
    }
    for i in 0..n {
        if raw[(i, i)] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "diagonal entry {i} must be zero"
            )));
        }
        let mut row = raw.row_mut(i);
        if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "row {i} has negative or non-finite weights"
            )));
        }
        let sum = row.sum();
        if sum == 0.0 {
            return Err(Error::IsolatedUnit { unit: i });
        }
        row /= sum;
    }
    WeightMatrix::new(raw)
}

/// `ln|det(I - ρW)|` by pivoted LU. Fails when the determinant is negative
/// or below `1e-300` in magnitude.
pub fn log_det_system(rho: f64, w: &WeightMatrix) -> Result<f64> {
    let n = w.n();
    let a = DMatrix::identity(n, n) - w.matrix() * rho;
    let lu = LU::new(a);
    let u = lu.u();
    let mut log = 0.0;
    let mut sign = if lu.p().determinant::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    for i in 0..n {
        let d = u[(i, i)];
        if d == 0.0 {
            return Err(Error::Singular(format!("I - ρW is singular at ρ = {rho}")));
        }
        if d < 0.0 {
            sign = -sign;
        }
        log += d.abs().ln();
    }
    if !(log > LOG_DET_FLOOR) {
        return Err(Error::Singular(format!("I - ρW is singular at ρ = {rho}")));
    }
    if sign < 0.0 {
        return Err(Error::Numerical(format!(
            "det(I - ρW) is negative at ρ = {rho}"
        )));
    }
    Ok(log)
}

/// A factorized `I - ρW`, for repeated solves against the same system.
#[derive(Debug, Clone)]
pub struct SpatialFilter {
    rho: f64,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl SpatialFilter {
    pub fn new(rho: f64, w: &WeightMatrix) -> Result<Self> {
        let n = w.n();
        let lu = LU::new(DMatrix::identity(n, n) - w.matrix() * rho);
        if !lu.is_invertible() {
            return Err(Error::Singular(format!("I - ρW is singular at ρ = {rho}")));
        }
        Ok(SpatialFilter { rho, lu })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Solves `(I - ρW) y = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular(format!("I - ρW is singular at ρ = {}", self.rho)))
    }
}

/// Moran's I with its normal-approximation moments and two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoranReport {
    pub statistic: f64,
    pub expectation: f64,
    pub variance: f64,
    pub z_score: f64,
    pub p_value: f64,
}

fn centered_values(values: &[f64]) -> Result<DVector<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let z = DVector::from_iterator(values.len(), values.iter().map(|v| v - mean));
    if z.iter().all(|v| v.abs() <= 1e-14 * mean.abs().max(1.0)) {
        return Err(Error::InvalidInput(
            "Moran's I is undefined for constant values".into(),
        ));
    }
    Ok(z)
}

/// The bare statistic `(n / S0) zᵀWz / zᵀz`; defined for `n >= 2`.
pub fn moran_statistic(values: &[f64], w: &WeightMatrix) -> Result<f64> {
    let n = values.len();
    if n != w.n() {
        return Err(Error::DimensionMismatch {
            context: "Moran's I values",
            expected: w.n(),
            found: n,
        });
    }
    if n < 2 {
        return Err(Error::InvalidInput(
            "Moran's I needs at least 2 values".into(),
        ));
    }
    let s0 = w.matrix().sum();
    if !(s0 > 0.0) {
        return Err(Error::InvalidInput("weight matrix has no links".into()));
    }
    let z = centered_values(values)?;
    let num = z.dot(&(w.matrix() * &z));
    Ok(n as f64 / s0 * num / z.dot(&z))
}

/// Moran's I with moments under the normality assumption.
pub fn morans_i(values: &[f64], w: &WeightMatrix) -> Result<MoranReport> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "Moran's I inference needs at least 3 values, got {n}"
        )));
    }
    let statistic = moran_statistic(values, w)?;
    let m = w.matrix();
    let nf = n as f64;
    let s0 = m.sum();
    let mut s1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = m[(i, j)] + m[(j, i)];
            s1 += s * s;
        }
    }
    s1 *= 0.5;
    let s2: f64 = (0..n)
        .map(|i| {
            let t = m.row(i).sum() + m.column(i).sum();
            t * t
        })
        .sum();
    let expectation = -1.0 / (nf - 1.0);
    let variance = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0)
        - expectation * expectation;
    if !(variance > 0.0) {
        return Err(Error::InvalidInput(
            "weight matrix is degenerate for Moran's I inference".into(),
        ));
    }
    let z_score = (statistic - expectation) / variance.sqrt();
    let normal = Normal::standard();
    let p_value = 2.0 * normal.sf(z_score.abs());
    Ok(MoranReport {
        statistic,
        expectation,
        variance,
        z_score,
        p_value,
    })
}
