//! Aitchison geometry on the simplex.
//!
//! A [`Composition`] is a vector of strictly positive parts summing to one.
//! The simplex carries a Euclidean structure in which perturbation plays the
//! role of addition, powering the role of scalar multiplication, and the
//! isometric log-ratio transform ([`ilr`]) maps it onto ordinary
//! `(d - 1)`-dimensional coordinates with the inner product preserved.
//!
//! The ilr basis used throughout is the sequential binary partition where
//! coordinate `i` contrasts part `i` against the geometric mean of the parts
//! after it:
//!
//! ```text
//! xi_i = sqrt((d - i) / (d - i + 1)) * ln(x_i / gmean(x_{i+1}, ..., x_d))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum-to-one constraint.
pub const SUM_TOLERANCE: f64 = 1e-10;

/// Parts below this after closure are rejected; zeros have no log-ratio.
pub const MIN_PART: f64 = 1e-300;

/// A `d`-part composition: strictly positive parts summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Composition {
    parts: Vec<f64>,
}

impl Composition {
    /// Wraps parts that already satisfy the simplex constraints.
    pub fn new(parts: Vec<f64>) -> Result<Self> {
        validate_parts(&parts)?;
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidComposition(format!(
                "parts sum to {sum}, not 1"
            )));
        }
        Ok(Composition { parts })
    }

    /// The neutral element `(1/d, ..., 1/d)`.
    pub fn neutral(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidComposition(format!(
                "need at least 2 parts, got {d}"
            )));
        }
        Ok(Composition {
            parts: vec![1.0 / d as f64; d],
        })
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn dim(&self) -> usize {
        self.parts.len()
    }

    pub fn into_parts(self) -> Vec<f64> {
        self.parts
    }

    /// Centered log-ratio coefficients `ln(x_i / gmean(x))`.
    pub(crate) fn clr(&self) -> Vec<f64> {
        let logs: Vec<f64> = self.parts.iter().map(|p| p.ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        logs.into_iter().map(|l| l - mean).collect()
    }
}

impl TryFrom<Vec<f64>> for Composition {
    type Error = Error;

    fn try_from(parts: Vec<f64>) -> Result<Self> {
        Composition::new(parts)
    }
}

impl From<Composition> for Vec<f64> {
    fn from(c: Composition) -> Self {
        c.parts
    }
}

/// Isometric log-ratio coordinates of a composition (length `d - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IlrCoordinates(pub Vec<f64>);

impl IlrCoordinates {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &IlrCoordinates) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

fn validate_parts(parts: &[f64]) -> Result<()> {
    if parts.len() < 2 {
        return Err(Error::InvalidComposition(format!(
            "need at least 2 parts, got {}",
            parts.len()
        )));
    }
    if let Some((i, p)) = parts
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.is_finite() && **p >= MIN_PART))
    {
        return Err(Error::InvalidComposition(format!(
            "part {i} is {p}; all parts must be strictly positive"
        )));
    }
    Ok(())
}

fn check_same_dim(x: &Composition, y: &Composition) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            context: "composition",
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// Rescales positive raw values onto the simplex.
pub fn closure(raw: &[f64]) -> Result<Composition> {
    if raw.len() < 2 {
        return Err(Error::InvalidComposition(format!(
            "need at least 2 parts, got {}",
            raw.len()
        )));
    }
    if let Some((i, v)) = raw
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::InvalidComposition(format!(
            "raw value {i} is {v}; closure needs positive values"
        )));
    }
    let total: f64 = raw.iter().sum();
    let parts: Vec<f64> = raw.iter().map(|v| v / total).collect();
    validate_parts(&parts)?;
    Ok(Composition { parts })
}

/// Geometric mean `(prod x_i)^(1/d)`, evaluated in log space.
pub fn geometric_mean(x: &Composition) -> f64 {
    let d = x.dim() as f64;
    (x.parts.iter().map(|p| p.ln()).sum::<f64>() / d).exp()
}

/// Aitchison inner product `sum_i ln(x_i/g(x)) ln(y_i/g(y))`.
pub fn aitchison_inner(x: &Composition, y: &Composition) -> Result<f64> {
    check_same_dim(x, y)?;
    Ok(x.clr().iter().zip(y.clr()).map(|(a, b)| a * b).sum())
}

pub fn aitchison_norm(x: &Composition) -> f64 {
    x.clr().iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Perturbation `x ⊕ y`: closure of the componentwise product.
pub fn perturb(x: &Composition, y: &Composition) -> Result<Composition> {
    check_same_dim(x, y)?;
    let raw: Vec<f64> = x.parts.iter().zip(&y.parts).map(|(a, b)| a * b).collect();
    closure(&raw)
}

/// Powering `a ⊙ x`: closure of `x_i^a`.
///
/// Computed through the clr coefficients so large exponents do not
/// underflow individual parts before renormalization.
pub fn power(x: &Composition, a: f64) -> Result<Composition> {
    let scaled: Vec<f64> = x.clr().into_iter().map(|c| a * c).collect();
    exp_close(&scaled)
}

/// Stable `closure(exp(v))`.
fn exp_close(v: &[f64]) -> Result<Composition> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidComposition(
            "non-finite log-ratio coordinates".into(),
        ));
    }
    let raw: Vec<f64> = v.iter().map(|c| (c - max).exp()).collect();
    closure(&raw)
}

/// Orthonormal sequential-binary-partition basis in clr space.
///
/// Row `i` (0-based) holds the clr representation of basis element `e_{i+1}`.
fn sbp_basis(d: usize) -> Vec<Vec<f64>> {
    (1..d)
        .map(|i| {
            let rest = (d - i) as f64;
            let head = (rest / (rest + 1.0)).sqrt();
            let tail = -1.0 / (rest * (rest + 1.0)).sqrt();
            (1..=d)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => 0.0,
                    std::cmp::Ordering::Equal => head,
                    std::cmp::Ordering::Greater => tail,
                })
                .collect()
        })
        .collect()
}

/// Isometric log-ratio transform.
pub fn ilr(x: &Composition) -> IlrCoordinates {
    let d = x.dim();
    let logs: Vec<f64> = x.parts.iter().map(|p| p.ln()).collect();
    let coords = (0..d - 1)
        .map(|i| {
            let rest = (d - i - 1) as f64;
            let tail_mean = logs[i + 1..].iter().sum::<f64>() / rest;
            (rest / (rest + 1.0)).sqrt() * (logs[i] - tail_mean)
        })
        .collect();
    IlrCoordinates(coords)
}

/// Inverse ilr: rebuild clr coefficients from the basis, exponentiate, close.
pub fn ilr_inv(xi: &IlrCoordinates) -> Result<Composition> {
    if xi.is_empty() {
        return Err(Error::InvalidInput(
            "ilr coordinates must have at least one entry".into(),
        ));
    }
    if xi.0.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("ilr coordinates must be finite".into()));
    }
    let d = xi.len() + 1;
    let mut clr = vec![0.0; d];
    for (coef, basis) in xi.0.iter().zip(sbp_basis(d)) {
        for (c, b) in clr.iter_mut().zip(basis) {
            *c += coef * b;
        }
    }
    exp_close(&clr)
}
