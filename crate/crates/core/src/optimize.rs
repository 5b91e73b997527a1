//! Bounded one-dimensional maximization: coarse grid, then golden-section
//! refinement around the best grid point.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum of `f` on `[lo, hi]`, stopping once
/// the bracket is narrower than `tol`. Returns `(argmax, max)`.
pub fn golden_section_max<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        // NaN compares false, so a NaN at x1 moves the bracket away from it.
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes `f` over `[lo, hi]` with a `points`-point grid followed by
/// golden-section refinement to width `tol` in the bracket around the best
/// grid point. Non-finite objective values are skipped.
pub fn grid_then_golden<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    points: usize,
    tol: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    assert!(points >= 3 && hi > lo);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..points {
        let v = f(lo + i as f64 * step);
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (i, grid_max) = best.ok_or_else(|| {
        Error::Numerical("objective is non-finite across the whole search grid".into())
    })?;
    let a = lo + i.saturating_sub(1) as f64 * step;
    let b = lo + (i + 1).min(points - 1) as f64 * step;
    let (x, v) = golden_section_max(
        |x| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        },
        a,
        b,
        tol,
    );
    if v >= grid_max {
        Ok((x, v))
    } else {
        Ok((lo + i as f64 * step, grid_max))
    }
}
