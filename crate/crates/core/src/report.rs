//! Text, CSV and SVG renderings of a fit.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::FitResult;
use crate::spatial::WeightMatrix;

/// `t,beta_hat` rows; `None` when the fit had no functional covariate.
pub fn beta_t_csv(fit: &FitResult) -> Option<String> {
    let (grid, beta) = (fit.grid.as_ref()?, fit.beta_t_hat.as_ref()?);
    let mut out = String::from("t,beta_hat\n");
    for (t, b) in grid.iter().zip(beta) {
        let _ = writeln!(out, "{t},{b}");
    }
    Some(out)
}

/// `id,residual,lagged_residual[,fitted]` rows.
pub fn residuals_csv(ids: &[String], fit: &FitResult, w: &WeightMatrix) -> Result<String> {
    if ids.len() != fit.residuals.len() {
        return Err(Error::DimensionMismatch {
            context: "residual ids",
            expected: fit.residuals.len(),
            found: ids.len(),
        });
    }
    let lagged = w.lag(&DVector::from_column_slice(&fit.residuals));
    let fitted = fit.diagnostics.as_ref().map(|d| &d.fitted);
    let mut out = String::from("id,residual,lagged_residual");
    out.push_str(if fitted.is_some() { ",fitted\n" } else { "\n" });
    for (i, id) in ids.iter().enumerate() {
        let _ = write!(out, "{id},{},{}", fit.residuals[i], lagged[i]);
        match fitted {
            Some(f) => {
                let _ = writeln!(out, ",{}", f[i]);
            }
            None => out.push('\n'),
        }
    }
    Ok(out)
}

/// One-screen human summary.
pub fn fit_summary(fit: &FitResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "n = {}, functional components m = {}",
        fit.n, fit.n_components
    );
    let _ = writeln!(out, "rho_hat = {:.6}", fit.rho_hat);
    let _ = writeln!(out, "sigma2_hat = {:.6}", fit.sigma2_hat);
    let _ = writeln!(out, "log-likelihood = {:.6}", fit.loglik);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<14} {:>12} {:>12} {:>10} {:>10}",
        "coefficient", "estimate", "std.err", "z", "p"
    );
    let mut rows: Vec<(String, f64)> = vec![("rho".into(), fit.rho_hat)];
    rows.extend(
        fit.labels
            .iter()
            .cloned()
            .zip(fit.delta_hat.iter().copied()),
    );
    rows.push(("sigma2".into(), fit.sigma2_hat));
    for (label, est) in rows {
        let inference = fit.std_errors.as_ref().and_then(|w| w.get(&label));
        match inference {
            Some((se, z, p)) => {
                let _ = writeln!(
                    out,
                    "{label:<14} {est:>12.6} {se:>12.6} {z:>10.3} {p:>10.4}"
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{label:<14} {est:>12.6} {:>12} {:>10} {:>10}",
                    "-", "-", "-"
                );
            }
        }
    }
    if let Some(comp) = &fit.beta_comp_hat {
        let parts: Vec<String> = comp.parts().iter().map(|p| format!("{p:.4}")).collect();
        let _ = writeln!(out, "\nbeta^D_hat = ({})", parts.join(", "));
    }
    if let Some(d) = &fit.diagnostics {
        let _ = writeln!(out, "\nR^2 = {:.4}", d.r_squared);
        let _ = writeln!(out, "MSE = {:.6}", d.mse_fitted);
        match &d.residual_moran {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "residual Moran's I = {:.4} (z = {:.3}, p = {:.4})",
                    m.statistic, m.z_score, m.p_value
                );
            }
            None => {
                let _ = writeln!(out, "residual Moran's I undefined");
            }
        }
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: &[f64], ys: &[f64]) -> Frame {
        let range = |v: &[f64]| {
            let lo = v
                .iter()
                .copied()
                .filter(|a| a.is_finite())
                .fold(f64::INFINITY, f64::min);
            let hi = v
                .iter()
                .copied()
                .filter(|a| a.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        Frame {
            x: range(xs),
            y: range(ys),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<polyline points="{l},{t} {l},{b} {r},{b}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let s = k as f64 / 4.0;
            let xv = self.x.0 + s * (self.x.1 - self.x.0);
            let yv = self.y.0 + s * (self.y.1 - self.y.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r#"<line x1="{xp:.1}" y1="{b}" x2="{xp:.1}" y2="{:.1}" stroke="black"/><text x="{xp:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                b + 5.0,
                b + 20.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{yp:.1}" x2="{l}" y2="{yp:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                l - 5.0,
                l - 8.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            t - 20.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 15.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel)
        );
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Line plot of `ys` against `xs`.
pub fn svg_line(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64]) -> String {
    let frame = Frame::new(xs, ys);
    let mut out = String::new();
    frame.axes(&mut out, title, xlabel, ylabel);
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        points.join(" ")
    );
    out.push_str("</svg>\n");
    out
}

/// Scatter plot of `(xs, ys)`.
pub fn svg_scatter(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64]) -> String {
    let frame = Frame::new(xs, ys);
    let mut out = String::new();
    frame.axes(&mut out, title, xlabel, ylabel);
    for (x, y) in xs.iter().zip(ys) {
        if x.is_finite() && y.is_finite() {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue" fill-opacity="0.7"/>"#,
                frame.px(*x),
                frame.py(*y)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// `β̂(t)` line plot, when the fit has a functional covariate.
pub fn beta_t_svg(fit: &FitResult) -> Option<String> {
    Some(svg_line(
        "Estimated coefficient function",
        "t",
        "beta(t)",
        fit.grid.as_ref()?,
        fit.beta_t_hat.as_ref()?,
    ))
}

/// Residual against spatially lagged residual.
pub fn residual_lag_svg(fit: &FitResult, w: &WeightMatrix) -> String {
    let lagged = w.lag(&DVector::from_column_slice(&fit.residuals));
    svg_scatter(
        "Residual vs spatially lagged residual",
        "residual",
        "W residual",
        &fit.residuals,
        lagged.as_slice(),
    )
}
