//! Spatial autoregressive regression with functional, compositional and
//! scalar covariates.
//!
//! The response of spatial unit `i` depends on its neighbours' responses
//! through a row-normalized weight matrix `W`, on a curve `X_i(t)` through a
//! coefficient function `β(t)`, on a composition `x_i^D` through an
//! Aitchison-geometry coefficient `βᴰ`, and on ordinary scalars:
//!
//! ```text
//! y = ρ W y + α + ∫ X(t) β(t) dt + ⟨xᴰ, βᴰ⟩_A + x β + ε
//! ```
//!
//! Curves are reduced to principal component scores, compositions to
//! isometric log-ratio coordinates, and the resulting linear SAR model is
//! fitted by profile maximum likelihood over `ρ`.
//!
//! ```
//! use mixsar::geometry::{ilr, ilr_inv, Composition};
//!
//! let x = Composition::new(vec![1.0 / 6.0, 1.0 / 3.0, 0.5]).unwrap();
//! let back = ilr_inv(&ilr(&x)).unwrap();
//! assert!((back.parts()[2] - 0.5).abs() < 1e-12);
//! ```

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functional;
pub mod geometry;
pub mod io;
pub mod model;
pub mod optimize;
pub mod report;
pub mod simulation;
pub mod spatial;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/compositions.md")]
    mod compositions {}
    #[doc = include_str!("../../../book/src/functional.md")]
    mod functional {}
    #[doc = include_str!("../../../book/src/spatial.md")]
    mod spatial {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
