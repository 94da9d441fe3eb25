//! Volumes of definable sets inside balls.
//!
//! A set is a finite disjoint union of cells: graphs of expressions over
//! lower cells, bands between two graphs, and explicit charts. The crate
//! estimates `vol_d S(r)`, the `d`-dimensional volume of `S` inside the open
//! ball of radius `r`, fits growth exponents, and checks the bound
//! `vol_d S(r) = O(r^d)` along with the Grassmannian machinery behind it.
//!
//! ```
//! use tamevol::{catalog, set_volume_in_ball, QuadratureConfig};
//!
//! let circle = catalog::lookup("circle")?;
//! let v = set_volume_in_ball(&circle, 1, 10.0, &QuadratureConfig::default())?;
//! assert!((v.value - 2.0 * std::f64::consts::PI).abs() < 1e-3);
//! # Ok::<(), tamevol::Error>(())
//! ```

pub mod catalog;
pub mod cells;
pub mod cli;
pub mod dual;
pub mod error;
pub mod expr;
pub mod grassmann;
pub mod growth;
pub mod hausdorff;
pub mod setfile;

pub use cells::{Cell, ChartPatch, DefinableSet, ParamRange};
pub use error::{Error, Result};
pub use expr::Expression;
pub use grassmann::{cover_grassmannian, Plane};
pub use growth::{
    check_growth_bound, fit_exponent, gauss_cover_decompose, growth_curve, stoll_classify, verify_projection_bound,
    GrowthClass, GrowthCurve, GrowthVerdict,
};
pub use hausdorff::{covering_measure, set_volume_in_ball, MeasureEstimate, QuadratureConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/cells.md")]
    mod cells {}
    #[doc = include_str!("../../../book/src/volumes.md")]
    mod volumes {}
    #[doc = include_str!("../../../book/src/growth.md")]
    mod growth {}
    #[doc = include_str!("../../../book/src/grassmannian.md")]
    mod grassmannian {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
