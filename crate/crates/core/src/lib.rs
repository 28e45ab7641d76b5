//! Coxian phase-type distributions.
//!
//! * [`model`]: parameter and generator types, moments, density, survival,
//!   Laplace transform and per-phase summaries.
//! * [`linalg`]: bidiagonal solves and matrix exponentials.
//! * [`sampler`]: exact simulation of absorption times.
//! * [`fitter`]: multi-start maximum likelihood and AIC order selection.
//! * [`equivalence`]: similarity transforms between two representations.
//! * [`enumerator`]: every equivalent representation of a given generator.
//! * [`cli`]: the `coxian` command-line front end.

// `!(x <= tol)` is deliberate throughout: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod enumerator;
pub mod equivalence;
pub mod error;
pub mod fitter;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod sampler;

pub use enumerator::{enumerate_representations, EnumerateOptions, RepresentationSet};
pub use equivalence::{check_equivalent, EquivalenceReport, TransformMatrix};
pub use error::{CoxianError, Result};
pub use fitter::{fit_mle, select_order, FitOptions, FitResult};
pub use io::ModelDocument;
pub use model::{CoxianParams, Generator, SummaryStats};
