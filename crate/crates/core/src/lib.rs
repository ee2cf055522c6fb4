//! Robust clustering of curves.
//!
//! Curves are expanded in a finite functional basis (Fourier or B-spline) and
//! modelled group-wise through the Gaussian density of their principal
//! component scores. The fitting procedure is a trimmed EM: every iteration
//! discards the observations contributing least to the likelihood, re-estimates
//! each group by weighted functional PCA and projects the scatter parameters
//! onto an eigenvalue-ratio constrained set, which rules out spurious
//! degenerate clusters. Group dimensions are picked by BIC.
//!
//! Module map:
//!
//! - [`basis`]: bases, Gram matrix, half powers, least-squares coefficient fits
//! - [`simulate`]: synthetic scenarios and contamination schemes
//! - [`fpca`]: weighted functional PCA
//! - [`constraints`]: truncation of scatter parameters under ratio constraints
//! - [`em`]: the trimmed, constrained EM and its multi-start driver
//! - [`selection`]: free-parameter count, BIC and dimension grid search
//! - [`metrics`]: classification rate, trimmed reassignment, outlier reports
//! - [`io`] and [`cli`]: datasets on disk, configuration and experiment runs

pub mod basis;
pub mod cli;
pub mod constraints;
pub mod em;
pub mod error;
pub mod fpca;
pub mod io;
mod linalg;
pub mod metrics;
pub mod quadrature;
pub mod rng;
pub mod selection;
pub mod simulate;

pub use basis::{BasisKind, BasisSpec, CurveSet, GramMatrix, GridSamples};
pub use constraints::ScatterSet;
pub use em::{fit, FitConfig, FitResult, ModelParams, Posteriors, TrimSet};
pub use error::{Result, RfcError};
pub use fpca::FpcaResult;
pub use selection::{select_dimensions, BicRow, DimGrid};
pub use simulate::{ContaminationScheme, ContaminationSpec, Label, LabeledDataset, ScenarioSpec};
