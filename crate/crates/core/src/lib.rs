//! Onsager-Machlup and Freidlin-Wentzell functionals of small-noise measures
//! equivalent to Gaussian reference measures, with variational and Monte
//! Carlo verification tools.

pub mod error;
pub mod mc;
pub mod measure;
pub mod numeric;
pub mod rng;
pub mod tilt;
pub mod variational;
pub mod zoo;

pub use error::{Error, Result};
pub use measure::{DiscretePath, Element, ElementRef, GaussianMeasureSpec, Reference, TimeGrid, WeightedSequence};
pub use tilt::{DriftModel, FunctionalValue, Functional, Sde, SdeAction, TiltedMeasure, TiltingExpansion};
pub use variational::{Constraints, MinimizeOptions, MinimizeResult};
pub use zoo::{preset_drift, DriftPreset};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
