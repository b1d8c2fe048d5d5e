//! Weighted rearrangements, classical and grand Lorentz norms, Muckenhoupt
//! characteristics, the standard operators of harmonic analysis and explicit
//! extrapolation constants, all evaluated exactly on finite quasi-metric
//! measure spaces.

pub mod error;
pub mod extrapolation;
pub mod lorentz;
pub mod operators;
pub mod par;
pub mod rearrange;
pub mod space;
pub mod util;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use rearrange::{Sample, StepFunction, Weight};
pub use space::{interval_grid, Ball, Space};
