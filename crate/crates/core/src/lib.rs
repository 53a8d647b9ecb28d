//! Exact autonomous generative fields for finite data supports.
//!
//! The noisy marginal of a finite support under an affine schedule is a
//! Gaussian mixture in `u` for every noise level `t`. Integrating over a
//! uniform prior on `t` on a dense grid gives the posterior `p(t | u)`, the
//! marginal energy `-ln p(u)`, and the optimal noise-agnostic field `f*(u)`
//! in closed form, with no training involved.

pub mod error;
pub mod experiments;
pub mod export;
pub mod fields;
pub mod grid;
mod mixture;
pub mod posterior;
pub mod sampler;
pub mod schedule;
pub mod stats;
pub mod support;

pub use error::{Error, Result};
pub use fields::{FieldDecomposition, FieldModel};
pub use grid::TimeGrid;
pub use posterior::PosteriorProfile;
pub use schedule::{Preset, Schedule, ScheduleParams};
pub use support::DataSupport;
