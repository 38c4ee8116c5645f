//! Simulation of equivalent-resistance maximum power point tracking for a
//! photovoltaic module driving a buck-boost converter.
//!
//! - [`lambertw`]: principal-branch Lambert W and its asymptotic series.
//! - [`pv_model`]: diode models, closed-form operating points, MPP oracle.
//! - [`converter`]: switched and averaged converter dynamics, RK4.
//! - [`control`]: feedback-linearizing duty law, outer loop, baselines.
//! - [`harness`]: scenarios, closed-loop runs, CSV traces.
//!
//! Batch operations take an [`exec::Mode`]; with the default `parallel`
//! feature they can fan out over rayon.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod converter;
mod error;
pub mod exec;
pub mod harness;
pub mod lambertw;
pub mod pv_model;

pub use error::{Error, Result};
