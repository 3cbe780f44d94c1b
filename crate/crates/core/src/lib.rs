//! Deception-aware linear-quadratic control and red-team counter-deception.
//!
//! The blue team steers a velocity/position system while biasing an
//! observer's likelihood-ratio test towards a chosen misdirection pattern.
//! The red team picks that pattern to undo the deception, and the two move
//! in alternating rounds.
//!
//! Layout follows the computation: [`model`] holds parameters and time
//! functions, [`riccati`] solves the value-function coefficients,
//! [`controls`] turns them into feedback laws, [`sde`] simulates the closed
//! loop, [`moments`] evaluates the same statistics in closed form, [`red`]
//! optimizes the pattern and [`stackelberg`] plays the rounds.

pub mod controls;
pub mod error;
pub mod model;
pub mod moments;
pub mod odeint;
pub mod red;
pub mod riccati;
pub mod sde;
pub mod stackelberg;

pub use error::{Error, Result};
pub use model::{validate_params, GridConfig, ModelParams, Pattern, TimeFunction, ValidatedParams};
