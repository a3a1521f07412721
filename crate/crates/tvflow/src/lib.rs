//! Total variation flow with a nonlocal Kirchhoff coefficient.
//!
//! The evolution `u_t = m(∫|Du|)·div(Du/|Du|)` on a box-embedded ball with
//! zero boundary data, where `m` is a positive nondecreasing function of the
//! total variation of the current state.  The crate provides:
//!
//! - a cell-centred grid discretization with zero extension across the
//!   domain boundary ([`grid`], [`field`]),
//! - the coefficient families and their antiderivatives ([`coefficient`]),
//! - closed-form radial solutions, extinction times, and a-priori bounds
//!   used as oracles ([`analytic`]),
//! - implicit time stepping through a total variation proximal map or a
//!   gradient-regularized linearization ([`solver`]),
//! - the rescaled-time route: solve the unit-coefficient flow once, then
//!   recover the nonlocal flow by solving a scalar clock ODE
//!   ([`timechange`]),
//! - inequality checks that compare computed trajectories against the
//!   closed forms and structural bounds ([`verify`]).

pub mod analytic;
pub mod coefficient;
pub mod commands;
pub mod config;
pub mod error;
pub mod field;
pub mod grid;
pub mod report;
pub mod solver;
pub mod timechange;
pub mod trajectory;
pub mod verify;

pub use error::{Result, TvError};
