//! Set-theoretic receding-horizon control with ellipsoidal robust control-invariant families.
//!
//! Offline, [`synthesis`] grows nested ellipsoid chains for an uncertain polytopic model and
//! [`planner`] stitches them waypoint to waypoint. Online, [`controller`] localizes the state in
//! the chains and solves a small min-max problem per step. [`harness`] closes the loop against
//! the 6-DOF plant from [`vehicle`].

pub mod bundle;
pub mod controller;
pub mod ellipsoid;
pub mod error;
pub mod harness;
pub mod maxdet;
pub mod planner;
pub mod plot;
pub mod qp;
pub mod synthesis;
pub mod vehicle;

pub use error::{Error, Result};
