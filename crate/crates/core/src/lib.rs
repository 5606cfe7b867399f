//! Spectral simulation, exact control and feedback stabilization of the
//! sixth-order Boussinesq equation
//!
//! `u_tt - u_xx + βu_xxxx - u_xxxxxx + (u²)_xx = f` on `[0, 2π]` (periodic), `β = ±1`.

pub mod error;
pub mod control;
pub mod data;
pub mod etd;
pub mod linear;
pub mod nonlinear;
pub mod quad;
pub mod spectral;
pub mod stabilization;

pub use error::{Error, Result};
