//! Physical constants (CODATA 2018, exact SI values where defined).

use std::f64::consts::PI;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);

/// Vacuum permeability, N A^-2.
pub const MU0: f64 = 1.256_637_062_12e-6;

/// mu0 / (4 pi), T m A^-1.
pub const MU0_OVER_4PI: f64 = MU0 / (4.0 * PI);

/// kHz/mT expressed in Hz/T.
pub const KHZ_PER_MT_TO_HZ_PER_T: f64 = 1.0e6;

pub const NM_TO_M: f64 = 1.0e-9;

pub const KHZ_TO_HZ: f64 = 1.0e3;

pub const KHZ_TO_MHZ: f64 = 1.0e-3;
