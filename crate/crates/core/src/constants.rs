//! Physical constants in SI units.

use std::f64::consts::PI;

/// Vacuum permeability (H/m).
pub const MU_0: f64 = 4.0e-7 * PI;

/// `MU_0 / (4 pi)`, the prefactor of every Neumann-type inductance integral.
pub const MU0_OVER_4PI: f64 = 1.0e-7;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Reference temperature for noise estimates (K).
pub const T_REF: f64 = 300.0;

/// Micrometres to metres.
pub const UM: f64 = 1.0e-6;
