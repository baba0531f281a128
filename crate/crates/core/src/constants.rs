//! Physical constants, CODATA 2018.

/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;

/// Vacuum electric permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.8541878128e-12;

/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS: f64 = 1.66053906660e-27;

/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Reduced Planck constant, J s (exact).
pub const REDUCED_PLANCK: f64 = 1.054571817e-34;
