//! Physical constants (CODATA 2018, exact where the SI defines them) and
//! unit helpers.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;

/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_8128e-12;

/// One milli-electronvolt in joules.
pub const MEV: f64 = E_CHARGE * 1e-3;

pub const NM: f64 = 1e-9;
pub const PS: f64 = 1e-12;

#[inline]
pub fn joules_to_mev(e: f64) -> f64 {
    e / MEV
}

#[inline]
pub fn mev_to_joules(e: f64) -> f64 {
    e * MEV
}
