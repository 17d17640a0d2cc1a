//! CODATA 2018 values in SI units.

pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Mass of a singly charged 40Ca ion (atomic mass minus one electron).
pub const CA40_ION_MASS: f64 = 39.962_590_863 * ATOMIC_MASS_UNIT - 9.109_383_701_5e-31;
