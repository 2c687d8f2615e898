//! Numeric tolerances shared by every module.

/// Exact finite-space identities (kernel algebra, interventional identities).
pub const EXACT: f64 = 1e-12;

/// Accepted slack when validating user-supplied probability tables.
pub const NORMALIZATION: f64 = 1e-9;

/// A shift above this is treated as a genuine causal dependence.
pub const CAUSAL_DEPENDENCE: f64 = 1e-9;
