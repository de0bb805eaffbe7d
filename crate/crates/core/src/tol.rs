//! Centralized numerical tolerances.

/// Tolerance constants shared by validators across the crate.
///
/// `algebraic` guards identities that should hold to rounding error
/// (hermiticity of constructed operators, cached norms); `physical` guards
/// quantities degraded by integration error (trace preservation, positivity).
/// Both can be overridden from configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub algebraic: f64,
    pub physical: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            algebraic: 1e-12,
            physical: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn new(algebraic: f64, physical: f64) -> Self {
        Tolerances {
            algebraic,
            physical,
        }
    }
}
