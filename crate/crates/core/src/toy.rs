//! Flying-spin model of a qubit under repeated weak ancilla measurements,
//! in three equivalent guises: the exact discrete update of the Bloch
//! angle, its linearization as a random walk on the hyperbola
//! cos(theta) = tanh(zeta), and the continuum diffusion limit
//! dZ = -sqrt(kappa) (1 - Z^2) dW with record dJ = -sqrt(kappa) Z dt + dW.
//!
//! The X > 0 half-circle (azimuth 0) is assumed throughout.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::CoreError;

/// Pure qubit state on the XZ Bloch circle plus the measurement settings.
///
/// Both angle charts are carried so either update can be applied; the
/// invariant cos(theta) = tanh(zeta) ties them together.
#[derive(Debug, Clone, Copy)]
pub struct ToyState {
    /// Circular Bloch angle in [0, pi].
    pub theta: f64,
    /// Hyperbolic angle; +inf at theta = 0, -inf at theta = pi.
    pub zeta: f64,
    /// Interaction strength per step, |epsilon| < pi/2.
    pub epsilon: f64,
    /// Measurement rate (1/us) of the continuum limit.
    pub kappa: f64,
}

impl ToyState {
    pub fn new(theta: f64, epsilon: f64, kappa: f64) -> Result<Self, CoreError> {
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(CoreError::InvalidParameter("theta outside [0, pi]".into()));
        }
        if epsilon.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(CoreError::InvalidParameter("|epsilon| must be < pi/2".into()));
        }
        Ok(ToyState {
            theta,
            zeta: theta.cos().atanh(),
            epsilon,
            kappa,
        })
    }

    pub fn z(&self) -> f64 {
        self.theta.cos()
    }

    /// |cos(theta) - tanh(zeta)|, zero up to rounding for consistent charts.
    pub fn chart_mismatch(&self) -> f64 {
        (self.theta.cos() - self.zeta.tanh()).abs()
    }
}

/// Probability of ancilla outcome r = +/-1: 1/2 (1 - r sin(eps) cos(theta)).
pub fn outcome_probability(theta: f64, epsilon: f64, r: i8) -> f64 {
    0.5 * (1.0 - (r as f64) * epsilon.sin() * theta.cos())
}

/// Which chart the discrete update is applied in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateForm {
    /// tan(theta'/2) = tan(theta/2) tan((pi/2 + r eps)/2)
    Circular,
    /// zeta' = zeta - r xi with tanh(xi) = sin(eps)
    Hyperbolic,
}

/// Exact post-measurement state for outcome `r`, in either chart. The two
/// forms agree identically; poles (theta = 0, pi) are fixed points.
pub fn discrete_update(state: &ToyState, r: i8, form: UpdateForm) -> ToyState {
    let mut next = *state;
    match form {
        UpdateForm::Circular => {
            let half = 0.5 * (std::f64::consts::FRAC_PI_2 + (r as f64) * state.epsilon);
            let t = (0.5 * state.theta).tan() * half.tan();
            next.theta = 2.0 * t.atan();
            next.zeta = next.theta.cos().atanh();
        }
        UpdateForm::Hyperbolic => {
            let xi = state.epsilon.sin().atanh();
            next.zeta = state.zeta - (r as f64) * xi;
            next.theta = next.zeta.tanh().acos();
        }
    }
    next
}

/// One Euler-Maruyama step of the continuum limit. Returns the updated Z
/// and the record increment dJ built from the same Wiener draw.
///
/// Z is clipped to [-1, 1] only for overshoots below 1e-9; larger
/// overshoots indicate a too-coarse step and are rejected.
pub fn diffusive_step<R: Rng + ?Sized>(
    z: f64,
    dt: f64,
    kappa: f64,
    rng: &mut R,
) -> Result<(f64, f64), CoreError> {
    if z.abs() > 1.0 {
        return Err(CoreError::InvalidParameter("|Z| must be <= 1".into()));
    }
    let dw = dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let dj = -kappa.sqrt() * z * dt + dw;
    let mut z_next = z - kappa.sqrt() * (1.0 - z * z) * dw;
    let overshoot = z_next.abs() - 1.0;
    if overshoot > 0.0 {
        if overshoot > 1e-9 {
            return Err(CoreError::StepSize {
                dt,
                bound: 1.0 / kappa,
            });
        }
        z_next = z_next.clamp(-1.0, 1.0);
    }
    Ok((z_next, dj))
}
