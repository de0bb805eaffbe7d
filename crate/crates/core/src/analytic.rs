//! Closed-form no-click jump dynamics for the driven three-level atom:
//! the dark/ground amplitude ratio, GD Bloch components, mid-flight times,
//! long-time asymptotes, the adiabatic projection with the dark drive off,
//! and the completion probability after gating the drive.
//!
//! These serve as oracles for the stochastic integrators. They hold in the
//! strong-monitoring regime Omega_DG << Omega_BG^2/gamma_B << gamma_B; the
//! leading neglected term is of relative size Omega_DG * W / jump_rate, so
//! accuracy degrades once the ratio W grows past ~1 (past mid-flight).

use crate::error::CoreError;

/// Rates of the three-level jump problem, rad/us.
///
/// `gamma_bg` is the click rate out of the ground state: for the coherent
/// variant this is Omega_BG^2/gamma_B in the adiabatic limit, and
/// [`ThreeLevelRates::calibrated`] instead stores the exact slow decay rate
/// of the driven, damped bright transition (what a click-rate measurement
/// would give). For the incoherent variant it is the pump rate Gamma_BG.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevelRates {
    pub omega_bg: f64,
    pub omega_dg: f64,
    pub gamma_b: f64,
    pub gamma_bg: f64,
}

impl ThreeLevelRates {
    /// Adiabatic click rate Omega_BG^2/gamma_B.
    pub fn adiabatic(omega_bg: f64, omega_dg: f64, gamma_b: f64) -> Self {
        ThreeLevelRates {
            omega_bg,
            omega_dg,
            gamma_b,
            gamma_bg: omega_bg * omega_bg / gamma_b,
        }
    }

    /// Click rate calibrated to the exact slow eigenvalue of the damped,
    /// driven GB block, 1/2 (gamma_B - sqrt(gamma_B^2 - 4 Omega_BG^2)).
    /// This is the rate a fit to the observed click record returns.
    pub fn calibrated(omega_bg: f64, omega_dg: f64, gamma_b: f64) -> Self {
        let disc = (gamma_b * gamma_b - 4.0 * omega_bg * omega_bg).max(0.0);
        ThreeLevelRates {
            omega_bg,
            omega_dg,
            gamma_b,
            gamma_bg: 0.5 * (gamma_b - disc.sqrt()),
        }
    }

    /// Incoherent pump at rate `gamma_bg`.
    pub fn incoherent(gamma_bg: f64, omega_dg: f64) -> Self {
        ThreeLevelRates {
            omega_bg: 0.0,
            omega_dg,
            gamma_b: 0.0,
            gamma_bg,
        }
    }

    /// Mean time between clicks while the atom rests in the ground state.
    pub fn tau_bg(&self) -> f64 {
        1.0 / self.gamma_bg
    }

    /// Exponential growth rate of the dark/ground ratio (half the click rate).
    pub fn ratio_growth_rate(&self) -> f64 {
        0.5 * self.gamma_bg
    }

    /// True when the strong-monitoring hierarchy holds with margin 10.
    pub fn strong_monitoring(&self) -> bool {
        self.omega_dg * 10.0 <= self.gamma_bg
            && (self.gamma_b == 0.0 || self.gamma_bg * 10.0 <= self.gamma_b)
    }
}

/// Which drive realizes the bright-transition monitoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveVariant {
    Coherent,
    Incoherent,
}

/// Dark/ground amplitude ratio W(t) of the no-click evolution, from the
/// reset state W(0) = 0.
///
/// Coherent: W = (Omega_DG/Gamma_BG) [exp(Gamma_BG t/2) - 1].
/// Incoherent: the pole-crossing solution; the crossing through infinity is
/// represented as a signed infinity, after which the returned branch is
/// negative and settles on W(inf) = -V.
pub fn dark_ground_ratio(
    t: f64,
    rates: &ThreeLevelRates,
    variant: DriveVariant,
) -> Result<f64, CoreError> {
    if t < 0.0 {
        return Err(CoreError::InvalidParameter("t must be >= 0".into()));
    }
    match variant {
        DriveVariant::Coherent => {
            let r = rates.ratio_growth_rate();
            Ok(rates.omega_dg / rates.gamma_bg * ((r * t).exp() - 1.0))
        }
        DriveVariant::Incoherent => {
            let v = incoherent_v(rates)?;
            if rates.omega_dg == 0.0 {
                return Ok(0.0);
            }
            let rho = (v - 1.0 / v) * rates.omega_dg / 2.0;
            let e = (rho * t).exp();
            // divided-through form stays finite when exp overflows and
            // produces the signed infinity at the pole crossing
            let num = 1.0 - 1.0 / e;
            let den = v / e - 1.0 / v;
            if den == 0.0 {
                return Ok(f64::INFINITY);
            }
            Ok(num / den)
        }
    }
}

/// dW/dt of the no-click ratio; the right-hand side of its equation of
/// motion (used to cross-check the closed forms).
pub fn dark_ground_ratio_rhs(w: f64, rates: &ThreeLevelRates, variant: DriveVariant) -> f64 {
    match variant {
        DriveVariant::Coherent => rates.ratio_growth_rate() * w + 0.5 * rates.omega_dg,
        DriveVariant::Incoherent => {
            0.5 * rates.gamma_bg * w + 0.5 * rates.omega_dg * (1.0 + w * w)
        }
    }
}

fn incoherent_v(rates: &ThreeLevelRates) -> Result<f64, CoreError> {
    if rates.omega_dg < 0.0 || rates.gamma_bg <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "incoherent variant needs gamma_bg > 0, omega_dg >= 0".into(),
        ));
    }
    if rates.omega_dg == 0.0 {
        return Ok(f64::INFINITY);
    }
    let g = 0.5 * rates.gamma_bg / rates.omega_dg;
    if g < 1.0 {
        return Err(CoreError::DomainViolation(format!(
            "underdamped regime Gamma_BG < 2 Omega_DG (ratio {g:.3})"
        )));
    }
    Ok(g + (g * g - 1.0).sqrt())
}

/// GD Bloch vector from the dark/ground ratio: Z = (W - 1/W)/(W + 1/W),
/// X = 2/(W + 1/W), Y = 0. Total on the extended reals; Z^2 + X^2 = 1
/// exactly for finite nonzero W.
pub fn bloch_from_ratio(w: f64) -> (f64, f64, f64) {
    if w == 0.0 {
        return (-1.0, 0.0, 0.0);
    }
    if w.is_infinite() {
        return (1.0, 0.0, 0.0);
    }
    if w.abs() <= 1.0 {
        let w2 = w * w;
        ((w2 - 1.0) / (w2 + 1.0), 2.0 * w / (w2 + 1.0), 0.0)
    } else {
        // evaluate in 1/W to stay stable for huge ratios
        let iw = 1.0 / w;
        let iw2 = iw * iw;
        ((1.0 - iw2) / (1.0 + iw2), 2.0 * iw / (1.0 + iw2), 0.0)
    }
}

/// Mid-flight time selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MidFlight {
    Coherent,
    Incoherent,
    /// Dark drive gated off once the ratio has reached `w_on` in (0,1);
    /// returns the total time from the click estimated by the free growth
    /// of the ratio, rate^-1 ln(1/w_on^2), with the rate chosen by the
    /// gating variant.
    DriveOff {
        w_on: f64,
        variant: DriveVariant,
    },
}

/// No-click duration at which the jump reaches Z_GD = 0 (equal dark and
/// ground amplitudes).
pub fn mid_flight_time(rates: &ThreeLevelRates, which: MidFlight) -> Result<f64, CoreError> {
    match which {
        MidFlight::Coherent => {
            if rates.omega_dg <= 0.0 {
                return Err(CoreError::InvalidParameter(
                    "mid-flight time undefined for Omega_DG = 0".into(),
                ));
            }
            let r = rates.ratio_growth_rate();
            Ok((rates.gamma_bg / rates.omega_dg + 1.0).ln() / r)
        }
        MidFlight::Incoherent => {
            if rates.omega_dg <= 0.0 {
                return Err(CoreError::InvalidParameter(
                    "mid-flight time undefined for Omega_DG = 0".into(),
                ));
            }
            let v = incoherent_v(rates)?;
            let rho = (v - 1.0 / v) * rates.omega_dg;
            Ok(2.0 / rho * ((v + 1.0) / (1.0 / v + 1.0)).ln())
        }
        MidFlight::DriveOff { w_on, variant } => {
            if !(0.0 < w_on && w_on < 1.0) {
                return Err(CoreError::InvalidParameter(
                    "drive-off mid-flight needs 0 < w_on < 1".into(),
                ));
            }
            let rate = match variant {
                DriveVariant::Coherent => rates.ratio_growth_rate(),
                DriveVariant::Incoherent => 0.5 * rates.gamma_bg,
            };
            Ok((1.0 / (w_on * w_on)).ln() / rate)
        }
    }
}

/// Strong-monitoring tanh/sech profile of the jump flight:
/// Z = tanh[r (dt - dt_mid)], X = sech[...], Y = 0, with r the ratio
/// growth rate. Executes a perfect jump: Z(inf) = 1.
pub fn jump_flight_bloch(dt_catch: f64, rates: &ThreeLevelRates) -> Result<(f64, f64, f64), CoreError> {
    let tmid = mid_flight_time(rates, MidFlight::Coherent)?;
    let arg = rates.ratio_growth_rate() * (dt_catch - tmid);
    Ok((arg.tanh(), 1.0 / arg.cosh(), 0.0))
}

/// Long-time Bloch vector of the incoherent-drive no-click flow:
/// Z = sqrt(1 - 4 (Omega_DG/Gamma_BG)^2), X = -2 Omega_DG/Gamma_BG, Y = 0.
pub fn long_time_bloch(omega_dg: f64, gamma_bg: f64) -> Result<(f64, f64, f64), CoreError> {
    if gamma_bg <= 0.0 || omega_dg < 0.0 {
        return Err(CoreError::InvalidParameter(
            "need gamma_bg > 0 and omega_dg >= 0".into(),
        ));
    }
    let q = 2.0 * omega_dg / gamma_bg;
    if q > 1.0 {
        return Err(CoreError::DomainViolation(format!(
            "underdamped regime 2 Omega_DG/Gamma_BG = {q:.3} > 1"
        )));
    }
    Ok(((1.0 - q * q).sqrt(), -q, 0.0))
}

/// Adiabatic no-click projection with the dark drive off, from initial
/// populations (p_g, p_d). Returns (C_G^2, C_D^2, Z, X, Y).
///
/// C_G^2 follows the decaying logistic, C_D^2 the growing one, and the GD
/// Bloch vector is Z(t) = tanh[t/tau + artanh Z(0)], X = sech[same], Y = 0.
/// For p_d = 0 the dark amplitude stays zero and Z = -1 for all t.
pub fn adiabatic_projection(
    t: f64,
    p_g: f64,
    p_d: f64,
    tau_bg: f64,
) -> Result<(f64, f64, f64, f64, f64), CoreError> {
    if !(0.0..=1.0).contains(&p_g) || !(0.0..=1.0).contains(&p_d) || p_g + p_d > 1.0 + 1e-12 {
        return Err(CoreError::InvalidParameter(
            "populations must be >= 0 with p_g + p_d <= 1".into(),
        ));
    }
    if tau_bg <= 0.0 {
        return Err(CoreError::InvalidParameter("tau_bg must be > 0".into()));
    }
    // the ground population follows the decaying logistic, the dark one the
    // growing logistic; for p_g + p_d = 1 they sum to 1 exactly
    let x = (2.0 * t / tau_bg).exp();
    let cg2 = if p_g == 0.0 { 0.0 } else { p_g / (p_g + (1.0 - p_g) * x) };
    let cd2 = if p_d == 0.0 {
        0.0
    } else {
        p_d * x / (p_d * x + (1.0 - p_d))
    };
    if p_d == 0.0 {
        return Ok((cg2, 0.0, -1.0, 0.0, 0.0));
    }
    let z0 = p_d - p_g;
    let arg = t / tau_bg + z0.atanh();
    Ok((cg2, cd2, arg.tanh(), 1.0 / arg.cosh(), 0.0))
}

/// Probability for the jump to continue from `dt_on` (where the dark drive
/// was gated off with unnormalized amplitudes `c_g`, `c_d`) out to
/// `dt_catch`: the surviving-norm ratio
/// [c_d^2 + c_g^2 exp(-rate (dt_catch - dt_on))] / (c_g^2 + c_d^2).
/// The limit dt_catch -> inf is the dark population fraction at gating.
pub fn completion_probability(
    dt_catch: f64,
    dt_on: f64,
    state_at_on: (f64, f64),
    click_rate: f64,
) -> Result<f64, CoreError> {
    if dt_catch < dt_on {
        return Err(CoreError::InvalidParameter(
            "dt_catch must be >= dt_on".into(),
        ));
    }
    let (c_g, c_d) = state_at_on;
    let n = c_g * c_g + c_d * c_d;
    if n <= 0.0 {
        return Err(CoreError::ZeroNorm);
    }
    let decay = (-click_rate * (dt_catch - dt_on)).exp();
    Ok((c_d * c_d + c_g * c_g * decay) / n)
}
