//! Readout signal-to-noise budget of the dispersive monitoring chain and
//! the derived click-detection efficiencies.

use qjump_core::models::CavityParams;
use statrs::function::erf::erfc;

/// SNR of the bright/not-bright discrimination and the efficiency chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrReport {
    pub snr: f64,
    /// probability of assigning the right pointer distribution.
    pub eta_disc: f64,
    /// probability that no state transition corrupts the window.
    pub eta_asg: f64,
    /// total click-detection efficiency, eta_disc * eta_asg.
    pub eta_eff: f64,
}

/// SNR = 1/2 eta kappa T_int cos^2(arctan(kappa / 2 chi_BG)) n_bar;
/// eta_disc = 1/2 erfc(-sqrt(SNR/2)); eta_asg = exp(-T_int / tau_B).
pub fn snr_metrics(cav: &CavityParams, chi_bg: f64, tau_b: f64) -> SnrReport {
    let angle = (cav.kappa / (2.0 * chi_bg)).atan();
    let snr = 0.5 * cav.eta * cav.kappa * cav.t_int * angle.cos().powi(2) * cav.n_bar;
    let eta_disc = 0.5 * erfc(-(snr / 2.0).sqrt());
    let eta_asg = (-cav.t_int / tau_b).exp();
    SnrReport {
        snr,
        eta_disc,
        eta_asg,
        eta_eff: eta_disc * eta_asg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use qjump_core::TWO_PI;

    fn cav() -> CavityParams {
        CavityParams {
            kappa: TWO_PI * 3.62,
            chi_b: TWO_PI * -5.08,
            chi_d: TWO_PI * -0.33,
            delta_r: TWO_PI * -5.08,
            n_bar: 5.0,
            eta: 0.33,
            kappa_filter: TWO_PI * 36.2,
            t_int: 0.26,
            n_max: 18,
        }
    }

    #[test]
    fn snr_of_the_device_parameters() {
        let rep = snr_metrics(&cav(), TWO_PI * 5.08, 4.2);
        assert_abs_diff_eq!(rep.snr, 4.329, epsilon = 5e-3);
        assert_abs_diff_eq!(rep.eta_disc, 0.981, epsilon = 2e-3);
        assert_abs_diff_eq!(rep.eta_asg, 0.940, epsilon = 1e-3);
        // the product identity holds exactly
        assert_abs_diff_eq!(rep.eta_eff, rep.eta_disc * rep.eta_asg, epsilon = 1e-15);
    }

    #[test]
    fn zero_snr_is_a_coin_flip() {
        let mut c = cav();
        c.n_bar = 0.0;
        let rep = snr_metrics(&c, TWO_PI * 5.08, 4.2);
        assert_abs_diff_eq!(rep.eta_disc, 0.5, epsilon = 1e-12);
    }
}
