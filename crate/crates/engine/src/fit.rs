//! Nonlinear least-squares fits of the ensemble observables: the
//! tanh/sech profile of the jump flight, the bi-exponential waiting-time
//! histogram, and the single-exponential bright-dwell law. Fitting is
//! MINPACK-style Levenberg-Marquardt via `rmpfit`.

use rmpfit::{MPFitter, MPPar, MPResult, MPStatus, MPSuccess};

use crate::ensemble::ConditionalTomogram;
use crate::EngineError;

fn run_fit<F: MPFitter>(fitter: &mut F, params: &mut [f64], what: &str) -> Result<MPStatus, EngineError> {
    let status = fitter
        .mpfit(params)
        .map_err(|e| EngineError::Fit(format!("{what}: {e:?}")))?;
    if status.success == MPSuccess::NotDone {
        return Err(EngineError::Fit(format!(
            "{what}: iterations did not converge (chi2 {:.3e}, residual norm {:.3e})",
            status.best_norm,
            status.best_norm.sqrt()
        )));
    }
    Ok(status)
}

/// Scale 1-sigma errors for unit-weight fits by sqrt(chi2/dof).
fn scaled_errors(status: &MPStatus, n_points: usize, n_free: usize) -> Vec<f64> {
    let dof = (n_points.saturating_sub(n_free)).max(1) as f64;
    let s = (status.best_norm / dof).sqrt();
    status.xerror.iter().map(|e| e * s).collect()
}

struct CurveFit<'a, G: Fn(f64, &[f64]) -> f64> {
    t: &'a [f64],
    y: &'a [f64],
    sigma: Option<&'a [f64]>,
    f: G,
    pars: Vec<MPPar>,
}

impl<'a, G: Fn(f64, &[f64]) -> f64> MPFitter for CurveFit<'a, G> {
    fn eval(&mut self, params: &[f64], deviates: &mut [f64]) -> MPResult<()> {
        for (i, d) in deviates.iter_mut().enumerate() {
            let s = self.sigma.map(|s| s[i]).unwrap_or(1.0);
            *d = (self.y[i] - (self.f)(self.t[i], params)) / s;
        }
        Ok(())
    }

    fn number_of_points(&self) -> usize {
        self.t.len()
    }

    fn parameters(&self) -> &[MPPar] {
        &self.pars
    }
}

fn positive_par() -> MPPar {
    MPPar {
        limited_low: true,
        limit_low: 1e-9,
        ..MPPar::new()
    }
}

/// Fitted jump-flight parameters: Z = a + b tanh(dt/tau + c),
/// X = a' + b' sech(dt/tau' + c'), Y fitted as the constant 0 (largest
/// |Y| reported instead). Uncertainties are fit-covariance only.
#[derive(Debug, Clone, Copy)]
pub struct JumpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub tau: f64,
    pub a_err: f64,
    pub b_err: f64,
    pub c_err: f64,
    pub tau_err: f64,
    pub a_p: f64,
    pub b_p: f64,
    pub c_p: f64,
    pub tau_p: f64,
    pub a_p_err: f64,
    pub b_p_err: f64,
    pub c_p_err: f64,
    pub tau_p_err: f64,
    pub max_abs_y: f64,
    pub residual_z: f64,
    pub residual_x: f64,
}

impl JumpFit {
    /// Catch time at which the fitted Z crosses zero.
    pub fn mid_flight_time(&self) -> f64 {
        // a + b tanh(t/tau + c) = 0
        self.tau * ((-self.a / self.b).atanh() - self.c)
    }
}

pub fn tanh_profile(t: f64, p: &[f64]) -> f64 {
    p[0] + p[1] * (t / p[3] + p[2]).tanh()
}

pub fn sech_profile(t: f64, p: &[f64]) -> f64 {
    p[0] + p[1] / (t / p[3] + p[2]).cosh()
}

/// Fit the tanh/sech flight profiles to a conditional tomogram.
///
/// `fix_a_prime` pins the X offset a' to zero, the long-time value
/// enforced when the dark drive is gated away during the catch.
/// `tau_seed` preloads the timescale (falls back to a data-driven guess).
pub fn fit_jump_curves(
    tomo: &ConditionalTomogram,
    fix_a_prime: bool,
    tau_seed: Option<f64>,
) -> Result<JumpFit, EngineError> {
    let rows = tomo.rows();
    if rows.len() < 8 {
        return Err(EngineError::Fit(format!(
            "need at least 8 grid points, got {}",
            rows.len()
        )));
    }
    let t: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let z: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let x: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let max_abs_y = rows.iter().map(|r| r.3.abs()).fold(0.0, f64::max);

    // seeds: offsets and amplitude from the endpoints, timescale from the
    // zero crossing
    let z0 = z.first().copied().unwrap();
    let z1 = z.last().copied().unwrap();
    let a0 = 0.5 * (z0 + z1);
    let b0 = (0.5 * (z1 - z0)).max(0.1);
    let t_cross = t
        .iter()
        .zip(&z)
        .find(|(_, &zv)| zv >= a0)
        .map(|(tv, _)| *tv)
        .unwrap_or(0.5 * t[t.len() - 1]);
    let tau0 = tau_seed.unwrap_or_else(|| (0.4 * t[t.len() - 1]).max(1e-3));
    let c0 = -t_cross / tau0;

    let mut zfit = CurveFit {
        t: &t,
        y: &z,
        sigma: None,
        f: tanh_profile,
        pars: vec![MPPar::new(), MPPar::new(), MPPar::new(), positive_par()],
    };
    let mut pz = [a0, b0, c0, tau0];
    let status_z = run_fit(&mut zfit, &mut pz, "tanh flight profile")?;
    let ez = scaled_errors(&status_z, t.len(), 4);

    // X: peak near the crossing of Z
    let x_max = x.iter().cloned().fold(f64::MIN, f64::max);
    let a0p = if fix_a_prime {
        0.0
    } else {
        x.last().copied().unwrap().min(0.0)
    };
    let b0p = (x_max - a0p).max(0.1);
    let mut pars_x = vec![MPPar::new(), MPPar::new(), MPPar::new(), positive_par()];
    if fix_a_prime {
        pars_x[0].fixed = true;
    }
    let mut xfit = CurveFit {
        t: &t,
        y: &x,
        sigma: None,
        f: sech_profile,
        pars: pars_x,
    };
    let mut px = [a0p, b0p, c0, pz[3]];
    let n_free_x = if fix_a_prime { 3 } else { 4 };
    let status_x = run_fit(&mut xfit, &mut px, "sech flight profile")?;
    let ex = scaled_errors(&status_x, t.len(), n_free_x);

    Ok(JumpFit {
        a: pz[0],
        b: pz[1],
        c: pz[2],
        tau: pz[3],
        a_err: ez[0],
        b_err: ez[1],
        c_err: ez[2],
        tau_err: ez[3],
        a_p: px[0],
        b_p: px[1],
        c_p: px[2],
        tau_p: px[3],
        a_p_err: ex[0],
        b_p_err: ex[1],
        c_p_err: ex[2],
        tau_p_err: ex[3],
        max_abs_y,
        residual_z: (status_z.best_norm / t.len() as f64).sqrt(),
        residual_x: (status_x.best_norm / t.len() as f64).sqrt(),
    })
}

/// Waiting-time statistics: log-binned histogram of the not-bright dwell
/// times with its bi-exponential fit, and the single-exponential fit of
/// the bright dwells.
#[derive(Debug, Clone)]
pub struct WaitingTimeFit {
    /// (left edge, right edge) of each histogram bin, us.
    pub bins: Vec<(f64, f64)>,
    pub counts: Vec<u64>,
    /// fast rate: clicks separating ground-state rests, 1/us.
    pub gamma_bg: f64,
    pub gamma_bg_err: f64,
    /// slow rate: returns from the dark state, 1/us.
    pub gamma_gd: f64,
    pub gamma_gd_err: f64,
    /// mean bright dwell from the exponential fit, us.
    pub tau_b: f64,
    pub tau_b_err: f64,
}

pub fn waiting_time_fit(
    notb_dwells: &[f64],
    b_dwells: &[f64],
) -> Result<WaitingTimeFit, EngineError> {
    if notb_dwells.len() < 100 {
        return Err(EngineError::Fit(format!(
            "need at least 100 dwell intervals, got {}",
            notb_dwells.len()
        )));
    }
    let n = notb_dwells.len();
    let lo = notb_dwells.iter().cloned().fold(f64::MAX, f64::min).max(1e-3);
    let hi = notb_dwells.iter().cloned().fold(0.0, f64::max) * (1.0 + 1e-9);
    let n_bins = 30usize;
    let ratio = (hi / lo).powf(1.0 / n_bins as f64);
    let edges: Vec<f64> = (0..=n_bins).map(|k| lo * ratio.powi(k as i32)).collect();
    let mut counts = vec![0u64; n_bins];
    for &w in notb_dwells {
        if w < lo {
            continue;
        }
        let b = ((w / lo).ln() / ratio.ln()).floor() as usize;
        counts[b.min(n_bins - 1)] += 1;
    }

    // density points with Poisson weights on the occupied bins
    let mut tc = Vec::new();
    let mut dens = Vec::new();
    let mut sig = Vec::new();
    for k in 0..n_bins {
        if counts[k] == 0 {
            continue;
        }
        let width = edges[k + 1] - edges[k];
        let center = (edges[k] * edges[k + 1]).sqrt();
        tc.push(center);
        dens.push(counts[k] as f64 / (n as f64 * width));
        sig.push((counts[k] as f64).sqrt() / (n as f64 * width));
    }
    if tc.len() < 5 {
        return Err(EngineError::Fit("too few occupied bins".into()));
    }

    // seeds from a crude fast/slow split at three times the global mean
    let mean = notb_dwells.iter().sum::<f64>() / n as f64;
    let split = 3.0 * mean;
    let (mut fast_sum, mut fast_n, mut slow_sum, mut slow_n) = (0.0, 0usize, 0.0, 0usize);
    for &w in notb_dwells {
        if w <= split {
            fast_sum += w;
            fast_n += 1;
        } else {
            slow_sum += w;
            slow_n += 1;
        }
    }
    let g1 = 1.0 / (fast_sum / fast_n.max(1) as f64).max(1e-6);
    let g2 = if slow_n > 0 {
        1.0 / (slow_sum / slow_n as f64)
    } else {
        g1 / 20.0
    };
    let w1 = fast_n as f64 / n as f64;
    let w2 = 1.0 - w1;

    let biexp = |t: f64, p: &[f64]| p[0] * p[1] * (-p[1] * t).exp() + p[2] * p[3] * (-p[3] * t).exp();
    let mut fitter = CurveFit {
        t: &tc,
        y: &dens,
        sigma: Some(&sig),
        f: biexp,
        pars: vec![positive_par(), positive_par(), positive_par(), positive_par()],
    };
    let mut p = [w1, g1, w2, g2];
    let status = run_fit(&mut fitter, &mut p, "bi-exponential waiting times")?;
    let err = &status.xerror;
    // order so gamma_bg is the fast rate
    let (gamma_bg, gamma_bg_err, gamma_gd, gamma_gd_err) = if p[1] >= p[3] {
        (p[1], err[1], p[3], err[3])
    } else {
        (p[3], err[3], p[1], err[1])
    };

    // bright dwells: single exponential
    let (tau_b, tau_b_err) = if b_dwells.len() >= 100 {
        fit_single_exp(b_dwells)?
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(WaitingTimeFit {
        bins: edges.windows(2).map(|w| (w[0], w[1])).collect(),
        counts,
        gamma_bg,
        gamma_bg_err,
        gamma_gd,
        gamma_gd_err,
        tau_b,
        tau_b_err,
    })
}

/// Exponential fit of dwell times via histogram least squares; returns
/// (tau, sigma_tau).
fn fit_single_exp(dwells: &[f64]) -> Result<(f64, f64), EngineError> {
    let n = dwells.len();
    let lo = dwells.iter().cloned().fold(f64::MAX, f64::min).max(1e-3);
    let hi = dwells.iter().cloned().fold(0.0, f64::max) * (1.0 + 1e-9);
    let n_bins = 24usize;
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &w in dwells {
        if w < lo {
            continue;
        }
        let b = (((w - lo) / width).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let mut tc = Vec::new();
    let mut dens = Vec::new();
    let mut sig = Vec::new();
    for k in 0..n_bins {
        if counts[k] == 0 {
            continue;
        }
        tc.push(lo + (k as f64 + 0.5) * width);
        dens.push(counts[k] as f64 / (n as f64 * width));
        sig.push((counts[k] as f64).sqrt() / (n as f64 * width));
    }
    let mean = dwells.iter().sum::<f64>() / n as f64;
    let single = |t: f64, p: &[f64]| p[0] * (-t / p[1]).exp() / p[1];
    let mut fitter = CurveFit {
        t: &tc,
        y: &dens,
        sigma: Some(&sig),
        f: single,
        pars: vec![positive_par(), positive_par()],
    };
    let mut p = [1.0, mean];
    let status = run_fit(&mut fitter, &mut p, "bright-dwell exponential")?;
    Ok((p[1], status.xerror[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn synthetic_tomogram(a: f64, b: f64, c: f64, tau: f64) -> ConditionalTomogram {
        let t_int = 0.26;
        let len = 48;
        let grid: Vec<f64> = (0..len).map(|k| k as f64 * t_int).collect();
        let z: Vec<Option<f64>> = grid
            .iter()
            .map(|&t| Some(tanh_profile(t, &[a, b, c, tau])))
            .collect();
        let x: Vec<Option<f64>> = grid
            .iter()
            .map(|&t| Some(sech_profile(t, &[0.0, 1.0, c, tau])))
            .collect();
        ConditionalTomogram {
            grid,
            z,
            x,
            y: vec![Some(0.0); len],
            p_bb: vec![Some(0.0); len],
            n_surviving: vec![1000; len],
            n_total: 1000,
        }
    }

    #[test]
    fn recovers_exact_tanh_parameters() {
        let tomo = synthetic_tomogram(0.0, 1.0, -2.0, 1.64);
        let fit = fit_jump_curves(&tomo, false, None).unwrap();
        assert_abs_diff_eq!(fit.a, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.b, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.c, -2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(fit.tau, 1.64, epsilon = 1e-5);
        assert_abs_diff_eq!(fit.mid_flight_time(), 2.0 * 1.64, epsilon = 1e-5);
        assert_eq!(fit.max_abs_y, 0.0);
    }

    #[test]
    fn fix_a_prime_pins_offset() {
        let tomo = synthetic_tomogram(-0.05, 0.95, -2.2, 2.0);
        let fit = fit_jump_curves(&tomo, true, Some(2.0)).unwrap();
        assert_eq!(fit.a_p, 0.0);
        assert_eq!(fit.a_p_err, 0.0);
        assert_abs_diff_eq!(fit.b_p, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn too_few_points_rejected() {
        let mut tomo = synthetic_tomogram(0.0, 1.0, -2.0, 1.64);
        tomo.grid.truncate(5);
        tomo.z.truncate(5);
        tomo.x.truncate(5);
        tomo.y.truncate(5);
        assert!(fit_jump_curves(&tomo, false, None).is_err());
    }

    #[test]
    fn biexponential_mixture_recovered() {
        // two-Poisson mixture with rates (1/0.99, 1/30.8): recover within 5%
        let mut rng = crate::rng::trajectory_rng(41, 0);
        let (r1, r2) = (1.0 / 0.99, 1.0 / 30.8);
        let p_slow = 1.0 / 220.0f64 / (1.0 / 0.99); // rare slow intervals
        let n = 200_000;
        let mut notb = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let e: f64 = -(rng.gen::<f64>()).ln();
            notb.push(if u < p_slow { e / r2 } else { e / r1 });
        }
        // bright dwells: exponential at 4.2 us
        let mut b = Vec::with_capacity(50_000);
        for _ in 0..50_000 {
            b.push(-(rng.gen::<f64>()).ln() * 4.2);
        }
        let fit = waiting_time_fit(&notb, &b).unwrap();
        assert!((fit.gamma_bg / r1 - 1.0).abs() < 0.05, "fast {}", fit.gamma_bg);
        assert!((fit.gamma_gd / r2 - 1.0).abs() < 0.05, "slow {}", fit.gamma_gd);
        assert!((fit.tau_b / 4.2 - 1.0).abs() < 0.05, "tau_b {}", fit.tau_b);
    }

    #[test]
    fn waiting_time_needs_enough_intervals() {
        let notb = vec![1.0; 20];
        assert!(waiting_time_fit(&notb, &[]).is_err());
    }
}
