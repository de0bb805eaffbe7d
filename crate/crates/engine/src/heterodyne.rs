//! Heterodyne (diffusive) unraveling with finite efficiency: the linear
//! record-conditioned update
//!   d|psi> = [-i(H - i kappa/2 c^dag c - ...)dt + sqrt(eta kappa) dJ* c]|psi>
//! with dJ = sqrt(eta kappa) <c> dt + dZ, renormalized each step, plus the
//! unmonitored point processes (photon loss, thermal, dephasing, leakage)
//! sampled by the waiting-time method in accumulated-hazard space.
//!
//! The raw increments feed a first-order low-pass of bandwidth
//! kappa_filter with gain (eta kappa / 2)^(-1/2), boxcar-averaged once per
//! integration window T_int into the (I_rec, Q_rec) samples the controller
//! consumes.

use qjump_core::models::CavityParams;
use qjump_core::{CoreError, StateVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::compile::{CompiledModel, DriveMode, Rk4Buffers};
use crate::jump::ClickEvent;
use crate::rng::trajectory_rng;
use crate::sparse::{norm_sq, scale};
use crate::{C64, EngineError};

/// Raw and filtered heterodyne record of one trajectory.
#[derive(Debug, Clone, Default)]
pub struct HeterodyneRecord {
    /// (t, Re dJ, Im dJ) per step.
    pub raw: Vec<(f64, f64, f64)>,
    /// (t, I_rec, Q_rec) once per T_int.
    pub filtered: Vec<(f64, f64, f64)>,
}

/// One filtered record sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TintSample {
    pub t: f64,
    pub i_rec: f64,
    pub q_rec: f64,
}

/// First-order low-pass plus boxcar sampler for the record chain.
#[derive(Debug, Clone)]
pub struct RecordFilter {
    i: f64,
    q: f64,
    box_i: f64,
    box_q: f64,
    kappa_filter: f64,
    gain: f64,
    t_int: f64,
    steps_per_tint: u32,
    counter: u32,
}

impl RecordFilter {
    pub fn new(cav: &CavityParams, dt: f64) -> Result<Self, EngineError> {
        let ratio = cav.t_int / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 {
            return Err(EngineError::Cadence(format!(
                "T_int = {} us is not an integer multiple of dt = {} us",
                cav.t_int, dt
            )));
        }
        if cav.kappa_filter < 5.0 * cav.kappa {
            log::warn!(
                "kappa_filter = {} is not >> kappa = {}; record distortion expected",
                cav.kappa_filter,
                cav.kappa
            );
        }
        Ok(RecordFilter {
            i: 0.0,
            q: 0.0,
            box_i: 0.0,
            box_q: 0.0,
            kappa_filter: cav.kappa_filter,
            gain: 1.0 / (cav.eta * cav.kappa / 2.0).sqrt(),
            t_int: cav.t_int,
            steps_per_tint: steps as u32,
            counter: 0,
        })
    }

    /// Push one raw increment; returns the boxcar sample when a T_int
    /// window closes.
    #[inline]
    pub fn push(&mut self, t: f64, dt: f64, d_j: C64) -> Option<TintSample> {
        let half = 0.5 * self.kappa_filter;
        self.i += -half * (self.i * dt - self.gain * d_j.re);
        self.q += -half * (self.q * dt - self.gain * d_j.im);
        self.box_i += self.i * dt;
        self.box_q += self.q * dt;
        self.counter += 1;
        if self.counter == self.steps_per_tint {
            let s = TintSample {
                t,
                i_rec: self.box_i / self.t_int,
                q_rec: self.box_q / self.t_int,
            };
            self.box_i = 0.0;
            self.box_q = 0.0;
            self.counter = 0;
            Some(s)
        } else {
            None
        }
    }
}

/// Filter a raw dJ stream into (t, I_rec, Q_rec) samples at cadence T_int.
pub fn filter_record(
    raw: &[(f64, C64)],
    cav: &CavityParams,
    dt: f64,
) -> Result<Vec<TintSample>, EngineError> {
    let mut f = RecordFilter::new(cav, dt)?;
    let mut out = Vec::with_capacity(raw.len() / f.steps_per_tint as usize + 1);
    for &(t, dj) in raw {
        if let Some(s) = f.push(t, dt, dj) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Diffusive stepper for one trajectory of the readout model.
pub struct HeterodyneRunner<'m> {
    pub model: &'m CompiledModel,
    pub dt: f64,
    pub mode: DriveMode,
    pub psi: Vec<C64>,
    pub t: f64,
    pub rng: ChaCha8Rng,
    hazard: f64,
    hazard_target: f64,
    sqrt_dt: f64,
    bufs: Rk4Buffers,
    c_psi: Vec<C64>,
}

impl<'m> HeterodyneRunner<'m> {
    pub fn new(
        model: &'m CompiledModel,
        ket: &StateVector,
        dt: f64,
        seed: u64,
        trajectory_index: u64,
    ) -> Result<Self, EngineError> {
        if dt > model.max_stable_dt {
            return Err(EngineError::StepSize {
                dt,
                bound: model.max_stable_dt,
            });
        }
        if model.record.is_none() {
            return Err(EngineError::Core(CoreError::InvalidParameter(
                "model has no monitored record channel".into(),
            )));
        }
        let mut rng = trajectory_rng(seed, trajectory_index);
        let hazard_target = -(rng.gen::<f64>()).ln();
        Ok(HeterodyneRunner {
            model,
            dt,
            mode: DriveMode::Full,
            psi: ket.amplitudes().to_vec(),
            t: 0.0,
            rng,
            hazard: 0.0,
            hazard_target,
            sqrt_dt: dt.sqrt(),
            bufs: Rk4Buffers::new(model.dim),
            c_psi: vec![C64::new(0.0, 0.0); model.dim],
        })
    }

    /// One Ito step. Returns the record increment dJ and any unmonitored
    /// jump fired within the step.
    #[inline]
    pub fn step(&mut self) -> Result<(C64, Option<ClickEvent>), EngineError> {
        let rec = self.model.record.as_ref().unwrap();
        let dim = self.model.dim;

        // <c> over the normalized state (psi is kept unit-norm)
        rec.lower.matvec_into(&self.psi, &mut self.c_psi);
        let mut c_expect = C64::new(0.0, 0.0);
        for i in 0..dim {
            c_expect += self.psi[i].conj() * self.c_psi[i];
        }

        // record increment dJ = sqrt(eta kappa) <c> dt + dZ
        let dw_i: f64 = self.rng.sample::<f64, _>(StandardNormal);
        let dw_q: f64 = self.rng.sample::<f64, _>(StandardNormal);
        let dz = C64::new(dw_i, dw_q) * (self.sqrt_dt / 2f64.sqrt());
        let d_j = c_expect * rec.sqrt_eta_kappa * self.dt + dz;
        if !d_j.re.is_finite() || !d_j.im.is_finite() {
            return Err(EngineError::Diverged("record increment not finite".into()));
        }

        // deterministic drift (linear no-click generator), then the record
        // innovation sqrt(eta kappa) dJ* c |psi_old>
        self.model
            .rk4_step(self.mode, self.t, self.dt, &mut self.psi, &mut self.bufs);
        let g = d_j.conj() * rec.sqrt_eta_kappa;
        for i in 0..dim {
            self.psi[i] += g * self.c_psi[i];
        }
        self.t += self.dt;

        // renormalize and advance the auxiliary-jump hazard clock
        let m = self.model.moments(&self.psi);
        if m.norm_sq <= 0.0 || !m.norm_sq.is_finite() {
            return Err(EngineError::Diverged("heterodyne norm invalid".into()));
        }
        scale(&mut self.psi, 1.0 / m.norm_sq.sqrt());
        let m = self.model.moments(&self.psi);
        self.hazard += self.model.total_hazard(&m) * self.dt;

        let mut click = None;
        if self.hazard >= self.hazard_target {
            click = Some(self.fire_jump(&m)?);
            self.hazard = 0.0;
            self.hazard_target = -(self.rng.gen::<f64>()).ln();
        }
        Ok((d_j, click))
    }

    fn fire_jump(&mut self, m: &crate::compile::StateMoments) -> Result<ClickEvent, EngineError> {
        let mut total = 0.0;
        let weights: Vec<f64> = self
            .model
            .channels
            .iter()
            .map(|ch| {
                let w = self.model.channel_hazard(ch, m);
                total += w;
                w
            })
            .collect();
        if total <= 0.0 {
            return Err(EngineError::Diverged(
                "hazard clock fired with zero total rate".into(),
            ));
        }
        let mut pick = self.rng.gen::<f64>() * total;
        let mut idx = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if pick < *w {
                idx = k;
                break;
            }
            pick -= w;
        }
        let ch = &self.model.channels[idx];
        let mut post = vec![C64::new(0.0, 0.0); self.model.dim];
        ch.op.matvec_into(&self.psi, &mut post);
        let pn = norm_sq(&post);
        if pn <= 0.0 {
            return Err(EngineError::Diverged("collapse produced a null state".into()));
        }
        scale(&mut post, 1.0 / pn.sqrt());
        self.psi = post;
        Ok(ClickEvent {
            t: self.t,
            channel: ch.kind,
            monitored: false,
        })
    }

    /// Normalized populations of the atom levels.
    pub fn moments(&self) -> crate::compile::StateMoments {
        self.model.moments(&self.psi)
    }

    /// Apply a unitary (or any operator; the state is renormalized).
    pub fn apply_operator(&mut self, op: &crate::sparse::Csr) -> Result<(), EngineError> {
        let mut post = vec![C64::new(0.0, 0.0); self.model.dim];
        op.matvec_into(&self.psi, &mut post);
        let pn = norm_sq(&post);
        if pn <= 0.0 {
            return Err(EngineError::Diverged("operator nulled the state".into()));
        }
        scale(&mut post, 1.0 / pn.sqrt());
        self.psi = post;
        Ok(())
    }
}

/// One diffusive step of a plain model (convenience wrapper).
pub fn step_heterodyne(
    runner: &mut HeterodyneRunner,
) -> Result<(C64, Option<ClickEvent>), EngineError> {
    runner.step()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use qjump_core::models::{
        build_cqed, AtomParams, BrightDrive, CavityParams, LeakageRates, required_n_max,
        AtomLevel,
    };
    use qjump_core::TWO_PI;

    fn quiet_cavity(eta: f64, n_bar: f64) -> (AtomParams, CavityParams) {
        let atom = AtomParams {
            gamma_b: 0.0,
            gamma_d: 0.0,
            bright: BrightDrive::Bichromatic {
                omega_b0: 0.0,
                omega_b1: 0.0,
                delta_b1: 0.0,
                phase_b1: 0.0,
            },
            omega_dg: 0.0,
            delta_dg: 0.0,
            n_th_b: 0.0,
            n_th_d: 0.0,
            gamma_phi_b: 0.0,
            gamma_phi_d: 0.0,
            leakage: LeakageRates::default(),
        };
        let kappa = TWO_PI * 3.62;
        let cav = CavityParams {
            kappa,
            chi_b: TWO_PI * -5.08,
            chi_d: TWO_PI * -0.33,
            delta_r: TWO_PI * -5.08,
            n_bar,
            eta,
            kappa_filter: 10.0 * kappa,
            t_int: 0.26,
            n_max: required_n_max(n_bar.max(1.0)),
        };
        (atom, cav)
    }

    #[test]
    fn empty_cavity_record_is_pure_noise() {
        let (atom, mut cav) = quiet_cavity(0.0, 0.0);
        cav.n_max = 12;
        // eta = 0 leaves no record channel, so use a tiny eta and no drive:
        // <c> = 0 and dJ = dZ
        cav.eta = 0.25;
        let model = build_cqed(&atom, &cav, false)
            .unwrap()
            .drive_gate(qjump_core::models::DriveGate::Probe, false)
            .unwrap();
        let cm = CompiledModel::new(&model).unwrap();
        let vac = model.product_state(AtomLevel::Ground, None);
        let dt = 5e-4;
        let mut runner = HeterodyneRunner::new(&cm, &vac, dt, 5, 0).unwrap();
        let n = 40_000;
        let (mut sum, mut sum2) = (C64::new(0.0, 0.0), 0.0);
        for _ in 0..n {
            let (dj, click) = runner.step().unwrap();
            assert!(click.is_none());
            sum += dj;
            sum2 += dj.re * dj.re;
        }
        let mean = sum / n as f64;
        // E[dJ] = 0 within 4 sigma, Var[Re dJ] = dt/2 within 4 sigma
        let sigma_mean = (dt / 2.0 / n as f64).sqrt();
        assert!(mean.re.abs() < 4.0 * sigma_mean, "mean {mean}");
        assert!(mean.im.abs() < 4.0 * sigma_mean);
        let var = sum2 / n as f64;
        let var_sigma = (2.0f64 / n as f64).sqrt() * (dt / 2.0);
        assert!((var - dt / 2.0).abs() < 4.0 * var_sigma, "var {var}");
    }

    #[test]
    fn pinned_bright_record_mean_tracks_steady_amplitude() {
        // atom pinned in |B| with the probe on: E[dJ/dt] -> sqrt(eta kappa) alpha_B
        let (atom, cav) = quiet_cavity(0.33, 5.0);
        let model = build_cqed(&atom, &cav, false).unwrap();
        let cm = CompiledModel::new(&model).unwrap();
        let alpha_b = model.steady_cavity_amplitude(AtomLevel::Bright).unwrap();
        let start = model.product_state(AtomLevel::Bright, Some(alpha_b));
        let dt = 5e-4;
        let mut runner = HeterodyneRunner::new(&cm, &start, dt, 19, 0).unwrap();
        let n = 120_000; // 60 us
        let mut sum = C64::new(0.0, 0.0);
        for _ in 0..n {
            let (dj, _) = runner.step().unwrap();
            sum += dj;
        }
        let t_total = n as f64 * dt;
        let rate = sum / t_total;
        let want = alpha_b * (cav.eta * cav.kappa).sqrt();
        let sigma = (1.0 / t_total).sqrt(); // Var[dJ]/dt = 1 per quadrature pair
        assert!(
            (rate - want).norm() < 4.0 * sigma,
            "rate {rate} want {want} sigma {sigma}"
        );
    }

    #[test]
    fn unit_efficiency_keeps_trajectories_pure() {
        let (atom, cav) = quiet_cavity(1.0, 5.0);
        let model = build_cqed(&atom, &cav, false).unwrap();
        let cm = CompiledModel::new(&model).unwrap();
        let start = model.product_state(AtomLevel::Ground, None);
        let mut runner = HeterodyneRunner::new(&cm, &start, 5e-4, 7, 0).unwrap();
        for _ in 0..20_000 {
            runner.step().unwrap();
        }
        // ket representation: purity of |psi><psi| after renormalization
        let n = norm_sq(&runner.psi);
        assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        let sv = StateVector::new(ndarray::Array1::from(runner.psi.clone())).unwrap();
        let rho = sv.to_density().unwrap();
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn filter_steady_state_and_boxcar_limit() {
        // constant input <c> = alpha: steady filtered mean = sqrt(2) Re alpha
        let (_, cav) = quiet_cavity(0.33, 5.0);
        let dt = 5e-4;
        let alpha = C64::new(1.7, -0.4);
        let gain_in = (cav.eta * cav.kappa).sqrt();
        let steps = (40.0 * cav.t_int / dt) as usize;
        let raw: Vec<(f64, C64)> = (0..steps)
            .map(|k| ((k + 1) as f64 * dt, alpha * gain_in * dt))
            .collect();
        let samples = filter_record(&raw, &cav, dt).unwrap();
        let last = samples.last().unwrap();
        let scale = (cav.eta * cav.kappa / 2.0).sqrt();
        assert_abs_diff_eq!(last.i_rec, gain_in * alpha.re / scale, epsilon = 1e-3);
        assert_abs_diff_eq!(last.q_rec, gain_in * alpha.im / scale, epsilon = 1e-3);

        // kappa_filter -> huge approaches the plain boxcar of dJ
        let mut wide = cav;
        wide.kappa_filter = 4e4;
        let dt2 = 1e-5;
        let steps2 = (2.0 * cav.t_int / dt2) as usize;
        let raw2: Vec<(f64, C64)> = (0..steps2)
            .map(|k| ((k + 1) as f64 * dt2, alpha * gain_in * dt2))
            .collect();
        let s2 = filter_record(&raw2, &wide, dt2).unwrap();
        let want_i = gain_in * alpha.re / scale;
        assert!((s2[1].i_rec - want_i).abs() < 2e-2 * want_i.abs());
    }

    #[test]
    fn cadence_mismatch_rejected() {
        let (_, cav) = quiet_cavity(0.33, 5.0);
        assert!(matches!(
            RecordFilter::new(&cav, 3.3e-4),
            Err(EngineError::Cadence(_))
        ));
    }
}
