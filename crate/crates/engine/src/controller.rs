//! Real-time controller emulation: the two-point hysteretic IQ filter,
//! the monitor-and-catch state machine with its no-click counter, and the
//! intervention rotation on the GD manifold.

use ndarray::Array2;
use qjump_core::analytic::{jump_flight_bloch, ThreeLevelRates};
use qjump_core::models::{AtomLevel, ModelSpec, DriveGate};
use qjump_core::{CoreError, C64};

use crate::compile::CompiledModel;
use crate::heterodyne::HeterodyneRunner;
use crate::EngineError;

/// Thresholds of the IQ filter, in filtered-record units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterThresholds {
    pub i_b: f64,
    pub i_bbar: f64,
    pub q_b: f64,
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.i_bbar < self.i_b) {
            return Err(CoreError::InvalidParameter(format!(
                "hysteresis band requires I_Bbar < I_B (got {} vs {})",
                self.i_bbar, self.i_b
            )));
        }
        Ok(())
    }
}

/// Filter output: bright or not-bright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assign {
    B,
    NotB,
}

/// Two-point hysteretic classification of one (I_rec, Q_rec) sample.
/// Q excursions past Q_B fold into the bright branch (higher-level veto).
#[inline]
pub fn iq_classify(i_rec: f64, q_rec: f64, prev: Assign, thr: &FilterThresholds) -> Assign {
    if q_rec >= thr.q_b || i_rec > thr.i_b {
        Assign::B
    } else if i_rec < thr.i_bbar {
        Assign::NotB
    } else {
        prev
    }
}

/// Counter targets and intervention angles of the catch protocol.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub t_int: f64,
    /// no-click ticks with the dark drive on before gating it.
    pub n_on: u32,
    /// further no-click ticks with the dark drive off; 0 fires at n_on.
    pub n_off: u32,
    pub angles: InterventionPolicy,
    pub gate_dg_during_off: bool,
}

impl ControllerConfig {
    pub fn dt_catch(&self) -> f64 {
        (self.n_on + self.n_off) as f64 * self.t_int
    }
}

/// How the feedback pulse angles depend on the catch duration.
#[derive(Debug, Clone)]
pub enum InterventionPolicy {
    Fixed { theta_i: f64, phi_i: f64 },
    /// Rotate the expected flight state onto the ground pole: theta_I is
    /// the polar angle of the tanh/sech profile at dt_catch, phi_I = pi/2.
    FromFlight { rates: ThreeLevelRates },
}

impl InterventionPolicy {
    pub fn angles(&self, dt_catch: f64) -> (f64, f64) {
        match self {
            InterventionPolicy::Fixed { theta_i, phi_i } => (*theta_i, *phi_i),
            InterventionPolicy::FromFlight { rates } => {
                let (z, x, _) = jump_flight_bloch(dt_catch, rates)
                    .expect("flight profile needs omega_dg > 0");
                (x.atan2(-z), std::f64::consts::FRAC_PI_2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PrepareB,
    MonitorOn,
    MonitorOff,
    Fired,
    Done,
}

/// Controller registers: phase, the no-click counter, the last filter
/// output, and the catch time once fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub phase: Phase,
    pub cnt: u32,
    pub last_assignment: Assign,
    pub catch_time: Option<f64>,
}

impl ControllerState {
    pub fn start() -> Self {
        ControllerState {
            phase: Phase::PrepareB,
            cnt: 0,
            last_assignment: Assign::B,
            catch_time: None,
        }
    }
}

/// Action the controller requests after consuming one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    None,
    /// click clock reset: re-enter the monitor-on phase.
    DeclareB,
    /// gate the dark drive off and keep monitoring.
    GateDgOff,
    /// catch confirmed; apply the feedback pulse.
    FireCatch,
}

/// One controller step per T_int sample.
pub fn controller_step(
    state: &ControllerState,
    assignment: Assign,
    cfg: &ControllerConfig,
) -> Result<(ControllerState, Action), EngineError> {
    if matches!(state.phase, Phase::Fired | Phase::Done) {
        return Err(EngineError::ControllerDone);
    }
    let mut next = *state;
    next.last_assignment = assignment;
    let action = match assignment {
        Assign::B => {
            next.cnt = 0;
            next.phase = Phase::MonitorOn;
            Action::DeclareB
        }
        Assign::NotB => {
            if next.phase == Phase::PrepareB {
                // still waiting for the initial bright preparation
                return Ok((next, Action::None));
            }
            next.cnt += 1;
            if next.cnt == cfg.n_on + cfg.n_off {
                next.phase = Phase::Fired;
                next.catch_time = Some(next.cnt as f64 * cfg.t_int);
                Action::FireCatch
            } else if next.cnt == cfg.n_on && cfg.n_off > 0 {
                next.phase = Phase::MonitorOff;
                if cfg.gate_dg_during_off {
                    Action::GateDgOff
                } else {
                    Action::None
                }
            } else {
                Action::None
            }
        }
    };
    Ok((next, action))
}

/// Rotation by theta_I about the equatorial GD-Bloch axis at azimuth
/// phi_I; identity on the bright level, the higher level, and the cavity.
pub fn intervention_unitary(model: &ModelSpec, theta_i: f64, phi_i: f64) -> Array2<C64> {
    let dim = model.dim();
    let nc = model.cavity_dim;
    let mut u = Array2::eye(dim);
    let (c, s) = ((0.5 * theta_i).cos(), (0.5 * theta_i).sin());
    // n.sigma on the GD block with sigma_x = |D><G| + |G><D|,
    // sigma_y = -i|D><G| + i|G><D|
    let m_i = C64::new(0.0, -1.0);
    let e_phi = C64::from_polar(1.0, phi_i);
    let g = AtomLevel::Ground.index();
    let d = AtomLevel::Dark.index();
    for n in 0..nc {
        let gi = g * nc + n;
        let di = d * nc + n;
        u[(gi, gi)] = C64::new(c, 0.0);
        u[(di, di)] = C64::new(c, 0.0);
        // -i sin(theta/2) (cos(phi) sx + sin(phi) sy)
        u[(di, gi)] = m_i * s * e_phi.conj();
        u[(gi, di)] = m_i * s * e_phi;
    }
    u
}

/// Auto-calibrated thresholds: run short records with the atom pinned in
/// B and in G (atom drives and atom channels stripped), fit the I/Q
/// means and widths, and place I_B at mean_B - 1.5 sigma_B, I_Bbar at
/// mean_G + 1.5 sigma_G, Q_B at mean_G + 3 sigma_G.
pub fn calibrate_thresholds(
    model: &ModelSpec,
    dt: f64,
    seed: u64,
    n_samples: usize,
) -> Result<FilterThresholds, EngineError> {
    let cav = model.cavity.as_ref().ok_or_else(|| {
        EngineError::Core(CoreError::InvalidParameter(
            "threshold calibration needs a readout cavity".into(),
        ))
    })?;
    let pinned = |level: AtomLevel, stream: u64| -> Result<(f64, f64, f64, f64), EngineError> {
        let mut stripped = model.clone();
        stripped.channels.retain(|ch| {
            matches!(
                ch.kind,
                qjump_core::models::ChannelKind::CavityMonitored
                    | qjump_core::models::ChannelKind::CavityLoss
            )
        });
        let stripped = stripped
            .drive_gate(DriveGate::OmegaBg, false)
            .and_then(|m| m.drive_gate(DriveGate::OmegaDg, false))
            .unwrap_or(stripped);
        let cm = CompiledModel::new(&stripped)?;
        let alpha = stripped.steady_cavity_amplitude(level).unwrap();
        let start = stripped.product_state(level, Some(alpha));
        let mut runner = HeterodyneRunner::new(&cm, &start, dt, seed, stream)?;
        let mut filter = crate::heterodyne::RecordFilter::new(cav, dt)?;
        let spt = (cav.t_int / dt).round() as usize;
        let mut is = Vec::with_capacity(n_samples);
        let mut qs = Vec::with_capacity(n_samples);
        // discard a few windows of filter transient
        let burn = 4 * spt;
        let mut k = 0usize;
        while is.len() < n_samples {
            let (dj, _) = runner.step()?;
            k += 1;
            if let Some(s) = filter.push(runner.t, dt, dj) {
                if k > burn {
                    is.push(s.i_rec);
                    qs.push(s.q_rec);
                }
            }
        }
        let stat = |v: &[f64]| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        };
        let (mi, si) = stat(&is);
        let (mq, sq) = stat(&qs);
        Ok((mi, si, mq, sq))
    };
    let (mib, sib, _, _) = pinned(AtomLevel::Bright, 1_000_003)?;
    let (mig, sig, mqg, sqg) = pinned(AtomLevel::Ground, 1_000_007)?;
    let thr = FilterThresholds {
        i_b: mib - 1.5 * sib,
        i_bbar: mig + 1.5 * sig,
        q_b: mqg + 3.0 * sqg,
    };
    thr.validate().map_err(EngineError::Core)?;
    Ok(thr)
}
