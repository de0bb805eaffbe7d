//! Model builders for the monitored three-level atom: the ideal
//! photodetection atom with a coherent or incoherent bright drive, and the
//! full atom-plus-readout-cavity system with heterodyne monitoring and
//! realistic imperfections (thermal jumps, dephasing, leakage to a
//! catch-all higher level, finite measurement efficiency).
//!
//! Basis order: atom factor first (G, B, D, optionally F), cavity Fock
//! factor second. All rates in rad/us.

use ndarray::Array2;

use crate::error::CoreError;
use crate::linalg::{HilbertSpace, StateVector};
use crate::tol::Tolerances;
use crate::C64;

pub const LEVEL_G: usize = 0;
pub const LEVEL_B: usize = 1;
pub const LEVEL_D: usize = 2;
pub const LEVEL_F: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomLevel {
    Ground,
    Bright,
    Dark,
    Higher,
}

impl AtomLevel {
    pub fn index(self) -> usize {
        match self {
            AtomLevel::Ground => LEVEL_G,
            AtomLevel::Bright => LEVEL_B,
            AtomLevel::Dark => LEVEL_D,
            AtomLevel::Higher => LEVEL_F,
        }
    }
}

/// How the bright (monitored) transition is driven.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BrightDrive {
    /// Rabi drive at rate Omega_BG.
    Coherent { omega_bg: f64 },
    /// Incoherent pump at rate Gamma_BG.
    Incoherent { gamma_bg: f64 },
    /// Two tones: Omega_BG(t) = Omega_B0 + Omega_B1 exp(-i(Delta_B1 t + phase)).
    Bichromatic {
        omega_b0: f64,
        omega_b1: f64,
        delta_b1: f64,
        /// relative phase of the sideband at t = 0; not fixed by the
        /// physics of the unselective drive, default 0.
        phase_b1: f64,
    },
}

/// Rates into and out of the catch-all higher level F. The first index of
/// each name is the destination: `gamma_fg` takes G to F, `gamma_gf` takes
/// F back to G.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LeakageRates {
    pub gamma_fg: f64,
    pub gamma_fd: f64,
    pub gamma_gf: f64,
    pub gamma_df: f64,
}

impl LeakageRates {
    pub fn is_zero(&self) -> bool {
        self.gamma_fg == 0.0 && self.gamma_fd == 0.0 && self.gamma_gf == 0.0 && self.gamma_df == 0.0
    }
}

/// Parameters of the three-level (plus optional F) atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomParams {
    /// B and D radiative decay rates.
    pub gamma_b: f64,
    pub gamma_d: f64,
    pub bright: BrightDrive,
    /// Dark Rabi rate and drive detuning.
    pub omega_dg: f64,
    pub delta_dg: f64,
    /// thermal occupations of the B and D baths.
    pub n_th_b: f64,
    pub n_th_d: f64,
    /// pure dephasing rates of the GB and GD coherences.
    pub gamma_phi_b: f64,
    pub gamma_phi_d: f64,
    pub leakage: LeakageRates,
}

impl AtomParams {
    /// Ideal coherent-drive atom with only the radiative channels.
    pub fn ideal_coherent(gamma_b: f64, omega_bg: f64, omega_dg: f64, gamma_d: f64) -> Self {
        AtomParams {
            gamma_b,
            gamma_d,
            bright: BrightDrive::Coherent { omega_bg },
            omega_dg,
            delta_dg: 0.0,
            n_th_b: 0.0,
            n_th_d: 0.0,
            gamma_phi_b: 0.0,
            gamma_phi_d: 0.0,
            leakage: LeakageRates::default(),
        }
    }

    fn validate(&self) -> Result<(), CoreError> {
        let rates = [
            self.gamma_b,
            self.gamma_d,
            self.omega_dg,
            self.gamma_phi_b,
            self.gamma_phi_d,
            self.leakage.gamma_fg,
            self.leakage.gamma_fd,
            self.leakage.gamma_gf,
            self.leakage.gamma_df,
        ];
        if rates.iter().any(|&r| r < 0.0) {
            return Err(CoreError::InvalidParameter("negative rate".into()));
        }
        if !(0.0..1.0).contains(&self.n_th_b) || !(0.0..1.0).contains(&self.n_th_d) {
            return Err(CoreError::InvalidParameter(
                "thermal occupations must lie in [0, 1)".into(),
            ));
        }
        match self.bright {
            BrightDrive::Coherent { omega_bg } if omega_bg < 0.0 => {
                Err(CoreError::InvalidParameter("negative Omega_BG".into()))
            }
            BrightDrive::Incoherent { gamma_bg } if gamma_bg < 0.0 => {
                Err(CoreError::InvalidParameter("negative Gamma_BG".into()))
            }
            BrightDrive::Bichromatic {
                omega_b0, omega_b1, ..
            } if omega_b0 < 0.0 || omega_b1 < 0.0 => {
                Err(CoreError::InvalidParameter("negative bright tone".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Readout-cavity parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    pub kappa: f64,
    pub chi_b: f64,
    pub chi_d: f64,
    /// probe detuning from the bare cavity; the experiment sits on the
    /// B-shifted line, Delta_R = chi_B.
    pub delta_r: f64,
    /// steady photon number when driven resonantly.
    pub n_bar: f64,
    /// quantum efficiency of the monitoring chain.
    pub eta: f64,
    /// amplifier-chain bandwidth of the record filter.
    pub kappa_filter: f64,
    /// record integration time, us.
    pub t_int: f64,
    /// Fock truncation: levels 0..=n_max.
    pub n_max: usize,
}

impl CavityParams {
    fn validate(&self) -> Result<(), CoreError> {
        if self.kappa <= 0.0 {
            return Err(CoreError::InvalidParameter("kappa must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(CoreError::InvalidParameter("eta must lie in [0, 1]".into()));
        }
        if self.n_bar < 0.0 || self.t_int <= 0.0 || self.kappa_filter <= 0.0 {
            return Err(CoreError::InvalidParameter(
                "n_bar, t_int, kappa_filter must be positive".into(),
            ));
        }
        let tail = coherent_truncation_tail(self.n_bar, self.n_max);
        if tail >= 1e-6 {
            return Err(CoreError::InvalidParameter(format!(
                "n_max = {} truncates a coherent state of {} photons by {:.2e} (limit 1e-6)",
                self.n_max, self.n_bar, tail
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// Poisson weight beyond n_max for mean photon number n_bar.
pub fn coherent_truncation_tail(n_bar: f64, n_max: usize) -> f64 {
    let mut term = (-n_bar).exp();
    let mut cum = term;
    for n in 1..=n_max {
        term *= n_bar / n as f64;
        cum += term;
    }
    (1.0 - cum).max(0.0)
}

/// Smallest n_max keeping the truncated weight below 1e-6.
pub fn required_n_max(n_bar: f64) -> usize {
    let mut n = n_bar.ceil() as usize + 1;
    while coherent_truncation_tail(n_bar, n) >= 1e-6 {
        n += 1;
    }
    n
}

/// Identity of a jump channel; used to label click events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    BrightDecay,
    DarkDecay,
    IncoherentPump,
    BrightThermalUp,
    DarkThermalUp,
    BrightDephase,
    DarkDephase,
    LeakGroundHigher,
    LeakDarkHigher,
    LeakHigherGround,
    LeakHigherDark,
    CavityMonitored,
    CavityLoss,
}

/// A collapse operator with its rate absorbed (op = sqrt(rate) * jump).
#[derive(Debug, Clone)]
pub struct JumpChannel {
    pub kind: ChannelKind,
    pub op: Array2<C64>,
    pub monitored: bool,
    pub efficiency: f64,
}

/// Which drive family a gate acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveGate {
    OmegaDg,
    OmegaBg,
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveKind {
    OmegaDg,
    OmegaBg,
    OmegaBgSideband,
    Probe,
}

impl DriveKind {
    fn family(self) -> DriveGate {
        match self {
            DriveKind::OmegaDg => DriveGate::OmegaDg,
            DriveKind::OmegaBg | DriveKind::OmegaBgSideband => DriveGate::OmegaBg,
            DriveKind::Probe => DriveGate::Probe,
        }
    }
}

/// One Hamiltonian drive term. Static terms carry a hermitian matrix;
/// modulated terms carry the positive-frequency part A and contribute
/// A exp(-i(delta t + phase)) + h.c.
#[derive(Debug, Clone)]
pub struct DriveTerm {
    pub kind: DriveKind,
    pub on: bool,
    pub op: Array2<C64>,
    pub modulation: Option<(f64, f64)>,
}

/// The single object every integrator consumes: Hilbert space, Hamiltonian
/// terms, and the list of collapse channels.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub space: HilbertSpace,
    pub atom_dim: usize,
    pub cavity_dim: usize,
    /// static detuning/dispersive part of H (never gated).
    pub h_static: Array2<C64>,
    pub drives: Vec<DriveTerm>,
    pub channels: Vec<JumpChannel>,
    pub atom: AtomParams,
    pub cavity: Option<CavityParams>,
    pub tol: Tolerances,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.atom_dim * self.cavity_dim
    }

    /// Hermitian Hamiltonian at time t, active drives included.
    pub fn hamiltonian(&self, t: f64) -> Array2<C64> {
        let mut h = self.h_static.clone();
        for d in &self.drives {
            if !d.on {
                continue;
            }
            match d.modulation {
                None => h += &d.op,
                Some((delta, phase)) => {
                    let ph = C64::from_polar(1.0, -(delta * t + phase));
                    let dim = self.dim();
                    for i in 0..dim {
                        for j in 0..dim {
                            let a = d.op[(i, j)];
                            if a != C64::new(0.0, 0.0) {
                                h[(i, j)] += a * ph;
                                h[(j, i)] += (a * ph).conj();
                            }
                        }
                    }
                }
            }
        }
        h
    }

    /// Sum of c^dag c over every channel, monitored or not.
    pub fn damping_sum(&self) -> Array2<C64> {
        let dim = self.dim();
        let mut s = Array2::zeros((dim, dim));
        for ch in &self.channels {
            let cd = ch.op.t().mapv(|z| z.conj());
            s += &cd.dot(&ch.op);
        }
        s
    }

    /// H(t) - (i/2) sum c^dag c: generator of the linear no-click evolution.
    pub fn h_eff(&self, t: f64) -> Array2<C64> {
        let mut h = self.hamiltonian(t);
        let half_i = C64::new(0.0, 0.5);
        h -= &self.damping_sum().mapv(|z| half_i * z);
        h
    }

    /// Returns a copy with the named drive family switched on or off.
    pub fn drive_gate(&self, which: DriveGate, on: bool) -> Result<ModelSpec, CoreError> {
        let mut out = self.clone();
        let mut hit = false;
        for d in &mut out.drives {
            if d.kind.family() == which {
                d.on = on;
                hit = true;
            }
        }
        if !hit {
            return Err(CoreError::UnknownDrive(format!("{which:?}")));
        }
        Ok(out)
    }

    /// Projector |level><level| on the full space.
    pub fn atom_projector(&self, level: AtomLevel) -> Array2<C64> {
        let idx = level.index();
        assert!(idx < self.atom_dim, "level outside atom manifold");
        let mut m = Array2::zeros((self.atom_dim, self.atom_dim));
        m[(idx, idx)] = C64::new(1.0, 0.0);
        self.atom_op(&m)
    }

    /// |a><b| on the atom, identity on the cavity.
    pub fn atom_transition(&self, a: AtomLevel, b: AtomLevel) -> Array2<C64> {
        let mut m = Array2::zeros((self.atom_dim, self.atom_dim));
        m[(a.index(), b.index())] = C64::new(1.0, 0.0);
        self.atom_op(&m)
    }

    fn atom_op(&self, atom_matrix: &Array2<C64>) -> Array2<C64> {
        let dim = self.dim();
        let nc = self.cavity_dim;
        let mut out = Array2::zeros((dim, dim));
        for i in 0..self.atom_dim {
            for j in 0..self.atom_dim {
                let v = atom_matrix[(i, j)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for n in 0..nc {
                    out[(i * nc + n, j * nc + n)] = v;
                }
            }
        }
        out
    }

    /// Cavity annihilation operator on the full space, if there is a cavity.
    pub fn cavity_lowering(&self) -> Option<Array2<C64>> {
        if self.cavity_dim < 2 {
            return None;
        }
        let dim = self.dim();
        let nc = self.cavity_dim;
        let mut out = Array2::zeros((dim, dim));
        for a in 0..self.atom_dim {
            for n in 1..nc {
                out[(a * nc + n - 1, a * nc + n)] = C64::new((n as f64).sqrt(), 0.0);
            }
        }
        Some(out)
    }

    /// Steady coherent amplitude of the probed cavity with the atom pinned
    /// in `level`: alpha = (kappa/2) sqrt(n_bar) / (kappa/2 - i (Delta_R - chi)).
    pub fn steady_cavity_amplitude(&self, level: AtomLevel) -> Option<C64> {
        let cav = self.cavity.as_ref()?;
        let chi = match level {
            AtomLevel::Bright => cav.chi_b,
            AtomLevel::Dark => cav.chi_d,
            _ => 0.0,
        };
        let eps = 0.5 * cav.kappa * cav.n_bar.sqrt();
        Some(C64::new(eps, 0.0) / C64::new(0.5 * cav.kappa, -(cav.delta_r - chi)))
    }

    /// Product state |level> (x) cavity coherent |alpha| (or vacuum).
    pub fn product_state(&self, level: AtomLevel, alpha: Option<C64>) -> StateVector {
        let nc = self.cavity_dim;
        let cav = match alpha {
            Some(a) if nc > 1 => StateVector::coherent(nc, a),
            _ => StateVector::basis(nc, 0),
        };
        let mut amps = ndarray::Array1::zeros(self.dim());
        let base = level.index() * nc;
        for n in 0..nc {
            amps[base + n] = cav.amplitudes()[n];
        }
        StateVector::new(amps).expect("finite amplitudes")
    }

    /// Rate scales limiting the integrator step (excludes the sideband
    /// detuning, which gets its own cycles-resolution bound).
    pub fn stability_rates(&self) -> Vec<f64> {
        let mut rates = vec![
            self.atom.gamma_b,
            self.atom.gamma_d,
            self.atom.omega_dg,
            self.atom.delta_dg.abs(),
        ];
        match self.atom.bright {
            BrightDrive::Coherent { omega_bg } => rates.push(omega_bg),
            BrightDrive::Incoherent { gamma_bg } => rates.push(gamma_bg),
            BrightDrive::Bichromatic {
                omega_b0, omega_b1, ..
            } => {
                rates.push(omega_b0);
                rates.push(omega_b1);
            }
        }
        if let Some(cav) = &self.cavity {
            rates.extend([
                cav.kappa,
                cav.chi_b.abs(),
                cav.chi_d.abs(),
                cav.delta_r.abs(),
                0.5 * cav.kappa * cav.n_bar.sqrt(),
            ]);
        }
        rates
    }

    /// Largest integrator step honoring 0.02/rate on every scalar rate and
    /// fifty points per sideband-modulation cycle.
    pub fn max_stable_dt(&self) -> f64 {
        let mut dt = 0.02
            / self
                .stability_rates()
                .into_iter()
                .fold(1e-12_f64, f64::max);
        for d in &self.drives {
            if let Some((delta, _)) = d.modulation {
                if delta != 0.0 {
                    dt = dt.min(crate::TWO_PI / (50.0 * delta.abs()));
                }
            }
        }
        dt
    }
}

/// Which ideal-atom variant to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreeLevelVariant {
    Coherent,
    Incoherent,
}

/// Ideal photodetection atom: three levels, fluorescence on the bright
/// transition monitored with unit efficiency.
pub fn build_three_level(
    params: &AtomParams,
    variant: ThreeLevelVariant,
) -> Result<ModelSpec, CoreError> {
    params.validate()?;
    let space = HilbertSpace::single(3)?;
    let dim = 3;
    let i = C64::new(0.0, 1.0);
    let mut drives = Vec::new();

    // dark Rabi drive i Omega_DG/2 (|D><G| - |G><D|)
    let mut h_dg = Array2::zeros((dim, dim));
    h_dg[(LEVEL_D, LEVEL_G)] = i * 0.5 * params.omega_dg;
    h_dg[(LEVEL_G, LEVEL_D)] = -i * 0.5 * params.omega_dg;
    drives.push(DriveTerm {
        kind: DriveKind::OmegaDg,
        on: true,
        op: h_dg,
        modulation: None,
    });

    let mut channels = Vec::new();
    let mut push = |kind, a: usize, b: usize, rate: f64, monitored: bool| {
        if rate > 0.0 {
            let mut op = Array2::zeros((dim, dim));
            op[(a, b)] = C64::new(rate.sqrt(), 0.0);
            channels.push(JumpChannel {
                kind,
                op,
                monitored,
                efficiency: if monitored { 1.0 } else { 0.0 },
            });
        }
    };

    match (variant, params.bright) {
        (ThreeLevelVariant::Coherent, BrightDrive::Coherent { omega_bg }) => {
            let mut h_bg = Array2::zeros((dim, dim));
            h_bg[(LEVEL_B, LEVEL_G)] = i * 0.5 * omega_bg;
            h_bg[(LEVEL_G, LEVEL_B)] = -i * 0.5 * omega_bg;
            drives.push(DriveTerm {
                kind: DriveKind::OmegaBg,
                on: true,
                op: h_bg,
                modulation: None,
            });
            push(ChannelKind::BrightDecay, LEVEL_G, LEVEL_B, params.gamma_b, true);
        }
        (ThreeLevelVariant::Incoherent, BrightDrive::Incoherent { gamma_bg }) => {
            push(
                ChannelKind::BrightDecay,
                LEVEL_G,
                LEVEL_B,
                params.gamma_b + gamma_bg,
                true,
            );
            // pump absorptions interrupt the no-click flow but are not
            // themselves detector clicks
            push(ChannelKind::IncoherentPump, LEVEL_B, LEVEL_G, gamma_bg, false);
        }
        _ => {
            return Err(CoreError::InvalidParameter(
                "variant does not match the bright-drive kind".into(),
            ))
        }
    }
    push(ChannelKind::DarkDecay, LEVEL_G, LEVEL_D, params.gamma_d, true);

    Ok(ModelSpec {
        space,
        atom_dim: 3,
        cavity_dim: 1,
        h_static: Array2::zeros((dim, dim)),
        drives,
        channels,
        atom: *params,
        cavity: None,
        tol: Tolerances::default(),
    })
}

/// Full readout model: (3 or 4)-level atom coupled dispersively to a
/// driven, decaying cavity whose output is heterodyne-monitored with
/// efficiency eta; thermal, dephasing and leakage jumps included.
pub fn build_cqed(
    atom: &AtomParams,
    cav: &CavityParams,
    include_f: bool,
) -> Result<ModelSpec, CoreError> {
    atom.validate()?;
    cav.validate()?;
    let (omega_b0, omega_b1, delta_b1, phase_b1) = match atom.bright {
        BrightDrive::Bichromatic {
            omega_b0,
            omega_b1,
            delta_b1,
            phase_b1,
        } => (omega_b0, omega_b1, delta_b1, phase_b1),
        _ => {
            return Err(CoreError::InvalidParameter(
                "the readout model drives the bright transition bichromatically".into(),
            ))
        }
    };
    if include_f && atom.leakage.is_zero() {
        log::warn!("F level requested with all leakage rates zero");
    }
    if !include_f && !atom.leakage.is_zero() {
        return Err(CoreError::InvalidParameter(
            "leakage rates given but include_f is false".into(),
        ));
    }

    let atom_dim = if include_f { 4 } else { 3 };
    let nc = cav.dim();
    let space = HilbertSpace::new(vec![atom_dim, nc])?;
    let dim = atom_dim * nc;
    let i = C64::new(0.0, 1.0);

    let idx = |a: usize, n: usize| a * nc + n;

    // static part: probe-frame detunings plus dispersive coupling.
    // The drive frame puts the cavity at -Delta_R and the dark level at
    // -Delta_DG; the F level carries no dispersive shift.
    let mut h_static = Array2::<C64>::zeros((dim, dim));
    for a in 0..atom_dim {
        let chi = match a {
            LEVEL_B => cav.chi_b,
            LEVEL_D => cav.chi_d,
            _ => 0.0,
        };
        for n in 0..nc {
            let mut e = (chi - cav.delta_r) * n as f64;
            if a == LEVEL_D {
                e -= atom.delta_dg;
            }
            h_static[(idx(a, n), idx(a, n))] = C64::new(e, 0.0);
        }
    }

    let mut drives = Vec::new();

    // probe i kappa/2 sqrt(n_bar) (c^dag - c)
    let eps = 0.5 * cav.kappa * cav.n_bar.sqrt();
    let mut h_probe = Array2::<C64>::zeros((dim, dim));
    for a in 0..atom_dim {
        for n in 1..nc {
            let g = i * eps * (n as f64).sqrt();
            h_probe[(idx(a, n), idx(a, n - 1))] = g;
            h_probe[(idx(a, n - 1), idx(a, n))] = -g;
        }
    }
    drives.push(DriveTerm {
        kind: DriveKind::Probe,
        on: true,
        op: h_probe,
        modulation: None,
    });

    // carrier bright tone i Omega_B0/2 (|B><G| - |G><B|)
    let mut h_b0 = Array2::<C64>::zeros((dim, dim));
    for n in 0..nc {
        h_b0[(idx(LEVEL_B, n), idx(LEVEL_G, n))] = i * 0.5 * omega_b0;
        h_b0[(idx(LEVEL_G, n), idx(LEVEL_B, n))] = -i * 0.5 * omega_b0;
    }
    drives.push(DriveTerm {
        kind: DriveKind::OmegaBg,
        on: true,
        op: h_b0,
        modulation: None,
    });

    // sideband tone: positive-frequency part A = i Omega_B1/2 |B><G|,
    // contributing A e^{-i(Delta_B1 t + phase)} + h.c.
    if omega_b1 > 0.0 {
        let mut a_op = Array2::<C64>::zeros((dim, dim));
        for n in 0..nc {
            a_op[(idx(LEVEL_B, n), idx(LEVEL_G, n))] = i * 0.5 * omega_b1;
        }
        drives.push(DriveTerm {
            kind: DriveKind::OmegaBgSideband,
            on: true,
            op: a_op,
            modulation: Some((delta_b1, phase_b1)),
        });
    }

    // dark Rabi drive
    let mut h_dg = Array2::<C64>::zeros((dim, dim));
    for n in 0..nc {
        h_dg[(idx(LEVEL_D, n), idx(LEVEL_G, n))] = i * 0.5 * atom.omega_dg;
        h_dg[(idx(LEVEL_G, n), idx(LEVEL_D, n))] = -i * 0.5 * atom.omega_dg;
    }
    drives.push(DriveTerm {
        kind: DriveKind::OmegaDg,
        on: true,
        op: h_dg,
        modulation: None,
    });

    // collapse channels
    let mut channels = Vec::new();
    let mut atom_channel = |kind, a: usize, b: usize, rate: f64| {
        if rate > 0.0 {
            let mut op = Array2::<C64>::zeros((dim, dim));
            for n in 0..nc {
                op[(idx(a, n), idx(b, n))] = C64::new(rate.sqrt(), 0.0);
            }
            channels.push(JumpChannel {
                kind,
                op,
                monitored: false,
                efficiency: 0.0,
            });
        }
    };
    atom_channel(
        ChannelKind::BrightDecay,
        LEVEL_G,
        LEVEL_B,
        atom.gamma_b * (atom.n_th_b + 1.0),
    );
    atom_channel(
        ChannelKind::DarkDecay,
        LEVEL_G,
        LEVEL_D,
        atom.gamma_d * (atom.n_th_d + 1.0),
    );
    atom_channel(
        ChannelKind::BrightThermalUp,
        LEVEL_B,
        LEVEL_G,
        atom.gamma_b * atom.n_th_b,
    );
    atom_channel(
        ChannelKind::DarkThermalUp,
        LEVEL_D,
        LEVEL_G,
        atom.gamma_d * atom.n_th_d,
    );
    atom_channel(
        ChannelKind::BrightDephase,
        LEVEL_B,
        LEVEL_B,
        2.0 * atom.gamma_phi_b,
    );
    atom_channel(
        ChannelKind::DarkDephase,
        LEVEL_D,
        LEVEL_D,
        2.0 * atom.gamma_phi_d,
    );
    if include_f {
        atom_channel(
            ChannelKind::LeakGroundHigher,
            LEVEL_F,
            LEVEL_G,
            atom.leakage.gamma_fg,
        );
        atom_channel(
            ChannelKind::LeakDarkHigher,
            LEVEL_F,
            LEVEL_D,
            atom.leakage.gamma_fd,
        );
        atom_channel(
            ChannelKind::LeakHigherGround,
            LEVEL_G,
            LEVEL_F,
            atom.leakage.gamma_gf,
        );
        atom_channel(
            ChannelKind::LeakHigherDark,
            LEVEL_D,
            LEVEL_F,
            atom.leakage.gamma_df,
        );
    }

    // cavity output: monitored at eta kappa, lost at (1 - eta) kappa;
    // the two rates sum to kappa exactly
    let mut lower = Array2::<C64>::zeros((dim, dim));
    for a in 0..atom_dim {
        for n in 1..nc {
            lower[(idx(a, n - 1), idx(a, n))] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    let eta = cav.eta;
    if eta > 0.0 {
        channels.push(JumpChannel {
            kind: ChannelKind::CavityMonitored,
            op: lower.mapv(|z| z * (eta * cav.kappa).sqrt()),
            monitored: true,
            efficiency: eta,
        });
    }
    if eta < 1.0 {
        channels.push(JumpChannel {
            kind: ChannelKind::CavityLoss,
            op: lower.mapv(|z| z * ((1.0 - eta) * cav.kappa).sqrt()),
            monitored: false,
            efficiency: 0.0,
        });
    }

    Ok(ModelSpec {
        space,
        atom_dim,
        cavity_dim: nc,
        h_static,
        drives,
        channels,
        atom: *atom,
        cavity: Some(*cav),
        tol: Tolerances::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermiticity_deviation;
    use crate::TWO_PI;
    use approx::assert_abs_diff_eq;

    pub fn table_atom() -> AtomParams {
        AtomParams {
            gamma_b: 1.0 / 15.0,
            gamma_d: 1.0 / 105.0,
            bright: BrightDrive::Bichromatic {
                omega_b0: TWO_PI * 1.20,
                omega_b1: TWO_PI * 0.60,
                delta_b1: TWO_PI * -30.0,
                phase_b1: 0.0,
            },
            omega_dg: TWO_PI * 0.0216,
            delta_dg: TWO_PI * -0.2745,
            n_th_b: 0.01,
            n_th_d: 0.05,
            gamma_phi_b: 1.0 / 18.0 - 0.5 / 15.0,
            gamma_phi_d: 1.0 / 120.0 - 0.5 / 105.0,
            leakage: LeakageRates::default(),
        }
    }

    pub fn table_cavity() -> CavityParams {
        let chi_b = TWO_PI * -5.08;
        CavityParams {
            kappa: TWO_PI * 3.62,
            chi_b,
            chi_d: TWO_PI * -0.33,
            delta_r: chi_b,
            n_bar: 5.0,
            eta: 0.33,
            kappa_filter: TWO_PI * 36.2,
            t_int: 0.26,
            n_max: required_n_max(5.0),
        }
    }

    #[test]
    fn hamiltonian_hermitian_at_sampled_times() {
        let model = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        for &t in &[0.0, 0.0123, 0.77, 3.21] {
            let h = model.hamiltonian(t);
            assert!(hermiticity_deviation(&h) < 1e-10);
        }
    }

    #[test]
    fn measured_parameter_set_builds() {
        // measured-device set: Omega_DG/2pi = 20 kHz, Delta_DG/2pi = -275 kHz
        let mut atom = table_atom();
        atom.omega_dg = TWO_PI * 0.020;
        atom.delta_dg = TWO_PI * -0.275;
        atom.gamma_b = 1.0 / 28.0;
        atom.gamma_d = 1.0 / 116.0;
        let model = build_cqed(&atom, &table_cavity(), false).unwrap();
        assert_eq!(model.dim(), 3 * model.cavity_dim);
        // simulation set (table values) is distinct but also accepted
        let sim = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        assert!(sim.atom.omega_dg != model.atom.omega_dg);
    }

    #[test]
    fn cavity_rates_sum_to_kappa() {
        let model = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        let kappa = table_cavity().kappa;
        let mut total = 0.0;
        for ch in &model.channels {
            if matches!(
                ch.kind,
                ChannelKind::CavityMonitored | ChannelKind::CavityLoss
            ) {
                // rate is the squared scale of the lowering operator
                let r = ch.op[(0, 1)].norm_sqr();
                total += r;
            }
        }
        assert_abs_diff_eq!(total, kappa, epsilon = 1e-12 * kappa);
    }

    #[test]
    fn closed_gbd_subspace_without_f() {
        let model = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        assert_eq!(model.atom_dim, 3);
        for ch in &model.channels {
            // every collapse maps GBD (x) cavity into itself by construction;
            // verify no operator references a fourth level
            assert_eq!(ch.op.nrows(), model.dim());
        }
    }

    #[test]
    fn leakage_requires_f_level() {
        let mut atom = table_atom();
        atom.leakage.gamma_fg = 0.001;
        assert!(build_cqed(&atom, &table_cavity(), false).is_err());
        let model = build_cqed(&atom, &table_cavity(), true).unwrap();
        assert_eq!(model.atom_dim, 4);
    }

    #[test]
    fn truncation_guard() {
        let mut cav = table_cavity();
        cav.n_max = 8;
        assert!(build_cqed(&table_atom(), &cav, false).is_err());
        assert!(coherent_truncation_tail(5.0, required_n_max(5.0)) < 1e-6);
    }

    #[test]
    fn drive_gate_round_trip() {
        let model = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        let off = model.drive_gate(DriveGate::OmegaDg, false).unwrap();
        let back = off.drive_gate(DriveGate::OmegaDg, true).unwrap();
        let h0 = model.hamiltonian(0.37);
        let h1 = back.hamiltonian(0.37);
        for (a, b) in h0.iter().zip(h1.iter()) {
            assert_eq!(a, b);
        }
        // gating off removes exactly the dark drive term
        let diff = &h0 - &off.hamiltonian(0.37);
        let expect = model
            .drives
            .iter()
            .find(|d| d.kind == DriveKind::OmegaDg)
            .unwrap();
        for (a, b) in diff.iter().zip(expect.op.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn gate_all_drives_leaves_detunings_and_damping() {
        let model = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        let bare = model
            .drive_gate(DriveGate::OmegaDg, false)
            .unwrap()
            .drive_gate(DriveGate::OmegaBg, false)
            .unwrap()
            .drive_gate(DriveGate::Probe, false)
            .unwrap();
        let h = bare.hamiltonian(1.23);
        for (x, y) in h.iter().zip(bare.h_static.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn unknown_gate_on_ideal_model() {
        let params = AtomParams::ideal_coherent(1.0, 0.1, 1e-5, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        assert!(model.drive_gate(DriveGate::Probe, false).is_err());
    }

    #[test]
    fn three_level_channels() {
        let params = AtomParams::ideal_coherent(1.0, 0.1, 1e-5, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        assert_eq!(model.channels.len(), 1); // gamma_d = 0 adds no channel
        assert_eq!(model.channels[0].kind, ChannelKind::BrightDecay);
        assert!(model.channels[0].monitored);

        let mut inc = params;
        inc.bright = BrightDrive::Incoherent { gamma_bg: 0.01 };
        let model = build_three_level(&inc, ThreeLevelVariant::Incoherent).unwrap();
        let decay = model
            .channels
            .iter()
            .find(|c| c.kind == ChannelKind::BrightDecay)
            .unwrap();
        assert_abs_diff_eq!(decay.op[(LEVEL_G, LEVEL_B)].re, (1.01f64).sqrt(), epsilon = 1e-12);
        assert!(model
            .channels
            .iter()
            .any(|c| c.kind == ChannelKind::IncoherentPump && !c.monitored));
        // coherent variant rejects incoherent params
        assert!(build_three_level(&inc, ThreeLevelVariant::Coherent).is_err());
    }

    #[test]
    fn steady_amplitude_resonant_in_bright() {
        let model = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        let ab = model.steady_cavity_amplitude(AtomLevel::Bright).unwrap();
        assert_abs_diff_eq!(ab.re, 5.0f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(ab.im, 0.0, epsilon = 1e-12);
        let ag = model.steady_cavity_amplitude(AtomLevel::Ground).unwrap();
        assert!(ag.norm_sqr() < 1.0);
    }

    #[test]
    fn default_dt_within_stability_bound() {
        let model = build_cqed(&table_atom(), &table_cavity(), false).unwrap();
        let bound = model.max_stable_dt();
        assert!(5e-4 <= bound, "0.5 ns default vs bound {bound}");
        assert!(bound < 1e-3);
    }
}
