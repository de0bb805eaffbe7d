//! Compiles a [`ModelSpec`] into the sparse generators and channel tables
//! the integrators iterate over.

use ndarray::Array2;
use qjump_core::models::{ChannelKind, DriveGate, ModelSpec};
use qjump_core::C64;

use crate::sparse::Csr;
use crate::EngineError;

/// Which drive configuration the generator describes. `DarkOff` is the
/// monitor-and-catch phase with the dark Rabi drive gated away;
/// `DrivesOff` suspends every coherent drive (feedback/tomography phase).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveMode {
    Full,
    DarkOff,
    DrivesOff,
}

/// Where a channel's jump hazard comes from; all collapse operators here
/// have diagonal c^dag c, so hazards reduce to level populations or the
/// photon number.
#[derive(Debug, Clone, Copy)]
pub enum HazardSrc {
    AtomPop { level: usize, rate: f64 },
    CavityNumber { rate: f64 },
}

#[derive(Debug, Clone)]
pub struct CompChannel {
    pub kind: ChannelKind,
    pub monitored: bool,
    pub op: Csr,
    pub hazard: HazardSrc,
}

struct ModTerm {
    /// -i A and -i A^dag, applied as e^{-i(delta t + phase)} and h.c.
    a: Csr,
    adag: Csr,
    delta: f64,
    phase: f64,
}

/// Sparse, integrator-ready form of a model.
pub struct CompiledModel {
    pub dim: usize,
    pub atom_dim: usize,
    pub cavity_dim: usize,
    gen_full: Csr,
    gen_dark_off: Csr,
    gen_drives_off: Csr,
    modulated: Option<ModTerm>,
    pub channels: Vec<CompChannel>,
    /// bare cavity lowering operator and sqrt(eta kappa) of the monitored
    /// output, when the model carries a record channel.
    pub record: Option<RecordChannel>,
    pub max_stable_dt: f64,
}

#[derive(Debug, Clone)]
pub struct RecordChannel {
    pub lower: Csr,
    pub sqrt_eta_kappa: f64,
    pub eta: f64,
}

/// Populations and photon number of a (possibly unnormalized) state.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateMoments {
    pub pops: [f64; 4],
    pub nbar: f64,
    pub norm_sq: f64,
}

impl CompiledModel {
    pub fn new(model: &ModelSpec) -> Result<Self, EngineError> {
        let dim = model.dim();
        let minus_i = C64::new(0.0, -1.0);

        // generator G = -i H_eff for each drive configuration; the
        // modulated sideband term stays separate so one compile covers all t
        // G = -i H_eff = -i H - 1/2 sum c^dag c
        let h_damp = model.damping_sum().mapv(|z| C64::new(-0.5, 0.0) * z);
        let static_part = |spec: &ModelSpec| -> Array2<C64> {
            let mut h = spec.h_static.clone();
            for d in &spec.drives {
                if d.on && d.modulation.is_none() {
                    h += &d.op;
                }
            }
            h
        };
        let dark_off = model.drive_gate(DriveGate::OmegaDg, false).unwrap_or_else(|_| model.clone());
        let mut drives_off = model.clone();
        for d in &mut drives_off.drives {
            d.on = false;
        }
        let build_gen = |spec: &ModelSpec| {
            let mut g = static_part(spec).mapv(|z| minus_i * z);
            g += &h_damp;
            Csr::from_dense(&g)
        };
        let gen_full = build_gen(model);
        let gen_dark_off = build_gen(&dark_off);
        let gen_drives_off = build_gen(&drives_off);

        let modulated = model
            .drives
            .iter()
            .find(|d| d.on && d.modulation.is_some())
            .map(|d| {
                let (delta, phase) = d.modulation.unwrap();
                let a = d.op.mapv(|z| minus_i * z);
                let adag_h = d.op.t().mapv(|z| z.conj());
                let adag = adag_h.mapv(|z| minus_i * z);
                ModTerm {
                    a: Csr::from_dense(&a),
                    adag: Csr::from_dense(&adag),
                    delta,
                    phase,
                }
            });

        let nc = model.cavity_dim;
        let mut channels = Vec::new();
        let mut record = None;
        for ch in &model.channels {
            if ch.kind == ChannelKind::CavityMonitored {
                // rate = eta kappa read off the |0><1| element
                let sek = ch.op[(0, 1)].re;
                let lower = ch.op.mapv(|z| z / sek);
                record = Some(RecordChannel {
                    lower: Csr::from_dense(&lower),
                    sqrt_eta_kappa: sek,
                    eta: ch.efficiency,
                });
                continue;
            }
            let hazard = match ch.kind {
                ChannelKind::CavityLoss => {
                    let r = ch.op[(0, 1)].norm_sqr();
                    HazardSrc::CavityNumber { rate: r }
                }
                _ => {
                    // find the source level from the nonzero column block
                    let mut src = 0;
                    let mut rate = 0.0;
                    'outer: for i in 0..dim {
                        for j in 0..dim {
                            let v = ch.op[(i, j)];
                            if v != C64::new(0.0, 0.0) {
                                src = j / nc;
                                rate = v.norm_sqr();
                                break 'outer;
                            }
                        }
                    }
                    HazardSrc::AtomPop { level: src, rate }
                }
            };
            channels.push(CompChannel {
                kind: ch.kind,
                monitored: ch.monitored,
                op: Csr::from_dense(&ch.op),
                hazard,
            });
        }

        Ok(CompiledModel {
            dim,
            atom_dim: model.atom_dim,
            cavity_dim: nc,
            gen_full,
            gen_dark_off,
            gen_drives_off,
            modulated,
            channels,
            record,
            max_stable_dt: model.max_stable_dt(),
        })
    }

    #[inline]
    fn gen(&self, mode: DriveMode) -> &Csr {
        match mode {
            DriveMode::Full => &self.gen_full,
            DriveMode::DarkOff => &self.gen_dark_off,
            DriveMode::DrivesOff => &self.gen_drives_off,
        }
    }

    /// y = G(t) x with G = -i H_eff(t) in the given drive configuration.
    #[inline]
    pub fn apply_generator(&self, mode: DriveMode, t: f64, x: &[C64], y: &mut [C64]) {
        self.gen(mode).matvec_into(x, y);
        if mode != DriveMode::DrivesOff {
            if let Some(m) = &self.modulated {
                let ph = C64::from_polar(1.0, -(m.delta * t + m.phase));
                m.a.matvec_axpy(ph, x, y);
                m.adag.matvec_axpy(ph.conj(), x, y);
            }
        }
    }

    /// One classical RK4 step of d psi/dt = G(t) psi (linear, no noise).
    pub fn rk4_step(
        &self,
        mode: DriveMode,
        t: f64,
        dt: f64,
        psi: &mut [C64],
        bufs: &mut Rk4Buffers,
    ) {
        let n = self.dim;
        debug_assert_eq!(psi.len(), n);
        let Rk4Buffers { k1, k2, k3, k4, tmp } = bufs;
        self.apply_generator(mode, t, psi, k1);
        for i in 0..n {
            tmp[i] = psi[i] + 0.5 * dt * k1[i];
        }
        self.apply_generator(mode, t + 0.5 * dt, tmp, k2);
        for i in 0..n {
            tmp[i] = psi[i] + 0.5 * dt * k2[i];
        }
        self.apply_generator(mode, t + 0.5 * dt, tmp, k3);
        for i in 0..n {
            tmp[i] = psi[i] + dt * k3[i];
        }
        self.apply_generator(mode, t + dt, tmp, k4);
        let w = dt / 6.0;
        for i in 0..n {
            psi[i] += w * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }

    /// Level populations, photon number and norm of an unnormalized state,
    /// in one pass.
    #[inline]
    pub fn moments(&self, psi: &[C64]) -> StateMoments {
        let nc = self.cavity_dim;
        let mut m = StateMoments::default();
        for a in 0..self.atom_dim {
            let mut pop = 0.0;
            let base = a * nc;
            for n in 0..nc {
                let w = psi[base + n].norm_sqr();
                pop += w;
                m.nbar += w * n as f64;
            }
            m.pops[a] = pop;
            m.norm_sq += pop;
        }
        m
    }

    /// Total auxiliary-jump hazard rate of the normalized state.
    #[inline]
    pub fn total_hazard(&self, m: &StateMoments) -> f64 {
        let inv = 1.0 / m.norm_sq;
        let mut h = 0.0;
        for ch in &self.channels {
            h += match ch.hazard {
                HazardSrc::AtomPop { level, rate } => rate * m.pops[level] * inv,
                HazardSrc::CavityNumber { rate } => rate * m.nbar * inv,
            };
        }
        h
    }

    /// Hazard of one channel given the moments of the normalized state.
    #[inline]
    pub fn channel_hazard(&self, ch: &CompChannel, m: &StateMoments) -> f64 {
        let inv = 1.0 / m.norm_sq;
        match ch.hazard {
            HazardSrc::AtomPop { level, rate } => rate * m.pops[level] * inv,
            HazardSrc::CavityNumber { rate } => rate * m.nbar * inv,
        }
    }
}

pub struct Rk4Buffers {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4Buffers {
    pub fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Rk4Buffers {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }
}
