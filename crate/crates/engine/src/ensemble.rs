//! Ensemble sampling of the catch and reverse protocols: records are run
//! through the IQ filter, every inferred click opens a sample interval,
//! per-tick GD Bloch components are accumulated on the catch-time grid,
//! and samples terminate when the record flips back to bright. Averaging
//! subtracts the residual bright weight, mirroring the conditioning of
//! the measured tomograms.

use ndarray::Array2;
use qjump_core::models::{AtomLevel, ModelSpec};
use qjump_core::{CoreError, DensityMatrix};
use rand::Rng;
use rayon::prelude::*;

use crate::compile::{CompiledModel, DriveMode};
use crate::controller::{
    controller_step, intervention_unitary, iq_classify, Action, Assign, ControllerConfig,
    ControllerState, FilterThresholds,
};
use crate::heterodyne::{HeterodyneRunner, RecordFilter};
use crate::rng::trajectory_rng;
use crate::sparse::Csr;
use crate::{C64, EngineError};

/// Conditional tomogram on the catch-time grid. Grid points that no
/// sample survived to are reported missing rather than zero.
#[derive(Debug, Clone)]
pub struct ConditionalTomogram {
    pub grid: Vec<f64>,
    pub z: Vec<Option<f64>>,
    pub x: Vec<Option<f64>>,
    pub y: Vec<Option<f64>>,
    pub p_bb: Vec<Option<f64>>,
    pub n_surviving: Vec<u64>,
    pub n_total: u64,
}

impl ConditionalTomogram {
    /// (dt_catch, z, x) rows with data, for fitting.
    pub fn rows(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out = Vec::new();
        for k in 0..self.grid.len() {
            if let (Some(z), Some(x), Some(y)) = (self.z[k], self.x[k], self.y[k]) {
                out.push((self.grid[k], z, x, y));
            }
        }
        out
    }
}

/// Running sums of one worker; merged associatively across workers.
#[derive(Debug, Clone)]
pub struct CatchAccumulator {
    pub sum_z: Vec<f64>,
    pub sum_x: Vec<f64>,
    pub sum_y: Vec<f64>,
    pub sum_pbb: Vec<f64>,
    pub n: Vec<u64>,
    pub n_total: u64,
    /// consecutive not-bright dwells, us.
    pub notb_dwells: Vec<f64>,
    /// consecutive bright dwells, us.
    pub b_dwells: Vec<f64>,
}

impl CatchAccumulator {
    pub fn new(grid_len: usize) -> Self {
        CatchAccumulator {
            sum_z: vec![0.0; grid_len],
            sum_x: vec![0.0; grid_len],
            sum_y: vec![0.0; grid_len],
            sum_pbb: vec![0.0; grid_len],
            n: vec![0; grid_len],
            n_total: 0,
            notb_dwells: Vec::new(),
            b_dwells: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: &CatchAccumulator) {
        for k in 0..self.n.len() {
            self.sum_z[k] += other.sum_z[k];
            self.sum_x[k] += other.sum_x[k];
            self.sum_y[k] += other.sum_y[k];
            self.sum_pbb[k] += other.sum_pbb[k];
            self.n[k] += other.n[k];
        }
        self.n_total += other.n_total;
        self.notb_dwells.extend_from_slice(&other.notb_dwells);
        self.b_dwells.extend_from_slice(&other.b_dwells);
    }

    /// Ensemble average with the bright-weight correction: the Bloch sums
    /// divide by N(dt) - sum P_BB(dt), conditioning the bright level away.
    pub fn finalize(&self, t_int: f64) -> ConditionalTomogram {
        let len = self.n.len();
        let mut out = ConditionalTomogram {
            grid: (0..len).map(|k| k as f64 * t_int).collect(),
            z: vec![None; len],
            x: vec![None; len],
            y: vec![None; len],
            p_bb: vec![None; len],
            n_surviving: self.n.clone(),
            n_total: self.n_total,
        };
        for k in 0..len {
            if self.n[k] == 0 {
                continue;
            }
            let denom = self.n[k] as f64 - self.sum_pbb[k];
            if denom > 0.0 {
                out.z[k] = Some(self.sum_z[k] / denom);
                out.x[k] = Some(self.sum_x[k] / denom);
                out.y[k] = Some(self.sum_y[k] / denom);
            }
            out.p_bb[k] = Some(self.sum_pbb[k] / self.n[k] as f64);
        }
        out
    }
}

/// GD Bloch components and bright weight of a normalized composite ket.
pub fn gd_bloch_of_psi(cm: &CompiledModel, psi: &[C64]) -> (f64, f64, f64, f64) {
    let nc = cm.cavity_dim;
    let g = AtomLevel::Ground.index() * nc;
    let d = AtomLevel::Dark.index() * nc;
    let b = AtomLevel::Bright.index() * nc;
    let mut pg = 0.0;
    let mut pd = 0.0;
    let mut pb = 0.0;
    let mut coh = C64::new(0.0, 0.0);
    let mut norm = 0.0;
    for n in 0..nc {
        pg += psi[g + n].norm_sqr();
        pd += psi[d + n].norm_sqr();
        pb += psi[b + n].norm_sqr();
        coh += psi[d + n] * psi[g + n].conj();
    }
    for z in psi {
        norm += z.norm_sqr();
    }
    let inv = 1.0 / norm;
    let xy = 2.0 * coh * inv;
    ((pd - pg) * inv, xy.re, xy.im, pb * inv)
}

/// Options of the catch-ensemble run.
#[derive(Debug, Clone)]
pub struct CatchOptions {
    pub dt: f64,
    pub seed: u64,
    /// duration of one free-running trajectory chunk, us.
    pub traj_duration: f64,
    pub n_traj: u64,
    pub grid_len: usize,
    /// gate the dark drive off after this many no-click ticks (the
    /// drive-off protocol); None keeps it on throughout.
    pub gate_after_ticks: Option<u32>,
    pub thresholds: FilterThresholds,
}

/// Free-running catch sampling on the heterodyne model.
pub fn run_catch_ensemble(
    model: &ModelSpec,
    opts: &CatchOptions,
) -> Result<(ConditionalTomogram, CatchAccumulator), EngineError> {
    let cav = model.cavity.as_ref().ok_or_else(|| {
        EngineError::Core(CoreError::InvalidParameter(
            "catch sampling needs the readout model".into(),
        ))
    })?;
    if opts.n_traj < 1 {
        return Err(EngineError::Core(CoreError::InvalidParameter(
            "n_traj must be >= 1".into(),
        )));
    }
    let t_int = cav.t_int;
    let cm = CompiledModel::new(model)?;
    let alpha_b = model.steady_cavity_amplitude(AtomLevel::Bright).unwrap();
    let start = model.product_state(AtomLevel::Bright, Some(alpha_b));

    let partials: Vec<Result<CatchAccumulator, String>> = (0..opts.n_traj)
        .into_par_iter()
        .map(|idx| {
            catch_chunk(&cm, cav, &start, opts, idx).map_err(|e| e.to_string())
        })
        .collect();

    let mut acc = CatchAccumulator::new(opts.grid_len);
    for p in partials {
        let p = p.map_err(EngineError::Diverged)?;
        acc.merge(&p);
    }
    if acc.n_total == 0 {
        return Err(EngineError::Empty);
    }
    Ok((acc.finalize(t_int), acc))
}

fn catch_chunk(
    cm: &CompiledModel,
    cav: &qjump_core::models::CavityParams,
    start: &qjump_core::StateVector,
    opts: &CatchOptions,
    idx: u64,
) -> Result<CatchAccumulator, EngineError> {
    let mut acc = CatchAccumulator::new(opts.grid_len);
    let mut runner = HeterodyneRunner::new(cm, start, opts.dt, opts.seed, idx)?;
    let mut filter = RecordFilter::new(cav, opts.dt)?;
    let steps = (opts.traj_duration / opts.dt).round() as u64;

    let mut assign = Assign::B;
    let mut in_sample = false;
    let mut k_tick = 0usize; // catch clock in T_int units
    let mut dwell_ticks = 0u64; // current run length of the assignment
    let mut gated = false;

    for _ in 0..steps {
        let (dj, _) = runner.step()?;
        let Some(s) = filter.push(runner.t, opts.dt, dj) else {
            continue;
        };
        let next = iq_classify(s.i_rec, s.q_rec, assign, &opts.thresholds);
        match (assign, next) {
            (Assign::B, Assign::NotB) => {
                acc.b_dwells.push(dwell_ticks as f64 * cav.t_int);
                dwell_ticks = 1;
                // click: open a sample at dt_catch = 0
                in_sample = true;
                acc.n_total += 1;
                k_tick = 0;
                accumulate(&mut acc, cm, &runner.psi, k_tick);
            }
            (Assign::NotB, Assign::NotB) => {
                dwell_ticks += 1;
                if in_sample {
                    k_tick += 1;
                    if k_tick < opts.grid_len {
                        accumulate(&mut acc, cm, &runner.psi, k_tick);
                    }
                    if let Some(gate) = opts.gate_after_ticks {
                        if !gated && k_tick >= gate as usize {
                            runner.mode = DriveMode::DarkOff;
                            gated = true;
                        }
                    }
                }
            }
            (Assign::NotB, Assign::B) => {
                acc.notb_dwells.push(dwell_ticks as f64 * cav.t_int);
                dwell_ticks = 1;
                in_sample = false;
                if gated {
                    runner.mode = DriveMode::Full;
                    gated = false;
                }
            }
            (Assign::B, Assign::B) => {
                dwell_ticks += 1;
            }
        }
        assign = next;
    }
    Ok(acc)
}

#[inline]
fn accumulate(acc: &mut CatchAccumulator, cm: &CompiledModel, psi: &[C64], k: usize) {
    let (z, x, y, pbb) = gd_bloch_of_psi(cm, psi);
    acc.sum_z[k] += z;
    acc.sum_x[k] += x;
    acc.sum_y[k] += y;
    acc.sum_pbb[k] += pbb;
    acc.n[k] += 1;
}

/// Options of the reverse-protocol run.
#[derive(Debug, Clone)]
pub struct ReverseOptions {
    pub dt: f64,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub thresholds: FilterThresholds,
    /// free-evolution window between the feedback pulse and the readout.
    pub settle: f64,
    pub n_traj: u64,
    /// per-trajectory cap on the hunt for a catch, us.
    pub traj_duration: f64,
    /// control arm: fire at exponentially-random times (mean, us) instead
    /// of at the advance-warning signal.
    pub random_arm_mean: Option<f64>,
}

/// Aggregated success statistics of the reverse protocol.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReverseOutcome {
    pub p_g: f64,
    pub p_b: f64,
    pub p_d: f64,
    pub p_f: f64,
    pub n: u64,
    /// time-averaged unconditioned populations along the records.
    pub avg_pops: [f64; 4],
}

/// Catch-and-reverse on the heterodyne model. Each trajectory hunts for
/// one catch (or a random intervention time in the control arm), applies
/// the feedback rotation, settles with drives off, and reads populations.
pub fn run_reverse_ensemble(
    model: &ModelSpec,
    opts: &ReverseOptions,
) -> Result<ReverseOutcome, EngineError> {
    let cav = model.cavity.as_ref().ok_or_else(|| {
        EngineError::Core(CoreError::InvalidParameter(
            "reverse sampling needs the readout model".into(),
        ))
    })?;
    let cm = CompiledModel::new(model)?;
    let alpha_b = model.steady_cavity_amplitude(AtomLevel::Bright).unwrap();
    let start = model.product_state(AtomLevel::Bright, Some(alpha_b));
    let (theta, phi) = opts.controller.angles.angles(opts.controller.dt_catch());
    let u = Csr::from_dense(&intervention_unitary(model, theta, phi));

    let partials: Vec<Result<PartialReverse, String>> = (0..opts.n_traj)
        .into_par_iter()
        .map(|idx| reverse_chunk(&cm, cav, &start, opts, &u, idx).map_err(|e| e.to_string()))
        .collect();

    let mut pops = [0.0f64; 4];
    let mut upops = [0.0f64; 4];
    let mut n = 0u64;
    let mut uticks = 0u64;
    for p in partials {
        let p = p.map_err(EngineError::Diverged)?;
        if let Some(sample) = p.readout {
            for a in 0..4 {
                pops[a] += sample[a];
            }
            n += 1;
        }
        for a in 0..4 {
            upops[a] += p.pop_sums[a];
        }
        uticks += p.pop_ticks;
    }
    if n == 0 {
        return Err(EngineError::Empty);
    }
    let inv = 1.0 / n as f64;
    let uinv = if uticks > 0 { 1.0 / uticks as f64 } else { 0.0 };
    Ok(ReverseOutcome {
        p_g: pops[0] * inv,
        p_b: pops[1] * inv,
        p_d: pops[2] * inv,
        p_f: pops[3] * inv,
        n,
        avg_pops: [
            upops[0] * uinv,
            upops[1] * uinv,
            upops[2] * uinv,
            upops[3] * uinv,
        ],
    })
}

struct PartialReverse {
    readout: Option<[f64; 4]>,
    pop_sums: [f64; 4],
    pop_ticks: u64,
}

fn reverse_chunk(
    cm: &CompiledModel,
    cav: &qjump_core::models::CavityParams,
    start: &qjump_core::StateVector,
    opts: &ReverseOptions,
    u: &Csr,
    idx: u64,
) -> Result<PartialReverse, EngineError> {
    let mut runner = HeterodyneRunner::new(cm, start, opts.dt, opts.seed, idx)?;
    let mut filter = RecordFilter::new(cav, opts.dt)?;
    let mut ctrl = ControllerState::start();
    let mut assign = Assign::B;
    let steps = (opts.traj_duration / opts.dt).round() as u64;
    let mut pop_sums = [0.0f64; 4];
    let mut pop_ticks = 0u64;

    // control arm: predetermine the firing tick
    let fire_tick: Option<u64> = opts.random_arm_mean.map(|mean| {
        let mut rng = trajectory_rng(opts.seed ^ 0xD1CE_BA5E, idx);
        let e: f64 = -(rng.gen::<f64>()).ln();
        ((e * mean / cav.t_int).ceil() as u64).max(1)
    });
    let mut tick = 0u64;

    for _ in 0..steps {
        let (dj, _) = runner.step()?;
        let Some(s) = filter.push(runner.t, opts.dt, dj) else {
            continue;
        };
        tick += 1;
        {
            let m = runner.moments();
            let inv = 1.0 / m.norm_sq;
            for a in 0..4.min(cm.atom_dim) {
                pop_sums[a] += m.pops[a] * inv;
            }
            pop_ticks += 1;
        }
        let fire = if let Some(ft) = fire_tick {
            tick == ft
        } else {
            assign = iq_classify(s.i_rec, s.q_rec, assign, &opts.thresholds);
            let (next, action) = controller_step(&ctrl, assign, &opts.controller)?;
            ctrl = next;
            match action {
                Action::GateDgOff => {
                    runner.mode = DriveMode::DarkOff;
                    false
                }
                Action::DeclareB => {
                    if runner.mode == DriveMode::DarkOff {
                        runner.mode = DriveMode::Full;
                    }
                    false
                }
                Action::FireCatch => true,
                Action::None => false,
            }
        };
        if fire {
            runner.apply_operator(u)?;
            runner.mode = DriveMode::DrivesOff;
            let settle_steps = (opts.settle / opts.dt).round() as u64;
            for _ in 0..settle_steps {
                runner.step()?;
            }
            let m = runner.moments();
            let inv = 1.0 / m.norm_sq;
            let mut out = [0.0f64; 4];
            for a in 0..4.min(cm.atom_dim) {
                out[a] = m.pops[a] * inv;
            }
            return Ok(PartialReverse {
                readout: Some(out),
                pop_sums,
                pop_ticks,
            });
        }
    }
    Ok(PartialReverse {
        readout: None,
        pop_sums,
        pop_ticks,
    })
}

/// Deterministic reversal of the ideal no-click flight: propagate the
/// reset state for `dt_catch`, rotate by (theta, phi), and return the
/// GD-manifold populations (bright weight conditioned away).
pub fn ideal_reverse_success(
    model: &ModelSpec,
    dt_catch: f64,
    dt: f64,
    theta: f64,
    phi: f64,
) -> Result<(f64, f64), EngineError> {
    let g0 = model.product_state(AtomLevel::Ground, None);
    let (psi, _) = crate::noclick::evolve_noclick_linear(&g0, model, dt_catch, dt)?;
    let u = intervention_unitary(model, theta, phi);
    let rotated = u.dot(psi.amplitudes());
    let nc = model.cavity_dim;
    let mut pg = 0.0;
    let mut pd = 0.0;
    for n in 0..nc {
        pg += rotated[AtomLevel::Ground.index() * nc + n].norm_sqr();
        pd += rotated[AtomLevel::Dark.index() * nc + n].norm_sqr();
    }
    let gd = pg + pd;
    if gd <= 0.0 {
        return Err(EngineError::Empty);
    }
    Ok((pg / gd, pd / gd))
}

/// GD-manifold parametrization of a three-level atom density matrix
/// (basis order G, B, D): total GD weight N, Bloch components, and the
/// bright coherences.
#[derive(Debug, Clone, Copy)]
pub struct GdTomogramParams {
    pub n: f64,
    /// None when the GD manifold is empty.
    pub bloch: Option<(f64, f64, f64)>,
    pub r_bg: f64,
    pub i_bg: f64,
    pub r_bd: f64,
    pub i_bd: f64,
}

pub fn gd_tomogram_params(rho: &DensityMatrix) -> Result<GdTomogramParams, EngineError> {
    if rho.dim() != 3 {
        return Err(EngineError::Core(CoreError::DimensionMismatch {
            expected: 3,
            got: rho.dim(),
        }));
    }
    let m = rho.matrix();
    let g = qjump_core::models::LEVEL_G;
    let b = qjump_core::models::LEVEL_B;
    let d = qjump_core::models::LEVEL_D;
    let n = m[(g, g)].re + m[(d, d)].re;
    let bloch = if n > 0.0 {
        let z = (m[(d, d)].re - m[(g, g)].re) / n;
        let xy = 2.0 * m[(g, d)] / n;
        Some((z, xy.re, xy.im))
    } else {
        None
    };
    Ok(GdTomogramParams {
        n,
        bloch,
        r_bg: m[(g, b)].re,
        i_bg: m[(g, b)].im,
        r_bd: m[(d, b)].re,
        i_bd: m[(d, b)].im,
    })
}

/// Rebuild the density matrix from the parametrization (round-trip check).
pub fn gd_tomogram_reconstruct(p: &GdTomogramParams) -> Result<DensityMatrix, EngineError> {
    let (z, x, y) = p.bloch.unwrap_or((0.0, 0.0, 0.0));
    let g = qjump_core::models::LEVEL_G;
    let b = qjump_core::models::LEVEL_B;
    let d = qjump_core::models::LEVEL_D;
    let mut m = Array2::<C64>::zeros((3, 3));
    m[(g, g)] = C64::new(0.5 * p.n * (1.0 - z), 0.0);
    m[(d, d)] = C64::new(0.5 * p.n * (1.0 + z), 0.0);
    m[(b, b)] = C64::new(1.0 - p.n, 0.0);
    m[(g, d)] = C64::new(0.5 * p.n * x, 0.5 * p.n * y);
    m[(d, g)] = m[(g, d)].conj();
    m[(g, b)] = C64::new(p.r_bg, p.i_bg);
    m[(b, g)] = m[(g, b)].conj();
    m[(d, b)] = C64::new(p.r_bd, p.i_bd);
    m[(b, d)] = m[(d, b)].conj();
    DensityMatrix::new(m).map_err(EngineError::Core)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use qjump_core::models::{build_three_level, AtomParams, ThreeLevelVariant};
    use qjump_core::StateVector;

    #[test]
    fn tomogram_params_pure_ground() {
        let rho = StateVector::basis(3, 0).to_density().unwrap();
        let p = gd_tomogram_params(&rho).unwrap();
        assert_abs_diff_eq!(p.n, 1.0, epsilon = 1e-14);
        let (z, x, y) = p.bloch.unwrap();
        assert_abs_diff_eq!(z, -1.0, epsilon = 1e-14);
        assert_eq!((x, y), (0.0, 0.0));
    }

    #[test]
    fn tomogram_params_maximally_mixed_gd() {
        let mut m = Array2::<C64>::zeros((3, 3));
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(2, 2)] = C64::new(0.5, 0.0);
        let rho = DensityMatrix::new(m).unwrap();
        let p = gd_tomogram_params(&rho).unwrap();
        assert_abs_diff_eq!(p.n, 1.0, epsilon = 1e-15);
        let (z, x, y) = p.bloch.unwrap();
        assert_eq!((z, x, y), (0.0, 0.0, 0.0));
    }

    #[test]
    fn tomogram_round_trip() {
        // random-ish valid density with coherences
        let amps = ndarray::array![
            C64::new(0.6, 0.1),
            C64::new(0.2, -0.3),
            C64::new(0.5, 0.4)
        ];
        let rho = StateVector::new(amps).unwrap().to_density().unwrap();
        let p = gd_tomogram_params(&rho).unwrap();
        let back = gd_tomogram_reconstruct(&p).unwrap();
        for (a, b) in rho.matrix().iter().zip(back.matrix().iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn tomogram_empty_gd_reports_missing() {
        let rho = StateVector::basis(3, 1).to_density().unwrap();
        let p = gd_tomogram_params(&rho).unwrap();
        assert_eq!(p.n, 0.0);
        assert!(p.bloch.is_none());
    }

    #[test]
    fn accumulator_merge_is_order_independent() {
        let mut a = CatchAccumulator::new(4);
        let mut b = CatchAccumulator::new(4);
        for k in 0..4usize {
            let acc = if k % 2 == 0 { &mut a } else { &mut b };
            acc.sum_z[k] += 0.25 * (k as f64 + 1.0);
            acc.sum_x[k] += 0.5;
            acc.sum_pbb[k] += 0.01;
            acc.n[k] += 1;
            acc.n_total += 1;
        }
        let mut ab = CatchAccumulator::new(4);
        ab.merge(&a);
        ab.merge(&b);
        let mut ba = CatchAccumulator::new(4);
        ba.merge(&b);
        ba.merge(&a);
        let ta = ab.finalize(0.26);
        let tb = ba.finalize(0.26);
        for k in 0..4 {
            assert_eq!(ta.z[k], tb.z[k]);
            assert_eq!(ta.n_surviving[k], tb.n_surviving[k]);
        }
    }

    #[test]
    fn ideal_reverse_completes_with_opposite_phase() {
        let params = AtomParams::ideal_coherent(1.0, 0.1, 1e-3, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let half_pi = std::f64::consts::FRAC_PI_2;
        // late catch, completing pulse: the dark weight must dominate
        let (pg, pd) = ideal_reverse_success(&model, 4000.0, 0.01, half_pi, 3.0 * half_pi).unwrap();
        assert!(pd > pg, "pd {pd} pg {pg}");
    }
}
