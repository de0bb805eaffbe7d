//! Photodetection unraveling by the waiting-time method: the unnormalized
//! state is propagated linearly while its squared norm, the no-jump
//! survival probability, is compared against a single uniform draw per
//! inter-jump interval; the crossing fixes the jump time, the channel is
//! drawn proportional to its instantaneous rate, the collapse operator is
//! applied, and the state renormalized.

use qjump_core::models::{ChannelKind, ModelSpec};
use qjump_core::{CoreError, StateVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::compile::{CompiledModel, DriveMode, Rk4Buffers};
use crate::rng::trajectory_rng;
use crate::sparse::{norm_sq, scale};
use crate::{C64, EngineError};

/// One detector event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    pub t: f64,
    pub channel: ChannelKind,
    /// false for jumps an observer cannot see (pump absorptions, lost
    /// photons); the no-click clock still resets on them.
    pub monitored: bool,
}

/// One stochastic realization in flight: unnormalized ket, clock,
/// accumulated log of the survival probability, and its own RNG stream.
pub struct TrajectoryState {
    pub psi: Vec<C64>,
    pub t: f64,
    pub log_norm: f64,
    pub rng: ChaCha8Rng,
    jump_target: f64,
}

impl TrajectoryState {
    pub fn new(ket: &StateVector, seed: u64, trajectory_index: u64) -> Self {
        let mut rng = trajectory_rng(seed, trajectory_index);
        let jump_target = rng.gen::<f64>();
        TrajectoryState {
            psi: ket.amplitudes().to_vec(),
            t: 0.0,
            log_norm: 0.0,
            rng,
            jump_target,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.psi)
    }

    pub fn normalized_state(&self) -> StateVector {
        let n = self.norm_sq().sqrt();
        StateVector::new(ndarray::Array1::from(
            self.psi.iter().map(|z| z / n).collect::<Vec<_>>(),
        ))
        .expect("finite state")
    }
}

/// Jump-unraveling stepper for one trajectory.
pub struct JumpRunner<'m> {
    pub model: &'m CompiledModel,
    pub dt: f64,
    pub mode: DriveMode,
    bufs: Rk4Buffers,
}

impl<'m> JumpRunner<'m> {
    pub fn new(model: &'m CompiledModel, dt: f64) -> Result<Self, EngineError> {
        if dt > model.max_stable_dt {
            return Err(EngineError::StepSize {
                dt,
                bound: model.max_stable_dt,
            });
        }
        Ok(JumpRunner {
            model,
            dt,
            mode: DriveMode::Full,
            bufs: Rk4Buffers::new(model.dim),
        })
    }

    /// Advance by one dt; returns the click fired in this step, if any.
    /// At most one jump per step occurs (valid for dt * total rate << 1).
    pub fn step(&mut self, state: &mut TrajectoryState) -> Result<Option<ClickEvent>, EngineError> {
        let n_before = norm_sq(&state.psi);
        self.model
            .rk4_step(self.mode, state.t, self.dt, &mut state.psi, &mut self.bufs);
        state.t += self.dt;
        let n_after = norm_sq(&state.psi);
        if !n_after.is_finite() || n_after > n_before * (1.0 + 1e-6) {
            return Err(EngineError::Diverged(format!(
                "jump unraveling norm {n_before} -> {n_after}"
            )));
        }
        if n_after > state.jump_target {
            return Ok(None);
        }
        // crossing happened inside this step: log-linear interpolation of
        // the survival decay locates the click time to O(dt^2)
        let frac = if n_before > n_after && n_before > 0.0 {
            ((n_before / state.jump_target).ln() / (n_before / n_after).ln()).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let t_click = state.t - self.dt + frac * self.dt;

        // pick the channel proportional to <c^dag c> at the crossing
        let m = self.model.moments(&state.psi);
        let mut weights = Vec::with_capacity(self.model.channels.len());
        let mut total = 0.0;
        for ch in &self.model.channels {
            let w = self.model.channel_hazard(ch, &m);
            weights.push(w);
            total += w;
        }
        if total <= 0.0 {
            return Err(EngineError::Diverged(
                "norm crossed the jump target with zero total rate".into(),
            ));
        }
        let mut pick = state.rng.gen::<f64>() * total;
        let mut idx = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if pick < *w {
                idx = k;
                break;
            }
            pick -= w;
        }
        let ch = &self.model.channels[idx];

        // collapse, renormalize, restart the survival clock
        let mut post = vec![C64::new(0.0, 0.0); self.model.dim];
        ch.op.matvec_into(&state.psi, &mut post);
        let pn = norm_sq(&post);
        if pn <= 0.0 {
            return Err(EngineError::Diverged("collapse produced a null state".into()));
        }
        scale(&mut post, 1.0 / pn.sqrt());
        state.psi = post;
        state.log_norm += state.jump_target.ln();
        state.jump_target = state.rng.gen::<f64>();
        Ok(Some(ClickEvent {
            t: t_click,
            channel: ch.kind,
            monitored: ch.monitored,
        }))
    }

    /// Run for `duration`, appending clicks; `sample` is called after every
    /// step with (t, unnormalized psi).
    pub fn run<F: FnMut(f64, &[C64])>(
        &mut self,
        state: &mut TrajectoryState,
        duration: f64,
        clicks: &mut Vec<ClickEvent>,
        mut sample: F,
    ) -> Result<(), EngineError> {
        let steps = (duration / self.dt).round() as u64;
        for _ in 0..steps {
            if let Some(c) = self.step(state)? {
                clicks.push(c);
            }
            sample(state.t, &state.psi);
        }
        Ok(())
    }
}

/// Convenience wrapper: one dt of the jump unraveling on a plain model.
pub fn step_jump_unravel(
    state: &mut TrajectoryState,
    model: &ModelSpec,
    dt: f64,
) -> Result<Option<ClickEvent>, EngineError> {
    // total-rate guard: dt * max rate must stay small
    let max_rate: f64 = model
        .channels
        .iter()
        .map(|c| c.op.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if dt * max_rate >= 0.1 {
        return Err(EngineError::StepSize {
            dt,
            bound: 0.1 / max_rate,
        });
    }
    let cm = CompiledModel::new(model)?;
    let mut runner = JumpRunner::new(&cm, dt)?;
    runner.step(state)
}

/// Sanity check used by constructors of trajectory states.
pub fn check_trajectory_invariants(state: &TrajectoryState) -> Result<(), CoreError> {
    let n = state.norm_sq();
    if !(n > 0.0 && n <= 1.0 + 1e-9) {
        return Err(CoreError::InvalidParameter(format!(
            "trajectory norm^2 {n} outside (0, 1]"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use qjump_core::models::{build_three_level, AtomParams, ThreeLevelVariant, LEVEL_B};

    #[test]
    fn single_channel_click_times_are_exponential() {
        // |B> decaying at gamma: the click-time histogram over many runs
        // follows exp(gamma), checked by a KS distance bound
        let gamma = 1.0;
        let params = AtomParams::ideal_coherent(gamma, 0.0, 0.0, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let cm = CompiledModel::new(&model).unwrap();
        let n = 20_000usize;
        let mut times = Vec::with_capacity(n);
        for k in 0..n {
            let b = StateVector::basis(3, LEVEL_B);
            let mut st = TrajectoryState::new(&b, 11, k as u64);
            let mut runner = JumpRunner::new(&cm, 5e-3).unwrap();
            let mut clicks = Vec::new();
            runner.run(&mut st, 30.0, &mut clicks, |_, _| {}).unwrap();
            assert_eq!(clicks.len(), 1, "pure decay must click exactly once");
            times.push(clicks[0].t);
        }
        times.sort_by(f64::total_cmp);
        let mean: f64 = times.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0 / gamma).abs() < 3.0 / (n as f64).sqrt());
        // KS distance against the exponential CDF
        let mut d: f64 = 0.0;
        for (i, t) in times.iter().enumerate() {
            let f = 1.0 - (-gamma * t).exp();
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            d = d.max((f - emp_hi).abs()).max((f - emp_lo).abs());
        }
        // 3-sigma-ish bound on the KS statistic
        assert!(d < 1.9 / (n as f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn no_rates_means_schroedinger_flow() {
        let mut params = AtomParams::ideal_coherent(0.0, 0.4, 0.0, 0.0);
        params.gamma_b = 0.0;
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let cm = CompiledModel::new(&model).unwrap();
        let g = StateVector::basis(3, 0);
        let mut st = TrajectoryState::new(&g, 3, 0);
        let mut runner = JumpRunner::new(&cm, 1e-2).unwrap();
        let mut clicks = Vec::new();
        runner.run(&mut st, 20.0, &mut clicks, |_, _| {}).unwrap();
        assert!(clicks.is_empty());
        let n = st.norm_sq();
        assert!((n - 1.0).abs() < 1e-9);
    }
}
