//! Deterministic linear no-click propagation: integrates the
//! non-Hermitian Schroedinger equation d|psi~>/dt = -i H_eff |psi~> and
//! returns the unnormalized state together with the survival probability
//! (the final squared norm), i.e. the probability that no jump occurred in
//! any channel over the window.

use qjump_core::models::ModelSpec;
use qjump_core::{CoreError, StateVector};

use crate::compile::{CompiledModel, DriveMode, Rk4Buffers};
use crate::sparse::norm_sq;
use crate::{C64, EngineError};

/// Propagate `ket` for `duration` with step `dt` and no jumps.
pub fn evolve_noclick_linear(
    ket: &StateVector,
    model: &ModelSpec,
    duration: f64,
    dt: f64,
) -> Result<(StateVector, f64), EngineError> {
    let cm = CompiledModel::new(model)?;
    evolve_noclick_compiled(ket, &cm, DriveMode::Full, 0.0, duration, dt)
}

pub fn evolve_noclick_compiled(
    ket: &StateVector,
    cm: &CompiledModel,
    mode: DriveMode,
    t0: f64,
    duration: f64,
    dt: f64,
) -> Result<(StateVector, f64), EngineError> {
    if duration < 0.0 || dt <= 0.0 {
        return Err(EngineError::Core(CoreError::InvalidParameter(
            "duration >= 0 and dt > 0 required".into(),
        )));
    }
    if dt > cm.max_stable_dt {
        return Err(EngineError::StepSize {
            dt,
            bound: cm.max_stable_dt,
        });
    }
    let mut psi: Vec<C64> = ket.amplitudes().to_vec();
    let n0 = norm_sq(&psi);
    let mut bufs = Rk4Buffers::new(cm.dim);
    let steps = (duration / dt).round() as u64;
    // land exactly on duration
    let dt = if steps > 0 { duration / steps as f64 } else { dt };
    let mut t = t0;
    for k in 0..steps {
        cm.rk4_step(mode, t, dt, &mut psi, &mut bufs);
        t = t0 + (k + 1) as f64 * dt;
    }
    let n = norm_sq(&psi);
    if !n.is_finite() {
        return Err(EngineError::Diverged("no-click norm not finite".into()));
    }
    if n > n0 * (1.0 + 1e-6) {
        return Err(EngineError::Diverged(format!(
            "no-click norm grew from {n0} to {n}"
        )));
    }
    let out = StateVector::new(ndarray::Array1::from(psi)).map_err(EngineError::Core)?;
    let survival = n / n0;
    Ok((out, survival))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use qjump_core::analytic::{
        bloch_from_ratio, dark_ground_ratio, mid_flight_time, DriveVariant, MidFlight,
        ThreeLevelRates,
    };
    use qjump_core::models::{build_three_level, AtomParams, ThreeLevelVariant, LEVEL_B, LEVEL_D, LEVEL_G};
    use qjump_core::normalize;

    #[test]
    fn pure_decay_survival() {
        // start in |B> with only gamma decay: survival = exp(-gamma t)
        let params = AtomParams::ideal_coherent(1.3, 0.0, 0.0, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let b = StateVector::basis(3, LEVEL_B);
        let (_, survival) = evolve_noclick_linear(&b, &model, 2.0, 1e-3).unwrap();
        assert_abs_diff_eq!(survival, (-1.3f64 * 2.0).exp(), epsilon = 1e-9);
    }

    #[test]
    fn zero_duration_is_identity() {
        let params = AtomParams::ideal_coherent(1.0, 0.1, 1e-3, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let g = StateVector::basis(3, LEVEL_G);
        let (out, survival) = evolve_noclick_linear(&g, &model, 0.0, 1e-3).unwrap();
        assert_eq!(survival, 1.0);
        for (a, b) in out.amplitudes().iter().zip(g.amplitudes().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn flight_matches_calibrated_closed_form() {
        // ideal-jump parameters; the analytic rate is calibrated to the
        // exact click rate, and the window stops at the mid-flight time
        // where the dropped Riccati term is still below 1e-3
        let params = AtomParams::ideal_coherent(1.0, 0.1, 1e-5, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let rates = ThreeLevelRates::calibrated(0.1, 1e-5, 1.0);
        let tmid = mid_flight_time(&rates, MidFlight::Coherent).unwrap();
        let g = StateVector::basis(3, LEVEL_G);
        let dt = 0.05; // 1/(20 gamma_B): well inside stability, fast
        let mut worst = 0.0f64;
        for k in 1..=50 {
            let t = tmid * k as f64 / 50.0;
            let (psi, _) = evolve_noclick_linear(&g, &model, t, dt).unwrap();
            let (unit, _) = normalize(&psi).unwrap();
            let cg = unit.amplitudes()[LEVEL_G].re;
            let cd = unit.amplitudes()[LEVEL_D].re;
            let (zn, xn, _) = bloch_from_ratio(cd / cg);
            let w = dark_ground_ratio(t, &rates, DriveVariant::Coherent).unwrap();
            let (za, xa, _) = bloch_from_ratio(w);
            worst = worst.max((zn - za).abs()).max((xn - xa).abs());
        }
        assert!(worst < 1e-3, "max deviation {worst:.2e}");
    }

    #[test]
    fn norm_is_nonincreasing() {
        let params = AtomParams::ideal_coherent(1.0, 0.1, 1e-3, 0.01);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let g = StateVector::basis(3, LEVEL_G);
        let mut prev = 1.0;
        for k in 1..40 {
            let (_, s) = evolve_noclick_linear(&g, &model, k as f64 * 5.0, 5e-3).unwrap();
            assert!(s <= prev + 1e-12);
            prev = s;
        }
    }

    #[test]
    fn step_size_guard() {
        let params = AtomParams::ideal_coherent(1.0, 0.1, 1e-3, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let g = StateVector::basis(3, LEVEL_G);
        assert!(matches!(
            evolve_noclick_linear(&g, &model, 1.0, 0.5),
            Err(EngineError::StepSize { .. })
        ));
    }
}
