//! Dense deterministic master-equation integrator; the trace-preserving
//! oracle every unraveling must average back to.

use ndarray::Array2;
use qjump_core::models::ModelSpec;
use qjump_core::{CoreError, DensityMatrix};

use crate::{C64, EngineError};

/// Integrate d rho/dt = -i [H(t), rho] + sum_k D[c_k] rho for `duration`
/// with an RK4 step `dt`. Aborts if the trace drifts beyond 1e-6.
pub fn evolve_lindblad(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    duration: f64,
    dt: f64,
) -> Result<DensityMatrix, EngineError> {
    let mut rho = rho0.clone();
    evolve_lindblad_sampled(model, &mut rho, duration, dt, |_, _| {})?;
    Ok(rho)
}

/// Same as [`evolve_lindblad`] but invokes `sample(t, rho)` after every
/// step, for population traces.
pub fn evolve_lindblad_sampled<F: FnMut(f64, &DensityMatrix)>(
    model: &ModelSpec,
    rho: &mut DensityMatrix,
    duration: f64,
    dt: f64,
    mut sample: F,
) -> Result<(), EngineError> {
    if dt <= 0.0 || duration < 0.0 {
        return Err(EngineError::Core(CoreError::InvalidParameter(
            "duration >= 0 and dt > 0 required".into(),
        )));
    }
    if dt > model.max_stable_dt() {
        return Err(EngineError::StepSize {
            dt,
            bound: model.max_stable_dt(),
        });
    }
    let ops: Vec<(Array2<C64>, Array2<C64>)> = model
        .channels
        .iter()
        .map(|ch| {
            let cd = ch.op.t().mapv(|z| z.conj());
            let cdc = cd.dot(&ch.op);
            (ch.op.clone(), cdc)
        })
        .collect();
    let time_dependent = model
        .drives
        .iter()
        .any(|d| d.on && d.modulation.is_some());
    let h0 = model.hamiltonian(0.0);
    let minus_i = C64::new(0.0, -1.0);

    let rhs = |t: f64, r: &Array2<C64>| -> Array2<C64> {
        let h = if time_dependent { model.hamiltonian(t) } else { h0.clone() };
        let mut out = (h.dot(r) - r.dot(&h)).mapv(|z| minus_i * z);
        for (c, cdc) in &ops {
            let cd = c.t().mapv(|z| z.conj());
            out += &c.dot(r).dot(&cd);
            let anti = cdc.dot(r) + r.dot(cdc);
            out -= &anti.mapv(|z| 0.5 * z);
        }
        out
    };

    let steps = (duration / dt).round().max(0.0) as u64;
    let dt = if steps > 0 { duration / steps as f64 } else { dt };
    let mut t = 0.0;
    for k in 0..steps {
        let r = rho.matrix().clone();
        let k1 = rhs(t, &r);
        let k2 = rhs(t + 0.5 * dt, &(&r + &k1.mapv(|z| z * 0.5 * dt)));
        let k3 = rhs(t + 0.5 * dt, &(&r + &k2.mapv(|z| z * 0.5 * dt)));
        let k4 = rhs(t + dt, &(&r + &k3.mapv(|z| z * dt)));
        let step = (k1 + k2.mapv(|z| 2.0 * z) + k3.mapv(|z| 2.0 * z) + k4).mapv(|z| z * dt / 6.0);
        *rho.matrix_mut() += &step;
        t = (k + 1) as f64 * dt;
        if k % 64 == 0 || k + 1 == steps {
            let tr = rho.trace();
            let drift = (tr.re - 1.0).abs() + tr.im.abs();
            if drift > 1e-6 {
                return Err(EngineError::TraceDrift { drift, t });
            }
        }
        sample(t, rho);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use qjump_core::models::{
        build_three_level, AtomParams, ThreeLevelVariant, LEVEL_B,
    };
    use qjump_core::{expect_rho, LinearOperator, StateVector, Tolerances};

    #[test]
    fn pure_decay_population() {
        let params = AtomParams::ideal_coherent(0.7, 0.0, 0.0, 0.0);
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let rho0 = StateVector::basis(3, LEVEL_B).to_density().unwrap();
        let rho = evolve_lindblad(&model, &rho0, 3.0, 1e-3).unwrap();
        let pb = LinearOperator::ketbra(3, LEVEL_B, LEVEL_B, C64::new(1.0, 0.0));
        let got = expect_rho(&pb, &rho).unwrap().re;
        assert_abs_diff_eq!(got, (-0.7f64 * 3.0).exp(), epsilon = 1e-8);
        rho.validate(&Tolerances::default()).unwrap();
    }

    #[test]
    fn unitary_preserves_purity() {
        let mut params = AtomParams::ideal_coherent(0.0, 0.3, 0.2, 0.0);
        params.gamma_b = 0.0;
        let model = build_three_level(&params, ThreeLevelVariant::Coherent).unwrap();
        let rho0 = StateVector::basis(3, 0).to_density().unwrap();
        let rho = evolve_lindblad(&model, &rho0, 5.0, 1e-3).unwrap();
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-8);
    }
}
