//! Energy-participation-ratio Hamiltonian quantization and dissipation
//! budgeting from user-supplied modal data.
//!
//! Inputs are mode frequencies, junction energies and the participation
//! matrix; outputs are zero-point fluctuations, the Kerr matrix (fourth
//! order, rotating-wave), anharmonicities, Lamb shifts, and quality-factor
//! bounds. hbar = 1 internally: junction energies carry rad/us like the
//! frequencies.

use crate::error::CoreError;

/// Modal data feeding the quantization.
#[derive(Debug, Clone)]
pub struct EprInput {
    /// (label, omega_m) per mode, rad/us.
    pub modes: Vec<(String, f64)>,
    /// (label, E_j) per junction, rad/us with hbar = 1.
    pub junctions: Vec<(String, f64)>,
    /// participations p[m][j] in [0, 1].
    pub p: Vec<Vec<f64>>,
    /// sign bits S[m][j] in {-1, +1}.
    pub s: Vec<Vec<i8>>,
}

impl EprInput {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_junctions(&self) -> usize {
        self.junctions.len()
    }

    fn check_shape(&self) -> Result<(), CoreError> {
        let (m, j) = (self.n_modes(), self.n_junctions());
        if self.p.len() != m
            || self.s.len() != m
            || self.p.iter().any(|row| row.len() != j)
            || self.s.iter().any(|row| row.len() != j)
        {
            return Err(CoreError::DimensionMismatch {
                expected: m * j,
                got: self.p.iter().map(|r| r.len()).sum(),
            });
        }
        if self.p.iter().flatten().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(CoreError::InvalidParameter(
                "participations must lie in [0, 1]".into(),
            ));
        }
        if self.s.iter().flatten().any(|&s| s != 1 && s != -1) {
            return Err(CoreError::InvalidParameter(
                "sign bits must be +1 or -1".into(),
            ));
        }
        Ok(())
    }
}

/// Quantized-Hamiltonian parameters derived from the participations.
#[derive(Debug, Clone)]
pub struct HamiltonianReport {
    /// zero-point fluctuations phi[m][j], dimensionless.
    pub phi: Vec<Vec<f64>>,
    /// Kerr matrix chi[m][n], rad/us; symmetric, negative by convention.
    pub chi: Vec<Vec<f64>>,
    /// anharmonicities alpha_m = chi_mm / 2, rad/us.
    pub alpha: Vec<f64>,
    /// Lamb shifts Delta_m = 1/2 sum_n chi_mn, rad/us.
    pub lamb: Vec<f64>,
    /// dressed frequencies omega_m - Delta_m, rad/us.
    pub dressed: Vec<f64>,
}

/// phi_mj = S_mj sqrt(p_mj omega_m / (2 E_j));
/// chi_mn = -sum_j (omega_m omega_n / (4 E_j)) p_mj p_nj;
/// alpha_m = chi_mm / 2; Delta_m = 1/2 sum_n chi_mn.
pub fn hamiltonian_from_epr(input: &EprInput) -> Result<HamiltonianReport, CoreError> {
    input.check_shape()?;
    if input.junctions.iter().any(|&(_, e)| e <= 0.0) {
        return Err(CoreError::InvalidParameter(
            "junction energies must be > 0".into(),
        ));
    }
    let (m, j) = (input.n_modes(), input.n_junctions());
    let mut phi = vec![vec![0.0; j]; m];
    for mi in 0..m {
        let omega = input.modes[mi].1;
        for ji in 0..j {
            let ej = input.junctions[ji].1;
            phi[mi][ji] =
                (input.s[mi][ji] as f64) * (input.p[mi][ji] * omega / (2.0 * ej)).sqrt();
        }
    }
    // fill the upper triangle and mirror so chi is symmetric to the bit
    let mut chi = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in a..m {
            let mut sum = 0.0;
            for ji in 0..j {
                let ej = input.junctions[ji].1;
                sum += input.modes[a].1 * input.modes[b].1 / (4.0 * ej)
                    * input.p[a][ji]
                    * input.p[b][ji];
            }
            chi[a][b] = -sum;
            chi[b][a] = -sum;
        }
    }
    let alpha: Vec<f64> = (0..m).map(|a| chi[a][a] / 2.0).collect();
    let lamb: Vec<f64> = (0..m).map(|a| 0.5 * chi[a].iter().sum::<f64>()).collect();
    let dressed: Vec<f64> = (0..m).map(|a| input.modes[a].1 - lamb[a]).collect();
    Ok(HamiltonianReport {
        phi,
        chi,
        alpha,
        lamb,
        dressed,
    })
}

/// Constraint report from the participation sum rules.
#[derive(Debug, Clone)]
pub struct EprValidation {
    /// |sum_m p_mj - 1| per junction.
    pub junction_sum_residual: Vec<f64>,
    /// per-mode sum_j p_mj, flagged when above 1.
    pub mode_sums: Vec<f64>,
    pub mode_sum_violations: Vec<usize>,
    /// sum_m S_mj S_mj' sqrt(p_mj p_mj') per junction pair (j < j').
    pub orthogonality_residual: Vec<((usize, usize), f64)>,
}

/// Report-only check of the sum rules and pairwise orthogonality.
pub fn validate_epr(input: &EprInput) -> Result<EprValidation, CoreError> {
    input.check_shape()?;
    let (m, j) = (input.n_modes(), input.n_junctions());
    let junction_sum_residual = (0..j)
        .map(|ji| ((0..m).map(|mi| input.p[mi][ji]).sum::<f64>() - 1.0).abs())
        .collect();
    let mode_sums: Vec<f64> = (0..m).map(|mi| input.p[mi].iter().sum()).collect();
    let mode_sum_violations = mode_sums
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1.0)
        .map(|(i, _)| i)
        .collect();
    let mut orthogonality_residual = Vec::new();
    for a in 0..j {
        for b in (a + 1)..j {
            let r: f64 = (0..m)
                .map(|mi| {
                    (input.s[mi][a] * input.s[mi][b]) as f64
                        * (input.p[mi][a] * input.p[mi][b]).sqrt()
                })
                .sum();
            orthogonality_residual.push(((a, b), r));
        }
    }
    Ok(EprValidation {
        junction_sum_residual,
        mode_sums,
        mode_sum_violations,
        orthogonality_residual,
    })
}

/// One lossy element of the dissipation budget.
#[derive(Debug, Clone)]
pub struct LossChannel {
    pub label: String,
    pub kind: LossKind,
    /// participation of the element in the mode (ignored for Radiative).
    pub participation: f64,
    /// intrinsic material quality factor, or the radiative Q itself.
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Capacitive,
    Inductive,
    /// seam contribution, folded into the inductive budget.
    Seam,
    Radiative,
}

/// Dissipation budget input: every channel of the design.
#[derive(Debug, Clone)]
pub struct DissipationInput {
    pub channels: Vec<LossChannel>,
}

#[derive(Debug, Clone, Copy)]
pub struct QualityBudget {
    pub q_cap: f64,
    pub q_ind: f64,
    pub q_rad: f64,
    pub q_total: f64,
}

/// 1/Q_cap = sum p/Q over capacitive channels; same for inductive (seam
/// included); 1/Q_total adds the radiative loss.
pub fn dissipation_budget(input: &DissipationInput) -> Result<QualityBudget, CoreError> {
    if input.channels.is_empty() {
        return Err(CoreError::InvalidParameter(
            "dissipation budget needs at least one channel".into(),
        ));
    }
    let mut inv_cap = 0.0;
    let mut inv_ind = 0.0;
    let mut inv_rad = 0.0;
    for ch in &input.channels {
        if ch.quality <= 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "channel {} has non-positive quality",
                ch.label
            )));
        }
        if ch.participation < 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "channel {} has negative participation",
                ch.label
            )));
        }
        match ch.kind {
            LossKind::Capacitive => inv_cap += ch.participation / ch.quality,
            LossKind::Inductive | LossKind::Seam => inv_ind += ch.participation / ch.quality,
            LossKind::Radiative => inv_rad += 1.0 / ch.quality,
        }
    }
    let inv_total = inv_cap + inv_ind + inv_rad;
    Ok(QualityBudget {
        q_cap: safe_recip(inv_cap),
        q_ind: safe_recip(inv_ind),
        q_rad: safe_recip(inv_rad),
        q_total: safe_recip(inv_total),
    })
}

fn safe_recip(x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else {
        1.0 / x
    }
}
