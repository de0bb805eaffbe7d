//! Dense complex linear algebra for small tensor-product Hilbert spaces,
//! plus the superoperators used by every unraveling.
//!
//! Dimensions here stay below ~100 (a few atom levels times a truncated
//! cavity), so everything is dense; sparsity is the integrator's concern.

use ndarray::{Array1, Array2};

use crate::error::CoreError;
use crate::tol::Tolerances;
use crate::C64;

/// Ordered tensor product of finite-dimensional factors.
///
/// Factor order is fixed at construction: atom factor first, then an
/// optional cavity factor. Total dimension is the product of factor dims.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpace {
    factor_dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self, CoreError> {
        if factor_dims.is_empty() || factor_dims.iter().any(|&d| d < 1) {
            return Err(CoreError::InvalidParameter(
                "every Hilbert factor dim must be >= 1".into(),
            ));
        }
        Ok(HilbertSpace { factor_dims })
    }

    pub fn single(dim: usize) -> Result<Self, CoreError> {
        Self::new(vec![dim])
    }

    pub fn dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn n_factors(&self) -> usize {
        self.factor_dims.len()
    }
}

/// A (possibly unnormalized) pure state; the squared norm is cached.
///
/// Unnormalized states are first-class citizens: the linear no-click
/// evolution shrinks the norm, and norm^2 is the survival probability.
#[derive(Debug, Clone)]
pub struct StateVector {
    amplitudes: Array1<C64>,
    norm_sq: f64,
}

impl StateVector {
    pub fn new(amplitudes: Array1<C64>) -> Result<Self, CoreError> {
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "state amplitudes must be finite".into(),
            ));
        }
        let norm_sq = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        Ok(StateVector {
            amplitudes,
            norm_sq,
        })
    }

    /// Basis ket |i> in a `dim`-dimensional space.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = Array1::zeros(dim);
        amplitudes[index] = C64::new(1.0, 0.0);
        StateVector {
            amplitudes,
            norm_sq: 1.0,
        }
    }

    /// Truncated coherent state |alpha> on `dim` Fock levels, renormalized.
    pub fn coherent(dim: usize, alpha: C64) -> Self {
        let mut amplitudes = Array1::zeros(dim);
        let mut amp = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for n in 0..dim {
            amplitudes[n] = amp;
            amp *= alpha / ((n + 1) as f64).sqrt();
        }
        let mut sv = StateVector::new(amplitudes).expect("finite by construction");
        let (normed, _) = normalize(&sv).expect("coherent state has positive norm");
        sv = normed;
        sv
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Checks the cached norm against a fresh sum (1e-12 relative).
    pub fn norm_cache_consistent(&self, tol: &Tolerances) -> bool {
        let fresh: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        (fresh - self.norm_sq).abs() <= tol.algebraic * fresh.max(1.0)
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |psi><psi| / <psi|psi> as a density matrix.
    pub fn to_density(&self) -> Result<DensityMatrix, CoreError> {
        if self.norm_sq <= 0.0 {
            return Err(CoreError::ZeroNorm);
        }
        let dim = self.dim();
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = self.amplitudes[i] * self.amplitudes[j].conj() / self.norm_sq;
            }
        }
        Ok(DensityMatrix { matrix: m })
    }
}

/// Dense operator with a hermiticity hint checked at construction.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    matrix: Array2<C64>,
    hermitian: bool,
}

impl LinearOperator {
    pub fn new(matrix: Array2<C64>, hermitian: bool) -> Result<Self, CoreError> {
        Self::with_tol(matrix, hermitian, &Tolerances::default())
    }

    pub fn with_tol(
        matrix: Array2<C64>,
        hermitian: bool,
        tol: &Tolerances,
    ) -> Result<Self, CoreError> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(CoreError::NotSquare { rows: r, cols: c });
        }
        if hermitian {
            let dev = hermiticity_deviation(&matrix);
            let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let bound = tol.algebraic * scale.max(1.0);
            if dev > bound {
                return Err(CoreError::NotHermitian {
                    deviation: dev,
                    tol: bound,
                });
            }
        }
        Ok(LinearOperator { matrix, hermitian })
    }

    pub fn identity(dim: usize) -> Self {
        LinearOperator {
            matrix: Array2::eye(dim),
            hermitian: true,
        }
    }

    /// |a><b| scaled by `coeff` in a `dim`-dimensional space.
    pub fn ketbra(dim: usize, a: usize, b: usize, coeff: C64) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[(a, b)] = coeff;
        LinearOperator {
            hermitian: a == b && coeff.im == 0.0,
            matrix: m,
        }
    }

    /// Fock-space annihilation operator on `dim` levels.
    pub fn annihilation(dim: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        for n in 1..dim {
            m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        LinearOperator {
            matrix: m,
            hermitian: false,
        }
    }

    /// Fock-space number operator on `dim` levels.
    pub fn number(dim: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        for n in 0..dim {
            m[(n, n)] = C64::new(n as f64, 0.0);
        }
        LinearOperator {
            matrix: m,
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn is_hermitian_hint(&self) -> bool {
        self.hermitian
    }

    pub fn dagger(&self) -> LinearOperator {
        let mut m = Array2::zeros(self.matrix.raw_dim());
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                m[(i, j)] = self.matrix[(j, i)].conj();
            }
        }
        LinearOperator {
            matrix: m,
            hermitian: self.hermitian,
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector, CoreError> {
        if self.dim() != psi.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        StateVector::new(self.matrix.dot(psi.amplitudes()))
    }

    pub fn scale(&self, s: C64) -> LinearOperator {
        LinearOperator {
            matrix: self.matrix.mapv(|z| z * s),
            hermitian: self.hermitian && s.im == 0.0,
        }
    }

    pub fn add(&self, other: &LinearOperator) -> Result<LinearOperator, CoreError> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(LinearOperator {
            matrix: &self.matrix + &other.matrix,
            hermitian: self.hermitian && other.hermitian,
        })
    }
}

pub fn hermiticity_deviation(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Density matrix; validation checks hermiticity, unit trace, and
/// positivity (smallest eigenvalue above -1e-8).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(matrix: Array2<C64>) -> Result<Self, CoreError> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(CoreError::NotSquare { rows: r, cols: c });
        }
        Ok(DensityMatrix { matrix })
    }

    pub fn pure(psi: &StateVector) -> Result<Self, CoreError> {
        psi.to_density()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<C64> {
        &mut self.matrix
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    pub fn purity(&self) -> f64 {
        let sq = self.matrix.dot(&self.matrix);
        (0..self.dim()).map(|i| sq[(i, i)].re).sum()
    }

    /// Smallest eigenvalue via cyclic Jacobi on the hermitized matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let eigs = hermitian_eigenvalues(&self.matrix);
        eigs.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Full validation: hermitian within 1e-10, trace 1 within 1e-10,
    /// eigenvalues >= -1e-8.
    pub fn validate(&self, tol: &Tolerances) -> Result<(), CoreError> {
        let dev = hermiticity_deviation(&self.matrix);
        if dev > tol.physical {
            return Err(CoreError::InvalidDensity(format!(
                "hermiticity deviation {dev:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol.physical || tr.im.abs() > tol.physical {
            return Err(CoreError::InvalidDensity(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(CoreError::InvalidDensity(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }
}

/// Eigenvalues of a hermitian complex matrix by cyclic Jacobi rotations.
///
/// Plenty for the <=100 dimensional matrices used here; avoids pulling a
/// LAPACK backend into the build.
pub fn hermitian_eigenvalues(m: &Array2<C64>) -> Vec<f64> {
    let n = m.nrows();
    // hermitize to kill rounding asymmetry
    let mut a = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        }
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-14 * scale;
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm() <= tol * 1e-2 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = apq / apq.norm();
                let theta = 0.5 * (2.0 * apq.norm()).atan2(app - aqq);
                let (s, c) = theta.sin_cos();
                // unitary: row/col rotation with complex phase
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c + akq * s * phase.conj();
                    a[(k, q)] = -akp * s * phase + akq * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c + aqk * s * phase;
                    a[(q, k)] = -apk * s * phase.conj() + aqk * c;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)].re).collect()
}

/// Kronecker product of factors in declared factor order.
///
/// Rejects a factor whose dimension disagrees with the Hilbert space,
/// reporting the offending index.
pub fn tensor(
    space: &HilbertSpace,
    factors: &[&LinearOperator],
) -> Result<LinearOperator, CoreError> {
    if factors.len() != space.n_factors() {
        return Err(CoreError::InvalidParameter(format!(
            "expected {} tensor factors, got {}",
            space.n_factors(),
            factors.len()
        )));
    }
    for (index, (f, &d)) in factors.iter().zip(space.factor_dims()).enumerate() {
        if f.dim() != d {
            return Err(CoreError::TensorFactorMismatch {
                index,
                expected: d,
                got: f.dim(),
            });
        }
    }
    let mut acc = factors[0].matrix().clone();
    let mut herm = factors[0].hermitian;
    for f in &factors[1..] {
        acc = kron(&acc, f.matrix());
        herm = herm && f.hermitian;
    }
    Ok(LinearOperator {
        matrix: acc,
        hermitian: herm,
    })
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// <psi|A|psi>/<psi|psi>; expectation values are taken over the normalized
/// state, so global phase and positive rescaling drop out.
pub fn expect_ket(op: &LinearOperator, psi: &StateVector) -> Result<C64, CoreError> {
    if op.dim() != psi.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: op.dim(),
            got: psi.dim(),
        });
    }
    if psi.norm_sq() <= 0.0 {
        return Err(CoreError::ZeroNorm);
    }
    let ap = op.matrix().dot(psi.amplitudes());
    let num: C64 = psi
        .amplitudes()
        .iter()
        .zip(ap.iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(num / psi.norm_sq())
}

/// Tr[A rho].
pub fn expect_rho(op: &LinearOperator, rho: &DensityMatrix) -> Result<C64, CoreError> {
    if op.dim() != rho.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: op.dim(),
            got: rho.dim(),
        });
    }
    let prod = op.matrix().dot(rho.matrix());
    Ok((0..op.dim()).map(|i| prod[(i, i)]).sum())
}

/// Which superoperator of the measurement calculus to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperopKind {
    /// D[c]rho = c rho c^dag - 1/2 {c^dag c, rho}
    Dissipator,
    /// G[c]rho = c rho c^dag / Tr[c rho c^dag] - rho  (jump reset)
    Jump,
    /// H[c]rho = c rho + rho c^dag - Tr[c rho + rho c^dag] rho
    Innovation,
}

pub fn superop(
    kind: SuperopKind,
    c: &LinearOperator,
    rho: &DensityMatrix,
) -> Result<Array2<C64>, CoreError> {
    match kind {
        SuperopKind::Dissipator => lindblad_dissipator(c, rho),
        SuperopKind::Jump => jump_superop(c, rho),
        SuperopKind::Innovation => innovation_superop(c, rho),
    }
}

/// D[c]rho = c rho c^dag - 1/2 {c^dag c, rho}; trace-free for any c, rho.
pub fn lindblad_dissipator(
    c: &LinearOperator,
    rho: &DensityMatrix,
) -> Result<Array2<C64>, CoreError> {
    check_dims(c, rho)?;
    let cm = c.matrix();
    let cd = c.dagger();
    let cdc = cd.matrix().dot(cm);
    let crc = cm.dot(rho.matrix()).dot(cd.matrix());
    let anti = cdc.dot(rho.matrix()) + rho.matrix().dot(&cdc);
    Ok(crc - anti.mapv(|z| 0.5 * z))
}

/// Jump (reset) superoperator G[c]rho = c rho c^dag / Tr[c rho c^dag] - rho.
///
/// The normalization uses c rho c^dag, the post-jump (reset) state of the
/// generalized measurement update; the conjugated ordering that sometimes
/// appears in symbol lists does not reproduce the reset physics.
pub fn jump_superop(c: &LinearOperator, rho: &DensityMatrix) -> Result<Array2<C64>, CoreError> {
    check_dims(c, rho)?;
    let cd = c.dagger();
    let crc = c.matrix().dot(rho.matrix()).dot(cd.matrix());
    let p: C64 = (0..c.dim()).map(|i| crc[(i, i)]).sum();
    if p.re <= 0.0 {
        return Err(CoreError::ZeroJumpProbability);
    }
    Ok(crc.mapv(|z| z / p.re) - rho.matrix())
}

/// Innovation superoperator H[c]rho = c rho + rho c^dag - Tr[...] rho.
pub fn innovation_superop(
    c: &LinearOperator,
    rho: &DensityMatrix,
) -> Result<Array2<C64>, CoreError> {
    check_dims(c, rho)?;
    let cd = c.dagger();
    let lin = c.matrix().dot(rho.matrix()) + rho.matrix().dot(cd.matrix());
    let tr: C64 = (0..c.dim()).map(|i| lin[(i, i)]).sum();
    Ok(lin - rho.matrix().mapv(|z| z * tr))
}

fn check_dims(c: &LinearOperator, rho: &DensityMatrix) -> Result<(), CoreError> {
    if c.dim() != rho.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: c.dim(),
            got: rho.dim(),
        });
    }
    Ok(())
}

/// Returns the unit-norm state and the pre-normalization norm^2, which is
/// the survival probability of the no-click evolution that produced it.
pub fn normalize(psi: &StateVector) -> Result<(StateVector, f64), CoreError> {
    let n2 = psi.norm_sq();
    if n2 <= 0.0 {
        return Err(CoreError::ZeroNorm);
    }
    let inv = 1.0 / n2.sqrt();
    let amplitudes = psi.amplitudes().mapv(|a| a * inv);
    Ok((
        StateVector {
            amplitudes,
            norm_sq: 1.0,
        },
        n2,
    ))
}
