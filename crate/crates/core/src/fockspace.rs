//! Truncated single-mode bosonic algebra.
//!
//! Coherent states, displacement and number-rotation operators, and the
//! closed-form coherent overlap law. The truncated matrices double as the
//! brute-force oracle for the analytic branch-coherent backend, so every
//! construction here is kept independent of the closed forms it is checked
//! against.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Default truncation tolerance on the norm deficit of a certified state.
pub const DEFAULT_TOL_TRUNC: f64 = 1e-10;
/// Default tolerance on the unitarity defect of displacement/rotation matrices.
pub const DEFAULT_TOL_UNITARY: f64 = 1e-8;
/// Number of top levels excluded from unitarity checks.
pub const DEFAULT_PROTECTED_MARGIN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("cutoff too small: n_max = {n_max}, norm deficit {deficit:.3e} exceeds tolerance {tol:.1e}")]
    CutoffTooSmall { n_max: usize, deficit: f64, tol: f64 },
    #[error("unitarity defect {defect:.3e} on protected subspace exceeds tolerance {tol:.1e} (n_max = {n_max})")]
    UnitarityDefect { n_max: usize, defect: f64, tol: f64 },
    #[error("dimension mismatch: operator acts on n_max = {operator}, vector has n_max = {vector}")]
    DimensionMismatch { operator: usize, vector: usize },
    #[error("cutoff n_max = {0} is below the minimum {1}")]
    InvalidCutoff(usize, usize),
    #[error("non-finite mode amplitude {0}")]
    NonFinite(Complex64),
}

/// Tolerances for truncated-space constructions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockTolerances {
    pub trunc: f64,
    pub unitary: f64,
    pub margin: usize,
}

impl Default for FockTolerances {
    fn default() -> Self {
        Self {
            trunc: DEFAULT_TOL_TRUNC,
            unitary: DEFAULT_TOL_UNITARY,
            margin: DEFAULT_PROTECTED_MARGIN,
        }
    }
}

/// A coherent label α (or a displacement β); always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAmplitude(Complex64);

impl ModeAmplitude {
    pub const ZERO: ModeAmplitude = ModeAmplitude(Complex64::new(0.0, 0.0));

    pub fn new(value: Complex64) -> Result<Self, FockError> {
        if value.re.is_finite() && value.im.is_finite() {
            Ok(Self(value))
        } else {
            Err(FockError::NonFinite(value))
        }
    }

    /// Panics on non-finite input; intended for literals and internally
    /// generated values that are finite by construction.
    pub fn from_re_im(re: f64, im: f64) -> Self {
        Self::new(Complex64::new(re, im)).expect("finite mode amplitude")
    }

    pub fn real(re: f64) -> Self {
        Self::from_re_im(re, 0.0)
    }

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn norm(self) -> f64 {
        self.0.norm()
    }
}

impl From<ModeAmplitude> for Complex64 {
    fn from(a: ModeAmplitude) -> Self {
        a.0
    }
}

/// Cutoff that keeps the Poisson tail of |α_peak⟩ negligible:
/// ceil(|α|² + 8|α| + 15).
pub fn default_cutoff(alpha_peak: f64) -> usize {
    let a = alpha_peak.abs();
    (a * a + 8.0 * a + 15.0).ceil() as usize
}

/// Coefficients over number states 0..=n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    coeffs: Vec<Complex64>,
}

impl FockVector {
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "a Fock vector needs at least the vacuum level");
        Self { coeffs }
    }

    /// Number state |n⟩ truncated at n_max.
    pub fn number_state(n: usize, n_max: usize) -> Self {
        assert!(n <= n_max);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n_max + 1];
        coeffs[n] = Complex64::new(1.0, 0.0);
        Self { coeffs }
    }

    pub fn n_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// 1 − ‖v‖², the probability mass lost above the cutoff.
    pub fn norm_deficit(&self) -> f64 {
        1.0 - self.norm_sq()
    }

    /// Population in the top `margin` levels; a proxy for how much weight an
    /// evolution has pushed against the cutoff.
    pub fn tail_weight(&self, margin: usize) -> f64 {
        let start = self.coeffs.len().saturating_sub(margin);
        self.coeffs[start..].iter().map(|c| c.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &FockVector) -> Result<Complex64, FockError> {
        if self.n_max() != other.n_max() {
            return Err(FockError::DimensionMismatch {
                operator: self.n_max(),
                vector: other.n_max(),
            });
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn mean_number(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    pub fn number_variance(&self) -> f64 {
        let mean = self.mean_number();
        let second: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| (n * n) as f64 * c.norm_sqr())
            .sum();
        second - mean * mean
    }

    /// ⟨a⟩ for this (possibly unnormalized) vector.
    pub fn mean_annihilation(&self) -> Complex64 {
        self.coeffs
            .windows(2)
            .enumerate()
            .map(|(n, w)| w[0].conj() * w[1] * ((n + 1) as f64).sqrt())
            .sum()
    }

    pub fn scale(&self, s: Complex64) -> FockVector {
        FockVector {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &FockVector) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Coherent-state coefficients e^{−|α|²/2} αⁿ/√(n!) without certification.
/// Magnitudes are built in the log domain so large labels do not underflow.
pub fn coherent_coeffs_unchecked(alpha: ModeAmplitude, n_max: usize) -> FockVector {
    let a = alpha.value();
    let r = a.norm();
    let theta = a.arg();
    let mut coeffs = Vec::with_capacity(n_max + 1);
    if r == 0.0 {
        coeffs.push(Complex64::new(1.0, 0.0));
        coeffs.resize(n_max + 1, Complex64::new(0.0, 0.0));
        return FockVector { coeffs };
    }
    let ln_r = r.ln();
    let mut ln_mag = -0.5 * r * r;
    for n in 0..=n_max {
        if n > 0 {
            ln_mag += ln_r - 0.5 * (n as f64).ln();
        }
        coeffs.push(Complex64::from_polar(ln_mag.exp(), n as f64 * theta));
    }
    FockVector { coeffs }
}

/// Coherent state |α⟩ truncated at n_max, certified against the default
/// truncation tolerance.
pub fn coherent_coeffs(alpha: ModeAmplitude, n_max: usize) -> Result<FockVector, FockError> {
    coherent_coeffs_with_tol(alpha, n_max, DEFAULT_TOL_TRUNC)
}

pub fn coherent_coeffs_with_tol(
    alpha: ModeAmplitude,
    n_max: usize,
    tol: f64,
) -> Result<FockVector, FockError> {
    let v = coherent_coeffs_unchecked(alpha, n_max);
    let deficit = v.norm_deficit();
    if deficit > tol {
        return Err(FockError::CutoffTooSmall { n_max, deficit, tol });
    }
    Ok(v)
}

/// Closed-form ⟨α|β⟩ = exp(−|α|²/2 − |β|²/2 + α*β), evaluated as
/// exp(−|α−β|²/2 + i Im(α*β)) to avoid cancellation at large labels.
pub fn overlap(alpha: ModeAmplitude, beta: ModeAmplitude) -> Complex64 {
    let a = alpha.value();
    let b = beta.value();
    let log_mag = -0.5 * (a - b).norm_sqr();
    let phase = (a.conj() * b).im;
    Complex64::from_polar(log_mag.exp(), phase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Displacement,
    Rotation,
    Ladder,
    Number,
    Custom,
}

/// A truncated single-mode operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    matrix: DMatrix<Complex64>,
    kind: OperatorKind,
}

impl ModeOperator {
    pub fn new(matrix: DMatrix<Complex64>, kind: OperatorKind) -> Self {
        assert!(matrix.is_square() && matrix.nrows() > 0);
        Self { matrix, kind }
    }

    pub fn identity(n_max: usize) -> Self {
        Self::new(DMatrix::identity(n_max + 1, n_max + 1), OperatorKind::Custom)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn n_max(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn adjoint(&self) -> ModeOperator {
        ModeOperator::new(self.matrix.adjoint(), self.kind)
    }

    pub fn compose(&self, rhs: &ModeOperator) -> ModeOperator {
        ModeOperator::new(&self.matrix * &rhs.matrix, OperatorKind::Custom)
    }

    /// max |(U†U − I)_ij| over the protected block {0..=n_max − margin}.
    pub fn unitarity_defect(&self, margin: usize) -> f64 {
        let dim = self.matrix.nrows();
        let keep = dim.saturating_sub(margin).max(1);
        let cols = self.matrix.columns(0, keep);
        let gram = cols.adjoint() * cols;
        let mut worst = 0.0f64;
        for i in 0..keep {
            for j in 0..keep {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

pub fn annihilation(n_max: usize) -> ModeOperator {
    let dim = n_max + 1;
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    ModeOperator::new(m, OperatorKind::Ladder)
}

pub fn creation(n_max: usize) -> ModeOperator {
    ModeOperator::new(annihilation(n_max).matrix.adjoint(), OperatorKind::Ladder)
}

pub fn number(n_max: usize) -> ModeOperator {
    let diag = (0..=n_max).map(|n| Complex64::new(n as f64, 0.0));
    ModeOperator::new(
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n_max + 1, diag)),
        OperatorKind::Number,
    )
}

/// D(β) = exp(β a† − β* a) on the truncated space, by scaling-and-squaring
/// exponentiation of the anti-Hermitian generator.
pub fn displacement_matrix(beta: ModeAmplitude, n_max: usize) -> Result<ModeOperator, FockError> {
    displacement_matrix_with(beta, n_max, FockTolerances::default())
}

pub fn displacement_matrix_with(
    beta: ModeAmplitude,
    n_max: usize,
    tol: FockTolerances,
) -> Result<ModeOperator, FockError> {
    if n_max < 1 {
        return Err(FockError::InvalidCutoff(n_max, 1));
    }
    let b = beta.value();
    let a = annihilation(n_max).matrix;
    let generator = a.adjoint() * b - a * b.conj();
    let op = ModeOperator::new(generator.exp(), OperatorKind::Displacement);
    let defect = op.unitarity_defect(tol.margin);
    if defect > tol.unitary {
        return Err(FockError::UnitarityDefect {
            n_max,
            defect,
            tol: tol.unitary,
        });
    }
    Ok(op)
}

/// exp(iθ a†a): diagonal with entries e^{iθn}.
pub fn rotation_matrix(theta: f64, n_max: usize) -> ModeOperator {
    let diag = (0..=n_max).map(|n| Complex64::from_polar(1.0, theta * n as f64));
    ModeOperator::new(
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n_max + 1, diag)),
        OperatorKind::Rotation,
    )
}

/// Matrix–vector product.
pub fn apply(op: &ModeOperator, v: &FockVector) -> Result<FockVector, FockError> {
    if op.n_max() != v.n_max() {
        return Err(FockError::DimensionMismatch {
            operator: op.n_max(),
            vector: v.n_max(),
        });
    }
    let x = nalgebra::DVector::from_column_slice(&v.coeffs);
    let y = &op.matrix * x;
    Ok(FockVector {
        coeffs: y.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_coefficients() {
        let v = coherent_coeffs(ModeAmplitude::ZERO, 4).unwrap();
        assert_eq!(v.coeffs(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn coherent_series_values() {
        let v = coherent_coeffs(ModeAmplitude::real(1.0), 20).unwrap();
        let e = (-0.5f64).exp();
        assert!((v.coeffs()[0].re - e).abs() < 1e-15);
        assert!((v.coeffs()[2].re - e / 2f64.sqrt()).abs() < 1e-15);
        assert!((v.coeffs()[0].re - 0.60653).abs() < 1e-5);
        assert!((v.coeffs()[2].re - 0.42888).abs() < 1e-5);
    }

    #[test]
    fn undersized_cutoff_is_rejected() {
        let err = coherent_coeffs(ModeAmplitude::real(2.0), 3).unwrap_err();
        // 1 − e^{−4}(1 + 4 + 8 + 32/3)
        let expected = 1.0 - (-4.0f64).exp() * (1.0 + 4.0 + 8.0 + 32.0 / 3.0);
        match err {
            FockError::CutoffTooSmall { deficit, .. } => {
                assert!((deficit - expected).abs() < 1e-12);
                assert!((deficit - 0.567).abs() < 1e-3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_displacement_is_identity() {
        let d = displacement_matrix(ModeAmplitude::ZERO, 12).unwrap();
        assert!((d.matrix() - DMatrix::<Complex64>::identity(13, 13)).norm() < 1e-15);
    }

    #[test]
    fn displaced_vacuum_matches_coherent_series() {
        let beta = ModeAmplitude::from_re_im(0.0, 0.25f64.sqrt());
        let d = displacement_matrix(beta, 30).unwrap();
        let out = apply(&d, &FockVector::number_state(0, 30)).unwrap();
        let expect = coherent_coeffs(ModeAmplitude::from_re_im(0.0, 0.5), 30).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn displacement_unitary_on_protected_subspace() {
        for &(re, im) in &[(1.0, 0.0), (0.0, 1.0), (0.6, -0.8), (0.3, 0.2)] {
            let d = displacement_matrix(ModeAmplitude::from_re_im(re, im), 40).unwrap();
            assert!(d.unitarity_defect(10) < 1e-8);
        }
    }

    #[test]
    fn displacement_needs_two_levels() {
        assert_eq!(
            displacement_matrix(ModeAmplitude::real(0.1), 0).unwrap_err(),
            FockError::InvalidCutoff(0, 1)
        );
    }

    #[test]
    fn rotation_identities() {
        let n_max = 25;
        let id = DMatrix::<Complex64>::identity(n_max + 1, n_max + 1);
        assert_eq!(rotation_matrix(0.0, n_max).matrix(), &id);
        assert!((rotation_matrix(2.0 * PI, n_max).matrix() - &id).norm() < 1e-12);
    }

    #[test]
    fn rotation_by_pi_negates_label() {
        let alpha = ModeAmplitude::from_re_im(0.7, -0.4);
        let v = coherent_coeffs(alpha, 30).unwrap();
        let out = apply(&rotation_matrix(PI, 30), &v).unwrap();
        let expect = coherent_coeffs(ModeAmplitude::from_re_im(-0.7, 0.4), 30).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn overlap_examples() {
        let a = ModeAmplitude::from_re_im(1.3, -0.2);
        assert!((overlap(a, a) - c(1.0, 0.0)).norm() < 1e-15);

        let xi: f64 = 0.3;
        let alpha = ModeAmplitude::real(0.9);
        let shifted = ModeAmplitude::from_re_im(0.9, xi.sqrt());
        let p = overlap(alpha, shifted).norm_sqr();
        assert!((p - (-xi).exp()).abs() < 1e-15);
        assert!((p - 0.740818).abs() < 1e-6);

        let closed = overlap(ModeAmplitude::ZERO, ModeAmplitude::real(1.0));
        let v0 = coherent_coeffs(ModeAmplitude::ZERO, 30).unwrap();
        let v1 = coherent_coeffs(ModeAmplitude::real(1.0), 30).unwrap();
        let numeric = v0.inner(&v1).unwrap();
        assert!((closed - numeric).norm() < 1e-10);
        assert!((closed.re - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn apply_examples() {
        let v = coherent_coeffs(ModeAmplitude::real(1.0), 30).unwrap();
        let same = apply(&ModeOperator::identity(30), &v).unwrap();
        assert_eq!(same, v);

        let nv = apply(&number(30), &v).unwrap();
        let mean = v.inner(&nv).unwrap();
        assert!((mean.re - 1.0).abs() < 1e-9 && mean.im.abs() < 1e-15);

        let lowered = apply(&annihilation(5), &FockVector::number_state(1, 5)).unwrap();
        assert_eq!(lowered, FockVector::number_state(0, 5));
    }

    #[test]
    fn apply_rejects_mismatch() {
        let err = apply(&number(4), &FockVector::number_state(0, 5)).unwrap_err();
        assert_eq!(err, FockError::DimensionMismatch { operator: 4, vector: 5 });
    }

    #[test]
    fn default_cutoff_keeps_tail_small() {
        for &a in &[0.0, 0.5, 1.0, 2.0, 3.0] {
            let n = default_cutoff(a);
            let v = coherent_coeffs_unchecked(ModeAmplitude::real(a), n);
            assert!(v.norm_deficit() < 1e-12, "alpha {a}: {}", v.norm_deficit());
        }
    }

    #[test]
    fn large_labels_do_not_underflow() {
        let v = coherent_coeffs_unchecked(ModeAmplitude::real(40.0), default_cutoff(40.0));
        assert!(v.norm_deficit().abs() < 1e-11, "{}", v.norm_deficit());
        assert!((v.mean_number() - 1600.0).abs() < 1e-8);
    }
}
