//! Two-qubit path register.
//!
//! Basis ordering is (a,b) lexicographic: index = 2a + b, i.e.
//! |00⟩, |01⟩, |10⟩, |11⟩, where `a` is the arm of the first mass and `b`
//! the arm of the second.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Projection is applied for eigenvalues in [−NEG_REJECT, −NEG_FLOOR).
pub const NEG_FLOOR: f64 = 1e-10;
pub const NEG_REJECT: f64 = 1e-6;
/// Hermiticity / trace tolerance accepted at construction.
pub const DENSITY_TOL: f64 = 1e-10;

/// Interferometer arm of one mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathLabel {
    Arm0,
    Arm1,
}

impl PathLabel {
    pub const BOTH: [PathLabel; 2] = [PathLabel::Arm0, PathLabel::Arm1];

    pub fn bit(self) -> usize {
        match self {
            PathLabel::Arm0 => 0,
            PathLabel::Arm1 => 1,
        }
    }

    pub fn from_bit(bit: usize) -> Option<Self> {
        match bit {
            0 => Some(PathLabel::Arm0),
            1 => Some(PathLabel::Arm1),
            _ => None,
        }
    }
}

/// Index of branch (a, b) in the lexicographic basis.
pub fn branch_index(a: PathLabel, b: PathLabel) -> usize {
    2 * a.bit() + b.bit()
}

/// The four branches in basis order.
pub fn branches() -> [(PathLabel, PathLabel); 4] {
    use PathLabel::*;
    [(Arm0, Arm0), (Arm0, Arm1), (Arm1, Arm0), (Arm1, Arm1)]
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("density matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix trace {0} is not 1")]
    BadTrace(f64),
    #[error("density matrix has eigenvalue {0:.3e}, below the projection floor")]
    NotPositive(f64),
    #[error("density matrix contains non-finite entries")]
    NonFinite,
}

/// Pure two-qubit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    amps: Vector4<Complex64>,
}

impl TwoQubitState {
    pub fn new(amps: [Complex64; 4]) -> Self {
        Self {
            amps: Vector4::from(amps),
        }
    }

    pub fn basis(a: PathLabel, b: PathLabel) -> Self {
        let mut amps = [ZERO; 4];
        amps[branch_index(a, b)] = ONE;
        Self::new(amps)
    }

    /// ½(|00⟩ + |01⟩ + |10⟩ + e^{iφ}|11⟩): the controlled-phase output when
    /// only the closer arms acquire a phase.
    pub fn branch_phase(phi11: f64) -> Self {
        Self::with_phases([0.0, 0.0, 0.0, phi11])
    }

    /// ½ Σ e^{iφ_ab}|ab⟩.
    pub fn with_phases(phases: [f64; 4]) -> Self {
        let mut amps = [ZERO; 4];
        for (a, p) in amps.iter_mut().zip(phases) {
            *a = Complex64::from_polar(0.5, p);
        }
        Self::new(amps)
    }

    pub fn product(first: [Complex64; 2], second: [Complex64; 2]) -> Self {
        Self::new([
            first[0] * second[0],
            first[0] * second[1],
            first[1] * second[0],
            first[1] * second[1],
        ])
    }

    pub fn amps(&self) -> &Vector4<Complex64> {
        &self.amps
    }

    pub fn amp(&self, a: PathLabel, b: PathLabel) -> Complex64 {
        self.amps[branch_index(a, b)]
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn apply(&self, op: &TwoQubitOperator) -> TwoQubitState {
        Self {
            amps: op.matrix * self.amps,
        }
    }

    pub fn density(&self) -> TwoQubitDensity {
        TwoQubitDensity::from_pure(self)
    }
}

/// Property a two-qubit operator is constructed to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorTag {
    Hermitian,
    Unitary,
    Projector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitOperator {
    matrix: Matrix4<Complex64>,
    tag: OperatorTag,
}

impl TwoQubitOperator {
    pub fn new(matrix: Matrix4<Complex64>, tag: OperatorTag) -> Self {
        Self { matrix, tag }
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }

    pub fn tag(&self) -> OperatorTag {
        self.tag
    }

    pub fn kron(first: &Matrix2<Complex64>, second: &Matrix2<Complex64>, tag: OperatorTag) -> Self {
        Self::new(first.kronecker(second).fixed_view::<4, 4>(0, 0).into_owned(), tag)
    }

    pub fn identity() -> Self {
        Self::new(Matrix4::identity(), OperatorTag::Unitary)
    }

    /// Deviation of the operator from its tagged property.
    pub fn tag_defect(&self) -> f64 {
        let m = &self.matrix;
        match self.tag {
            OperatorTag::Hermitian => (m - m.adjoint()).norm(),
            OperatorTag::Unitary => (m.adjoint() * m - Matrix4::identity()).norm(),
            OperatorTag::Projector => (m - m.adjoint()).norm() + (m * m - m).norm(),
        }
    }

    pub fn expectation(&self, rho: &TwoQubitDensity) -> Complex64 {
        (rho.matrix() * self.matrix).trace()
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.matrix)
    }
}

pub fn pauli_x() -> Matrix2<Complex64> {
    Matrix2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Matrix2<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    Matrix2::new(ZERO, -i, i, ZERO)
}

pub fn pauli_z() -> Matrix2<Complex64> {
    Matrix2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn hadamard() -> Matrix2<Complex64> {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Matrix2::new(h, h, h, -h)
}

/// Single-mass path projector P_0 = (I + σz)/2, P_1 = (I − σz)/2.
pub fn path_projector(a: PathLabel) -> Matrix2<Complex64> {
    let sign = if a == PathLabel::Arm0 { 1.0 } else { -1.0 };
    (Matrix2::identity() + pauli_z() * Complex64::new(sign, 0.0)) * Complex64::new(0.5, 0.0)
}

/// State of both masses after their first beam splitters, ½ Σ|ab⟩.
pub fn beamsplitter_prepare() -> TwoQubitState {
    TwoQubitState::new([Complex64::new(0.5, 0.0); 4])
}

/// P_ab = P_a ⊗ P_b.
pub fn projector(a: PathLabel, b: PathLabel) -> TwoQubitOperator {
    TwoQubitOperator::kron(&path_projector(a), &path_projector(b), OperatorTag::Projector)
}

/// X ⊗ Z + Z ⊗ X.
pub fn witness_operator() -> TwoQubitOperator {
    let xz = pauli_x().kronecker(&pauli_z());
    let zx = pauli_z().kronecker(&pauli_x());
    TwoQubitOperator::new(
        (xz + zx).fixed_view::<4, 4>(0, 0).into_owned(),
        OperatorTag::Hermitian,
    )
}

pub fn hadamard_pair() -> TwoQubitOperator {
    TwoQubitOperator::kron(&hadamard(), &hadamard(), OperatorTag::Unitary)
}

/// Recombine both interferometers (ideal 50/50 splitters). The diagonal of
/// the result holds the four joint detector probabilities.
pub fn final_beamsplitter(rho: &TwoQubitDensity) -> TwoQubitDensity {
    rho.conjugate_by(&hadamard_pair())
}

pub fn final_beamsplitter_pure(state: &TwoQubitState) -> TwoQubitDensity {
    final_beamsplitter(&state.density())
}

/// Detector statistics after recombination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorProbabilities {
    /// Joint probabilities in basis order.
    pub joint: [f64; 4],
}

impl DetectorProbabilities {
    pub fn from_output(rho_out: &TwoQubitDensity) -> Self {
        let m = rho_out.matrix();
        Self {
            joint: [m[(0, 0)].re, m[(1, 1)].re, m[(2, 2)].re, m[(3, 3)].re],
        }
    }

    /// Probability that the first mass exits port 0.
    pub fn first_p0(&self) -> f64 {
        self.joint[0] + self.joint[1]
    }

    pub fn second_p0(&self) -> f64 {
        self.joint[0] + self.joint[2]
    }

    pub fn total(&self) -> f64 {
        self.joint.iter().sum()
    }
}

/// Reduced 4×4 state of the two masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitDensity {
    matrix: Matrix4<Complex64>,
}

impl TwoQubitDensity {
    /// Validates a candidate density matrix. Small negative eigenvalues
    /// (down to −1e-6) are clipped and the state renormalized; the
    /// projection distance is logged.
    pub fn new(matrix: Matrix4<Complex64>) -> Result<Self, DensityError> {
        if matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(DensityError::NonFinite);
        }
        let herm = (matrix - matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm > DENSITY_TOL {
            return Err(DensityError::NotHermitian(herm));
        }
        let sym = (matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = sym.trace().re;
        if (tr - 1.0).abs() > DENSITY_TOL {
            return Err(DensityError::BadTrace(tr));
        }
        let eig = SymmetricEigen::new(sym);
        let min = eig.eigenvalues.min();
        if min >= -NEG_FLOOR {
            return Ok(Self { matrix: sym });
        }
        if min < -NEG_REJECT {
            return Err(DensityError::NotPositive(min));
        }
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let total: f64 = clipped.sum();
        let mut projected = Matrix4::zeros();
        for (k, lam) in clipped.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            projected += v * v.adjoint() * Complex64::new(lam / total, 0.0);
        }
        let distance = (projected - sym).norm();
        log::warn!("projected density matrix onto the physical set (min eigenvalue {min:.3e}, distance {distance:.3e})");
        Ok(Self { matrix: projected })
    }

    /// Normalizes by the trace before validation. Used for truncated
    /// numerics whose norm deficit has already been certified.
    pub fn new_normalized(matrix: Matrix4<Complex64>) -> Result<Self, DensityError> {
        let tr = matrix.trace().re;
        if !(tr > 0.0) {
            return Err(DensityError::BadTrace(tr));
        }
        Self::new(matrix / Complex64::new(tr, 0.0))
    }

    pub fn from_pure(state: &TwoQubitState) -> Self {
        let v = state.amps / Complex64::new(state.norm_sq().sqrt(), 0.0);
        Self {
            matrix: v * v.adjoint(),
        }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            matrix: Matrix4::identity() * Complex64::new(0.25, 0.0),
        }
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum()
    }

    /// U ρ U†.
    pub fn conjugate_by(&self, u: &TwoQubitOperator) -> TwoQubitDensity {
        let m = u.matrix * self.matrix * u.matrix.adjoint();
        Self {
            matrix: (m + m.adjoint()) * Complex64::new(0.5, 0.0),
        }
    }

    /// ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &TwoQubitDensity) -> f64 {
        0.5 * hermitian_eigenvalues(&(self.matrix - other.matrix))
            .iter()
            .map(|l| l.abs())
            .sum::<f64>()
    }

    /// Transpose on the second qubit.
    pub fn partial_transpose(&self) -> Matrix4<Complex64> {
        let mut out = Matrix4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for a2 in 0..2 {
                    for b2 in 0..2 {
                        out[(2 * a + b2, 2 * a2 + b)] = self.matrix[(2 * a + b, 2 * a2 + b2)];
                    }
                }
            }
        }
        out
    }

    /// Reduced state of the first (`first = true`) or second mass.
    pub fn reduced_qubit(&self, first: bool) -> Matrix2<Complex64> {
        let mut out = Matrix2::zeros();
        for x in 0..2 {
            for y in 0..2 {
                for k in 0..2 {
                    out[(x, y)] += if first {
                        self.matrix[(2 * x + k, 2 * y + k)]
                    } else {
                        self.matrix[(2 * k + x, 2 * k + y)]
                    };
                }
            }
        }
        out
    }
}

/// Ascending eigenvalues of a Hermitian 4×4 matrix.
pub fn hermitian_eigenvalues(m: &Matrix4<Complex64>) -> [f64; 4] {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut vals = [0.0; 4];
    vals.copy_from_slice(eig.eigenvalues.as_slice());
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}
