//! Entanglement and interference diagnostics, and the verdict that compares
//! an observed witness value against each theory's prediction.

use std::collections::BTreeSet;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::register::{
    final_beamsplitter_pure, hermitian_eigenvalues, pauli_y, witness_operator, DetectorProbabilities,
    OperatorTag, TwoQubitDensity, TwoQubitOperator, TwoQubitState,
};
use crate::rivals::{PredictionRecord, TheoryTag};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no prediction for theory {0}")]
    MissingTag(TheoryTag),
    #[error("more than one prediction for theory {0}")]
    DuplicateTag(TheoryTag),
    #[error("separable-bound search stalled at step {step:e} after {iterations} iterations")]
    OptimizerStalled { step: f64, iterations: usize },
}

/// Σ |negative eigenvalues| of the partial transpose.
pub fn negativity(rho: &TwoQubitDensity) -> f64 {
    hermitian_eigenvalues(&rho.partial_transpose())
        .iter()
        .filter(|e| **e < 0.0)
        .map(|e| -e)
        .sum()
}

fn psd_sqrt(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let eig = m.symmetric_eigen();
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|e| Complex64::new(e.max(0.0).sqrt(), 0.0)));
    eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Wootters concurrence. Rank-one states use |⟨ψ|Y⊗Y|ψ*⟩| directly.
pub fn concurrence(rho: &TwoQubitDensity) -> f64 {
    let yy = TwoQubitOperator::kron(&pauli_y(), &pauli_y(), OperatorTag::Hermitian);
    let yy = yy.matrix();
    let eig = rho.matrix().symmetric_eigen();
    let (top, lead) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, e)| if *e > acc.1 { (i, *e) } else { acc });
    if lead > 1.0 - 1e-13 {
        let psi = eig.eigenvectors.column(top).into_owned();
        return (psi.adjoint() * yy * psi.conjugate())[(0, 0)].norm();
    }
    let tilde = yy * rho.matrix().conjugate() * yy;
    let s = psd_sqrt(rho.matrix());
    let r = s * tilde * s;
    let r = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
    let mut l: Vec<f64> = hermitian_eigenvalues(&r).iter().map(|e| e.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

/// (von Neumann entropy in bits, linear entropy).
pub fn entropies(rho: &TwoQubitDensity) -> (f64, f64) {
    let s = rho
        .eigenvalues()
        .iter()
        .filter(|l| **l > 0.0)
        .map(|l| -l * l.log2())
        .sum::<f64>();
    (s.max(0.0), 1.0 - rho.purity())
}

/// Tr ρ (X⊗Z + Z⊗X).
pub fn witness_expectation(rho: &TwoQubitDensity) -> f64 {
    witness_operator().expectation(rho).re
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementReport {
    pub negativity: f64,
    pub concurrence: f64,
    pub von_neumann_entropy_bits: f64,
    pub linear_entropy: f64,
    pub witness_value: f64,
}

impl EntanglementReport {
    pub fn of(rho: &TwoQubitDensity) -> Self {
        let (s, sl) = entropies(rho);
        Self {
            negativity: negativity(rho),
            concurrence: concurrence(rho),
            von_neumann_entropy_bits: s,
            linear_entropy: sl,
            witness_value: witness_expectation(rho),
        }
    }
}

/// Bloch vector (x, y, z) from polar angles.
fn bloch(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Witness value on the product state with the given Bloch vectors.
pub fn product_witness(first: [f64; 3], second: [f64; 3]) -> f64 {
    first[0] * second[2] + first[2] * second[0]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparableBound {
    pub bound: f64,
    pub maximizer_first: [f64; 3],
    pub maximizer_second: [f64; 3],
    /// Value at ⟨X₁⟩ = ⟨Z₂⟩ = 1.
    pub value_at_x1_z2: f64,
    pub grid_max: f64,
    pub evaluations: usize,
}

/// Maximizes the witness over pure product states: a 16⁴ grid on the two
/// Bloch spheres, then compass search from the best grid point.
pub fn separable_bound_check() -> Result<SeparableBound, AnalysisError> {
    use std::f64::consts::PI;
    let f = |x: &[f64; 4]| product_witness(bloch(x[0], x[1]), bloch(x[2], x[3]));
    let n = 16;
    let mut best = ([0.0; 4], f64::NEG_INFINITY);
    let mut evaluations = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let x = [
                        PI * i as f64 / (n - 1) as f64,
                        2.0 * PI * j as f64 / n as f64,
                        PI * k as f64 / (n - 1) as f64,
                        2.0 * PI * l as f64 / n as f64,
                    ];
                    let v = f(&x);
                    evaluations += 1;
                    if v > best.1 {
                        best = (x, v);
                    }
                }
            }
        }
    }
    let grid_max = best.1;
    let (mut x, mut fx) = best;
    let mut step = PI / n as f64;
    let max_iter = 100_000;
    let mut iter = 0;
    while step > 1e-12 {
        if iter >= max_iter {
            return Err(AnalysisError::OptimizerStalled { step, iterations: iter });
        }
        iter += 1;
        let mut improved = false;
        for d in 0..4 {
            for s in [1.0, -1.0] {
                let mut y = x;
                y[d] += s * step;
                let v = f(&y);
                evaluations += 1;
                if v > fx {
                    x = y;
                    fx = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(SeparableBound {
        bound: fx,
        maximizer_first: bloch(x[0], x[1]),
        maximizer_second: bloch(x[2], x[3]),
        value_at_x1_z2: product_witness([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        grid_max,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterferenceProbabilities {
    pub p0: f64,
    pub p1: f64,
    /// First-mass marginal from the full output state.
    pub born_p0: f64,
    pub mismatch: f64,
}

/// p0 = ½(1 + cos²(φ₁₁/2)), checked against the Born rule after the final
/// beam splitters.
pub fn interference_probabilities(phi11: f64) -> InterferenceProbabilities {
    let c = (0.5 * phi11).cos();
    let p0 = 0.5 * (1.0 + c * c);
    let out = final_beamsplitter_pure(&TwoQubitState::branch_phase(phi11));
    let born_p0 = DetectorProbabilities::from_output(&out).first_p0();
    InterferenceProbabilities {
        p0,
        p1: 1.0 - p0,
        born_p0,
        mismatch: (p0 - born_p0).abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictSettings {
    pub witness_margin: f64,
    pub witness_match: f64,
}

impl Default for VerdictSettings {
    fn default() -> Self {
        Self {
            witness_margin: 1e-6,
            witness_match: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub witness_value: f64,
    pub entangled: bool,
    pub predicted_quantum_witness: Option<f64>,
    pub consistent_theories: Vec<TheoryTag>,
    pub inconsistent_theories: Vec<TheoryTag>,
}

/// Observed witness at or below the separable bound (plus margin) rules
/// nothing out. Above it, every non-entangling theory is inconsistent and
/// the quantum prediction must match within `witness_match`.
pub fn verdict(
    observed_witness: f64,
    predictions: &[PredictionRecord],
    settings: VerdictSettings,
) -> Result<Verdict, AnalysisError> {
    let mut seen = BTreeSet::new();
    for p in predictions {
        if !seen.insert(p.tag) {
            return Err(AnalysisError::DuplicateTag(p.tag));
        }
    }
    for t in TheoryTag::ALL {
        if !seen.contains(&t) {
            return Err(AnalysisError::MissingTag(t));
        }
    }
    let entangled = observed_witness > 1.0 + settings.witness_margin;
    let quantum = predictions.iter().find(|p| p.tag == TheoryTag::QuantumLinearized);
    let predicted_quantum_witness = quantum.and_then(|p| p.reduced_state.as_ref()).map(witness_expectation);
    let mut consistent = Vec::new();
    let mut inconsistent = Vec::new();
    for t in TheoryTag::ALL {
        let p = predictions.iter().find(|p| p.tag == t).expect("checked above");
        let ok = if !entangled {
            true
        } else if t == TheoryTag::QuantumLinearized {
            predicted_quantum_witness.is_some_and(|w| (w - observed_witness).abs() <= settings.witness_match)
        } else {
            p.entangling
        };
        if ok {
            consistent.push(t);
        } else {
            inconsistent.push(t);
        }
    }
    Ok(Verdict {
        witness_value: observed_witness,
        entangled,
        predicted_quantum_witness,
        consistent_theories: consistent,
        inconsistent_theories: inconsistent,
    })
}

/// Local unitary U₁ ⊗ U₂ from two sets of Euler angles.
pub fn local_unitary(a: [f64; 3], b: [f64; 3]) -> TwoQubitOperator {
    use crate::numeric::cis;
    use nalgebra::Matrix2;
    let u = |e: [f64; 3]| {
        let (c, s) = ((0.5 * e[1]).cos(), (0.5 * e[1]).sin());
        Matrix2::new(
            cis(-0.5 * (e[0] + e[2])) * c,
            -cis(-0.5 * (e[0] - e[2])) * s,
            cis(0.5 * (e[0] - e[2])) * s,
            cis(0.5 * (e[0] + e[2])) * c,
        )
    };
    TwoQubitOperator::kron(&u(a), &u(b), OperatorTag::Unitary)
}

/// Normalized pure state from raw amplitudes.
pub fn pure_state(v: [Complex64; 4]) -> TwoQubitState {
    let v = Vector4::from(v);
    let n = v.norm();
    TwoQubitState::new((v / Complex64::new(n, 0.0)).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::register::{beamsplitter_prepare, hadamard, PathLabel};
    use crate::rivals::{induced_gravity_note, PredictionRecord};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn branch(phi: f64) -> TwoQubitDensity {
        TwoQubitState::branch_phase(phi).density()
    }

    #[test]
    fn negativity_examples() {
        assert!(negativity(&beamsplitter_prepare().density()) < 1e-15);
        assert!((negativity(&branch(PI)) - 0.5).abs() < 1e-12);
        assert!((negativity(&branch(PI / 2.0)) - 2f64.sqrt() / 4.0).abs() < 1e-12);
        assert!(negativity(&TwoQubitDensity::maximally_mixed()) < 1e-15);
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&branch(PI)) - 1.0).abs() < 1e-7);
        assert!((concurrence(&branch(PI / 3.0)) - (PI / 6.0).sin()).abs() < 1e-7);
        assert!(concurrence(&TwoQubitDensity::maximally_mixed()) < 1e-12);
    }

    #[test]
    fn witness_examples() {
        assert!((witness_expectation(&branch(PI)) - 2.0).abs() < 1e-12);
        assert!(witness_expectation(&beamsplitter_prepare().density()).abs() < 1e-15);
        assert!((witness_expectation(&branch(PI / 2.0)) - 1.0).abs() < 1e-12);
        // |0⟩|+⟩ + |1⟩|−⟩
        let h = hadamard();
        let plus = [h[(0, 0)], h[(1, 0)]];
        let minus = [h[(0, 1)], h[(1, 1)]];
        let s = pure_state([plus[0], plus[1], minus[0], minus[1]]);
        assert!((witness_expectation(&s.density()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let (s, sl) = entropies(&branch(0.4));
        assert!(s.abs() < 1e-9 && sl.abs() < 1e-12);
        let (s, sl) = entropies(&TwoQubitDensity::maximally_mixed());
        assert!((s - 2.0).abs() < 1e-12 && (sl - 0.75).abs() < 1e-12);
    }

    #[test]
    fn separable_bound_is_one() {
        let b = separable_bound_check().unwrap();
        assert!((b.bound - 1.0).abs() < 1e-6);
        assert!(b.grid_max <= 1.0 + 1e-12);
        assert_eq!(b.value_at_x1_z2, 1.0);
        assert!((product_witness(b.maximizer_first, b.maximizer_second) - b.bound).abs() < 1e-15);
    }

    #[test]
    fn interference_examples() {
        let p = interference_probabilities(PI);
        assert!((p.p0 - 0.5).abs() < 1e-15 && (p.p1 - 0.5).abs() < 1e-15);
        for n in 0..3 {
            assert!((interference_probabilities(2.0 * PI * n as f64).p0 - 1.0).abs() < 1e-15);
        }
        assert!((interference_probabilities(PI / 2.0).p0 - 0.75).abs() < 1e-15);
        for i in 0..100 {
            let phi = 2.0 * PI * i as f64 / 99.0;
            assert!(interference_probabilities(phi).mismatch < 1e-9);
        }
    }

    fn records(quantum_phi: f64) -> Vec<PredictionRecord> {
        let product = || beamsplitter_prepare().density();
        let mut v = vec![PredictionRecord::from_state(TheoryTag::QuantumLinearized, branch(quantum_phi), vec![])];
        for t in [
            TheoryTag::SemiclassicalEinstein,
            TheoryTag::SemiclassicalHamiltonianAverage,
            TheoryTag::CollapsePenrose,
        ] {
            v.push(PredictionRecord::from_state(t, product(), vec![]));
        }
        v.push(induced_gravity_note());
        v
    }

    #[test]
    fn verdict_examples() {
        let v = verdict(2.0, &records(PI), VerdictSettings::default()).unwrap();
        assert_eq!(v.consistent_theories, vec![TheoryTag::QuantumLinearized]);
        assert_eq!(v.inconsistent_theories.len(), 4);
        for obs in [0.5, 1.0] {
            let v = verdict(obs, &records(PI), VerdictSettings::default()).unwrap();
            assert_eq!(v.consistent_theories.len(), 5);
            assert!(!v.entangled);
        }
        let v = verdict(1.5, &records(PI), VerdictSettings::default()).unwrap();
        assert_eq!(v.inconsistent_theories.len(), 5);
    }

    #[test]
    fn verdict_requires_every_tag() {
        let mut r = records(PI);
        r.pop();
        assert_eq!(
            verdict(2.0, &r, VerdictSettings::default()),
            Err(AnalysisError::MissingTag(TheoryTag::InducedGravity))
        );
        let mut r = records(PI);
        r.push(induced_gravity_note());
        assert!(matches!(verdict(2.0, &r, VerdictSettings::default()), Err(AnalysisError::DuplicateTag(_))));
    }

    #[test]
    fn pure_states_negativity_is_half_concurrence() {
        let s = pure_state([
            Complex64::new(0.3, 0.1),
            Complex64::new(-0.2, 0.5),
            Complex64::new(0.0, 0.4),
            Complex64::new(0.6, -0.1),
        ]);
        let r = EntanglementReport::of(&s.density());
        assert!((r.negativity - 0.5 * r.concurrence).abs() < 1e-9);
        assert!(r.witness_value.abs() <= 2.0 + 1e-12);
        assert_eq!(TwoQubitState::basis(PathLabel::Arm0, PathLabel::Arm1).norm_sq(), 1.0);
    }

    fn angles() -> impl Strategy<Value = [f64; 3]> {
        [-PI..PI, 0.0..PI, -PI..PI]
    }

    fn amps() -> impl Strategy<Value = [Complex64; 4]> {
        prop::array::uniform4((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)))
            .prop_filter("nonzero", |v| v.iter().map(|c| c.norm_sqr()).sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn measures_invariant_under_local_unitaries(v in amps(), a in angles(), b in angles(), mix in 0.0f64..0.5) {
            let pure = pure_state(v).density();
            let m = pure.matrix() * Complex64::new(1.0 - mix, 0.0)
                + TwoQubitDensity::maximally_mixed().matrix() * Complex64::new(mix, 0.0);
            let rho = TwoQubitDensity::new(m).unwrap();
            let u = local_unitary(a, b);
            let moved = rho.conjugate_by(&u);
            let r1 = EntanglementReport::of(&rho);
            let r2 = EntanglementReport::of(&moved);
            prop_assert!((r1.negativity - r2.negativity).abs() < 1e-9);
            prop_assert!((r1.concurrence - r2.concurrence).abs() < 1e-7);
            prop_assert!((r1.von_neumann_entropy_bits - r2.von_neumann_entropy_bits).abs() < 1e-9);
            prop_assert!((r1.linear_entropy - r2.linear_entropy).abs() < 1e-9);
        }

        #[test]
        fn pure_negativity_half_concurrence(v in amps()) {
            let r = EntanglementReport::of(&pure_state(v).density());
            prop_assert!((r.negativity - 0.5 * r.concurrence).abs() < 1e-7);
        }

        #[test]
        fn witness_detection_implies_negativity(phi in 0.0f64..(4.0 * PI)) {
            let rho = branch(phi);
            let w = witness_expectation(&rho);
            let n = negativity(&rho);
            prop_assert!((w - 2.0 * (0.5 * phi).sin().powi(2)).abs() < 1e-12);
            if w > 1.0 + 1e-6 {
                prop_assert!(n > 1e-10);
            }
        }

        #[test]
        fn product_states_respect_bound(a in angles(), b in angles()) {
            let u = local_unitary(a, b);
            let rho = TwoQubitDensity::from_pure(&TwoQubitState::basis(PathLabel::Arm0, PathLabel::Arm0)).conjugate_by(&u);
            prop_assert!(witness_expectation(&rho) <= 1.0 + 1e-9);
            prop_assert!(negativity(&rho) < 1e-12);
        }

        #[test]
        fn weak_mixing_orders_entropies(v in amps(), eps in 0.0f64..0.005) {
            let pure = pure_state(v).density();
            let m = pure.matrix() * Complex64::new(1.0 - eps, 0.0)
                + TwoQubitDensity::maximally_mixed().matrix() * Complex64::new(eps, 0.0);
            let (s, sl) = entropies(&TwoQubitDensity::new(m).unwrap());
            prop_assume!(sl <= 0.01);
            prop_assert!(sl <= s * std::f64::consts::LN_2 + 1e-12);
        }
    }
}
