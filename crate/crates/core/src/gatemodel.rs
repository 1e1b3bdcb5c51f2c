//! Three-step gravitational entangling protocol U1† U2 U1 on two path qubits
//! and a field mode.
//!
//! U1 = Σ P_ab ⊗ D(i√ξ_ab) entangles the field with the mass positions,
//! U2 = exp(i w a†a) rotates the field, and U1† undoes the displacement,
//! leaving a relative phase on each branch.
//!
//! The analytic backend keeps the joint state in branch-coherent form
//! Σ c_ab |ab⟩|α_ab⟩ and is exact: displacements compose through the Weyl
//! law D(β)|γ⟩ = e^{i Im(βγ*)}|γ + β⟩ and rotations map |γ⟩ → |γe^{iw}⟩
//! with no phase. The numeric backend builds the full truncated joint
//! vector and applies explicit matrices; it exists to audit the analytic one.
//!
//! Only operators of the form (mass projector) ⊗ (field operator) or pure
//! field operators appear, so the masses never couple directly.

use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64;
use thiserror::Error;

use crate::constants::Constants;
use crate::experiment::{ConfigError, ExperimentConfig, SplitConfig};
use crate::fockspace::{
    self, overlap, FockError, FockTolerances, ModeAmplitude,
};
use crate::numeric::{cis, wrap_phase};
use crate::register::{branches, projector, DensityError, TwoQubitDensity, TwoQubitState};

#[derive(Debug, Error)]
pub enum GateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("norm drifted to {norm} during step {step}")]
    NormDrift { step: &'static str, norm: f64 },
}

/// Parameters of the gate: initial field label, per-branch shifts ξ_ab,
/// rotation w and the target phases φ_ab = w ξ_ab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub alpha0: ModeAmplitude,
    pub xi: [f64; 4],
    pub w: f64,
    pub phi_target: [f64; 4],
}

impl GateParams {
    pub fn new(alpha0: ModeAmplitude, xi: [f64; 4], w: f64) -> Self {
        assert!(xi.iter().all(|x| *x >= 0.0 && x.is_finite()), "ξ_ab must be finite and >= 0");
        assert!(w.is_finite());
        Self {
            alpha0,
            xi,
            w,
            phi_target: xi.map(|x| w * x),
        }
    }

    /// ξ_ab = φ_ab s, w = 1/s.
    pub fn with_scale(alpha0: ModeAmplitude, phi: [f64; 4], scale: f64) -> Self {
        assert!(scale > 0.0 && phi.iter().all(|p| *p >= 0.0));
        Self {
            alpha0,
            xi: phi.map(|p| p * scale),
            w: 1.0 / scale,
            phi_target: phi,
        }
    }

    /// Scale chosen so that the largest shift equals `max_xi`.
    pub fn bounded(alpha0: ModeAmplitude, phi: [f64; 4], max_xi: f64) -> Self {
        let peak = phi.iter().cloned().fold(0.0, f64::max);
        let scale = if peak > 0.0 { max_xi / peak } else { 1.0 };
        Self::with_scale(alpha0, phi, scale)
    }

    /// s = |α₀|². The rotation shrinks as 1/|α₀|² and the phase error of the
    /// exact protocol falls off as 1/|α₀|².
    pub fn large_amplitude(alpha0: ModeAmplitude, phi: [f64; 4]) -> Self {
        let s = alpha0.value().norm_sqr();
        assert!(s > 0.0, "large-amplitude split needs a nonzero label");
        Self::with_scale(alpha0, phi, s)
    }

    pub fn max_xi(&self) -> f64 {
        self.xi.iter().cloned().fold(0.0, f64::max)
    }
}

/// Newtonian phases φ_ab = G m² Δt / (ħ d_ab), computed in both the direct
/// and the Planck-mass form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonianPhases {
    pub phases: [f64; 4],
    pub planck_form: [f64; 4],
    pub rates: [f64; 4],
    /// (m/m_P)².
    pub planck_ratio_sq: f64,
    /// Largest relative disagreement between the two forms.
    pub form_mismatch: f64,
}

impl NewtonianPhases {
    /// φ00 + φ11 − φ01 − φ10.
    pub fn entangling_phase(&self) -> f64 {
        self.phases[0] + self.phases[3] - self.phases[1] - self.phases[2]
    }
}

pub fn newtonian_phases(cfg: &ExperimentConfig) -> Result<NewtonianPhases, ConfigError> {
    if !(cfg.mass_kg > 0.0) {
        return Err(ConfigError::new("mass_kg", "must be > 0"));
    }
    if !(cfg.interaction_time_s >= 0.0) {
        return Err(ConfigError::new("interaction_time_s", "must be >= 0"));
    }
    let k: &Constants = &cfg.constants;
    let mut out = NewtonianPhases {
        phases: [0.0; 4],
        planck_form: [0.0; 4],
        rates: [0.0; 4],
        planck_ratio_sq: k.planck_ratio_sq(cfg.mass_kg),
        form_mismatch: 0.0,
    };
    for (i, d) in cfg.distances().iter().enumerate() {
        let Some(d) = *d else { continue };
        if !(d > 0.0) {
            return Err(ConfigError::new("branch_distances_m", format!("distance {d} must be > 0")));
        }
        let rate = k.newtonian_rate(cfg.mass_kg, d);
        out.rates[i] = rate;
        out.phases[i] = rate * cfg.interaction_time_s;
        out.planck_form[i] = k.planck_form_rate(cfg.mass_kg, d) * cfg.interaction_time_s;
        if out.phases[i] != 0.0 {
            let rel = ((out.phases[i] - out.planck_form[i]) / out.phases[i]).abs();
            out.form_mismatch = out.form_mismatch.max(rel);
        }
    }
    Ok(out)
}

/// Gate parameters for the configured experiment. The split of each φ_ab
/// into (w, ξ_ab) follows `split`; only the product is physical.
pub fn newtonian_params(cfg: &ExperimentConfig, split: SplitConfig) -> Result<GateParams, ConfigError> {
    let phases = newtonian_phases(cfg)?;
    let alpha0 = cfg.alpha0();
    let phi = phases.phases;
    Ok(match split {
        SplitConfig::LargeAmplitude => {
            if alpha0.value().norm() == 0.0 {
                return Err(ConfigError::new("alpha0", "large_amplitude split needs a nonzero alpha0"));
            }
            GateParams::large_amplitude(alpha0, phi)
        }
        SplitConfig::Bounded { max_xi } => GateParams::bounded(alpha0, phi, max_xi),
        SplitConfig::Scale { scale } => GateParams::with_scale(alpha0, phi, scale),
        SplitConfig::Planck => {
            let d_min = cfg
                .distances()
                .iter()
                .flatten()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if cfg.interaction_time_s == 0.0 {
                GateParams::with_scale(alpha0, phi, 1.0)
            } else {
                GateParams::with_scale(alpha0, phi, d_min / (cfg.constants.c * cfg.interaction_time_s))
            }
        }
    })
}

/// Joint state Σ c_ab |ab⟩ ⊗ Π_k |α_ab,k⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    amps: [Complex64; 4],
    labels: [Vec<ModeAmplitude>; 4],
}

impl BranchState {
    /// Masses after their first beam splitters, field in Π_k |α_k⟩ for every
    /// branch.
    pub fn prepared(field: &[ModeAmplitude]) -> Self {
        assert!(!field.is_empty());
        Self {
            amps: [Complex64::new(0.5, 0.0); 4],
            labels: std::array::from_fn(|_| field.to_vec()),
        }
    }

    pub fn from_parts(amps: [Complex64; 4], labels: [Vec<ModeAmplitude>; 4]) -> Self {
        let n = labels[0].len();
        assert!(n > 0 && labels.iter().all(|l| l.len() == n));
        Self { amps, labels }
    }

    pub fn amps(&self) -> &[Complex64; 4] {
        &self.amps
    }

    pub fn labels(&self) -> &[Vec<ModeAmplitude>; 4] {
        &self.labels
    }

    pub fn mode_count(&self) -> usize {
        self.labels[0].len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Multiply every amplitude by a common phase.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.amps {
            *c *= cis(theta);
        }
        out
    }

    /// G[B][B'] = ⟨F_B'|F_B⟩, the product of per-mode coherent overlaps.
    pub fn field_gram(&self) -> [[Complex64; 4]; 4] {
        let mut g = [[Complex64::new(1.0, 0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    g[i][j] = self.labels[j]
                        .iter()
                        .zip(&self.labels[i])
                        .map(|(x, y)| overlap(*x, *y))
                        .product();
                }
            }
        }
        g
    }

    /// Reduced state of the masses, tracing out the field.
    pub fn reduced_density(&self) -> TwoQubitDensity {
        reduced_from_gram(&self.amps, &self.field_gram())
    }

    /// Largest pairwise distance between branch field labels, summed in
    /// quadrature over modes.
    pub fn label_spread(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d: f64 = self.labels[i]
                    .iter()
                    .zip(&self.labels[j])
                    .map(|(x, y)| (x.value() - y.value()).norm_sqr())
                    .sum();
                worst = worst.max(d.sqrt());
            }
        }
        worst
    }
}

/// ρ_{B,B'} = c_B c_B'* ⟨F_B'|F_B⟩.
pub fn reduced_from_gram(amps: &[Complex64; 4], gram: &[[Complex64; 4]; 4]) -> TwoQubitDensity {
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] = amps[i] * amps[j].conj() * gram[i][j];
        }
    }
    let tr = m.trace().re;
    TwoQubitDensity::new(m / Complex64::new(tr, 0.0))
        .expect("branch-coherent reduced state is a Gram-weighted density by construction")
}

/// U1 (or U1† when `dagger`) on the first field mode.
pub fn apply_u1(state: &BranchState, params: &GateParams, dagger: bool) -> BranchState {
    let mut out = state.clone();
    let sign = if dagger { -1.0 } else { 1.0 };
    for b in 0..4 {
        let beta = Complex64::new(0.0, sign * params.xi[b].sqrt());
        let gamma = out.labels[b][0].value();
        let weyl = (beta * gamma.conj()).im;
        out.amps[b] *= cis(weyl);
        out.labels[b][0] = ModeAmplitude::from_re_im(gamma.re + beta.re, gamma.im + beta.im);
    }
    out
}

/// U2 = exp(i w a†a) on every mode: labels rotate, no phase.
pub fn apply_u2(state: &BranchState, w: f64) -> BranchState {
    let mut out = state.clone();
    let r = cis(w);
    for labels in &mut out.labels {
        for l in labels.iter_mut() {
            let v = l.value() * r;
            *l = ModeAmplitude::from_re_im(v.re, v.im);
        }
    }
    out
}

/// Analytic protocol output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub after_u1: BranchState,
    pub after_u2: BranchState,
    pub final_state: BranchState,
    pub reduced: TwoQubitDensity,
}

impl ProtocolOutcome {
    /// Linear entropy of the masses after U1; independent of w.
    pub fn entropy_after_u1(&self) -> f64 {
        field_mass_entanglement(&self.after_u1)
    }

    pub fn entropy_final(&self) -> f64 {
        field_mass_entanglement(&self.final_state)
    }
}

/// |φ0⟩ → U1 → U2 → U1† on the analytic backend.
pub fn run_protocol(params: &GateParams) -> ProtocolOutcome {
    let start = BranchState::prepared(&[params.alpha0]);
    let after_u1 = apply_u1(&start, params, false);
    let after_u2 = apply_u2(&after_u1, params.w);
    let final_state = apply_u1(&after_u2, params, true);
    let reduced = final_state.reduced_density();
    ProtocolOutcome {
        after_u1,
        after_u2,
        final_state,
        reduced,
    }
}

/// Numeric backend output.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericOutcome {
    pub reduced: TwoQubitDensity,
    /// Joint norm after preparation, U1, U2 and U1†.
    pub norms: [f64; 4],
    /// Largest weight found in the top protected-margin levels of any branch.
    pub tail_weight: f64,
    pub n_max: usize,
}

/// Cutoff the fockspace policy assigns to a protocol: it covers the largest
/// label any branch visits, |α₀| + 2√ξ after the final displacement.
pub fn protocol_cutoff(params: &GateParams) -> usize {
    let peak = params.alpha0.norm() + 2.0 * params.max_xi().sqrt();
    fockspace::default_cutoff(peak)
}

/// Brute-force protocol on the truncated joint space of dimension
/// 4(n_max + 1): explicit matrices, then a partial trace over the field.
pub fn run_protocol_numeric(params: &GateParams, n_max: usize) -> Result<NumericOutcome, GateError> {
    run_protocol_numeric_with(params, n_max, FockTolerances::default())
}

pub fn run_protocol_numeric_with(
    params: &GateParams,
    n_max: usize,
    tol: FockTolerances,
) -> Result<NumericOutcome, GateError> {
    let dim = n_max + 1;
    let field0 = fockspace::coherent_coeffs_with_tol(params.alpha0, n_max, tol.trunc)?;

    let mut psi = DVector::zeros(4 * dim);
    for b in 0..4 {
        for n in 0..dim {
            psi[b * dim + n] = field0.coeffs()[n] * 0.5;
        }
    }

    let mut u1 = DMatrix::<Complex64>::zeros(4 * dim, 4 * dim);
    for (b, (x, y)) in branches().into_iter().enumerate() {
        let beta = ModeAmplitude::from_re_im(0.0, params.xi[b].sqrt());
        let d = fockspace::displacement_matrix_with(beta, n_max, tol)?;
        let p = DMatrix::from_fn(4, 4, |i, j| projector(x, y).matrix()[(i, j)]);
        u1 += p.kronecker(d.matrix());
    }
    let rot = fockspace::rotation_matrix(params.w, n_max);
    let u2 = DMatrix::<Complex64>::identity(4, 4).kronecker(rot.matrix());
    let u1_dag = u1.adjoint();

    let mut norms = [psi.norm_squared(), 0.0, 0.0, 0.0];
    let steps: [(&'static str, &DMatrix<Complex64>); 3] = [("U1", &u1), ("U2", &u2), ("U1†", &u1_dag)];
    for (k, (name, op)) in steps.iter().enumerate() {
        psi = *op * psi;
        norms[k + 1] = psi.norm_squared();
        if (norms[k + 1] - norms[0]).abs() > 1e-9 {
            return Err(GateError::NormDrift {
                step: name,
                norm: norms[k + 1],
            });
        }
    }

    // Weight pushed against the cutoff, relative to each branch's 1/4 share.
    let mut tail_weight = 0.0f64;
    for b in 0..4 {
        let start = (dim.saturating_sub(tol.margin)).max(1);
        let w: f64 = (start..dim).map(|n| psi[b * dim + n].norm_sqr()).sum();
        tail_weight = tail_weight.max(4.0 * w);
    }
    if tail_weight > tol.trunc {
        return Err(FockError::CutoffTooSmall {
            n_max,
            deficit: tail_weight,
            tol: tol.trunc,
        }
        .into());
    }

    let mut rho = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            rho[(i, j)] = (0..dim).map(|n| psi[i * dim + n] * psi[j * dim + n].conj()).sum();
        }
    }
    let reduced = TwoQubitDensity::new_normalized(rho)?;
    Ok(NumericOutcome {
        reduced,
        norms,
        tail_weight,
        n_max,
    })
}

/// Linear entropy 1 − Tr ρ² of the masses, from closed-form overlaps.
pub fn field_mass_entanglement(state: &BranchState) -> f64 {
    1.0 - state.reduced_density().purity()
}

/// Relative branch phases after the protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPhases {
    /// arg(c_ab / c_00) in (−π, π].
    pub phases: [f64; 4],
    pub label_spread: f64,
    /// False when the field is still distinguishable across branches; the
    /// phases then coexist with residual field–mass entanglement.
    pub elastic: bool,
}

pub fn branch_phases(state: &BranchState, spread_tol: f64) -> BranchPhases {
    let reference = state.amps[0];
    let phases = state.amps.map(|c| wrap_phase((c / reference).arg()));
    let label_spread = state.label_spread();
    let elastic = label_spread <= spread_tol;
    if !elastic {
        log::warn!("field labels differ across branches by up to {label_spread:.3e}; residual field-mass entanglement remains");
    }
    BranchPhases {
        phases,
        label_spread,
        elastic,
    }
}

/// Ideal controlled-phase output ½ Σ e^{iφ_ab}|ab⟩.
pub fn ideal_output(phi: [f64; 4]) -> TwoQubitState {
    TwoQubitState::with_phases(phi)
}

/// 1 − ⟨ψ|ρ|ψ⟩.
pub fn infidelity(rho: &TwoQubitDensity, target: &TwoQubitState) -> f64 {
    let v = target.amps();
    let f = (v.adjoint() * rho.matrix() * v)[(0, 0)].re / target.norm_sq();
    1.0 - f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::BranchDistances;
    use std::f64::consts::PI;

    fn cfg_with(m: f64, d: f64, t: f64) -> ExperimentConfig {
        ExperimentConfig {
            mass_kg: m,
            arm_separation_m: Some(d),
            branch_distances_m: Some(BranchDistances::closer_arms_only(d)),
            interaction_time_s: t,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn newtonian_rate_example() {
        let k = Constants::default();
        // G m² / (ħ d) from the pinned constants, evaluated independently.
        let expected = 6.674_30e-11 * 1e-24 / (1.054_571_817e-34 * 1e-4);
        let ph = newtonian_phases(&cfg_with(1e-12, 1e-4, 1.0)).unwrap();
        assert!((ph.rates[3] - expected).abs() / expected < 1e-14);
        assert!((ph.rates[3] - 6.33e3).abs() < 5.0);
        let t_pi = PI / ph.rates[3];
        assert!((t_pi - 4.96e-4).abs() < 1e-6);
        assert!(ph.form_mismatch < 1e-12);
        assert!((k.planck_ratio_sq(1e-12) - ph.planck_ratio_sq).abs() < 1e-30);
    }

    #[test]
    fn newtonian_params_product_rule() {
        let cfg = cfg_with(1e-12, 1e-4, 3e-4);
        for split in [
            SplitConfig::LargeAmplitude,
            SplitConfig::Bounded { max_xi: 0.5 },
            SplitConfig::Scale { scale: 2.0 },
            SplitConfig::Planck,
        ] {
            let p = newtonian_params(&cfg, split).unwrap();
            for i in 0..4 {
                assert!((p.w * p.xi[i] - p.phi_target[i]).abs() <= 1e-12 * p.phi_target[i].max(1e-300));
            }
        }
        let p = newtonian_params(&cfg, SplitConfig::Bounded { max_xi: 0.5 }).unwrap();
        assert!((p.max_xi() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn newtonian_params_rejects_bad_inputs() {
        let mut cfg = cfg_with(1e-12, 1e-4, 1e-3);
        cfg.mass_kg = -1.0;
        assert!(newtonian_params(&cfg, SplitConfig::LargeAmplitude).is_err());
        let cfg = cfg_with(1e-12, 0.0, 1e-3);
        assert!(newtonian_params(&cfg, SplitConfig::LargeAmplitude).is_err());
    }

    #[test]
    fn u1_examples() {
        let alpha = ModeAmplitude::real(1.3);
        let start = BranchState::prepared(&[alpha]);
        let none = GateParams::new(alpha, [0.0; 4], 1.0);
        assert_eq!(apply_u1(&start, &none, false), start);

        let p = GateParams::new(alpha, [0.1, 0.2, 0.3, 0.4], 0.7);
        let s1 = apply_u1(&start, &p, false);
        for b in 0..4 {
            let l = s1.labels()[b][0].value();
            assert!((l - Complex64::new(1.3, p.xi[b].sqrt())).norm() < 1e-15);
        }
        let back = apply_u1(&s1, &p, true);
        for b in 0..4 {
            assert!((back.amps()[b] - start.amps()[b]).norm() < 1e-12);
            assert!((back.labels()[b][0].value() - alpha.value()).norm() < 1e-12);
        }
    }

    #[test]
    fn u2_examples() {
        let s = BranchState::prepared(&[ModeAmplitude::real(1.0)]);
        assert_eq!(apply_u2(&s, 0.0), s);
        let full = apply_u2(&s, 2.0 * PI);
        assert!((full.labels()[2][0].value() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let quarter = apply_u2(&s, PI / 2.0);
        assert!((quarter.labels()[0][0].value() - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(quarter.amps(), s.amps());
    }

    #[test]
    fn trivial_protocol_is_unentangled() {
        let out = run_protocol(&GateParams::new(ModeAmplitude::real(0.4), [0.0; 4], 1.0));
        let target = TwoQubitDensity::from_pure(&crate::register::beamsplitter_prepare());
        assert!(out.reduced.trace_distance(&target) < 1e-14);
        assert!(out.entropy_final().abs() < 1e-14);
    }

    #[test]
    fn large_amplitude_reaches_controlled_phase() {
        let alpha = ModeAmplitude::real(1000.0);
        let params = GateParams::large_amplitude(alpha, [0.0, 0.0, 0.0, PI]);
        let out = run_protocol(&params);
        let target = ideal_output([0.0, 0.0, 0.0, PI]).density();
        assert!(out.reduced.trace_distance(&target) < 1e-3);
    }

    #[test]
    fn infidelity_falls_with_amplitude() {
        let mut last = f64::INFINITY;
        for a in [10.0, 100.0, 1000.0] {
            let params = GateParams::large_amplitude(ModeAmplitude::real(a), [0.0, 0.0, 0.0, PI]);
            let inf = infidelity(&run_protocol(&params).reduced, &ideal_output(params.phi_target));
            assert!(inf < last, "alpha {a}: {inf} !< {last}");
            last = inf;
        }
    }

    #[test]
    fn phase_converges_to_target() {
        let mut last = f64::INFINITY;
        for a in [10.0, 100.0, 1000.0] {
            let params = GateParams::large_amplitude(ModeAmplitude::real(a), [0.0, 0.0, 0.0, PI]);
            let ph = branch_phases(&run_protocol(&params).final_state, 1e-9);
            let err = wrap_phase(ph.phases[3] - PI).abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn numeric_backend_examples() {
        let zero = GateParams::new(ModeAmplitude::real(1.0), [0.0; 4], 1.0);
        let num = run_protocol_numeric(&zero, protocol_cutoff(&zero)).unwrap();
        let ana = run_protocol(&zero);
        assert!(num.reduced.trace_distance(&ana.reduced) < 1e-12);

        let p = GateParams::new(ModeAmplitude::real(1.0), [0.0, 0.0, 0.0, 0.25], 1.0);
        let num = run_protocol_numeric(&p, protocol_cutoff(&p)).unwrap();
        let ana = run_protocol(&p);
        assert!(num.reduced.trace_distance(&ana.reduced) < 1e-6);
        for n in num.norms {
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn numeric_backend_detects_small_cutoff() {
        let p = GateParams::new(ModeAmplitude::real(2.0), [0.0, 0.0, 0.0, 0.5], 1.0);
        assert!(matches!(
            run_protocol_numeric(&p, 3),
            Err(GateError::Fock(FockError::CutoffTooSmall { .. }))
        ));
        // initial state fits but the displaced branch leaks into the top levels
        assert!(matches!(
            run_protocol_numeric(&p, 22),
            Err(GateError::Fock(FockError::CutoffTooSmall { .. }))
        ));
    }

    #[test]
    fn field_entropy_single_shift() {
        for xi in [0.0, 0.01, 0.3, 1.0] {
            let p = GateParams::new(ModeAmplitude::real(0.8), [0.0, 0.0, 0.0, xi], 1.0);
            let s1 = apply_u1(&BranchState::prepared(&[p.alpha0]), &p, false);
            let sl = field_mass_entanglement(&s1);
            assert!((sl - 0.375 * (1.0 - (-xi as f64).exp())).abs() < 1e-12);
        }
        let p = GateParams::new(ModeAmplitude::real(0.8), [0.0, 0.0, 0.0, 0.01], 1.0);
        let s1 = apply_u1(&BranchState::prepared(&[p.alpha0]), &p, false);
        assert!((field_mass_entanglement(&s1) - 3.73e-3).abs() < 1e-5);
    }

    #[test]
    fn entropy_after_u1_ignores_w() {
        let a = run_protocol(&GateParams::new(ModeAmplitude::real(1.0), [0.1, 0.2, 0.0, 0.4], 0.3));
        let b = run_protocol(&GateParams::new(ModeAmplitude::real(1.0), [0.1, 0.2, 0.0, 0.4], 2.1));
        assert!((a.entropy_after_u1() - b.entropy_after_u1()).abs() < 1e-15);
        assert!((a.entropy_final() - b.entropy_final()).abs() > 1e-3);
    }

    #[test]
    fn elastic_without_rotation() {
        let p = GateParams::new(ModeAmplitude::from_re_im(0.3, -0.7), [0.2, 0.1, 0.5, 0.4], 0.0);
        let out = run_protocol(&p);
        let ph = branch_phases(&out.final_state, 1e-9);
        assert!(ph.elastic);
        for l in out.final_state.labels() {
            assert!((l[0].value() - p.alpha0.value()).norm() < 1e-12);
        }
        for phase in ph.phases {
            assert!(phase.abs() < 1e-12);
        }
    }

    #[test]
    fn phases_ignore_global_phase() {
        let p = GateParams::large_amplitude(ModeAmplitude::real(50.0), [0.1, 0.0, 0.3, 1.2]);
        let out = run_protocol(&p);
        let a = branch_phases(&out.final_state, 1.0);
        let b = branch_phases(&out.final_state.with_global_phase(0.77), 1.0);
        for i in 0..4 {
            assert!(wrap_phase(a.phases[i] - b.phases[i]).abs() < 1e-12);
        }
    }
}
