//! Predictions of the theory classes that do not quantize the field:
//! mean-field (semiclassical) gravity, the Hamiltonian-averaged variant,
//! Penrose-type collapse and induced gravity.

use std::fmt;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::negativity;
use crate::constants::Constants;
use crate::experiment::ExperimentConfig;
use crate::linearized::{position_dependent_rate, LinearizedError, ModeGrid};
use crate::numeric::cis;
use crate::register::{TwoQubitDensity, TwoQubitState};

/// Negativity above which a prediction counts as entangling.
pub const ENTANGLING_NEGATIVITY: f64 = 1e-10;

/// Order of magnitude quoted in the literature for the collapse time of the
/// reference experiment.
pub const PENROSE_QUOTED_ORDER_S: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoryTag {
    QuantumLinearized,
    SemiclassicalEinstein,
    SemiclassicalHamiltonianAverage,
    CollapsePenrose,
    InducedGravity,
}

impl TheoryTag {
    pub const ALL: [TheoryTag; 5] = [
        TheoryTag::QuantumLinearized,
        TheoryTag::SemiclassicalEinstein,
        TheoryTag::SemiclassicalHamiltonianAverage,
        TheoryTag::CollapsePenrose,
        TheoryTag::InducedGravity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoryTag::QuantumLinearized => "quantum-linearized",
            TheoryTag::SemiclassicalEinstein => "semiclassical-einstein",
            TheoryTag::SemiclassicalHamiltonianAverage => "semiclassical-hamiltonian-average",
            TheoryTag::CollapsePenrose => "collapse-penrose",
            TheoryTag::InducedGravity => "induced-gravity",
        }
    }
}

impl fmt::Display for TheoryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub tag: TheoryTag,
    pub reduced_state: Option<TwoQubitDensity>,
    /// Phase on arm 1 relative to arm 0, per mass.
    pub local_phases: Option<[f64; 2]>,
    /// Relative branch phases φ_ab.
    pub branch_phases: Option<[f64; 4]>,
    pub entangling: bool,
    pub notes: Vec<String>,
}

impl PredictionRecord {
    pub fn from_state(tag: TheoryTag, rho: TwoQubitDensity, notes: Vec<String>) -> Self {
        let entangling = negativity(&rho) > ENTANGLING_NEGATIVITY;
        Self {
            tag,
            reduced_state: Some(rho),
            local_phases: None,
            branch_phases: None,
            entangling,
            notes,
        }
    }

    fn with_local_phases(mut self, theta: [f64; 2]) -> Self {
        self.local_phases = Some(theta);
        self.branch_phases = Some([0.0, theta[1], theta[0], theta[0] + theta[1]]);
        self
    }
}

/// (|0⟩ + e^{iθ₁}|1⟩)/√2 ⊗ (|0⟩ + e^{iθ₂}|1⟩)/√2.
pub fn product_state(theta: [f64; 2]) -> TwoQubitState {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    TwoQubitState::product([h, h * cis(theta[0])], [h, h * cis(theta[1])])
}

/// G m² t / (ħ d_m) with d_m = (d1 + d2)/2; zero when either distance is
/// absent.
pub fn semiclassical_phase(m: f64, d1: Option<f64>, d2: Option<f64>, t: f64, k: &Constants) -> f64 {
    match (d1, d2) {
        (Some(d1), Some(d2)) => k.newtonian_rate(m, 0.5 * (d1 + d2)) * t,
        _ => 0.0,
    }
}

/// Semiclassical (⟨T⟩-sourced) prediction. Arm 1 of each mass sees the other
/// mass at the average of its two distances.
pub fn semiclassical_evolve(cfg: &ExperimentConfig, t: f64) -> PredictionRecord {
    let d = cfg.distances();
    let k = &cfg.constants;
    let theta = [
        semiclassical_phase(cfg.mass_kg, d[3], d[2], t, k),
        semiclassical_phase(cfg.mass_kg, d[3], d[1], t, k),
    ];
    let mut notes = vec!["product state by construction; phase attributed to arm 1 of each mass".to_string()];
    if d[1].is_none() || d[2].is_none() || d[3].is_none() {
        notes.push("an arm pair does not interact; its average distance is infinite".to_string());
    }
    let rho = TwoQubitDensity::from_pure(&product_state(theta));
    PredictionRecord::from_state(TheoryTag::SemiclassicalEinstein, rho, notes).with_local_phases(theta)
}

/// Mass-occupation operators replaced by their mean 1/2 per arm; each arm
/// then feels the c-number potential averaged over the other mass's arms.
pub fn hamiltonian_average_evolve(
    cfg: &ExperimentConfig,
    grid: &ModeGrid,
    t: f64,
) -> Result<PredictionRecord, LinearizedError> {
    let mut rate = [0.0; 4];
    for (i, d) in cfg.distances().iter().enumerate() {
        if let Some(d) = d {
            rate[i] = position_dependent_rate(*d, cfg.mass_kg, grid, &cfg.constants)?;
        }
    }
    // arm phases: mass 1 arm a → ½(r_a0 + r_a1), mass 2 arm b → ½(r_0b + r_1b)
    let m1 = [0.5 * (rate[0] + rate[1]), 0.5 * (rate[2] + rate[3])];
    let m2 = [0.5 * (rate[0] + rate[2]), 0.5 * (rate[1] + rate[3])];
    let theta = [(m1[1] - m1[0]) * t, (m2[1] - m2[0]) * t];
    let rho = TwoQubitDensity::from_pure(&product_state(theta));
    let notes = vec!["mean-field source; each mass evolves in a c-number potential".to_string()];
    Ok(PredictionRecord::from_state(TheoryTag::SemiclassicalHamiltonianAverage, rho, notes).with_local_phases(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenroseEstimate {
    pub formula_s: f64,
    pub quoted_order_s: f64,
    /// |log10(formula / quoted)|.
    pub orders_apart: f64,
    /// True when the two differ by more than one order of magnitude.
    pub conflict: bool,
}

/// ħ d / (G m²).
pub fn penrose_time(m: f64, d: f64, k: &Constants) -> f64 {
    assert!(m > 0.0 && d > 0.0, "penrose_time needs positive mass and extent");
    k.hbar * d / (k.g * m * m)
}

pub fn penrose_estimate(m: f64, d: f64, k: &Constants) -> PenroseEstimate {
    let formula_s = penrose_time(m, d, k);
    let orders_apart = (formula_s / PENROSE_QUOTED_ORDER_S).log10().abs();
    PenroseEstimate {
        formula_s,
        quoted_order_s: PENROSE_QUOTED_ORDER_S,
        orders_apart,
        conflict: orders_apart > 1.0,
    }
}

/// Single-mass density after path dephasing with visibility `v`.
fn dephased_qubit(theta: f64, v: f64) -> Matrix2<Complex64> {
    let off = cis(-theta) * (0.5 * v);
    Matrix2::new(
        Complex64::new(0.5, 0.0),
        off,
        off.conj(),
        Complex64::new(0.5, 0.0),
    )
}

/// Semiclassical local phases followed by independent path dephasing of each
/// mass at rate 1/t_c, t_c = penrose_time(m, arm separation).
pub fn collapse_evolve(cfg: &ExperimentConfig, t: f64) -> PredictionRecord {
    let est = penrose_estimate(cfg.mass_kg, cfg.arm_separation(), &cfg.constants);
    let v = (-t / est.formula_s).exp();
    let theta = semiclassical_evolve(cfg, t).local_phases.unwrap_or([0.0; 2]);
    let m: Matrix4<Complex64> = dephased_qubit(theta[0], v).kronecker(&dephased_qubit(theta[1], v));
    let rho = TwoQubitDensity::new(m).expect("tensor product of single-qubit states");
    let mut notes = vec![
        "channel: exponential path dephasing, visibility exp(-t/t_c)".to_string(),
        format!("t_c = {:.6e} s", est.formula_s),
    ];
    if est.conflict {
        notes.push(format!(
            "collapse time from hbar*d/(G*m^2) is {:.3e} s, {:.1} orders from the quoted order {:.0e} s",
            est.formula_s, est.orders_apart, est.quoted_order_s
        ));
    }
    PredictionRecord::from_state(TheoryTag::CollapsePenrose, rho, notes).with_local_phases(theta)
}

pub fn induced_gravity_note() -> PredictionRecord {
    PredictionRecord {
        tag: TheoryTag::InducedGravity,
        reduced_state: None,
        local_phases: None,
        branch_phases: None,
        entangling: false,
        notes: vec![
            "classical induced field: no entanglement generation in its present form".to_string(),
            "entanglement could still arise from other quantum fields; no dynamics computed".to_string(),
        ],
    }
}
