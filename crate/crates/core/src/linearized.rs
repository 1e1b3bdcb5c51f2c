//! Multimode linearized gravity with static path-superposed sources.
//!
//! Each mode is driven by H_k/ħ = ω_k a†a − (λ_k a + λ_k* a†), which is
//! solved exactly. Mode directions are angle-averaged, so a branch pair at
//! separation d enters through sinc(k d) and the mode set reduces to a
//! radial grid with weight V k² Δk / (2π²) per bucket.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::constants::Constants;
use crate::experiment::{ExperimentConfig, GridSettings};
use crate::fockspace::{self, FockError, ModeAmplitude};
use crate::gatemodel::reduced_from_gram;
use crate::numeric::{cis, sinc, wrap_phase, CompensatedSum};
use crate::quadrature::{richardson_half_line, GaussLegendre, OscillatorySettings, QuadratureError};
use crate::register::TwoQubitDensity;

#[derive(Debug, Error)]
pub enum LinearizedError {
    #[error("{0} must be positive and finite, got {1}")]
    NonPositive(&'static str, f64),
    #[error("grid needs at least two points and k_min < k_max")]
    BadGrid,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

fn positive(name: &'static str, v: f64) -> Result<f64, LinearizedError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(LinearizedError::NonPositive(name, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMode {
    /// Wavenumber, 1/m.
    pub k: f64,
    /// ω = c k, rad/s.
    pub omega: f64,
    /// Number of modes represented, V k² Δk / (2π²).
    pub weight: f64,
}

/// Radial mode grid. Couplings depend on the mass and are produced by
/// [`ModeGrid::couplings`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    modes: Vec<GridMode>,
    volume: f64,
}

impl ModeGrid {
    /// Logarithmic grid with trapezoid weights in ln k.
    pub fn logarithmic(
        k_min: f64,
        k_max: f64,
        points: usize,
        volume: f64,
        c: f64,
    ) -> Result<Self, LinearizedError> {
        positive("k_min", k_min)?;
        positive("k_max", k_max)?;
        positive("volume", volume)?;
        positive("c", c)?;
        if points < 2 || k_min >= k_max {
            return Err(LinearizedError::BadGrid);
        }
        let step = (k_max / k_min).ln() / (points - 1) as f64;
        let modes = (0..points)
            .map(|i| {
                let k = k_min * (step * i as f64).exp();
                let end = i == 0 || i == points - 1;
                let dk = step * k * if end { 0.5 } else { 1.0 };
                GridMode {
                    k,
                    omega: c * k,
                    weight: volume * k * k * dk / (2.0 * PI * PI),
                }
            })
            .collect();
        Ok(Self { modes, volume })
    }

    /// k ∈ [k_min_factor / max length, k_max_factor / min length].
    pub fn for_lengths(lengths: &[f64], settings: &GridSettings, c: f64) -> Result<Self, LinearizedError> {
        let finite: Vec<f64> = lengths.iter().copied().filter(|l| l.is_finite() && *l > 0.0).collect();
        if finite.is_empty() {
            return Err(LinearizedError::NonPositive("length scale", f64::NAN));
        }
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(0.0, f64::max);
        Self::logarithmic(
            settings.k_min_factor / hi,
            settings.k_max_factor / lo,
            settings.points,
            settings.volume_m3,
            c,
        )
    }

    /// Grid from the configuration's grid settings (defaults when the field
    /// model carries none).
    pub fn for_config(cfg: &ExperimentConfig) -> Result<Self, LinearizedError> {
        let settings = match cfg.field {
            crate::experiment::FieldConfig::Multimode { grid } => grid,
            _ => GridSettings::default(),
        };
        Self::for_lengths(&cfg.length_scales(), &settings, cfg.constants.c)
    }

    pub fn single(k: f64, weight: f64, volume: f64, c: f64) -> Result<Self, LinearizedError> {
        positive("k", k)?;
        positive("weight", weight)?;
        positive("volume", volume)?;
        Ok(Self {
            modes: vec![GridMode { k, omega: c * k, weight }],
            volume,
        })
    }

    /// Same wavenumbers in a different quantization volume, weights rescaled.
    pub fn with_volume(&self, volume: f64) -> Result<Self, LinearizedError> {
        positive("volume", volume)?;
        let r = volume / self.volume;
        Ok(Self {
            modes: self.modes.iter().map(|m| GridMode { weight: m.weight * r, ..*m }).collect(),
            volume,
        })
    }

    pub fn modes(&self) -> &[GridMode] {
        &self.modes
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn k_range(&self) -> (f64, f64) {
        (self.modes[0].k, self.modes[self.modes.len() - 1].k)
    }

    /// g_k for every mode.
    pub fn couplings(&self, mass: f64, constants: &Constants) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| coupling_from_omega(m.omega, mass, self.volume, constants))
            .collect()
    }
}

fn coupling_from_omega(omega: f64, m: f64, volume: f64, k: &Constants) -> f64 {
    m * k.c * (2.0 * PI * k.g / (k.hbar * omega * volume)).sqrt()
}

/// g_k = m c √(2πG / (ħ ω_k V)).
pub fn coupling_g(k: f64, m: f64, volume: f64, constants: &Constants) -> Result<f64, LinearizedError> {
    positive("k", k)?;
    positive("mass", m)?;
    positive("volume", volume)?;
    Ok(coupling_from_omega(constants.c * k, m, volume, constants))
}

/// Driven single mode started from vacuum: e^{−iHt}|0⟩ = e^{iΦ}|β⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivenMode {
    pub displacement: Complex64,
    pub phase: f64,
}

/// β(t) = (λ*/ω)(1 − e^{−iωt}), Φ(t) = (|λ|²/ω)(t − sin(ωt)/ω).
pub fn driven_mode(lambda: Complex64, omega: f64, t: f64) -> DrivenMode {
    let one_minus = Complex64::new(1.0, 0.0) - cis(-omega * t);
    DrivenMode {
        displacement: lambda.conj() / omega * one_minus,
        phase: lambda.norm_sqr() / omega * (t - (omega * t).sin() / omega),
    }
}

/// Same quantity by diagonalizing the truncated Hamiltonian. The phase is
/// returned in (−π, π].
pub fn driven_mode_numeric(
    lambda: Complex64,
    omega: f64,
    t: f64,
    n_max: usize,
) -> Result<DrivenMode, LinearizedError> {
    let a = fockspace::annihilation(n_max);
    let a = a.matrix();
    let n = fockspace::number(n_max);
    let h: DMatrix<Complex64> = n.matrix() * Complex64::new(omega, 0.0)
        - (a * lambda + a.adjoint() * lambda.conj());
    let eig = h.symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DVector::from_iterator(n_max + 1, eig.eigenvalues.iter().map(|e| cis(-e * t)));
    let vac = v.adjoint().column(0).into_owned();
    let psi = v * vac.component_mul(&phases);

    let tail: f64 = psi.iter().skip(n_max.saturating_sub(10)).map(|c| c.norm_sqr()).sum();
    if tail > 1e-10 {
        return Err(FockError::CutoffTooSmall {
            n_max,
            deficit: tail,
            tol: 1e-10,
        }
        .into());
    }
    let beta = (psi.adjoint() * a * &psi)[(0, 0)];
    let coh = fockspace::coherent_coeffs_unchecked(ModeAmplitude::new(beta)?, n_max);
    let proj: Complex64 = coh.coeffs().iter().zip(psi.iter()).map(|(c, p)| c.conj() * p).sum();
    Ok(DrivenMode {
        displacement: beta,
        phase: wrap_phase(proj.arg()),
    })
}

/// Two masses with their branch separations. `None` marks a pair too far
/// apart to interact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassConfiguration {
    pub mass_kg: f64,
    pub distances: [Option<f64>; 4],
    /// Arm separation within each interferometer.
    pub arm_separations: [f64; 2],
}

impl MassConfiguration {
    pub fn from_positions(mass_kg: f64, mass1: [[f64; 3]; 2], mass2: [[f64; 3]; 2]) -> Self {
        let g = crate::experiment::Geometry {
            mass1_arms_m: mass1,
            mass2_arms_m: mass2,
        };
        Self {
            mass_kg,
            distances: g.distances().map(Some),
            arm_separations: g.arm_separations(),
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let s = match &cfg.geometry {
            Some(g) if cfg.branch_distances_m.is_none() => g.arm_separations(),
            _ => [cfg.arm_separation(); 2],
        };
        Self {
            mass_kg: cfg.mass_kg,
            distances: cfg.distances(),
            arm_separations: s,
        }
    }

    fn validate(&self) -> Result<(), LinearizedError> {
        positive("mass", self.mass_kg)?;
        for d in self.distances.iter().flatten() {
            positive("branch distance", *d)?;
        }
        for s in self.arm_separations {
            positive("arm separation", s)?;
        }
        Ok(())
    }

    fn pair_sinc(d: Option<f64>, k: f64) -> f64 {
        d.map_or(0.0, |d| sinc(k * d))
    }

    /// ⟨|λ_B|²⟩/g² = 2 + 2 sinc(k d_B).
    pub fn source_power(&self, branch: usize, k: f64) -> f64 {
        2.0 + 2.0 * Self::pair_sinc(self.distances[branch], k)
    }

    /// ⟨Re λ_B λ_B'*⟩/g².
    pub fn source_correlation(&self, b: usize, bp: usize, k: f64) -> f64 {
        let (a1, a2) = (b >> 1, b & 1);
        let (p1, p2) = (bp >> 1, bp & 1);
        let own1 = if a1 == p1 { 1.0 } else { sinc(k * self.arm_separations[0]) };
        let own2 = if a2 == p2 { 1.0 } else { sinc(k * self.arm_separations[1]) };
        own1 + own2
            + Self::pair_sinc(self.distances[2 * a1 + p2], k)
            + Self::pair_sinc(self.distances[2 * p1 + a2], k)
    }
}

/// Exact per-mode solution of the four branches.
#[derive(Debug, Clone, PartialEq)]
pub struct PolaronSolution {
    pub t: f64,
    pub couplings: Vec<f64>,
    /// g_k² |1 − e^{−iω_k t}|² / ω_k².
    pub drive_sq: Vec<f64>,
    /// Mean squared displacement per mode and branch.
    pub displacement_sq: Vec<[f64; 4]>,
    /// Branch phase from the position-dependent part of the source.
    pub position_phases: [f64; 4],
    /// Position-independent self-energy phase, common to all branches.
    pub self_energy_phase: f64,
    /// Σ_k weight |β_k,B|².
    pub mean_photons: [f64; 4],
}

impl PolaronSolution {
    pub fn total_phases(&self) -> [f64; 4] {
        self.position_phases.map(|p| p + self.self_energy_phase)
    }
}

pub fn polaron_solution(
    cfg: &MassConfiguration,
    grid: &ModeGrid,
    t: f64,
    constants: &Constants,
) -> Result<PolaronSolution, LinearizedError> {
    cfg.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LinearizedError::NonPositive("time", t));
    }
    let couplings = grid.couplings(cfg.mass_kg, constants);
    let mut drive_sq = Vec::with_capacity(grid.len());
    let mut displacement_sq = Vec::with_capacity(grid.len());
    let mut pos = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    let mut photons = pos;
    let mut self_energy = CompensatedSum::new();
    for (mode, g) in grid.modes().iter().zip(&couplings) {
        let wt = mode.omega * t;
        let s = (0.5 * wt).sin();
        let d = g * g * 4.0 * s * s / (mode.omega * mode.omega);
        let secular = g * g / mode.omega * (t - wt.sin() / mode.omega);
        self_energy.add(mode.weight * 2.0 * secular);
        let mut row = [0.0; 4];
        for b in 0..4 {
            let p = cfg.source_power(b, mode.k);
            row[b] = d * p;
            photons[b].add(mode.weight * d * p);
            pos[b].add(mode.weight * (p - 2.0) * secular);
        }
        drive_sq.push(d);
        displacement_sq.push(row);
    }
    Ok(PolaronSolution {
        t,
        couplings,
        drive_sq,
        displacement_sq,
        position_phases: pos.map(|s| s.value()),
        self_energy_phase: self_energy.value(),
        mean_photons: photons.map(|s| s.value()),
    })
}

/// Σ weight · 2 g_k² sinc(k d) / ω_k.
pub fn position_dependent_rate(d: f64, m: f64, grid: &ModeGrid, constants: &Constants) -> Result<f64, LinearizedError> {
    positive("separation", d)?;
    positive("mass", m)?;
    Ok(grid
        .modes()
        .iter()
        .zip(grid.couplings(m, constants))
        .map(|(mode, g)| mode.weight * 2.0 * g * g * sinc(mode.k * d) / mode.omega)
        .collect::<CompensatedSum>()
        .value())
}

/// The continuum integral restricted to the grid's k window:
/// (2Gm²/(πħ)) ∫_{k_min}^{k_max} sinc(k d) dk.
pub fn window_rate(d: f64, m: f64, grid: &ModeGrid, constants: &Constants) -> Result<f64, LinearizedError> {
    positive("separation", d)?;
    positive("mass", m)?;
    let (lo, hi) = grid.k_range();
    let rule = GaussLegendre::new(16)?;
    let panels = (((hi - lo) * d / PI).ceil() as usize).max(64);
    let integral = rule.integrate_composite(|k| sinc(k * d), lo, hi, panels);
    Ok(2.0 * constants.g * m * m / (PI * constants.hbar) * integral)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumRate {
    /// G m² / (ħ d).
    pub closed_form: f64,
    pub quadrature: f64,
    pub relative_error: f64,
    pub extrapolation_estimate: f64,
}

/// Evaluates (2Gm²/(πħ)) ∫₀^∞ sinc(k d) dk with an e^{−εk} regulator
/// extrapolated to ε = 0 and compares with G m²/(ħ d).
pub fn continuum_rate(d: f64, m: f64, constants: &Constants, rel_tol: f64) -> Result<ContinuumRate, LinearizedError> {
    positive("separation", d)?;
    positive("mass", m)?;
    let prefactor = 2.0 * constants.g * m * m / (PI * constants.hbar);
    let ex = richardson_half_line(|k| sinc(k * d), &OscillatorySettings::for_half_period(PI / d))?;
    let quadrature = prefactor * ex.value;
    let closed_form = constants.newtonian_rate(m, d);
    let relative_error = (quadrature - closed_form).abs() / closed_form;
    if relative_error > rel_tol {
        return Err(QuadratureError::Extrapolation {
            first: quadrature,
            second: closed_form,
            tol: rel_tol,
        }
        .into());
    }
    Ok(ContinuumRate {
        closed_form,
        quadrature,
        relative_error,
        extrapolation_estimate: prefactor * ex.error_estimate,
    })
}

/// Joint state of masses and angle-averaged field after the interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodeOutcome {
    pub amps: [Complex64; 4],
    /// ⟨F_B'|F_B⟩.
    pub gram: [[Complex64; 4]; 4],
    pub reduced: TwoQubitDensity,
    pub polaron: PolaronSolution,
    /// Σ_k weight ⟨|β_B − β_B'|²⟩, indexed [B][B'].
    pub distinguishability: [[f64; 4]; 4],
    pub residual_linear_entropy: f64,
}

impl MultimodeOutcome {
    /// arg(c_B / c_00).
    pub fn branch_phases(&self) -> [f64; 4] {
        self.amps.map(|c| wrap_phase((c / self.amps[0]).arg()))
    }

    pub fn max_distinguishability(&self) -> f64 {
        self.distinguishability.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Branch amplitudes ½ e^{iΦ_B} with Φ_B the position-dependent phase;
/// the field overlaps are exp(−½ Σ_k weight ⟨|β_B − β_B'|²⟩), whose
/// imaginary part averages out over directions.
pub fn evolve_branches(cfg: &ExperimentConfig, grid: &ModeGrid, t: f64) -> Result<MultimodeOutcome, LinearizedError> {
    let masses = MassConfiguration::from_config(cfg);
    let polaron = polaron_solution(&masses, grid, t, &cfg.constants)?;
    let amps = polaron.position_phases.map(|p| 0.5 * cis(p));

    let mut dist = [[CompensatedSum::new(); 4]; 4];
    for (mode, d) in grid.modes().iter().zip(&polaron.drive_sq) {
        for b in 0..4 {
            for bp in (b + 1)..4 {
                let a = masses.source_power(b, mode.k) + masses.source_power(bp, mode.k)
                    - 2.0 * masses.source_correlation(b, bp, mode.k);
                dist[b][bp].add(mode.weight * d * a);
            }
        }
    }
    let mut distinguishability = [[0.0; 4]; 4];
    let mut gram = [[Complex64::new(1.0, 0.0); 4]; 4];
    for b in 0..4 {
        for bp in (b + 1)..4 {
            let x = dist[b][bp].value().max(0.0);
            distinguishability[b][bp] = x;
            distinguishability[bp][b] = x;
            gram[b][bp] = Complex64::new((-0.5 * x).exp(), 0.0);
            gram[bp][b] = gram[b][bp];
        }
    }
    let reduced = reduced_from_gram(&amps, &gram);
    let residual_linear_entropy = 1.0 - reduced.purity();
    Ok(MultimodeOutcome {
        amps,
        gram,
        reduced,
        polaron,
        distinguishability,
        residual_linear_entropy,
    })
}

/// Linear entropy of the masses from the Gram matrix alone, accurate when
/// it is far below rounding of 1 − Tr ρ².
pub fn residual_entropy_small(outcome: &MultimodeOutcome) -> f64 {
    // 1 − Tr ρ² = Σ_{B≠B'} |c_B|²|c_B'|² (1 − |G_BB'|²) for equal-weight branches
    let mut s = CompensatedSum::new();
    for b in 0..4 {
        for bp in 0..4 {
            if b != bp {
                let w = outcome.amps[b].norm_sqr() * outcome.amps[bp].norm_sqr();
                s.add(w * -(-outcome.distinguishability[b][bp]).exp_m1());
            }
        }
    }
    s.value()
}
