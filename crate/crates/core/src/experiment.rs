//! Experiment configuration: masses, geometry, timing, field model, constants
//! and tolerances. Deserialized from a single JSON document and validated
//! before any computation runs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::Constants;
use crate::fockspace::ModeAmplitude;
use crate::register::{branches, PathLabel};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexValue {
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<ComplexValue> for Complex64 {
    fn from(v: ComplexValue) -> Self {
        Complex64::new(v.re, v.im)
    }
}

/// Separation between arm `a` of the first mass and arm `b` of the second.
/// `null` marks a pair that does not interact (taken as infinitely far).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDistances {
    #[serde(default)]
    pub d00: Option<f64>,
    #[serde(default)]
    pub d01: Option<f64>,
    #[serde(default)]
    pub d10: Option<f64>,
    #[serde(default)]
    pub d11: Option<f64>,
}

impl BranchDistances {
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.d00, self.d01, self.d10, self.d11]
    }

    pub fn from_array(d: [Option<f64>; 4]) -> Self {
        Self {
            d00: d[0],
            d01: d[1],
            d10: d[2],
            d11: d[3],
        }
    }

    /// Only the closer arms interact.
    pub fn closer_arms_only(d11: f64) -> Self {
        Self {
            d11: Some(d11),
            ..Self::default()
        }
    }
}

/// Arm coordinates (metres) of both interferometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub mass1_arms_m: [[f64; 3]; 2],
    pub mass2_arms_m: [[f64; 3]; 2],
}

fn dist(p: [f64; 3], q: [f64; 3]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

impl Geometry {
    /// All four arms on one line: arm positions along x.
    pub fn collinear(mass1_x: [f64; 2], mass2_x: [f64; 2]) -> Self {
        Self {
            mass1_arms_m: [[mass1_x[0], 0.0, 0.0], [mass1_x[1], 0.0, 0.0]],
            mass2_arms_m: [[mass2_x[0], 0.0, 0.0], [mass2_x[1], 0.0, 0.0]],
        }
    }

    pub fn distances(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, (a, b)) in branches().into_iter().enumerate() {
            out[i] = dist(self.mass1_arms_m[a.bit()], self.mass2_arms_m[b.bit()]);
        }
        out
    }

    pub fn arm_separations(&self) -> [f64; 2] {
        [
            dist(self.mass1_arms_m[0], self.mass1_arms_m[1]),
            dist(self.mass2_arms_m[0], self.mass2_arms_m[1]),
        ]
    }
}

/// How the linearized-gravity prediction is computed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    /// Elastic limit of the gate protocol: the field ends unentangled and the
    /// masses carry the Newtonian controlled phases exactly.
    #[default]
    Elastic,
    /// Single-mode three-step gate protocol on the analytic backend.
    Gate {
        #[serde(default)]
        split: SplitConfig,
    },
    /// Multimode linearized Hamiltonian on a radial mode grid.
    Multimode {
        #[serde(default)]
        grid: GridSettings,
    },
}

/// How a target phase φ is split into a field shift ξ and rotation w with
/// w ξ = φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitConfig {
    /// ξ = φ|α₀|², w = 1/|α₀|²; converges to the ideal gate as |α₀| grows.
    #[default]
    LargeAmplitude,
    /// Largest ξ_ab equals `max_xi`.
    Bounded { max_xi: f64 },
    /// ξ = φ s, w = 1/s.
    Scale { scale: f64 },
    /// ξ_ab = (m/m_P)² d_min/d_ab and w = cΔt/d_min.
    Planck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    pub points: usize,
    /// k_min = k_min_factor / d_max.
    pub k_min_factor: f64,
    /// k_max = k_max_factor / d_min.
    pub k_max_factor: f64,
    pub volume_m3: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            points: 2048,
            k_min_factor: 1e-2,
            k_max_factor: 1e3,
            volume_m3: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub trunc: f64,
    pub unitary: f64,
    pub protected_margin: usize,
    pub elastic_label_spread: f64,
    pub witness_margin: f64,
    pub negativity_threshold: f64,
    /// Max |observed − predicted| witness for the quantum prediction to count
    /// as consistent with an observation.
    pub witness_match: f64,
    pub quadrature_rel: f64,
    pub backend_trace_distance: f64,
    pub polaron: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            trunc: 1e-10,
            unitary: 1e-8,
            protected_margin: 10,
            elastic_label_spread: 1e-9,
            witness_margin: 1e-6,
            negativity_threshold: 1e-10,
            witness_match: 0.05,
            quadrature_rel: 1e-4,
            backend_trace_distance: 1e-6,
            polaron: 1e-7,
        }
    }
}

impl Tolerances {
    pub fn fock(&self) -> crate::fockspace::FockTolerances {
        crate::fockspace::FockTolerances {
            trunc: self.trunc,
            unitary: self.unitary,
            margin: self.protected_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mass_kg: f64,
    /// Superposition extent within each interferometer. Derived from
    /// `geometry` when omitted there.
    #[serde(default)]
    pub arm_separation_m: Option<f64>,
    #[serde(default)]
    pub branch_distances_m: Option<BranchDistances>,
    #[serde(default)]
    pub geometry: Option<Geometry>,
    pub interaction_time_s: f64,
    #[serde(default = "default_alpha0")]
    pub alpha0: ComplexValue,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_alpha0() -> ComplexValue {
    ComplexValue { re: 1000.0, im: 0.0 }
}

impl Default for ExperimentConfig {
    /// 1e-12 kg masses, 100 µm arms, only the closer arms interacting at
    /// 100 µm, and an interaction time giving an entangling phase of π.
    fn default() -> Self {
        let constants = Constants::default();
        let d = 1e-4;
        let m = 1e-12;
        Self {
            mass_kg: m,
            arm_separation_m: Some(d),
            branch_distances_m: Some(BranchDistances::closer_arms_only(d)),
            geometry: None,
            interaction_time_s: std::f64::consts::PI / constants.newtonian_rate(m, d),
            alpha0: default_alpha0(),
            field: FieldConfig::Elastic,
            constants,
            tolerances: Tolerances::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be finite and > 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("mass_kg", self.mass_kg)?;
        if !(self.interaction_time_s.is_finite() && self.interaction_time_s >= 0.0) {
            return Err(ConfigError::new(
                "interaction_time_s",
                format!("must be finite and >= 0, got {}", self.interaction_time_s),
            ));
        }
        if !self.constants.all_positive() {
            return Err(ConfigError::new("constants", "G, hbar and c must be finite and > 0"));
        }
        if !(self.alpha0.re.is_finite() && self.alpha0.im.is_finite()) {
            return Err(ConfigError::new("alpha0", "must be finite"));
        }
        match (&self.branch_distances_m, &self.geometry) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "branch_distances_m",
                    "give either branch_distances_m or geometry, not both",
                ))
            }
            (None, None) => {
                return Err(ConfigError::new(
                    "branch_distances_m",
                    "one of branch_distances_m or geometry is required",
                ))
            }
            (Some(d), None) => {
                let arr = d.as_array();
                let names = ["d00", "d01", "d10", "d11"];
                for (v, name) in arr.iter().zip(names) {
                    if let Some(v) = v {
                        positive(&format!("branch_distances_m.{name}"), *v)?;
                    }
                }
                if arr.iter().all(|v| v.is_none()) {
                    return Err(ConfigError::new("branch_distances_m", "at least one pair must interact"));
                }
                let s = self.arm_separation_m.ok_or_else(|| {
                    ConfigError::new("arm_separation_m", "required when branch_distances_m is given")
                })?;
                positive("arm_separation_m", s)?;
                check_triangles(arr, s)?;
            }
            (None, Some(g)) => {
                for (i, v) in g.mass1_arms_m.iter().chain(&g.mass2_arms_m).flatten().enumerate() {
                    if !v.is_finite() {
                        return Err(ConfigError::new("geometry", format!("coordinate {i} is not finite")));
                    }
                }
                for (v, name) in g.distances().iter().zip(["d00", "d01", "d10", "d11"]) {
                    positive(&format!("geometry.{name}"), *v)?;
                }
                let [s1, s2] = g.arm_separations();
                positive("geometry.mass1_arms_m separation", s1)?;
                positive("geometry.mass2_arms_m separation", s2)?;
                if (s1 - s2).abs() > 1e-9 * s1.max(s2) {
                    return Err(ConfigError::new(
                        "geometry",
                        format!("both interferometers must have equal arm separation ({s1} vs {s2})"),
                    ));
                }
                if let Some(s) = self.arm_separation_m {
                    positive("arm_separation_m", s)?;
                    if (s - s1).abs() > 1e-9 * s {
                        return Err(ConfigError::new(
                            "arm_separation_m",
                            format!("{s} disagrees with the geometry's arm separation {s1}"),
                        ));
                    }
                }
            }
        }
        match self.field {
            FieldConfig::Gate { split } => match split {
                SplitConfig::Bounded { max_xi } => positive("field.split.max_xi", max_xi)?,
                SplitConfig::Scale { scale } => positive("field.split.scale", scale)?,
                SplitConfig::LargeAmplitude => {
                    if Complex64::from(self.alpha0).norm() == 0.0 {
                        return Err(ConfigError::new(
                            "field.split",
                            "large_amplitude split needs a nonzero alpha0",
                        ));
                    }
                }
                SplitConfig::Planck => {}
            },
            FieldConfig::Multimode { grid } => {
                if grid.points < 2 {
                    return Err(ConfigError::new("field.grid.points", "need at least 2 points"));
                }
                positive("field.grid.k_min_factor", grid.k_min_factor)?;
                positive("field.grid.k_max_factor", grid.k_max_factor)?;
                positive("field.grid.volume_m3", grid.volume_m3)?;
            }
            FieldConfig::Elastic => {}
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.trunc", t.trunc),
            ("tolerances.unitary", t.unitary),
            ("tolerances.elastic_label_spread", t.elastic_label_spread),
            ("tolerances.witness_margin", t.witness_margin),
            ("tolerances.negativity_threshold", t.negativity_threshold),
            ("tolerances.witness_match", t.witness_match),
            ("tolerances.quadrature_rel", t.quadrature_rel),
            ("tolerances.backend_trace_distance", t.backend_trace_distance),
            ("tolerances.polaron", t.polaron),
        ] {
            positive(name, v)?;
        }
        Ok(())
    }

    pub fn alpha0(&self) -> ModeAmplitude {
        ModeAmplitude::from_re_im(self.alpha0.re, self.alpha0.im)
    }

    /// d_ab in basis order; `None` for pairs that do not interact.
    pub fn distances(&self) -> [Option<f64>; 4] {
        match (&self.branch_distances_m, &self.geometry) {
            (Some(d), _) => d.as_array(),
            (None, Some(g)) => g.distances().map(Some),
            (None, None) => [None; 4],
        }
    }

    pub fn distance(&self, a: PathLabel, b: PathLabel) -> Option<f64> {
        self.distances()[crate::register::branch_index(a, b)]
    }

    pub fn arm_separation(&self) -> f64 {
        match (self.arm_separation_m, &self.geometry) {
            (Some(s), _) => s,
            (None, Some(g)) => g.arm_separations()[0],
            (None, None) => f64::NAN,
        }
    }

    /// Every finite length scale in the configuration.
    pub fn length_scales(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.distances().iter().flatten().copied().collect();
        out.push(self.arm_separation());
        out
    }
}

/// Triangle inequalities between the arms of one mass and each arm of the
/// other, for every fully specified triple.
fn check_triangles(d: [Option<f64>; 4], s: f64) -> Result<(), ConfigError> {
    let tol = 1e-12;
    let check = |x: Option<f64>, y: Option<f64>, what: &str| -> Result<(), ConfigError> {
        if let (Some(x), Some(y)) = (x, y) {
            let scale = x.max(y).max(s);
            if (x - y).abs() > s + tol * scale || s > x + y + tol * scale {
                return Err(ConfigError::new(
                    "branch_distances_m",
                    format!("{what}: distances {x} and {y} are inconsistent with arm separation {s}"),
                ));
            }
        }
        Ok(())
    };
    check(d[0], d[1], "d00/d01")?;
    check(d[2], d[3], "d10/d11")?;
    check(d[0], d[2], "d00/d10")?;
    check(d[1], d[3], "d01/d11")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let phi = cfg.constants.newtonian_rate(cfg.mass_kg, 1e-4) * cfg.interaction_time_s;
        assert!((phi - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.mass_kg = 0.0;
        assert_eq!(cfg.validate().unwrap_err().field, "mass_kg");

        let mut cfg = ExperimentConfig::default();
        cfg.branch_distances_m = Some(BranchDistances::closer_arms_only(-1.0));
        assert_eq!(cfg.validate().unwrap_err().field, "branch_distances_m.d11");

        let mut cfg = ExperimentConfig::default();
        cfg.interaction_time_s = -1.0;
        assert_eq!(cfg.validate().unwrap_err().field, "interaction_time_s");
    }

    #[test]
    fn triangle_violation_is_reported() {
        let mut cfg = ExperimentConfig::default();
        cfg.branch_distances_m = Some(BranchDistances::from_array([
            Some(1e-4),
            Some(5e-4),
            None,
            None,
        ]));
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.field, "branch_distances_m");
    }

    #[test]
    fn geometry_derives_distances() {
        let mut cfg = ExperimentConfig::default();
        cfg.branch_distances_m = None;
        cfg.arm_separation_m = None;
        cfg.geometry = Some(Geometry::collinear([-2e-4, -1e-4], [0.0, 1e-4]));
        cfg.validate().unwrap();
        let d = cfg.distances();
        let expect = [2e-4, 3e-4, 1e-4, 2e-4];
        for (x, e) in d.iter().zip(expect) {
            assert!((x.unwrap() - e).abs() < 1e-18);
        }
        assert!((cfg.arm_separation() - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn json_round_trip_keeps_defaults() {
        let json = r#"{"mass_kg": 1e-12, "arm_separation_m": 1e-4,
            "branch_distances_m": {"d11": 1e-4}, "interaction_time_s": 1e-3,
            "field": {"model": "multimode", "grid": {"points": 512}}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.constants, Constants::default());
        match cfg.field {
            FieldConfig::Multimode { grid } => {
                assert_eq!(grid.points, 512);
                assert_eq!(grid.k_max_factor, 1e3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{"mass_kg": 1e-12, "arm_separation_m": 1e-4, "bogus": 1,
            "branch_distances_m": {"d11": 1e-4}, "interaction_time_s": 1e-3}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }
}
