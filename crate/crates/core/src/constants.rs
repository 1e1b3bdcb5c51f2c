//! Physical constants (CODATA 2018) and derived scales.

use serde::{Deserialize, Serialize};

pub const G_CODATA: f64 = 6.674_30e-11;
pub const HBAR_CODATA: f64 = 1.054_571_817e-34;
pub const C_CODATA: f64 = 299_792_458.0;

/// Gravitational constant (m³ kg⁻¹ s⁻²), reduced Planck constant (J s) and
/// speed of light (m/s). Pinned to CODATA values unless overridden in a
/// configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(rename = "G", default = "default_g")]
    pub g: f64,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_g() -> f64 {
    G_CODATA
}
fn default_hbar() -> f64 {
    HBAR_CODATA
}
fn default_c() -> f64 {
    C_CODATA
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            g: G_CODATA,
            hbar: HBAR_CODATA,
            c: C_CODATA,
        }
    }
}

impl Constants {
    /// Planck mass √(ħc/G) in kg.
    pub fn planck_mass(&self) -> f64 {
        (self.hbar * self.c / self.g).sqrt()
    }

    /// Newtonian phase accumulation rate G m² / (ħ d) in rad/s.
    pub fn newtonian_rate(&self, mass: f64, distance: f64) -> f64 {
        self.g * mass * mass / (self.hbar * distance)
    }

    /// The same rate written as (m / m_P)² c / d.
    pub fn planck_form_rate(&self, mass: f64, distance: f64) -> f64 {
        let ratio = mass / self.planck_mass();
        ratio * ratio * self.c / distance
    }

    /// (m / m_P)² = G m² / (ħ c).
    pub fn planck_ratio_sq(&self, mass: f64) -> f64 {
        self.g * mass * mass / (self.hbar * self.c)
    }

    pub fn all_positive(&self) -> bool {
        [self.g, self.hbar, self.c]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planck_mass_value() {
        let m_p = Constants::default().planck_mass();
        assert!((m_p - 2.176_434e-8).abs() / m_p < 1e-5, "{m_p}");
    }

    #[test]
    fn both_rate_forms_agree() {
        let k = Constants::default();
        for &(m, d) in &[(1e-12, 1e-4), (1e-14, 3e-5), (2e-8, 1.0)] {
            let a = k.newtonian_rate(m, d);
            let b = k.planck_form_rate(m, d);
            assert!((a - b).abs() / a < 1e-12);
        }
    }
}
