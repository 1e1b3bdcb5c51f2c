//! Gauss–Legendre rules and a regulated integrator for slowly decaying
//! oscillatory integrals on the half line.

use std::f64::consts::PI;

use thiserror::Error;

use crate::numeric::CompensatedSum;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("Legendre root iteration did not converge for order {0}")]
    NodesDiverged(usize),
    #[error("Richardson levels disagree: {first} vs {second} (tolerance {tol:e})")]
    Extrapolation { first: f64, second: f64, tol: f64 },
    #[error("invalid quadrature input: {0}")]
    Invalid(&'static str),
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self, QuadratureError> {
        if n == 0 {
            return Err(QuadratureError::Invalid("order must be positive"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut converged = false;
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(QuadratureError::NodesDiverged(n));
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    /// ∫_a^b f.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut s = CompensatedSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s.add(w * f(mid + half * x));
        }
        half * s.value()
    }

    /// Composite rule over `panels` equal panels of [a, b].
    pub fn integrate_composite<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, panels: usize) -> f64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut s = CompensatedSum::new();
        for p in 0..panels {
            let lo = a + h * p as f64;
            s.add(self.integrate(&f, lo, lo + h));
        }
        s.value()
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Settings for ∫₀^∞ f(x) dx with f oscillating at a known half period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorySettings {
    /// Spacing of sign changes of the integrand.
    pub half_period: f64,
    /// Smallest regulator in units of π/half_period.
    pub h: f64,
    pub order: usize,
    /// Integration stops at `decay_lengths / ε`.
    pub decay_lengths: f64,
}

impl OscillatorySettings {
    pub fn for_half_period(half_period: f64) -> Self {
        Self {
            half_period,
            h: 0.005,
            order: 16,
            decay_lengths: 40.0,
        }
    }
}

/// ∫₀^∞ f(x) e^{−εx} dx on half-period panels.
pub fn regulated_half_line<F: Fn(f64) -> f64>(
    f: F,
    eps: f64,
    settings: &OscillatorySettings,
    rule: &GaussLegendre,
) -> f64 {
    let x_max = settings.decay_lengths / eps;
    let panels = (x_max / settings.half_period).ceil() as usize;
    rule.integrate_composite(|x| f(x) * (-eps * x).exp(), 0.0, panels as f64 * settings.half_period, panels)
}

/// Regulated values and their extrapolation to ε = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolated {
    pub value: f64,
    /// I(4h), I(2h), I(h).
    pub regulated: [f64; 3],
    /// The two first-level extrapolants.
    pub first_level: [f64; 2],
    /// |value − finer first-level extrapolant|.
    pub error_estimate: f64,
}

/// Evaluates at ε ∈ {4h, 2h, h} (ε scaled by π/half_period) and removes the
/// O(ε) and O(ε³) terms of the regulator expansion, as for a sine
/// transform.
pub fn richardson_half_line<F: Fn(f64) -> f64>(
    f: F,
    settings: &OscillatorySettings,
) -> Result<Extrapolated, QuadratureError> {
    if !(settings.half_period > 0.0 && settings.h > 0.0) {
        return Err(QuadratureError::Invalid("half period and h must be positive"));
    }
    let rule = GaussLegendre::new(settings.order)?;
    let unit = PI / settings.half_period;
    let eps = [4.0, 2.0, 1.0].map(|k| k * settings.h * unit);
    let regulated = eps.map(|e| regulated_half_line(&f, e, settings, &rule));
    let first_level = [
        2.0 * regulated[1] - regulated[0],
        2.0 * regulated[2] - regulated[1],
    ];
    let value = (8.0 * first_level[1] - first_level[0]) / 7.0;
    Ok(Extrapolated {
        value,
        regulated,
        first_level,
        error_estimate: (value - first_level[1]).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::sinc;

    #[test]
    fn legendre_rule_exact_for_polynomials() {
        let rule = GaussLegendre::new(8).unwrap();
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 15 is integrated exactly
        let v = rule.integrate(|x| x.powi(14) + x.powi(15), -1.0, 1.0);
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn odd_order_has_center_node() {
        let rule = GaussLegendre::new(5).unwrap();
        assert!(rule.nodes[2].abs() < 1e-16);
        assert!((rule.weights[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn composite_exp() {
        let rule = GaussLegendre::new(10).unwrap();
        let v = rule.integrate_composite(f64::exp, 0.0, 3.0, 7);
        assert!((v - (3.0f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn regulated_sinc_matches_arctan() {
        let rule = GaussLegendre::new(16).unwrap();
        let s = OscillatorySettings::for_half_period(PI);
        for eps in [0.5, 0.1, 0.02] {
            let v = regulated_half_line(sinc, eps, &s, &rule);
            assert!((v - (1.0 / eps).atan()).abs() < 1e-12, "{eps}: {v}");
        }
    }

    #[test]
    fn sinc_integral_recovers_half_pi() {
        let r = richardson_half_line(sinc, &OscillatorySettings::for_half_period(PI)).unwrap();
        assert!((r.value - PI / 2.0).abs() < 1e-6, "{}", r.value);
        assert!(r.error_estimate < 1e-5);
        assert!(r.regulated[0] < r.regulated[1] && r.regulated[1] < r.regulated[2]);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(GaussLegendre::new(0).is_err());
        let mut s = OscillatorySettings::for_half_period(PI);
        s.h = 0.0;
        assert!(richardson_half_line(sinc, &s).is_err());
    }
}
