use serde::{Deserialize, Serialize};

use crate::error::{Result, ThpError};

/// `min(1, scale * (1 + l)^-exponent)`; exponent 0 gives a constant step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub scale: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn at(&self, l: usize) -> f64 {
        (self.scale * (1.0 + l as f64).powf(-self.exponent)).min(1.0)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) || !(self.exponent >= 0.0) {
            return Err(ThpError::Config(format!(
                "{name} schedule needs scale > 0 and exponent >= 0"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub rho: PowerLaw,
    pub gamma: PowerLaw,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            rho: PowerLaw {
                scale: 1.0,
                exponent: 0.6,
            },
            gamma: PowerLaw {
                scale: 2.0,
                exponent: 0.9,
            },
        }
    }
}

impl StepSchedule {
    /// Constant `rho = gamma = 1`.
    pub fn unit() -> Self {
        let one = PowerLaw {
            scale: 1.0,
            exponent: 0.0,
        };
        StepSchedule { rho: one, gamma: one }
    }

    pub fn rho(&self, l: usize) -> f64 {
        self.rho.at(l)
    }

    pub fn gamma(&self, l: usize) -> f64 {
        self.gamma.at(l)
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.validate("rho")?;
        self.gamma.validate("gamma")
    }

    /// Closed-form check of the step-size conditions for power laws:
    /// `sum rho = inf`, `sum rho^2 < inf`, the same for gamma, `gamma / rho -> 0`,
    /// and additionally `sum rho^l l^-1/2 < inf`.
    pub fn satisfies_conditions(&self) -> bool {
        let (a, b) = (self.rho.exponent, self.gamma.exponent);
        a > 0.5 && a <= 1.0 && b > 0.5 && b <= 1.0 && b > a
    }

    /// Checks over the first `horizon` iterations: rho nonincreasing, gamma / rho
    /// falling over the second half, partial sums of squares within their closed-form bounds.
    /// Returns the violated conditions.
    pub fn prefix_violations(&self, horizon: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut sum_rho2 = 0.0;
        let mut sum_gamma2 = 0.0;
        let mut sum_rho_sqrt = 0.0;
        for l in 0..horizon {
            let (r, g) = (self.rho(l), self.gamma(l));
            if !(r > 0.0 && r <= 1.0 && g > 0.0 && g <= 1.0) {
                out.push(format!("step outside (0, 1] at l = {l}"));
                break;
            }
            if l > 0 {
                if r > self.rho(l - 1) {
                    out.push(format!("rho increases at l = {l}"));
                    break;
                }
            }
            sum_rho2 += r * r;
            sum_gamma2 += g * g;
            sum_rho_sqrt += r / ((l + 1) as f64).sqrt();
        }
        if horizon >= 4 {
            let ratio = |l: usize| self.gamma(l) / self.rho(l);
            if ratio(horizon - 1) >= ratio(horizon / 2) {
                out.push("gamma / rho does not decrease over the second half".into());
            }
        }
        let zeta = |s: f64| if s > 1.0 { 1.0 + 1.0 / (s - 1.0) } else { f64::INFINITY };
        let bound = |p: &PowerLaw, pow: f64| p.scale.powf(pow).max(1.0) * zeta(pow * p.exponent);
        if sum_rho2 > bound(&self.rho, 2.0) {
            out.push("sum of rho^2 exceeds its bound".into());
        }
        if sum_gamma2 > bound(&self.gamma, 2.0) {
            out.push("sum of gamma^2 exceeds its bound".into());
        }
        if sum_rho_sqrt > self.rho.scale.max(1.0) * zeta(self.rho.exponent + 0.5) {
            out.push("sum of rho / sqrt(l) exceeds its bound".into());
        }
        out
    }
}
