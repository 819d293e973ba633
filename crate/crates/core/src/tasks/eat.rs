//! Finite-size randomness rate from an affine min-tradeoff function.

use std::f64::consts::{E, LN_2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EatParams {
    /// Constant, offset and slope of `f_min(W) = c_m + r + s W`.
    pub c_m: f64,
    pub r_tilde: f64,
    pub s_tilde: f64,
    pub w_obs: f64,
    /// Spread of the observed witness, added and subtracted as is.
    pub var_w: f64,
    pub rounds: u64,
    pub epsilon: f64,
    pub d_a: usize,
    pub prob_omega: f64,
    /// Defaults to `1 + 1/sqrt(N)`.
    pub alpha: Option<f64>,
}

impl EatParams {
    /// Coefficients and statistics of the SIC randomness experiment.
    pub fn sic_experiment() -> Self {
        Self {
            c_m: 9.2305,
            r_tilde: -65.2748,
            s_tilde: 238.8474,
            w_obs: 0.24730,
            var_w: 5e-5,
            rounds: 1_196_436,
            epsilon: 1e-4,
            d_a: 4,
            prob_omega: 0.2,
            alpha: None,
        }
    }

    pub fn f_min(&self, w: f64) -> f64 {
        self.c_m + self.r_tilde + self.s_tilde * w
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
            .unwrap_or_else(|| 1.0 + 1.0 / (self.rounds as f64).sqrt())
    }

    fn validate(&self) -> Result<()> {
        let a = self.alpha();
        if !(a > 1.0 && a < 2.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (1, 2), got {a}")));
        }
        if self.rounds < 1 {
            return Err(Error::InvalidInput("need at least one round".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.prob_omega > 0.0 && self.prob_omega <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "Pr[Omega] must lie in (0, 1], got {}",
                self.prob_omega
            )));
        }
        if self.d_a < 1 || self.var_w < 0.0 {
            return Err(Error::InvalidInput("bad dimension or spread".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EatRate {
    pub alpha: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub f_lower: f64,
    pub var_f: f64,
    pub g: f64,
    pub v: f64,
    pub k_prime: f64,
    /// Sum of the three second-order terms.
    pub correction: f64,
    pub rate: f64,
}

/// Smooth min-entropy per round after `N` rounds.
pub fn eat_rate(p: &EatParams) -> Result<EatRate> {
    p.validate()?;
    let alpha = p.alpha();
    let n = p.rounds as f64;
    let d = p.d_a as f64;
    let f_min = p.f_min(p.w_obs);
    let f_max = p.f_min(p.w_obs + p.var_w);
    let f_lower = p.f_min(p.w_obs - p.var_w);
    let var_f = p.s_tilde * p.s_tilde * p.var_w;
    let g = -(1.0 - (1.0 - p.epsilon * p.epsilon).sqrt()).log2();
    let v = (2.0 * d * d + 1.0).log2() + (2.0 + var_f).sqrt();
    let spread = 2.0 * d.log2() + f_max - f_lower;
    let ratio = (alpha - 1.0) / (2.0 - alpha);
    let k_prime = (2.0 - alpha).powi(3) / (6.0 * (3.0 - 2.0 * alpha).powi(3) * LN_2)
        * 2f64.powf(ratio * spread)
        * (2f64.powf(spread) + E * E).ln().powi(3);
    let correction = ratio * LN_2 / 2.0 * v * v
        + (g + alpha * (1.0 / p.prob_omega).log2()) / (n * (alpha - 1.0))
        + ratio * ratio * k_prime;
    Ok(EatRate {
        alpha,
        f_min,
        f_max,
        f_lower,
        var_f,
        g,
        v,
        k_prime,
        correction,
        rate: f_min - correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_rate() {
        let r = eat_rate(&EatParams::sic_experiment()).unwrap();
        assert!((r.f_min - 3.0227).abs() < 1e-4, "{r:?}");
        assert!((r.rate - 2.9786).abs() < 2e-3, "{r:?}");
        assert!((r.correction - 0.0441).abs() < 2e-3);
    }

    #[test]
    fn corrections_vanish_for_many_rounds() {
        let mut p = EatParams::sic_experiment();
        let mut last = f64::INFINITY;
        for rounds in [1e6, 1e8, 1e10, 1e12] {
            p.rounds = rounds as u64;
            let r = eat_rate(&p).unwrap();
            assert!(r.rate <= r.f_min);
            assert!(r.correction < last);
            last = r.correction;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn bad_alpha_is_rejected() {
        let mut p = EatParams::sic_experiment();
        p.alpha = Some(2.5);
        assert!(eat_rate(&p).is_err());
        p.alpha = Some(1.0);
        assert!(eat_rate(&p).is_err());
    }
}
