//! Canonical link families for the GLM working models.

use crate::error::{Error, Result};
use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

/// Canonical-link GLM family: logit-binomial or log-Poisson.
///
/// Both means are non-decreasing and twice continuously differentiable, and
/// the curvature ratio `m''/m'` has a closed form: `1 - 2m` for the logit
/// link and exactly `1` for the log link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkFamily {
    LogitBinomial,
    LogPoisson,
}

impl LinkFamily {
    /// Inverse link `m(eta)`.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LinkFamily::LogitBinomial => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            LinkFamily::LogPoisson => eta.exp(),
        }
    }

    /// First derivative `m'(eta)`; also the canonical GLM weight.
    pub fn mean_deriv(self, eta: f64) -> f64 {
        match self {
            LinkFamily::LogitBinomial => {
                let m = self.mean(eta);
                m * (1.0 - m)
            }
            LinkFamily::LogPoisson => eta.exp(),
        }
    }

    /// Second derivative `m''(eta)`.
    pub fn mean_deriv2(self, eta: f64) -> f64 {
        match self {
            LinkFamily::LogitBinomial => {
                let m = self.mean(eta);
                m * (1.0 - m) * (1.0 - 2.0 * m)
            }
            LinkFamily::LogPoisson => eta.exp(),
        }
    }

    /// Curvature ratio `m''/m'` written in terms of the mean.
    pub fn curvature_ratio(self, mean: f64) -> f64 {
        match self {
            LinkFamily::LogitBinomial => 1.0 - 2.0 * mean,
            LinkFamily::LogPoisson => 1.0,
        }
    }

    /// Link function `g(mean)`.
    pub fn link(self, mean: f64) -> f64 {
        match self {
            LinkFamily::LogitBinomial => (mean / (1.0 - mean)).ln(),
            LinkFamily::LogPoisson => mean.ln(),
        }
    }

    /// Intercept used to start the solver, from the clipped outcome mean.
    pub fn init_intercept(self, ybar: f64) -> f64 {
        match self {
            LinkFamily::LogitBinomial => self.link(ybar.clamp(1e-6, 1.0 - 1e-6)),
            LinkFamily::LogPoisson => self.link(ybar.max(1e-6)),
        }
    }

    /// Check that every outcome lies in the family's support.
    pub fn check_outcome(self, y: ArrayView1<f64>) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            let ok = match self {
                LinkFamily::LogitBinomial => v == 0.0 || v == 1.0,
                LinkFamily::LogPoisson => v.is_finite() && v >= 0.0,
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "outcome {v} at row {i} is outside the {self:?} support"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for LinkFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinkFamily::LogitBinomial => write!(f, "logit"),
            LinkFamily::LogPoisson => write!(f, "poisson"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_curvature_ratio_is_exact() {
        let link = LinkFamily::LogitBinomial;
        for eta in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let m = link.mean(eta);
            let want = link.mean_deriv2(eta) / link.mean_deriv(eta);
            assert!((link.curvature_ratio(m) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn log_curvature_ratio_is_one() {
        let link = LinkFamily::LogPoisson;
        for eta in [-2.0, 0.0, 1.3] {
            let m = link.mean(eta);
            assert_eq!(link.curvature_ratio(m), 1.0);
            assert!((link.mean_deriv2(eta) / link.mean_deriv(eta) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_is_monotone_and_link_inverts() {
        for link in [LinkFamily::LogitBinomial, LinkFamily::LogPoisson] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..100 {
                let eta = -5.0 + 0.1 * i as f64;
                let m = link.mean(eta);
                assert!(m >= prev);
                prev = m;
                assert!((link.link(m) - eta).abs() < 1e-9);
            }
        }
    }
}
