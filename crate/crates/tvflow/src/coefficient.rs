//! The nonlocal diffusion coefficient `m` and its antiderivative.
//!
//! The flow speed is modulated by `m(sigma)` where `sigma` is the current
//! total variation.  Supported families: a positive constant, the affine map
//! `1 + sigma`, the power map `(1 + sigma)^p` with `p > 1`, and a tabulated
//! sample list with linear interpolation.  All families are nondecreasing
//! with `m(sigma) >= m(0) > 0`, which the constructors validate.

use crate::error::{Result, TvError};

/// Which functional form `m` takes.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFamily {
    /// `m(sigma) = c`, `c > 0`.
    Constant(f64),
    /// `m(sigma) = 1 + sigma`.
    Affine,
    /// `m(sigma) = (1 + sigma)^p`, `p > 1`.
    Power(f64),
    /// Linear interpolation through `(sigma_i, m_i)` samples, clamped to the
    /// end samples outside the table.
    Tabulated(Vec<(f64, f64)>),
}

/// The coefficient `m`, its antiderivative `M(sigma) = integral of m from 0
/// to sigma`, and an optional concavity-type constant `mu` satisfying
/// `M(sigma) >= mu * m(sigma) * sigma` for all `sigma >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KirchhoffCoefficient {
    family: CoefficientFamily,
    mu: Option<f64>,
}

impl KirchhoffCoefficient {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(TvError::Argument(format!(
                "constant coefficient must be positive and finite, got {c}"
            )));
        }
        Ok(KirchhoffCoefficient {
            family: CoefficientFamily::Constant(c),
            mu: None,
        })
    }

    pub fn affine() -> Self {
        KirchhoffCoefficient {
            family: CoefficientFamily::Affine,
            mu: None,
        }
    }

    pub fn power(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(TvError::Argument(format!(
                "power exponent must exceed 1, got {p}"
            )));
        }
        Ok(KirchhoffCoefficient {
            family: CoefficientFamily::Power(p),
            mu: None,
        })
    }

    /// Build a tabulated coefficient.  Requires at least two samples with
    /// strictly increasing nonnegative abscissae and positive, nondecreasing
    /// values (so the monotonicity hypothesis on `m` holds by construction).
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(TvError::Argument(format!(
                "tabulated coefficient needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, &(s, m)) in samples.iter().enumerate() {
            if !s.is_finite() || !m.is_finite() {
                return Err(TvError::Argument(format!(
                    "tabulated sample {i} is not finite: ({s}, {m})"
                )));
            }
            if s < 0.0 {
                return Err(TvError::Argument(format!(
                    "tabulated abscissa {i} is negative: {s}"
                )));
            }
            if !(m > 0.0) {
                return Err(TvError::Argument(format!(
                    "tabulated value {i} must be positive, got {m}"
                )));
            }
            if i > 0 {
                let (sp, mp) = samples[i - 1];
                if s <= sp {
                    return Err(TvError::Argument(format!(
                        "tabulated abscissae must be strictly increasing: sample {i} has {s} after {sp}"
                    )));
                }
                if m < mp {
                    return Err(TvError::Argument(format!(
                        "tabulated values must be nondecreasing: sample {i} has {m} after {mp}"
                    )));
                }
            }
        }
        Ok(KirchhoffCoefficient {
            family: CoefficientFamily::Tabulated(samples),
            mu: None,
        })
    }

    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }

    /// Short family name, used in config files and reports.
    pub fn family_name(&self) -> &'static str {
        match self.family {
            CoefficientFamily::Constant(_) => "constant",
            CoefficientFamily::Affine => "affine",
            CoefficientFamily::Power(_) => "power",
            CoefficientFamily::Tabulated(_) => "tabulated",
        }
    }

    /// Evaluate `m(sigma)`.  Negative arguments clamp to zero (the total
    /// variation can only be nonnegative; tiny negative round-off maps to
    /// `m(0)`).
    pub fn eval(&self, sigma: f64) -> f64 {
        let s = sigma.max(0.0);
        match &self.family {
            CoefficientFamily::Constant(c) => *c,
            CoefficientFamily::Affine => 1.0 + s,
            CoefficientFamily::Power(p) => (1.0 + s).powf(*p),
            CoefficientFamily::Tabulated(samples) => {
                let first = samples[0];
                let last = samples[samples.len() - 1];
                if s <= first.0 {
                    return first.1;
                }
                if s >= last.0 {
                    return last.1;
                }
                let j = samples.partition_point(|&(x, _)| x <= s);
                let (x0, y0) = samples[j - 1];
                let (x1, y1) = samples[j];
                y0 + (y1 - y0) * (s - x0) / (x1 - x0)
            }
        }
    }

    /// `m(0)`, the infimum of the coefficient.
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// The antiderivative `M(sigma)`: closed form for the analytic families,
    /// exact piecewise-trapezoid quadrature for tabulated (the integrand is
    /// piecewise linear, so the trapezoid rule over the sample intervals is
    /// exact).
    pub fn antiderivative(&self, sigma: f64) -> f64 {
        let s = sigma.max(0.0);
        match &self.family {
            CoefficientFamily::Constant(c) => c * s,
            CoefficientFamily::Affine => s + 0.5 * s * s,
            CoefficientFamily::Power(p) => ((1.0 + s).powf(p + 1.0) - 1.0) / (p + 1.0),
            CoefficientFamily::Tabulated(samples) => {
                let mut acc = 0.0;
                let mut prev = (0.0f64, self.eval(0.0));
                for &(x, y) in samples {
                    if x <= prev.0 {
                        continue;
                    }
                    if x >= s {
                        let ys = self.eval(s);
                        acc += 0.5 * (prev.1 + ys) * (s - prev.0);
                        return acc;
                    }
                    acc += 0.5 * (prev.1 + y) * (x - prev.0);
                    prev = (x, y);
                }
                // Beyond the table: constant extension at the last value.
                acc + prev.1 * (s - prev.0)
            }
        }
    }

    /// The stored `mu`, if one has been attached.
    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    /// Attach a `mu` after checking `M(sigma) >= mu * m(sigma) * sigma` on a
    /// log-spaced probe grid up to `sigma = 1e6`.  Errors if the inequality
    /// fails anywhere on the grid or `mu` is outside `(0, 1]`.
    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(TvError::Argument(format!(
                "mu must lie in (0, 1], got {mu}"
            )));
        }
        for sigma in probe_grid() {
            let lhs = self.antiderivative(sigma);
            let rhs = mu * self.eval(sigma) * sigma;
            if lhs < rhs - 1e-9 * rhs.abs().max(1.0) {
                return Err(TvError::Argument(format!(
                    "mu = {mu} violates M(sigma) >= mu*m(sigma)*sigma at sigma = {sigma}: {lhs} < {rhs}"
                )));
            }
        }
        self.mu = Some(mu);
        Ok(self)
    }
}

/// Log-spaced probe abscissae on [0, 1e6] used to validate a supplied `mu`.
fn probe_grid() -> impl Iterator<Item = f64> {
    (0..=200).map(|i| {
        if i == 0 {
            0.0
        } else {
            1e-4 * (1e10f64).powf((i - 1) as f64 / 199.0)
        }
    })
}
