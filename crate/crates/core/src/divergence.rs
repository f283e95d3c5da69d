//! f-divergences (KL, Jensen-Shannon, chi-squared), their Fenchel conjugates,
//! the plug-in variational divergence estimate, and the logistic loss whose
//! minimiser estimates the negative log density ratio.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FDivergence {
    Kl,
    Js,
    Chi2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FFunction {
    F,
    FPrime,
    FStar,
}

/// Open/closed interval used to describe where a function is defined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub lower_open: bool,
    pub upper_open: bool,
}

impl Interval {
    pub const REALS: Interval = Interval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        lower_open: true,
        upper_open: true,
    };

    pub fn contains(&self, x: f64) -> bool {
        let lo = if self.lower_open {
            x > self.lower
        } else {
            x >= self.lower
        };
        let hi = if self.upper_open {
            x < self.upper
        } else {
            x <= self.upper
        };
        lo && hi && !x.is_nan()
    }
}

const POSITIVE: Interval = Interval {
    lower: 0.0,
    upper: f64::INFINITY,
    lower_open: true,
    upper_open: true,
};

const NONNEGATIVE: Interval = Interval {
    lower: 0.0,
    upper: f64::INFINITY,
    lower_open: false,
    upper_open: true,
};

/// Largest discriminator value fed to the JS conjugate.
pub const JS_STAR_CEILING: f64 = LN_2 - 1e-6;

impl FDivergence {
    pub const ALL: [FDivergence; 3] = [FDivergence::Kl, FDivergence::Js, FDivergence::Chi2];

    pub fn name(self) -> &'static str {
        match self {
            FDivergence::Kl => "kl",
            FDivergence::Js => "js",
            FDivergence::Chi2 => "chi2",
        }
    }

    pub fn domain(self, which: FFunction) -> Interval {
        match (self, which) {
            (FDivergence::Kl | FDivergence::Js, FFunction::F) => NONNEGATIVE,
            (FDivergence::Kl | FDivergence::Js, FFunction::FPrime) => POSITIVE,
            (FDivergence::Chi2, FFunction::F | FFunction::FPrime) => NONNEGATIVE,
            (FDivergence::Js, FFunction::FStar) => Interval {
                lower: f64::NEG_INFINITY,
                upper: LN_2,
                lower_open: true,
                upper_open: true,
            },
            (_, FFunction::FStar) => Interval::REALS,
        }
    }

    pub fn f_star_domain(self) -> Interval {
        self.domain(FFunction::FStar)
    }

    pub fn eval(self, which: FFunction, x: f64) -> Result<f64> {
        if !self.domain(which).contains(x) {
            return Err(DdrError::Domain {
                function: match which {
                    FFunction::F => "f",
                    FFunction::FPrime => "f'",
                    FFunction::FStar => "f*",
                },
                value: x,
            });
        }
        Ok(match which {
            FFunction::F => self.f_unchecked(x),
            FFunction::FPrime => self.f_prime_unchecked(x),
            FFunction::FStar => self.f_star_unchecked(x),
        })
    }

    pub fn f(self, x: f64) -> Result<f64> {
        self.eval(FFunction::F, x)
    }

    pub fn f_prime(self, x: f64) -> Result<f64> {
        self.eval(FFunction::FPrime, x)
    }

    pub fn f_star(self, t: f64) -> Result<f64> {
        self.eval(FFunction::FStar, t)
    }

    fn f_unchecked(self, x: f64) -> f64 {
        match self {
            FDivergence::Kl => xlogx(x),
            FDivergence::Js => -(x + 1.0) * ((x + 1.0) / 2.0).ln() + xlogx(x),
            FDivergence::Chi2 => (x - 1.0) * (x - 1.0),
        }
    }

    fn f_prime_unchecked(self, x: f64) -> f64 {
        match self {
            FDivergence::Kl => x.ln() + 1.0,
            FDivergence::Js => (2.0 * x / (x + 1.0)).ln(),
            FDivergence::Chi2 => 2.0 * (x - 1.0),
        }
    }

    fn f_star_unchecked(self, t: f64) -> f64 {
        match self {
            FDivergence::Kl => (t - 1.0).exp(),
            FDivergence::Js => -(2.0 - t.exp()).ln(),
            FDivergence::Chi2 => t + t * t / 4.0,
        }
    }

    /// `f''(x)`, needed to push gradients of `f'(r)` through the ratio.
    pub fn f_double_prime(self, x: f64) -> Result<f64> {
        if !POSITIVE.contains(x) {
            return Err(DdrError::Domain {
                function: "f''",
                value: x,
            });
        }
        Ok(match self {
            FDivergence::Kl => 1.0 / x,
            FDivergence::Js => 1.0 / x - 1.0 / (x + 1.0),
            FDivergence::Chi2 => 2.0,
        })
    }

    /// Converts a logistic-loss discriminator value `D ~ -log r` into the
    /// dual witness `f'(r)` with `r = exp(-D)`.
    pub fn witness_from_log_ratio(self, d: f64) -> f64 {
        let r = (-d).exp();
        match self {
            FDivergence::Kl => 1.0 - d,
            _ => self.f_prime_unchecked(r.max(f64::MIN_POSITIVE)),
        }
    }

    /// Clamps a witness into the conjugate's domain (only JS is bounded).
    pub fn clamp_witness(self, t: f64) -> (f64, bool) {
        match self {
            FDivergence::Js if t > JS_STAR_CEILING => (JS_STAR_CEILING, true),
            _ => (t, false),
        }
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl fmt::Display for FDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FDivergence {
    type Err = DdrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(FDivergence::Kl),
            "js" => Ok(FDivergence::Js),
            "chi2" | "chisq" => Ok(FDivergence::Chi2),
            other => Err(DdrError::invalid(format!(
                "unknown divergence '{other}' (expected kl, js or chi2)"
            ))),
        }
    }
}

/// Plug-in dual objective `mean(D(Z)) - mean(f*(D(W)))` for a given witness.
pub fn variational_divergence(div: FDivergence, d_on_z: &[f64], d_on_w: &[f64]) -> Result<f64> {
    if d_on_z.len() != d_on_w.len() {
        return Err(DdrError::dim(format!(
            "witness evaluations differ in length ({} vs {})",
            d_on_z.len(),
            d_on_w.len()
        )));
    }
    if d_on_z.is_empty() {
        return Err(DdrError::InsufficientSamples { needed: 1, got: 0 });
    }
    let n = d_on_z.len() as f64;
    let mean_z = d_on_z.iter().sum::<f64>() / n;
    let mut star = 0.0;
    for &t in d_on_w {
        star += div.f_star(t)?;
    }
    Ok(mean_z - star / n)
}

/// `softplus(t) = log(1 + e^t)`, stable for large `|t|`.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticLoss {
    pub loss: f64,
    pub grad_on_z: Vec<f64>,
    pub grad_on_w: Vec<f64>,
}

/// `(1/n) sum { log(1 + e^{D(Z_i)}) + log(1 + e^{-D(W_i)}) }` and its
/// gradient with respect to each discriminator value. The population
/// minimiser is `D = -log(dmu/dgamma)`.
pub fn logistic_ratio_loss(d_on_z: &[f64], d_on_w: &[f64]) -> Result<LogisticLoss> {
    if d_on_z.len() != d_on_w.len() {
        return Err(DdrError::dim(format!(
            "discriminator outputs differ in length ({} vs {})",
            d_on_z.len(),
            d_on_w.len()
        )));
    }
    if d_on_z.is_empty() {
        return Err(DdrError::InsufficientSamples { needed: 1, got: 0 });
    }
    let n = d_on_z.len() as f64;
    let loss = d_on_z
        .iter()
        .zip(d_on_w)
        .map(|(&dz, &dw)| softplus(dz) + softplus(-dw))
        .sum::<f64>()
        / n;
    let grad_on_z = d_on_z.iter().map(|&d| sigmoid(d) / n).collect();
    let grad_on_w = d_on_w.iter().map(|&d| -sigmoid(-d) / n).collect();
    Ok(LogisticLoss {
        loss,
        grad_on_z,
        grad_on_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(FDivergence::Kl.f(1.0).unwrap(), 0.0);
        assert_eq!(FDivergence::Kl.f_star(1.0).unwrap(), 1.0);
        assert_eq!(FDivergence::Chi2.f_prime(1.0).unwrap(), 0.0);
        assert!(FDivergence::Js.f(1.0).unwrap().abs() < 1e-15);
        assert!(FDivergence::Js.f_prime(1.0).unwrap().abs() < 1e-15);
        assert_eq!(FDivergence::Kl.f_prime(1.0).unwrap(), 1.0);
    }

    #[test]
    fn domain_violations() {
        assert!(matches!(
            FDivergence::Js.f_star(LN_2),
            Err(DdrError::Domain { .. })
        ));
        assert!(FDivergence::Js.f_star(1.0).is_err());
        assert!(FDivergence::Kl.f_prime(0.0).is_err());
        assert!(FDivergence::Kl.f(-1.0).is_err());
        assert!(FDivergence::Js.f_star(0.69).is_ok());
        assert!(variational_divergence(FDivergence::Js, &[0.0], &[0.7]).is_err());
    }

    #[test]
    fn names_roundtrip() {
        for d in FDivergence::ALL {
            assert_eq!(d.name().parse::<FDivergence>().unwrap(), d);
        }
        assert!("hellinger".parse::<FDivergence>().is_err());
    }

    #[test]
    fn variational_at_optimum_of_equal_laws() {
        // D = f'(1) on both samples
        let v = variational_divergence(FDivergence::Kl, &[1.0; 5], &[1.0; 5]).unwrap();
        assert_eq!(v, 0.0);
        let v = variational_divergence(FDivergence::Chi2, &[0.0; 5], &[0.0; 5]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn logistic_loss_symmetric_point() {
        let n = 7;
        let out = logistic_ratio_loss(&vec![0.0; n], &vec![0.0; n]).unwrap();
        assert!((out.loss - 2.0 * LN_2).abs() < 1e-15);
        assert!(out.grad_on_z.iter().all(|&g| (g - 0.5 / n as f64).abs() < 1e-15));
        assert!(out.grad_on_w.iter().all(|&g| (g + 0.5 / n as f64).abs() < 1e-15));
    }

    #[test]
    fn logistic_loss_stable_at_extremes() {
        let out = logistic_ratio_loss(&[700.0, -700.0], &[-700.0, 700.0]).unwrap();
        assert!(out.loss.is_finite());
        assert!((out.loss - 700.0).abs() < 1e-9);
        assert!(out.grad_on_z.iter().chain(&out.grad_on_w).all(|g| g.is_finite()));
    }

    #[test]
    fn js_witness_clamped() {
        let (t, hit) = FDivergence::Js.clamp_witness(1.0);
        assert!(hit && t < LN_2);
        assert!(FDivergence::Js.f_star(t).is_ok());
        assert_eq!(FDivergence::Kl.clamp_witness(5.0), (5.0, false));
    }
}
