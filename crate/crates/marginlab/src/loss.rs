//! Classification losses and the empirical risk they induce over a dataset.
//!
//! All three families are convex, strictly decreasing, and invertible on
//! `(0, l(0)]`:
//!
//! * exponential: `l(z) = exp(-z)`
//! * logistic: `l(z) = log(1 + exp(-z))`, evaluated in a shifted form that
//!   stays finite for any argument
//! * polynomial tail: `l(z) = z^(-b)` for `z >= 1`, continued below 1 by the
//!   quadratic `1 - b(z-1) + (b(b+1)/2)(z-1)^2`, which keeps the loss convex,
//!   strictly decreasing, and its derivative globally `b(b+1)`-Lipschitz
//!
//! The derivative of the logistic loss is `1/4`-Lipschitz; the exponential
//! loss has no global Lipschitz constant for its derivative, which is why
//! descent-style certifiers refuse it (`smoothness()` returns `None`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Relative accuracy of `inverse`; an order tighter than any certification
/// tolerance built on top of it.
pub const INVERSE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Exponential,
    Logistic,
    /// Tail exponent must be positive.
    Polynomial {
        exponent: f64,
    },
}

impl Loss {
    pub fn polynomial(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(Error::InvalidParam(format!(
                "polynomial tail exponent must be positive and finite, got {exponent}"
            )));
        }
        Ok(Loss::Polynomial { exponent })
    }

    /// `l(0)`; the top of the invertible range.
    pub fn value_at_zero(self) -> f64 {
        match self {
            Loss::Exponential => 1.0,
            Loss::Logistic => std::f64::consts::LN_2,
            Loss::Polynomial { exponent: b } => 1.0 + b + b * (b + 1.0) / 2.0,
        }
    }

    /// Global Lipschitz constant of the derivative, or None when unbounded
    /// (exponential).
    pub fn smoothness(self) -> Option<f64> {
        match self {
            Loss::Exponential => None,
            Loss::Logistic => Some(0.25),
            Loss::Polynomial { exponent: b } => Some(b * (b + 1.0)),
        }
    }

    pub fn eval(self, z: f64) -> f64 {
        match self {
            Loss::Exponential => (-z).exp(),
            // log(1 + e^-z) = max(-z, 0) + log1p(e^{-|z|}); finite for any z.
            Loss::Logistic => (-z).max(0.0) + (-z.abs()).exp().ln_1p(),
            Loss::Polynomial { exponent: b } => {
                if z >= 1.0 {
                    pow_neg(z, b)
                } else {
                    let u = z - 1.0;
                    1.0 - b * u + 0.5 * b * (b + 1.0) * u * u
                }
            }
        }
    }

    /// `l'(z)`, strictly negative. For the exponential loss this is `-eval(z)`
    /// exactly.
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Loss::Exponential => -(-z).exp(),
            Loss::Logistic => {
                // -sigmoid(-z), split to avoid overflowing exp.
                if z >= 0.0 {
                    let e = (-z).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + z.exp())
                }
            }
            Loss::Polynomial { exponent: b } => {
                if z >= 1.0 {
                    -b * pow_neg(z, b + 1.0)
                } else {
                    -b + b * (b + 1.0) * (z - 1.0)
                }
            }
        }
    }

    /// The unique `z` with `eval(z) = y`, for `y` in `(0, l(0)]`.
    pub fn inverse(self, y: f64) -> Result<f64> {
        let top = self.value_at_zero();
        if !(y > 0.0) || y > top * (1.0 + 1e-12) || !y.is_finite() {
            return Err(Error::Domain(format!(
                "inverse argument {y} outside (0, {top}]"
            )));
        }
        let y = y.min(top);
        Ok(match self {
            Loss::Exponential => -y.ln(),
            // z = -log(e^y - 1)
            Loss::Logistic => -y.exp_m1().ln(),
            Loss::Polynomial { exponent: b } => {
                if y <= 1.0 {
                    y.powf(-1.0 / b)
                } else {
                    // Extension branch: bisect eval on [0, 1].
                    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if self.eval(mid) >= y {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        if hi - lo <= 1e-16 {
                            break;
                        }
                    }
                    0.5 * (lo + hi)
                }
            }
        })
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loss::Exponential => write!(f, "exp"),
            Loss::Logistic => write!(f, "logistic"),
            Loss::Polynomial { exponent } => write!(f, "poly:{exponent}"),
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    /// Selection grammar: `exp`, `logistic`, `poly:<b>` with positive decimal b.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(Loss::Exponential),
            "logistic" => Ok(Loss::Logistic),
            _ => {
                if let Some(b) = s.strip_prefix("poly:") {
                    let exponent: f64 = b
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad tail exponent in {s:?}")))?;
                    Loss::polynomial(exponent)
                } else {
                    Err(Error::Parse(format!(
                        "unknown loss {s:?}; expected exp, logistic or poly:<b>"
                    )))
                }
            }
        }
    }
}

impl Serialize for Loss {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Loss {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Mean loss over the dataset at predictor `w`.
pub fn empirical_risk(dataset: &Dataset, loss: Loss, w: &[f64]) -> Result<f64> {
    check_dim(dataset, w)?;
    let sum: f64 = dataset.points().iter().map(|x| loss.eval(dot(x, w))).sum();
    Ok(sum / dataset.m() as f64)
}

/// Gradient of the empirical risk: `(1/m) sum l'(x_i . w) x_i`.
pub fn risk_gradient(dataset: &Dataset, loss: Loss, w: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; w.len()];
    risk_gradient_into(dataset, loss, w, &mut g)?;
    Ok(g)
}

/// Allocation-free variant for hot loops.
pub fn risk_gradient_into(dataset: &Dataset, loss: Loss, w: &[f64], out: &mut [f64]) -> Result<()> {
    check_dim(dataset, w)?;
    out.fill(0.0);
    for x in dataset.points() {
        let lp = loss.deriv(dot(x, w));
        for (o, xj) in out.iter_mut().zip(x) {
            *o += lp * xj;
        }
    }
    let inv_m = 1.0 / dataset.m() as f64;
    for o in out.iter_mut() {
        *o *= inv_m;
    }
    Ok(())
}

/// `z^(-b)`; integer exponents take the multiply-based path, which matters in
/// long descent loops.
#[inline]
fn pow_neg(z: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 32.0 {
        z.powi(-(b as i32))
    } else {
        z.powf(-b)
    }
}

fn check_dim(dataset: &Dataset, w: &[f64]) -> Result<()> {
    if w.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: w.len(),
        });
    }
    Ok(())
}
