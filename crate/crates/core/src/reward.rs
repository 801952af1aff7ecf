//! Concave reward sequences `r(ℓ)` paid on a conversion that happens `ℓ`
//! rounds after the previous one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("reward table has {len} entries, cannot evaluate r({ell})")]
    OutOfRange { ell: usize, len: usize },
    #[error("perturbation size {0} must lie in (0, 1)")]
    BadEpsilon(f64),
    #[error("invalid reward parameter: {0}")]
    BadParameter(String),
}

/// Increasing, concave reward with unit-bounded increments and `r(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RewardFn {
    /// `r(ℓ) = √ℓ`
    Sqrt,
    /// `r(ℓ) = min(ℓ, cap)`
    CapLinear { cap: usize },
    /// `r(ℓ) = ℓ^alpha`, `alpha ∈ (0, 1]`
    Power { alpha: f64 },
    /// `values[ℓ] = r(ℓ)` for `ℓ = 0..values.len()`
    Table { values: Vec<f64> },
}

impl RewardFn {
    /// Checks constructor-level parameters; concavity is left to [`validate_reward`].
    pub fn check_params(&self) -> Result<(), RewardError> {
        match self {
            RewardFn::Sqrt => Ok(()),
            RewardFn::CapLinear { cap } if *cap >= 1 => Ok(()),
            RewardFn::CapLinear { .. } => Err(RewardError::BadParameter("cap must be >= 1".into())),
            RewardFn::Power { alpha } if *alpha > 0.0 && *alpha <= 1.0 => Ok(()),
            RewardFn::Power { alpha } => Err(RewardError::BadParameter(format!(
                "power exponent {alpha} outside (0, 1]"
            ))),
            RewardFn::Table { values } if values.is_empty() => {
                Err(RewardError::BadParameter("empty reward table".into()))
            }
            RewardFn::Table { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(RewardError::BadParameter("non-finite reward table entry".into()))
            }
            RewardFn::Table { .. } => Ok(()),
        }
    }

    /// `r(ℓ)`. Tables report their stored `r(0)`, which validation requires to be zero.
    pub fn eval(&self, ell: usize) -> Result<f64, RewardError> {
        if ell == 0 && !matches!(self, RewardFn::Table { .. }) {
            return Ok(0.0);
        }
        Ok(match self {
            RewardFn::Sqrt => (ell as f64).sqrt(),
            RewardFn::CapLinear { cap } => ell.min(*cap) as f64,
            RewardFn::Power { alpha } => (ell as f64).powf(*alpha),
            RewardFn::Table { values } => {
                *values.get(ell).ok_or(RewardError::OutOfRange {
                    ell,
                    len: values.len(),
                })?
            }
        })
    }

    /// `r_m(ℓ) = r(min(ℓ, m))`.
    pub fn eval_capped(&self, ell: usize, m: usize) -> Result<f64, RewardError> {
        self.eval(ell.min(m))
    }

    /// Largest `ℓ` this reward can be evaluated at.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            RewardFn::Table { values } => Some(values.len().saturating_sub(1)),
            _ => None,
        }
    }

    /// `[r(0), r(1), ..., r(m)]`, the values the occupancy LP and cycle
    /// formulas need.
    pub fn prefix(&self, m: usize) -> Result<Vec<f64>, RewardError> {
        (0..=m).map(|ell| self.eval(ell)).collect()
    }
}

/// Outcome of [`validate_reward`].
#[derive(Debug, Clone, PartialEq)]
pub enum RewardReport {
    Ok,
    /// First index at which the structural assumptions fail.
    Violation { ell: usize, reason: String },
}

impl RewardReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, RewardReport::Ok)
    }
}

const VALIDATE_TOL: f64 = 1e-12;

/// Checks `r(0) = 0` and `0 ≤ Δ(ℓ+1) ≤ Δ(ℓ) ≤ 1` where `Δ(ℓ) = r(ℓ+1) − r(ℓ)`,
/// using values `r(0..=horizon)`. Tables shorter than the horizon are checked
/// over the entries they have.
pub fn validate_reward(f: &RewardFn, horizon: usize) -> RewardReport {
    if let Err(e) = f.check_params() {
        return RewardReport::Violation {
            ell: 0,
            reason: e.to_string(),
        };
    }
    let last = f.max_index().map_or(horizon, |mx| mx.min(horizon));
    let values: Vec<f64> = (0..=last).map(|l| f.eval(l).expect("within range")).collect();
    if values[0] != 0.0 {
        return RewardReport::Violation {
            ell: 0,
            reason: format!("r(0) = {} is not zero", values[0]),
        };
    }
    let incs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    for (ell, &d) in incs.iter().enumerate() {
        if d < -VALIDATE_TOL {
            return RewardReport::Violation {
                ell,
                reason: format!("decreasing: r({}) - r({ell}) = {d}", ell + 1),
            };
        }
        if d > 1.0 + VALIDATE_TOL {
            return RewardReport::Violation {
                ell,
                reason: format!("increment r({}) - r({ell}) = {d} exceeds 1", ell + 1),
            };
        }
        if let Some(&next) = incs.get(ell + 1) {
            if next > d + VALIDATE_TOL {
                return RewardReport::Violation {
                    ell,
                    reason: format!(
                        "not concave: increment {next} after ℓ={} exceeds increment {d} after ℓ={ell}",
                        ell + 1
                    ),
                };
            }
        }
    }
    RewardReport::Ok
}

/// Strictly concave table `r'(ℓ) = (r(ℓ) + ε(1 − 2^{−ℓ})) / (1 + ε)` on
/// `ℓ = 0..=horizon`.
///
/// The added term has increments `ε·2^{−(ℓ+1)}`, so strictness survives
/// rounding only while those stay well above the ulp of `r`; horizons up to
/// about 40 are safe for `ε ≥ 1e−3`.
pub fn perturb_strictly_concave(
    f: &RewardFn,
    eps: f64,
    horizon: usize,
) -> Result<RewardFn, RewardError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(RewardError::BadEpsilon(eps));
    }
    let values = (0..=horizon)
        .map(|ell| {
            let base = f.eval(ell)?;
            let bump = eps * (1.0 - 0.5f64.powi(ell as i32));
            Ok((base + bump) / (1.0 + eps))
        })
        .collect::<Result<Vec<_>, RewardError>>()?;
    Ok(RewardFn::Table { values })
}
