//! Finite probability measures and the divergences used to compare them.
//!
//! A [`FiniteMeasure`] is a probability vector over an indexed finite support.
//! On top of it this module provides relative entropy (KL divergence), total
//! variation, the nonstationarity index ‖ρ/π‖_{2,π}, ℓ_p norms and the
//! norm-ratio constant τ_p.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};

/// Weights may drift from 1 by at most this much before renormalization.
const SUM_TOLERANCE: f64 = 1e-12;
/// Drift above `SUM_TOLERANCE` but below this is silently renormalized;
/// anything larger is rejected.
const RENORMALIZE_LIMIT: f64 = 1e-9;

/// Probability vector over an indexed finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteMeasure {
    weights: Vec<f64>,
}

impl FiniteMeasure {
    /// Validates non-negativity and normalization.
    ///
    /// Sums within `1e-12` of 1 are accepted as-is; drift up to `1e-9` is
    /// renormalized; larger drift is a hard error.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::parameter("weights", "support must be non-empty"));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::parameter(
                    "weights",
                    format!("weight at index {i} is {w}; must be finite and >= 0"),
                ));
            }
        }
        let sum: f64 = weights.iter().sum();
        let drift = (sum - 1.0).abs();
        if drift <= SUM_TOLERANCE {
            Ok(Self { weights })
        } else if drift <= RENORMALIZE_LIMIT {
            let weights = weights.iter().map(|w| w / sum).collect();
            Ok(Self { weights })
        } else {
            Err(Error::parameter(
                "weights",
                format!("weights sum to {sum}; drift {drift:e} exceeds 1e-9"),
            ))
        }
    }

    /// Uniform measure on `n` points.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n.max(1)])
    }

    /// Point mass at `index`.
    pub fn point_mass(index: usize, n: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::parameter(
                "index",
                format!("point mass index {index} out of range for support {n}"),
            ));
        }
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self::new(weights)
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }
}

impl TryFrom<Vec<f64>> for FiniteMeasure {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<FiniteMeasure> for Vec<f64> {
    fn from(m: FiniteMeasure) -> Vec<f64> {
        m.weights
    }
}

/// Relative entropy D(μ‖ν) = Σ μᵢ·ln(μᵢ/νᵢ) in nats.
///
/// Returns `+∞` exactly when μ is not absolutely continuous with respect to ν
/// (some μᵢ > 0 with νᵢ = 0); terms with μᵢ = 0 contribute 0.
pub fn kl_divergence(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    ensure_same_len(mu.support_size(), nu.support_size(), "kl_divergence")?;
    let mut sum = 0.0;
    for (&m, &n) in mu.weights.iter().zip(&nu.weights) {
        if m > 0.0 {
            if n == 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += m * (m / n).ln();
        }
    }
    // Rounding can push the sum a hair below 0 for mu ≈ nu.
    Ok(sum.max(0.0))
}

/// Total variation distance (1/2)·Σ|μᵢ − νᵢ| ∈ [0,1].
pub fn tv_distance(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    ensure_same_len(mu.support_size(), nu.support_size(), "tv_distance")?;
    Ok(tv_distance_raw(&mu.weights, &nu.weights))
}

/// TV between two same-length weight slices; no normalization checks.
pub(crate) fn tv_distance_raw(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(&m, &n)| (m - n).abs()).sum::<f64>()
}

/// Nonstationarity index ‖ρ/π‖_{2,π} = √(Σ ρᵢ²/πᵢ).
///
/// Always ≥ 1; `+∞` when ρ is not absolutely continuous with respect to π.
/// For strictly positive π the index is at most 1/√(min πᵢ).
pub fn nonstationarity_index(rho: &FiniteMeasure, pi: &FiniteMeasure) -> Result<f64> {
    ensure_same_len(
        rho.support_size(),
        pi.support_size(),
        "nonstationarity_index",
    )?;
    let mut sum = 0.0;
    for (&r, &p) in rho.weights.iter().zip(&pi.weights) {
        if r > 0.0 {
            if p == 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += r * r / p;
        }
    }
    Ok(sum.sqrt().max(1.0))
}

/// ℓ_p norm of a vector; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(v: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    if v.is_empty() {
        return Ok(0.0);
    }
    if p.is_infinite() {
        return Ok(v.iter().fold(0.0, |acc: f64, &x| acc.max(x.abs())));
    }
    if p == 1.0 {
        return Ok(v.iter().map(|x| x.abs()).sum());
    }
    if p == 2.0 {
        return Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    Ok(v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p))
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::parameter(
            "p",
            format!("norm index {p} must be >= 1"),
        ));
    }
    Ok(())
}

/// Dual exponent q with 1/p + 1/q = 1; q = ∞ for p = 1.
pub fn dual_exponent(p: f64) -> Result<f64> {
    check_p(p)?;
    if p == 1.0 {
        Ok(f64::INFINITY)
    } else if p.is_infinite() {
        Ok(1.0)
    } else {
        Ok(p / (p - 1.0))
    }
}

/// Norm-equivalence upper bound for τ_p: k^{max(0, 1/p − 1/2)}.
///
/// Equals √k at p = 1 and 1 for every p ≥ 2.
pub fn tau_p_upper(p: f64, k: usize) -> Result<f64> {
    check_p(p)?;
    if k < 1 {
        return Err(Error::parameter("k", "dimension must be >= 1"));
    }
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    Ok((k as f64).powf((inv_p - 0.5).max(0.0)))
}

/// Empirical τ_p estimate over an image sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauEstimate {
    /// Max ratio ‖y − c‖_p/‖y − c‖₂ over non-degenerate points.
    pub value: f64,
    /// True when every point was within 1e-12 of the center.
    pub all_skipped: bool,
}

/// Estimates sup ‖y − center‖_p/‖y − center‖₂ over the supplied points.
///
/// Points within 1e-12 (in ℓ₂) of the center are skipped; if all are skipped
/// the estimate is 0 with `all_skipped` set.
pub fn tau_p_empirical(points: &[Vec<f64>], center: &[f64], p: f64) -> Result<TauEstimate> {
    check_p(p)?;
    if points.is_empty() {
        return Err(Error::parameter("points", "point list must be non-empty"));
    }
    let mut best = 0.0f64;
    let mut any = false;
    for point in points {
        ensure_same_len(point.len(), center.len(), "tau_p_empirical")?;
        let diff: Vec<f64> = point.iter().zip(center).map(|(y, c)| y - c).collect();
        let l2 = lp_norm(&diff, 2.0)?;
        if l2 <= 1e-12 {
            continue;
        }
        any = true;
        best = best.max(lp_norm(&diff, p)? / l2);
    }
    Ok(TauEstimate {
        value: if any { best } else { 0.0 },
        all_skipped: !any,
    })
}
