//! Closed-form concentration bounds and sample complexities.
//!
//! Two tail bounds for vector-valued Lipschitz functions under a
//! transportation cost inequality W1(μ,ν) ≤ √(2σ²·D(μ‖ν)):
//!
//!   covering:  (1 + 2/η)^k · exp(−ε²(1−η)²/(2σ²L²))
//!   gaussian:  2^{k/2} · exp(−ε²/(4σ²L²))
//!
//! plus the three routes to tail bounds for the plug-in stationary-measure
//! estimator of an r-contractive chain: a direct sub-Gaussian bound on the
//! deviation norm (approach 1), a per-coordinate union bound (approach 2) and
//! the covering bound applied to the estimator vector (approach 3).
//!
//! Every bound is evaluated in log space and reported both raw and clamped
//! to 1.
//!
//! The lifted variants carry the nonstationarity index prefactor and the
//! halved exponents produced by the square-root lift P_ρ ≤ ‖ρ/π‖·√(P_π); the
//! `_stationary` variants are the un-lifted forms for chains started at π,
//! where applying the lift would needlessly square-root the bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    self, for_each_path, plugin_lipschitz, MarkovChainModel, ENUMERATION_THRESHOLD,
};
use crate::measures::{check_p, dual_exponent, lp_norm};
use crate::rng::{substream, KahanSum};

/// Lower edge of the net-parameter search interval.
const ETA_MIN: f64 = 1e-6;
/// Golden-section iterations for η optimization.
const GOLDEN_ITERATIONS: usize = 200;

/// Inputs for the vector concentration bounds.
///
/// `eta` is the ε-net parameter of the covering argument (the inner ε of the
/// covering construction, renamed to avoid colliding with the deviation
/// threshold `eps`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationInputs {
    /// Output dimension k.
    pub k: usize,
    /// TCI constant σ² > 0.
    pub sigma2: f64,
    /// Lipschitz constant ‖f‖_Lip > 0.
    pub lip: f64,
    /// Norm-ratio constant τ_p > 0.
    pub tau_p: f64,
    /// Deviation threshold ε > 0.
    pub eps: f64,
    /// Net parameter η ∈ (0, 1].
    pub eta: f64,
}

impl ConcentrationInputs {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::parameter("k", "dimension must be >= 1"));
        }
        for (name, value) in [
            ("sigma2", self.sigma2),
            ("lip", self.lip),
            ("tau_p", self.tau_p),
            ("eps", self.eps),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::parameter(
                    name,
                    format!("{value} must be > 0 and finite"),
                ));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::parameter(
                "eta",
                format!("{} must lie in (0, 1]", self.eta),
            ));
        }
        Ok(())
    }
}

/// Inputs for the Markov-chain tail bounds and sample complexities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainBoundInputs {
    /// State count K.
    pub k: usize,
    /// Sample length n.
    pub n: usize,
    /// Dobrushin coefficient r ∈ [0, 1).
    pub r: f64,
    /// Norm index p ≥ 1.
    pub p: f64,
    /// Nonstationarity index ‖ρ/π‖_{2,π} ≥ 1.
    pub index: f64,
    /// Failure probability δ ∈ (0, 1).
    pub delta: f64,
    /// Deviation threshold ε > 0.
    pub eps: f64,
}

impl ChainBoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::parameter("k", "state count must be >= 1"));
        }
        if self.n < 1 {
            return Err(Error::parameter("n", "sample length must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.r) {
            return Err(Error::parameter(
                "r",
                format!("Dobrushin coefficient {} must lie in [0, 1)", self.r),
            ));
        }
        check_p(self.p)?;
        if self.index.is_nan() || self.index < 1.0 {
            return Err(Error::parameter(
                "index",
                format!("nonstationarity index {} must be >= 1", self.index),
            ));
        }
        if self.delta.is_nan() || self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(Error::parameter(
                "delta",
                format!("{} must lie in (0, 1)", self.delta),
            ));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::parameter("eps", "threshold must be > 0"));
        }
        Ok(())
    }

    fn decay(&self) -> f64 {
        1.0 - self.r
    }

    /// 2^{2/p}; 1 at p = ∞.
    fn two_pow_2_over_p(&self) -> f64 {
        if self.p.is_infinite() {
            1.0
        } else {
            2.0f64.powf(2.0 / self.p)
        }
    }

    /// K^{2/p}; 1 at p = ∞.
    fn k_pow_2_over_p(&self) -> f64 {
        if self.p.is_infinite() {
            1.0
        } else {
            (self.k as f64).powf(2.0 / self.p)
        }
    }
}

/// A probability bound, raw and clamped to 1, or the not-applicable sentinel
/// used when a threshold precondition (ε > E) fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundValue {
    NotApplicable,
    Value { raw: f64, clamped: f64 },
}

impl BoundValue {
    fn from_log(log_raw: f64) -> Self {
        BoundValue::Value {
            raw: log_raw.exp(),
            clamped: log_raw.min(0.0).exp(),
        }
    }

    pub fn clamped(&self) -> Option<f64> {
        match self {
            BoundValue::Value { clamped, .. } => Some(*clamped),
            BoundValue::NotApplicable => None,
        }
    }

    pub fn raw(&self) -> Option<f64> {
        match self {
            BoundValue::Value { raw, .. } => Some(*raw),
            BoundValue::NotApplicable => None,
        }
    }
}

fn log_covering(k: usize, sigma2_lip2: f64, eps: f64, eta: f64) -> f64 {
    k as f64 * (1.0 + 2.0 / eta).ln() - eps * eps * (1.0 - eta) * (1.0 - eta) / (2.0 * sigma2_lip2)
}

fn log_gaussian(k: usize, sigma2_lip2: f64, eps: f64) -> f64 {
    k as f64 / 2.0 * std::f64::consts::LN_2 - eps * eps / (4.0 * sigma2_lip2)
}

/// Covering-argument branch: (1 + 2/η)^k · exp(−ε²(1−η)²/(2σ²L²)).
///
/// At η = 1 the exponential factor is 1 and the value is 3^k.
pub fn covering_bound(inputs: &ConcentrationInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(log_covering(
        inputs.k,
        inputs.sigma2 * inputs.lip * inputs.lip,
        inputs.eps,
        inputs.eta,
    )
    .exp())
}

/// Gaussian-smoothing branch: 2^{k/2} · exp(−ε²/(4σ²L²)).
pub fn gaussian_bound(inputs: &ConcentrationInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(log_gaussian(
        inputs.k,
        inputs.sigma2 * inputs.lip * inputs.lip,
        inputs.eps,
    )
    .exp())
}

/// Result of the two-branch tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Result {
    /// min of the two branches, unclamped.
    pub raw: f64,
    /// Headline value, clamped to [0, 1].
    pub clamped: f64,
    /// Net parameter the covering branch was evaluated at.
    pub eta: f64,
    pub covering: f64,
    pub gaussian: f64,
}

/// Minimizes `f` over (ETA_MIN, 1] by golden-section search, refined around
/// the best point of a coarse grid when the function is not unimodal.
fn minimize_eta(f: impl Fn(f64) -> f64) -> (f64, f64) {
    fn golden(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        let mut fc = f(c);
        let mut fd = f(d);
        for _ in 0..GOLDEN_ITERATIONS {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = f(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = f(d);
            }
        }
        let mid = 0.5 * (lo + hi);
        (mid, f(mid))
    }

    let (mut best_eta, mut best_val) = golden(&f, ETA_MIN, 1.0);
    // Guard against non-unimodal shapes: bracket the best coarse-grid point.
    const GRID: usize = 128;
    let mut grid_best = (ETA_MIN, f(ETA_MIN));
    for i in 0..=GRID {
        let eta = ETA_MIN + (1.0 - ETA_MIN) * i as f64 / GRID as f64;
        let val = f(eta);
        if val < grid_best.1 {
            grid_best = (eta, val);
        }
    }
    if grid_best.1 < best_val {
        let step = (1.0 - ETA_MIN) / GRID as f64;
        let lo = (grid_best.0 - step).max(ETA_MIN);
        let hi = (grid_best.0 + step).min(1.0);
        let (eta, val) = golden(&f, lo, hi);
        if val < best_val {
            best_eta = eta;
            best_val = val;
        }
        if grid_best.1 < best_val {
            (best_eta, best_val) = grid_best;
        }
    }
    // η = 1 kills the exponent entirely; it is the closed-form optimum for
    // tiny ε and the search interval endpoint.
    let at_one = f(1.0);
    if at_one < best_val {
        (best_eta, best_val) = (1.0, at_one);
    }
    (best_eta, best_val)
}

/// Two-branch ℓ_p tail bound: min of covering and gaussian branches evaluated
/// at ε/τ_p.
///
/// With `optimize_eta` the net parameter is chosen by golden-section search on
/// the log covering branch over (1e-6, 1]; otherwise `inputs.eta` is used.
pub fn theorem1_bound(inputs: &ConcentrationInputs, optimize_eta: bool) -> Result<Theorem1Result> {
    inputs.validate()?;
    let sigma2_lip2 = inputs.sigma2 * inputs.lip * inputs.lip;
    let eps_eff = inputs.eps / inputs.tau_p;
    let (eta, log_cov) = if optimize_eta {
        minimize_eta(|eta| log_covering(inputs.k, sigma2_lip2, eps_eff, eta))
    } else {
        (
            inputs.eta,
            log_covering(inputs.k, sigma2_lip2, eps_eff, inputs.eta),
        )
    };
    let log_gauss = log_gaussian(inputs.k, sigma2_lip2, eps_eff);
    let log_min = log_cov.min(log_gauss);
    Ok(Theorem1Result {
        raw: log_min.exp(),
        clamped: log_min.min(0.0).exp(),
        eta,
        covering: log_cov.exp(),
        gaussian: log_gauss.exp(),
    })
}

/// TCI constant for the path law of an r-contractive chain: σ² = n/(4(1−r)²),
/// the unique value making √(2σ²D) coincide with √(nD/(2(1−r)²)).
pub fn marton_sigma2(n: usize, r: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::parameter("n", "sample length must be >= 1"));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::parameter(
            "r",
            format!("Dobrushin coefficient {r} must lie in [0, 1)"),
        ));
    }
    Ok(n as f64 / (4.0 * (1.0 - r) * (1.0 - r)))
}

/// Lift of a stationary-chain tail bound to an arbitrary start:
/// min(1, index·√(base_tail)).
///
/// Callers with index = 1 (stationary start) should use `base_tail` directly;
/// the lift would needlessly square-root it.
pub fn paulin_lift(base_tail: f64, index: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&base_tail) {
        return Err(Error::parameter(
            "base_tail",
            format!("{base_tail} must lie in [0, 1]"),
        ));
    }
    if index.is_nan() || index < 1.0 {
        return Err(Error::parameter("index", format!("{index} must be >= 1")));
    }
    Ok((index * base_tail.sqrt()).min(1.0))
}

/// Approach 1, lifted form: index · exp(−2^{−2/p}·n·(ε−E)²·(1−r)²).
///
/// Not applicable unless ε exceeds the expected deviation E.
pub fn approach1_bound(inputs: &ChainBoundInputs, expected_dev: f64) -> Result<BoundValue> {
    inputs.validate()?;
    check_expected_dev(expected_dev)?;
    if inputs.eps <= expected_dev {
        return Ok(BoundValue::NotApplicable);
    }
    let gap = inputs.eps - expected_dev;
    let decay = inputs.decay();
    let log =
        inputs.index.ln() - inputs.n as f64 * gap * gap * decay * decay / inputs.two_pow_2_over_p();
    Ok(BoundValue::from_log(log))
}

/// Approach 1 for a chain started at π: exp(−2^{1−2/p}·n·(ε−E)²·(1−r)²).
pub fn approach1_bound_stationary(
    inputs: &ChainBoundInputs,
    expected_dev: f64,
) -> Result<BoundValue> {
    inputs.validate()?;
    check_expected_dev(expected_dev)?;
    if inputs.eps <= expected_dev {
        return Ok(BoundValue::NotApplicable);
    }
    let gap = inputs.eps - expected_dev;
    let decay = inputs.decay();
    let log = -2.0 * inputs.n as f64 * gap * gap * decay * decay / inputs.two_pow_2_over_p();
    Ok(BoundValue::from_log(log))
}

fn check_expected_dev(expected_dev: f64) -> Result<()> {
    if !expected_dev.is_finite() || expected_dev < 0.0 {
        return Err(Error::parameter(
            "expected_dev",
            format!("{expected_dev} must be finite and >= 0"),
        ));
    }
    Ok(())
}

/// Sample complexity of approach 1:
/// n ≥ 2^{2/p}·log(index/δ) / ((ε−E)²(1−r)²). Real-valued; callers ceil.
pub fn approach1_complexity(inputs: &ChainBoundInputs, expected_dev: f64) -> Result<Option<f64>> {
    inputs.validate()?;
    check_expected_dev(expected_dev)?;
    if inputs.eps <= expected_dev {
        return Ok(None);
    }
    let gap = inputs.eps - expected_dev;
    let decay = inputs.decay();
    Ok(Some(
        inputs.two_pow_2_over_p() * (inputs.index.ln() - inputs.delta.ln())
            / (gap * gap * decay * decay),
    ))
}

/// Approach 2, lifted form: √(2K)·index·exp(−K^{−2/p}·n·ε²·(1−r)²).
pub fn approach2_bound(inputs: &ChainBoundInputs) -> Result<BoundValue> {
    inputs.validate()?;
    let decay = inputs.decay();
    let log = 0.5 * (2.0 * inputs.k as f64).ln() + inputs.index.ln()
        - inputs.n as f64 * inputs.eps * inputs.eps * decay * decay / inputs.k_pow_2_over_p();
    Ok(BoundValue::from_log(log))
}

/// Approach 2 for a chain started at π: 2K·exp(−2·K^{−2/p}·n·ε²·(1−r)²).
pub fn approach2_bound_stationary(inputs: &ChainBoundInputs) -> Result<BoundValue> {
    inputs.validate()?;
    let decay = inputs.decay();
    let log = (2.0 * inputs.k as f64).ln()
        - 2.0 * inputs.n as f64 * inputs.eps * inputs.eps * decay * decay / inputs.k_pow_2_over_p();
    Ok(BoundValue::from_log(log))
}

/// Sample complexity of approach 2:
/// n ≥ K^{2/p}·log(√(2K)·index/δ) / (ε²(1−r)²).
pub fn approach2_complexity(inputs: &ChainBoundInputs) -> Result<f64> {
    inputs.validate()?;
    let decay = inputs.decay();
    let log_term = 0.5 * (2.0 * inputs.k as f64).ln() + inputs.index.ln() - inputs.delta.ln();
    Ok(inputs.k_pow_2_over_p() * log_term / (inputs.eps * inputs.eps * decay * decay))
}

fn check_eta_tau(eta: f64, tau: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::parameter("eta", format!("{eta} must lie in (0, 1]")));
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::parameter(
            "tau",
            format!("{tau} must be > 0 and finite"),
        ));
    }
    Ok(())
}

fn log_approach3(inputs: &ChainBoundInputs, eta: f64, tau: f64) -> f64 {
    let decay = inputs.decay();
    inputs.index.ln() + inputs.k as f64 / 2.0 * (1.0 + 2.0 / eta).ln()
        - inputs.n as f64 * inputs.eps * inputs.eps * (1.0 - eta) * (1.0 - eta) * decay * decay
            / (2.0 * tau * tau)
}

/// Approach 3, lifted form:
/// index·(1+2/η)^{K/2}·exp(−nε²(1−η)²(1−r)²/(2τ_p²)).
pub fn approach3_bound(inputs: &ChainBoundInputs, eta: f64, tau: f64) -> Result<BoundValue> {
    inputs.validate()?;
    check_eta_tau(eta, tau)?;
    Ok(BoundValue::from_log(log_approach3(inputs, eta, tau)))
}

/// Approach 3 with η chosen by golden-section search on the log bound.
pub fn approach3_bound_optimized(inputs: &ChainBoundInputs, tau: f64) -> Result<(BoundValue, f64)> {
    inputs.validate()?;
    check_eta_tau(0.5, tau)?;
    let (eta, log) = minimize_eta(|eta| log_approach3(inputs, eta, tau));
    Ok((BoundValue::from_log(log), eta))
}

fn log_approach3_stationary(inputs: &ChainBoundInputs, eta: f64, tau: f64) -> f64 {
    let decay = inputs.decay();
    inputs.k as f64 * (1.0 + 2.0 / eta).ln()
        - inputs.n as f64 * inputs.eps * inputs.eps * (1.0 - eta) * (1.0 - eta) * decay * decay
            / (tau * tau)
}

/// Approach 3 for a chain started at π (un-lifted covering form):
/// (1+2/η)^K·exp(−nε²(1−η)²(1−r)²/τ_p²).
pub fn approach3_bound_stationary(
    inputs: &ChainBoundInputs,
    eta: f64,
    tau: f64,
) -> Result<BoundValue> {
    inputs.validate()?;
    check_eta_tau(eta, tau)?;
    Ok(BoundValue::from_log(log_approach3_stationary(
        inputs, eta, tau,
    )))
}

/// Stationary approach 3 with optimized η.
pub fn approach3_bound_stationary_optimized(
    inputs: &ChainBoundInputs,
    tau: f64,
) -> Result<(BoundValue, f64)> {
    inputs.validate()?;
    check_eta_tau(0.5, tau)?;
    let (eta, log) = minimize_eta(|eta| log_approach3_stationary(inputs, eta, tau));
    Ok((BoundValue::from_log(log), eta))
}

fn approach3_complexity_at(inputs: &ChainBoundInputs, eta: f64, tau: f64) -> f64 {
    let decay = inputs.decay();
    let bracket =
        inputs.k as f64 / 2.0 * (1.0 + 2.0 / eta).ln() + inputs.index.ln() - inputs.delta.ln();
    2.0 * tau * tau * bracket
        / (inputs.eps * inputs.eps * (1.0 - eta) * (1.0 - eta) * decay * decay)
}

/// Sample complexity of approach 3:
/// n ≥ (2τ_p²/(ε²(1−η)²(1−r)²))·[(K/2)·log(1+2/η) + log(index) + log(1/δ)].
pub fn approach3_complexity(inputs: &ChainBoundInputs, eta: f64, tau: f64) -> Result<f64> {
    inputs.validate()?;
    check_eta_tau(eta, tau)?;
    if eta >= 1.0 {
        return Err(Error::parameter(
            "eta",
            "complexity diverges at eta = 1; pick eta < 1",
        ));
    }
    Ok(approach3_complexity_at(inputs, eta, tau))
}

/// Approach 3 complexity minimized over η ∈ (1e-6, 1).
pub fn approach3_complexity_optimized(inputs: &ChainBoundInputs, tau: f64) -> Result<(f64, f64)> {
    inputs.validate()?;
    check_eta_tau(0.5, tau)?;
    let (eta, value) = minimize_eta(|eta| {
        if eta >= 1.0 {
            f64::INFINITY
        } else {
            approach3_complexity_at(inputs, eta, tau)
        }
    });
    Ok((value, eta))
}

/// One λ of an empirical moment-generating-function check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MgfPoint {
    pub lambda: f64,
    /// Estimate of E[exp(λ⟨h, π̂ − E[π̂]⟩)].
    pub empirical: f64,
    /// Sub-Gaussian envelope exp(λ²‖h‖_q²σ²L²/2).
    pub bound: f64,
    /// Monte Carlo standard error; 0 under exact enumeration.
    pub std_err: f64,
    /// empirical − bound.
    pub margin: f64,
    /// Margin exceeds 3 standard errors (any positive margin when exact).
    pub violation: bool,
}

/// Result of an MGF sub-Gaussianity check for the plug-in estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgfReport {
    pub points: Vec<MgfPoint>,
    pub exact: bool,
    pub sigma2: f64,
    pub lip: f64,
    /// ‖h‖_q for the dual exponent q of p.
    pub dual_norm: f64,
    pub num_violations: usize,
    pub seed: u64,
}

/// Checks the sub-Gaussian marginal inequality
/// E[exp(λ⟨h, π̂ − E[π̂]⟩)] ≤ exp(λ²‖h‖_q²σ²L²/2)
/// with σ² = marton_sigma2(n, r) and L = 2^{1/p}/n, for each supplied λ.
///
/// Exact path enumeration below K^n ≤ 4096; Monte Carlo otherwise, with the
/// centering mean E[π̂] taken from a separate control run of equal size.
pub fn mgf_check(
    chain: &MarkovChainModel,
    n: usize,
    p: f64,
    h: &[f64],
    lambdas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<MgfReport> {
    check_p(p)?;
    let k = chain.state_count();
    if h.len() != k {
        return Err(Error::Dimension {
            left: h.len(),
            right: k,
            context: "direction vector vs state count",
        });
    }
    let h_norm = lp_norm(h, 2.0)?;
    if h_norm <= 0.0 {
        return Err(Error::parameter("h", "direction vector must be nonzero"));
    }
    if lambdas.is_empty() {
        return Err(Error::parameter("lambdas", "need at least one lambda"));
    }
    let r = markov::dobrushin(chain);
    let sigma2 = marton_sigma2(n, r)?;
    let lip = plugin_lipschitz(p, n)?;
    let dual_norm = lp_norm(h, dual_exponent(p)?)?;
    let envelope =
        |lambda: f64| (lambda * lambda * dual_norm * dual_norm * sigma2 * lip * lip / 2.0).exp();

    let exact = chain.path_count(n as u32) <= ENUMERATION_THRESHOLD;
    let points: Vec<MgfPoint> = if exact {
        // First pass: exact mean of pi-hat under the chain law.
        let mut mean = vec![KahanSum::default(); k];
        for_each_path(k, n, |path| {
            let prob = chain.path_probability(path);
            if prob > 0.0 {
                for &s in path {
                    mean[s].add(prob / n as f64);
                }
            }
        });
        let mean: Vec<f64> = mean.iter().map(|m| m.value()).collect();
        lambdas
            .iter()
            .map(|&lambda| {
                let mut acc = KahanSum::default();
                for_each_path(k, n, |path| {
                    let prob = chain.path_probability(path);
                    if prob > 0.0 {
                        let mut inner = 0.0;
                        let mut counts = vec![0.0f64; k];
                        for &s in path {
                            counts[s] += 1.0;
                        }
                        for i in 0..k {
                            inner += h[i] * (counts[i] / n as f64 - mean[i]);
                        }
                        acc.add(prob * (lambda * inner).exp());
                    }
                });
                let empirical = acc.value();
                let bound = envelope(lambda);
                let margin = empirical - bound;
                MgfPoint {
                    lambda,
                    empirical,
                    bound,
                    std_err: 0.0,
                    margin,
                    violation: margin > 0.0,
                }
            })
            .collect()
    } else {
        if trials < 100 {
            return Err(Error::parameter("trials", "need at least 100 trials"));
        }
        let project = |path: &[usize], mean: &[f64]| -> f64 {
            let mut counts = vec![0.0f64; k];
            for &s in path {
                counts[s] += 1.0;
            }
            (0..k)
                .map(|i| h[i] * (counts[i] / n as f64 - mean[i]))
                .sum()
        };
        // Control run estimates the centering mean on its own substream.
        let control: Vec<Vec<usize>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, &[1, t as u64]);
                markov::simulate_with_rng(chain, n, &mut rng)
            })
            .collect();
        let mut mean = vec![KahanSum::default(); k];
        for path in &control {
            for &s in path {
                mean[s].add(1.0 / (n as f64 * trials as f64));
            }
        }
        let mean: Vec<f64> = mean.iter().map(|m| m.value()).collect();
        let inner_products: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, &[0, t as u64]);
                let path = markov::simulate_with_rng(chain, n, &mut rng);
                project(&path, &mean)
            })
            .collect();
        lambdas
            .iter()
            .map(|&lambda| {
                let mut acc = KahanSum::default();
                for &ip in &inner_products {
                    acc.add((lambda * ip).exp());
                }
                let empirical = acc.value() / trials as f64;
                let mut sq = KahanSum::default();
                for &ip in &inner_products {
                    let d = (lambda * ip).exp() - empirical;
                    sq.add(d * d);
                }
                let std_err = (sq.value() / (trials as f64 - 1.0) / trials as f64).sqrt();
                let bound = envelope(lambda);
                let margin = empirical - bound;
                MgfPoint {
                    lambda,
                    empirical,
                    bound,
                    std_err,
                    margin,
                    violation: margin > 3.0 * std_err,
                }
            })
            .collect()
    };

    let num_violations = points.iter().filter(|pt| pt.violation).count();
    Ok(MgfReport {
        points,
        exact,
        sigma2,
        lip,
        dual_norm,
        num_violations,
        seed,
    })
}
