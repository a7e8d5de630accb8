//! End-to-end empirical validation: exact or Monte-Carlo tail probabilities
//! for the plug-in estimator against the three closed-form bounds, plus the
//! sample-complexity comparison tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bounds::{
    approach1_bound, approach1_bound_stationary, approach1_complexity, approach2_bound,
    approach2_bound_stationary, approach2_complexity, approach3_bound_optimized,
    approach3_bound_stationary_optimized, approach3_complexity, approach3_complexity_optimized,
    BoundValue, ChainBoundInputs,
};
use crate::error::{Error, Result};
use crate::markov::{self, expected_deviation, for_each_path, MarkovChainModel};
use crate::measures::{lp_norm, nonstationarity_index, tau_p_upper, tv_distance};
use crate::rng::{substream, KahanSum};
use crate::transport::SPACE_CAP;

/// Chains with Dobrushin coefficient at or above this are refused for bound
/// computations: every (1-r) factor degenerates.
const R_CEILING: f64 = 1.0 - 1e-9;

/// Deviation norms are rounded to this grid before the >= comparison, so
/// exact-rational boundaries like 0.25 do not flip with platform rounding.
const NORM_ROUNDING: f64 = 1e-12;

/// One ε of a bounds-versus-empirical comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub eps: f64,
    /// Tail estimate in [0, 1].
    pub empirical: f64,
    /// 99% confidence half-width; 0 when `exact_flag`.
    pub half_width: f64,
    /// Whether the tail was computed by exact enumeration.
    pub exact_flag: bool,
    /// Approach 1 (direct), not applicable when ε ≤ E_π[‖π̂−π‖_p].
    pub bound1: BoundValue,
    /// Approach 2 (union bound).
    pub bound2: BoundValue,
    /// Approach 3 (covering bound), η optimized.
    pub bound3: BoundValue,
    pub eta_used: f64,
    /// Expected deviation fed to approach 1 (upper confidence when sampled).
    pub expected_dev: f64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: f64,
    pub r: f64,
    pub index: f64,
    pub seed: u64,
}

fn round_norm(x: f64) -> f64 {
    (x / NORM_ROUNDING).round() * NORM_ROUNDING
}

fn deviation_norm(path: &[usize], pi: &[f64], p: f64) -> f64 {
    let mut counts = vec![0.0f64; pi.len()];
    for &s in path {
        counts[s] += 1.0;
    }
    let n = path.len() as f64;
    let diff: Vec<f64> = counts.iter().zip(pi).map(|(c, &q)| c / n - q).collect();
    lp_norm(&diff, p).expect("p validated by caller")
}

/// Exact tail probability P(‖π̂ − π‖_p ≥ ε) by full path enumeration.
///
/// The law is the chain's own start, or the stationary chain when
/// `use_stationary` is set. Capped at K^n ≤ 100000 paths.
pub fn exact_tail(
    chain: &MarkovChainModel,
    n: usize,
    p: f64,
    eps: f64,
    use_stationary: bool,
) -> Result<f64> {
    crate::measures::check_p(p)?;
    if n < 1 {
        return Err(Error::parameter("n", "sample length must be >= 1"));
    }
    let count = chain.path_count(n as u32);
    if count > SPACE_CAP {
        return Err(Error::Capacity {
            requested: count,
            cap: SPACE_CAP,
            context: "exact_tail path count",
        });
    }
    let pi = markov::stationary(chain)?;
    let law = if use_stationary {
        chain.with_initial(pi.clone())?
    } else {
        chain.clone()
    };
    let mut acc = KahanSum::default();
    for_each_path(chain.state_count(), n, |path| {
        let prob = law.path_probability(path);
        if prob > 0.0 && round_norm(deviation_norm(path, pi.weights(), p)) >= eps {
            acc.add(prob);
        }
    });
    Ok(acc.value().min(1.0))
}

/// 99% Clopper–Pearson interval half-width for `successes` out of `trials`.
fn clopper_pearson_half_width(successes: u64, trials: u64) -> f64 {
    let alpha = 0.01;
    let x = successes as f64;
    let n = trials as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0)
            .expect("valid beta parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x)
            .expect("valid beta parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (hi - lo) / 2.0
}

/// Monte Carlo tail estimate with a 99% Clopper–Pearson half-width.
///
/// Deterministic given the seed; trial `t` draws from substream `(seed, t)`.
pub fn mc_tail(
    chain: &MarkovChainModel,
    n: usize,
    p: f64,
    eps: f64,
    trials: usize,
    seed: u64,
    use_stationary: bool,
) -> Result<(f64, f64)> {
    crate::measures::check_p(p)?;
    if n < 1 {
        return Err(Error::parameter("n", "sample length must be >= 1"));
    }
    if trials < 1000 {
        return Err(Error::parameter("trials", "need at least 1000 trials"));
    }
    let pi = markov::stationary(chain)?;
    let law = if use_stationary {
        chain.with_initial(pi.clone())?
    } else {
        chain.clone()
    };
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[t as u64]);
            let path = markov::simulate_with_rng(&law, n, &mut rng);
            u64::from(round_norm(deviation_norm(&path, pi.weights(), p)) >= eps)
        })
        .sum();
    let estimate = hits as f64 / trials as f64;
    Ok((estimate, clopper_pearson_half_width(hits, trials as u64)))
}

/// Compares the empirical tail against the three bounds over an ε grid.
///
/// The empirical tail uses exact enumeration when K^n ≤ 100000, Monte Carlo
/// otherwise. The Paulin lift (index prefactor and halved exponents) is
/// applied exactly when the chain does not start at π; stationary starts use
/// the un-lifted forms. Approach 3 optimizes η per ε with τ = tau_p_upper(p, K).
pub fn compare_bounds(
    chain: &MarkovChainModel,
    n: usize,
    p: f64,
    eps_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<TailReport>> {
    crate::measures::check_p(p)?;
    if eps_grid.is_empty() {
        return Err(Error::parameter("eps_grid", "grid must be non-empty"));
    }
    let k = chain.state_count();
    let pi = markov::stationary(chain)?;
    let r = markov::dobrushin(chain);
    if r >= R_CEILING {
        return Err(Error::Precondition(format!(
            "Dobrushin coefficient r = {r} is too close to 1 for bound computations"
        )));
    }
    let stationary_start = tv_distance(chain.initial(), &pi)? <= 1e-12;
    let index = if stationary_start {
        1.0
    } else {
        nonstationarity_index(chain.initial(), &pi)?
    };
    let tau = tau_p_upper(p, k)?;

    // Conservative expected deviation: exact when enumerable, otherwise the
    // 99% upper confidence bound so the reported approach-1 bound stays valid.
    let (dev_estimate, dev_half_width) =
        expected_deviation(chain, n, p, trials.max(100), seed.wrapping_add(1))?;
    let expected_dev = dev_estimate + dev_half_width;

    let enumerable = chain.path_count(n as u32) <= SPACE_CAP;
    eps_grid
        .iter()
        .map(|&eps| {
            if eps < 0.0 {
                return Err(Error::parameter("eps_grid", format!("negative eps {eps}")));
            }
            let (empirical, half_width, exact_flag) = if enumerable {
                (exact_tail(chain, n, p, eps, false)?, 0.0, true)
            } else {
                let (estimate, hw) = mc_tail(chain, n, p, eps, trials, seed, false)?;
                (estimate, hw, false)
            };
            // eps = 0 is a degenerate grid point: the tail is identically 1
            // and the exponents vanish, so evaluate the formulas at the
            // smallest positive threshold.
            let eps_eval = if eps > 0.0 { eps } else { f64::MIN_POSITIVE };
            let inputs = ChainBoundInputs {
                k,
                n,
                r,
                p,
                index,
                delta: 0.05,
                eps: eps_eval,
            };
            let (bound1, bound2, (bound3, eta_used)) = if stationary_start {
                (
                    approach1_bound_stationary(&inputs, expected_dev)?,
                    approach2_bound_stationary(&inputs)?,
                    approach3_bound_stationary_optimized(&inputs, tau)?,
                )
            } else {
                (
                    approach1_bound(&inputs, expected_dev)?,
                    approach2_bound(&inputs)?,
                    approach3_bound_optimized(&inputs, tau)?,
                )
            };
            Ok(TailReport {
                eps,
                empirical,
                half_width,
                exact_flag,
                bound1,
                bound2,
                bound3,
                eta_used,
                expected_dev,
                n,
                k,
                p,
                r,
                index,
                seed,
            })
        })
        .collect()
}

/// How ‖ρ/π‖_{2,π} scales with the state count in a complexity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum IndexRule {
    /// min π ≍ 1/K^m gives index = K^{m/2}.
    PowerLaw { m: f64 },
    /// min π ≍ 1/e^K gives index = e^{K/2}.
    Exponential,
    /// A fixed, K-independent index.
    Explicit { value: f64 },
}

impl IndexRule {
    fn index_for(&self, k: usize) -> Result<f64> {
        let index = match self {
            IndexRule::PowerLaw { m } => {
                if *m < 0.0 {
                    return Err(Error::parameter("index_rule", "power-law m must be >= 0"));
                }
                (k as f64).powf(m / 2.0)
            }
            IndexRule::Exponential => (k as f64 / 2.0).exp(),
            IndexRule::Explicit { value } => *value,
        };
        if !index.is_finite() || index < 1.0 {
            return Err(Error::parameter(
                "index_rule",
                format!("index {index} for K = {k} must be finite and >= 1"),
            ));
        }
        Ok(index)
    }
}

/// Net parameter selection for approach 3 columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EtaMode {
    Optimize,
    Fixed { eta: f64 },
}

/// Expected-deviation source for the approach-1 column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ExpectedDevRule {
    /// A caller-supplied value of E_π[‖π̂ − π‖_p].
    Explicit { value: f64 },
    /// The K/√n envelope, resolved as a fixed point of Eq-style n(E(n)).
    Envelope,
}

/// One state-count row of the sample-complexity comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub index: f64,
    /// Approach 1 complexity; None when ε never clears the expected deviation.
    pub n1: Option<f64>,
    pub n2: f64,
    pub n3: f64,
    pub eta3: f64,
    pub ratio_2_3: f64,
    /// n₂/(n₃·ln K).
    pub ratio_2_3_per_log_k: f64,
    /// n₂/(n₃·K).
    pub ratio_2_3_per_k: f64,
}

fn solve_envelope_fixed_point(inputs: &ChainBoundInputs) -> Option<f64> {
    // n = C/(eps - K/sqrt(n))^2 with C = 2^{2/p} log(index/delta)/(1-r)^2.
    let k = inputs.k as f64;
    let feasible_floor = (k / inputs.eps) * (k / inputs.eps);
    let mut n = feasible_floor.max(1.0) * 4.0;
    for _ in 0..500 {
        let dev = k / n.sqrt();
        if dev >= inputs.eps {
            return None;
        }
        let mut probe = *inputs;
        probe.n = 1;
        let next = approach1_complexity(&probe, dev).ok()??;
        if !next.is_finite() {
            return None;
        }
        if (next - n).abs() <= 1e-9 * n.max(1.0) {
            return Some(next.max(feasible_floor));
        }
        // damped update keeps the iteration from oscillating
        n = 0.5 * n + 0.5 * next.max(feasible_floor * 1.0001);
    }
    None
}

/// Sample complexities n₁, n₂, n₃ per state count, with ratio columns
/// n₂/n₃, n₂/(n₃·ln K) and n₂/(n₃·K).
#[allow(clippy::too_many_arguments)] // one row-wise table, every knob is load-bearing
pub fn complexity_table(
    k_list: &[usize],
    p: f64,
    eps: f64,
    delta: f64,
    r: f64,
    index_rule: IndexRule,
    eta_mode: EtaMode,
    expected_dev_rule: ExpectedDevRule,
) -> Result<Vec<ComplexityRow>> {
    if k_list.is_empty() {
        return Err(Error::parameter("k_list", "need at least one state count"));
    }
    k_list
        .iter()
        .map(|&k| {
            if k < 2 {
                return Err(Error::parameter("k_list", "state counts must be >= 2"));
            }
            let index = index_rule.index_for(k)?;
            let inputs = ChainBoundInputs {
                k,
                n: 1, // complexities do not depend on n
                r,
                p,
                index,
                delta,
                eps,
            };
            inputs.validate()?;
            let tau = tau_p_upper(p, k)?;
            let n1 = match expected_dev_rule {
                ExpectedDevRule::Explicit { value } => approach1_complexity(&inputs, value)?,
                ExpectedDevRule::Envelope => solve_envelope_fixed_point(&inputs),
            };
            let n2 = approach2_complexity(&inputs)?;
            let (n3, eta3) = match eta_mode {
                EtaMode::Optimize => approach3_complexity_optimized(&inputs, tau)?,
                EtaMode::Fixed { eta } => (approach3_complexity(&inputs, eta, tau)?, eta),
            };
            Ok(ComplexityRow {
                k,
                index,
                n1,
                n2,
                n3,
                eta3,
                ratio_2_3: n2 / n3,
                ratio_2_3_per_log_k: n2 / (n3 * (k as f64).ln()),
                ratio_2_3_per_k: n2 / (n3 * k as f64),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::FiniteMeasure;
    use approx::assert_abs_diff_eq;

    fn uniform_iid() -> MarkovChainModel {
        MarkovChainModel::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            FiniteMeasure::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap()
    }

    fn two_state() -> MarkovChainModel {
        MarkovChainModel::new(
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            FiniteMeasure::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn exact_tail_binomial_oracle() {
        // K=2 uniform i.i.d., n=4, p=1, eps=0.5: the tail event is the count
        // of state 0 falling in {0,1,3,4}, probability 1 - C(4,2)/16 = 0.625.
        let tail = exact_tail(&uniform_iid(), 4, 1.0, 0.5, false).unwrap();
        assert_abs_diff_eq!(tail, 0.625, epsilon = 1e-14);
    }

    #[test]
    fn exact_tail_extremes() {
        let chain = uniform_iid();
        assert_eq!(exact_tail(&chain, 4, 1.0, 0.0, false).unwrap(), 1.0);
        assert_eq!(exact_tail(&chain, 4, 1.0, 3.0, false).unwrap(), 0.0);
    }

    #[test]
    fn exact_tail_capacity() {
        let chain = uniform_iid();
        assert!(matches!(
            exact_tail(&chain, 64, 1.0, 0.5, false),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn mc_tail_matches_enumeration() {
        let chain = uniform_iid();
        let (estimate, half_width) = mc_tail(&chain, 4, 1.0, 0.5, 100_000, 0, false).unwrap();
        assert!(
            (estimate - 0.625).abs() <= 0.01,
            "estimate {estimate} half-width {half_width}"
        );
        assert!((estimate - 0.625).abs() <= 3.0 * half_width);
    }

    #[test]
    fn mc_tail_impossible_event() {
        let (estimate, _) = mc_tail(&uniform_iid(), 4, 1.0, 3.0, 1000, 0, false).unwrap();
        assert_eq!(estimate, 0.0);
    }

    #[test]
    fn mc_tail_seeds_agree_within_half_widths() {
        let chain = two_state();
        let (a, wa) = mc_tail(&chain, 30, 1.0, 0.2, 20_000, 1, false).unwrap();
        let (b, wb) = mc_tail(&chain, 30, 1.0, 0.2, 20_000, 2, false).unwrap();
        assert!((a - b).abs() <= wa + wb, "{a} vs {b}");
    }

    #[test]
    fn compare_bounds_dominates_exact_tail() {
        let chain = two_state();
        let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        for p in [1.0, 2.0] {
            let reports = compare_bounds(&chain, 8, p, &grid, 2000, 0).unwrap();
            for report in &reports {
                assert!(report.exact_flag);
                for bound in [report.bound1, report.bound2, report.bound3] {
                    if let Some(clamped) = bound.clamped() {
                        assert!(
                            report.empirical <= clamped,
                            "eps {} p {p}: empirical {} > bound {clamped}",
                            report.eps,
                            report.empirical
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn compare_bounds_stationary_start_uses_index_one() {
        let reports = compare_bounds(&two_state(), 6, 1.0, &[0.5], 2000, 0).unwrap();
        assert_eq!(reports[0].index, 1.0);
    }

    #[test]
    fn compare_bounds_nonstationary_start_lifts() {
        let chain = two_state()
            .with_initial(FiniteMeasure::new(vec![0.0, 1.0]).unwrap())
            .unwrap();
        let reports = compare_bounds(&chain, 6, 1.0, &[0.5], 2000, 0).unwrap();
        assert!(reports[0].index > 1.0);
    }

    #[test]
    fn compare_bounds_zero_eps_row() {
        let reports = compare_bounds(&two_state(), 6, 1.0, &[0.0], 2000, 0).unwrap();
        let report = &reports[0];
        assert_eq!(report.empirical, 1.0);
        assert_eq!(report.bound2.clamped(), Some(1.0));
        assert_eq!(report.bound3.clamped(), Some(1.0));
        // eps = 0 never clears the positive expected deviation
        assert_eq!(report.bound1, BoundValue::NotApplicable);
    }

    #[test]
    fn compare_bounds_rejects_degenerate_chain() {
        let chain = MarkovChainModel::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            FiniteMeasure::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        assert!(compare_bounds(&chain, 6, 1.0, &[0.5], 2000, 0).is_err());
    }

    #[test]
    fn complexity_table_log_factor_growth() {
        let rows = complexity_table(
            &[4, 16, 64, 256],
            1.0,
            0.1,
            0.05,
            0.5,
            IndexRule::PowerLaw { m: 1.0 },
            EtaMode::Optimize,
            ExpectedDevRule::Envelope,
        )
        .unwrap();
        for pair in rows.windows(2) {
            assert!(
                pair[1].ratio_2_3 > pair[0].ratio_2_3,
                "ratio not increasing: {} -> {}",
                pair[0].ratio_2_3,
                pair[1].ratio_2_3
            );
        }
        let scaled: Vec<f64> = rows.iter().map(|row| row.ratio_2_3_per_log_k).collect();
        let spread = scaled.iter().cloned().fold(0.0f64, f64::max)
            / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 5.0, "log-K ratio band too wide: {scaled:?}");
    }

    #[test]
    fn complexity_table_k_factor_growth() {
        let rows = complexity_table(
            &[4, 16, 64, 256],
            1.0,
            0.1,
            0.05,
            0.5,
            IndexRule::Exponential,
            EtaMode::Optimize,
            ExpectedDevRule::Explicit { value: 0.0 },
        )
        .unwrap();
        let scaled: Vec<f64> = rows.iter().map(|row| row.ratio_2_3_per_k).collect();
        let spread = scaled.iter().cloned().fold(0.0f64, f64::max)
            / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 5.0, "K ratio band too wide: {scaled:?}");
    }

    #[test]
    fn complexity_table_monotone_in_delta() {
        let base = complexity_table(
            &[4, 8],
            1.0,
            0.1,
            0.05,
            0.3,
            IndexRule::PowerLaw { m: 1.0 },
            EtaMode::Optimize,
            ExpectedDevRule::Explicit { value: 0.0 },
        )
        .unwrap();
        let tighter = complexity_table(
            &[4, 8],
            1.0,
            0.1,
            0.025,
            0.3,
            IndexRule::PowerLaw { m: 1.0 },
            EtaMode::Optimize,
            ExpectedDevRule::Explicit { value: 0.0 },
        )
        .unwrap();
        for (a, b) in base.iter().zip(&tighter) {
            assert!(b.n1.unwrap() > a.n1.unwrap());
            assert!(b.n2 > a.n2);
            assert!(b.n3 > a.n3);
        }
    }

    #[test]
    fn complexity_table_order_invariant() {
        let args = (
            1.0,
            0.1,
            0.05,
            0.5,
            IndexRule::PowerLaw { m: 1.0 },
            EtaMode::Optimize,
            ExpectedDevRule::Envelope,
        );
        let fwd = complexity_table(
            &[4, 16, 64],
            args.0,
            args.1,
            args.2,
            args.3,
            args.4,
            args.5,
            args.6,
        )
        .unwrap();
        let rev = complexity_table(
            &[64, 16, 4],
            args.0,
            args.1,
            args.2,
            args.3,
            args.4,
            args.5,
            args.6,
        )
        .unwrap();
        for row in &fwd {
            let other = rev.iter().find(|r| r.k == row.k).unwrap();
            assert_eq!(row.n2, other.n2);
            assert_eq!(row.n3, other.n3);
            assert_eq!(row.n1, other.n1);
        }
    }
}
