//! Finite ergodic Markov chains: stationary measure, Dobrushin coefficient,
//! seeded simulation and the plug-in occupation estimator.
//!
//! States are indexed `0..K`. A chain is the pair of a row-stochastic
//! transition matrix `P` and an initial measure `rho`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{self, lp_norm, FiniteMeasure};
use crate::rng::{substream, KahanSum};

const ROW_SUM_TOLERANCE: f64 = 1e-12;
const ROW_RENORMALIZE_LIMIT: f64 = 1e-9;

/// Exact enumeration is used instead of Monte Carlo below this path count.
pub const ENUMERATION_THRESHOLD: u128 = 4096;

/// 99% two-sided normal quantile, for half-widths.
pub(crate) const Z_99: f64 = 2.575_829_303_548_900_4;

/// Time-homogeneous finite Markov chain `(P, rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainModel {
    transition: Vec<Vec<f64>>,
    rho: FiniteMeasure,
    /// Per-row cumulative sums for inverse-CDF sampling.
    row_cumsum: Vec<Vec<f64>>,
    rho_cumsum: Vec<f64>,
}

/// JSON wire format for a chain: `{"K": 2, "P": [[..],[..]], "rho": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSpec {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

fn cumsum(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(row.len());
    for &x in row {
        acc += x;
        out.push(acc);
    }
    if let Some(last) = out.last_mut() {
        *last = last.max(1.0);
    }
    out
}

/// First index whose cumulative sum strictly exceeds `u`; ties toward the
/// lower index.
fn inverse_cdf(cum: &[f64], u: f64) -> usize {
    match cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
        // cum[i] == u: u < cum[i+1] region starts here, move past equal entries
        Ok(mut i) => {
            while i + 1 < cum.len() && cum[i] <= u {
                i += 1;
            }
            i
        }
        Err(i) => i.min(cum.len() - 1),
    }
}

impl MarkovChainModel {
    /// Validates row-stochasticity of `P` and the size of `rho`.
    pub fn new(transition: Vec<Vec<f64>>, rho: FiniteMeasure) -> Result<Self> {
        let k = transition.len();
        if k == 0 {
            return Err(Error::Model("transition matrix is empty".into()));
        }
        if rho.support_size() != k {
            return Err(Error::Dimension {
                left: rho.support_size(),
                right: k,
                context: "initial measure vs state count",
            });
        }
        let mut rows = Vec::with_capacity(k);
        for (i, row) in transition.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::Model(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::Model(format!(
                        "transition entry P[{i}][{j}] = {x} must be finite and >= 0"
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            let drift = (sum - 1.0).abs();
            if drift <= ROW_SUM_TOLERANCE {
                rows.push(row);
            } else if drift <= ROW_RENORMALIZE_LIMIT {
                rows.push(row.iter().map(|x| x / sum).collect());
            } else {
                return Err(Error::Model(format!(
                    "row {i} sums to {sum}; drift {drift:e} exceeds 1e-9"
                )));
            }
        }
        let row_cumsum = rows.iter().map(|r| cumsum(r)).collect();
        let rho_cumsum = cumsum(rho.weights());
        Ok(Self {
            transition: rows,
            rho,
            row_cumsum,
            rho_cumsum,
        })
    }

    pub fn from_spec(spec: &ChainSpec) -> Result<Self> {
        if spec.p.len() != spec.k {
            return Err(Error::Model(format!(
                "declared K = {} but P has {} rows",
                spec.k,
                spec.p.len()
            )));
        }
        Self::new(spec.p.clone(), FiniteMeasure::new(spec.rho.clone())?)
    }

    pub fn to_spec(&self) -> ChainSpec {
        ChainSpec {
            k: self.state_count(),
            p: self.transition.clone(),
            rho: self.rho.weights().to_vec(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial(&self) -> &FiniteMeasure {
        &self.rho
    }

    /// Same transition matrix, different initial measure.
    pub fn with_initial(&self, rho: FiniteMeasure) -> Result<Self> {
        Self::new(self.transition.clone(), rho)
    }

    /// Exact probability of a trajectory under `(P, rho)`.
    pub fn path_probability(&self, path: &[usize]) -> f64 {
        if path.is_empty() {
            return 1.0;
        }
        let mut prob = self.rho.weights()[path[0]];
        for w in path.windows(2) {
            prob *= self.transition[w[0]][w[1]];
        }
        prob
    }

    pub fn path_count(&self, n: u32) -> u128 {
        (self.state_count() as u128).saturating_pow(n)
    }
}

/// Calls `f` on every length-`n` trajectory over `k` states, in lexicographic
/// order (first coordinate most significant).
pub fn for_each_path(k: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; n];
    loop {
        f(&path);
        // odometer increment
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
        }
    }
}

/// Why a chain fails to be ergodic.
fn ergodicity_check(p: &[Vec<f64>]) -> Result<()> {
    let k = p.len();
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in 0..k {
                let edge = if forward { p[u][v] } else { p[v][u] };
                if edge > 0.0 && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    };
    if reach(true) != k || reach(false) != k {
        return Err(Error::Model(
            "chain is not ergodic: reducible (transition graph not strongly connected)".into(),
        ));
    }
    // Period = gcd over edges (u,v) of level[u] + 1 - level[v], with BFS levels.
    let mut level = vec![usize::MAX; k];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = 0;
    while let Some(u) = queue.pop_front() {
        for v in 0..k {
            if p[u][v] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period: u64 = 0;
    for u in 0..k {
        for v in 0..k {
            if p[u][v] > 0.0 {
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                period = gcd(period, diff);
            }
        }
    }
    if period != 1 {
        return Err(Error::Model(format!(
            "chain is not ergodic: periodic with period {period}"
        )));
    }
    Ok(())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Unique stationary measure π with πP = π.
///
/// Ergodicity is verified explicitly (strong connectivity plus aperiodicity).
/// The solve replaces one balance equation by the normalization constraint and
/// is cross-checked against 200 power-iteration steps; disagreement beyond
/// 1e-8 is an internal error.
pub fn stationary(chain: &MarkovChainModel) -> Result<FiniteMeasure> {
    let k = chain.state_count();
    ergodicity_check(&chain.transition)?;
    // Build (P^T - I) x = 0 with the last equation replaced by sum(x) = 1.
    let mut a = vec![vec![0.0f64; k + 1]; k];
    for (i, row) in a.iter_mut().enumerate().take(k - 1) {
        for (j, cell) in row.iter_mut().enumerate().take(k) {
            *cell = chain.transition[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[k - 1].fill(1.0);
    let solution = solve_dense(&mut a)
        .ok_or_else(|| Error::Internal("stationary solve: singular system".into()))?;
    let pi = FiniteMeasure::new(solution.iter().map(|&x| x.max(0.0)).collect())
        .map_err(|e| Error::Internal(format!("stationary solve produced invalid measure: {e}")))?;

    let mut power = vec![1.0 / k as f64; k];
    for _ in 0..200 {
        power = multiply_left(&power, &chain.transition);
    }
    let disagreement: f64 = power
        .iter()
        .zip(pi.weights())
        .map(|(a, b)| (a - b).abs())
        .sum();
    if disagreement > 1e-8 {
        return Err(Error::Internal(format!(
            "stationary solve and power iteration disagree by {disagreement:e}"
        )));
    }
    let next = multiply_left(pi.weights(), &chain.transition);
    let residual: f64 = next
        .iter()
        .zip(pi.weights())
        .map(|(a, b)| (a - b).abs())
        .sum();
    if residual > 1e-10 {
        return Err(Error::Internal(format!(
            "stationary residual {residual:e} exceeds 1e-10"
        )));
    }
    Ok(pi)
}

fn multiply_left(v: &[f64], p: &[Vec<f64>]) -> Vec<f64> {
    let k = v.len();
    let mut out = vec![0.0; k];
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for j in 0..k {
                out[j] += vi * p[i][j];
            }
        }
    }
    out
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
#[allow(clippy::needless_range_loop)] // index-heavy elimination reads clearer
fn solve_dense(a: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = a[row][col] / a[col][col];
                if factor != 0.0 {
                    for j in col..=n {
                        let sub = factor * a[col][j];
                        a[row][j] -= sub;
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Dobrushin contraction coefficient: max pairwise total variation between
/// rows of the transition matrix. Lies in [0,1]; 0 iff all rows coincide.
pub fn dobrushin(chain: &MarkovChainModel) -> f64 {
    let k = chain.state_count();
    let mut r = 0.0f64;
    for i in 0..k {
        for j in i + 1..k {
            r = r.max(measures::tv_distance_raw(
                &chain.transition[i],
                &chain.transition[j],
            ));
        }
    }
    r.min(1.0)
}

/// Simulates a trajectory of length `n`; deterministic given the seed.
///
/// Sampling is inverse-CDF against cumulative row sums with ties broken
/// toward the lower index.
pub fn simulate(chain: &MarkovChainModel, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 1 {
        return Err(Error::parameter("n", "trajectory length must be >= 1"));
    }
    let mut rng = substream(seed, &[]);
    Ok(simulate_with_rng(chain, n, &mut rng))
}

pub(crate) fn simulate_with_rng(
    chain: &MarkovChainModel,
    n: usize,
    rng: &mut impl rand::Rng,
) -> Vec<usize> {
    let mut path = Vec::with_capacity(n);
    let mut state = inverse_cdf(&chain.rho_cumsum, rng.gen::<f64>());
    path.push(state);
    for _ in 1..n {
        state = inverse_cdf(&chain.row_cumsum[state], rng.gen::<f64>());
        path.push(state);
    }
    path
}

/// Plug-in estimator π̂ᵢ = (1/n)·#{k : X_k = i}: exact occupation frequencies.
pub fn plugin_estimator(traj: &[usize], k: usize) -> Result<FiniteMeasure> {
    if traj.is_empty() {
        return Err(Error::parameter("traj", "trajectory must be non-empty"));
    }
    let mut counts = vec![0u64; k];
    for &state in traj {
        if state >= k {
            return Err(Error::Data(format!(
                "state {state} out of range for K = {k}"
            )));
        }
        counts[state] += 1;
    }
    let n = traj.len() as f64;
    FiniteMeasure::new(counts.iter().map(|&c| c as f64 / n).collect())
}

/// Lipschitz constant 2^{1/p}/n of the plug-in map under the path Hamming
/// metric; tends to 1/n as p → ∞.
pub fn plugin_lipschitz(p: f64, n: usize) -> Result<f64> {
    measures::check_p(p)?;
    if n < 1 {
        return Err(Error::parameter("n", "sample length must be >= 1"));
    }
    let exponent = if p.is_infinite() { 0.0 } else { 1.0 / p };
    Ok(2.0f64.powf(exponent) / n as f64)
}

/// Occupation deviations of the stationary chain.
fn deviation_of_path(path: &[usize], pi: &[f64], p: f64) -> f64 {
    let mut counts = vec![0.0f64; pi.len()];
    for &s in path {
        counts[s] += 1.0;
    }
    let n = path.len() as f64;
    let diff: Vec<f64> = counts.iter().zip(pi).map(|(c, &q)| c / n - q).collect();
    lp_norm(&diff, p).expect("p validated by caller")
}

/// Mean deviation E_π[‖π̂ − π‖_p] of the stationary chain, with a 99%
/// normal-approximation half-width.
///
/// Below `K^n <= 4096` the expectation is computed exactly by enumeration and
/// the half-width is 0; otherwise `trials` independent trajectories are
/// simulated with per-trial substreams of `seed`.
pub fn expected_deviation(
    chain: &MarkovChainModel,
    n: usize,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    measures::check_p(p)?;
    if n < 1 {
        return Err(Error::parameter("n", "sample length must be >= 1"));
    }
    if trials < 100 {
        return Err(Error::parameter("trials", "need at least 100 trials"));
    }
    let pi = stationary(chain)?;
    let stationary_chain = chain.with_initial(pi.clone())?;
    let k = chain.state_count();

    if stationary_chain.path_count(n as u32) <= ENUMERATION_THRESHOLD {
        let mut acc = KahanSum::default();
        for_each_path(k, n, |path| {
            let prob = stationary_chain.path_probability(path);
            if prob > 0.0 {
                acc.add(prob * deviation_of_path(path, pi.weights(), p));
            }
        });
        return Ok((acc.value(), 0.0));
    }

    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[t as u64]);
            let path = simulate_with_rng(&stationary_chain, n, &mut rng);
            deviation_of_path(&path, pi.weights(), p)
        })
        .collect();
    let mut sum = KahanSum::default();
    for &v in &values {
        sum.add(v);
    }
    let mean = sum.value() / trials as f64;
    let mut sq = KahanSum::default();
    for &v in &values {
        sq.add((v - mean) * (v - mean));
    }
    let variance = sq.value() / (trials as f64 - 1.0);
    let half_width = Z_99 * (variance / trials as f64).sqrt();
    Ok((mean, half_width))
}
