//! Exact L¹-Wasserstein distance on finite metric spaces, plus brute-force
//! verification of transportation cost inequalities W1(μ,ν) ≤ √(2σ²·D(μ‖ν)).
//!
//! W1 is solved as an exact minimum-cost transportation problem by successive
//! shortest augmenting paths with node potentials. Mass on the diagonal is
//! matched first; for a metric cost matrix this is always optimal and makes
//! the μ = ν case return the diagonal coupling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};
use crate::markov::{for_each_path, MarkovChainModel};
use crate::measures::{kl_divergence, FiniteMeasure};
use crate::rng::substream;

/// Largest point count for enumerated sequence spaces and path laws.
pub const SPACE_CAP: u128 = 100_000;

const MARGINAL_TOLERANCE: f64 = 1e-9;
/// KL below this is treated as μ = ν and the TCI ratio is skipped.
const KL_FLOOR: f64 = 1e-14;
/// A TCI ratio counts as a violation above 1 + this slack.
const RATIO_SLACK: f64 = 1e-9;

/// Point set with a symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    dist: Vec<Vec<f64>>,
}

/// Whether to verify the triangle inequality at construction.
///
/// Validation is O(size³); skipping it is an explicit opt-in for large spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangleCheck {
    Validate,
    Skip,
}

impl FiniteMetricSpace {
    /// Validates symmetry, zero diagonal, non-negativity and (unless skipped)
    /// the triangle inequality within 1e-9.
    pub fn new(dist: Vec<Vec<f64>>, check: TriangleCheck) -> Result<Self> {
        let n = dist.len();
        if n == 0 {
            return Err(Error::parameter("dist", "metric space must be non-empty"));
        }
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    left: row.len(),
                    right: n,
                    context: "distance matrix row",
                });
            }
            if row[i] != 0.0 {
                return Err(Error::parameter(
                    "dist",
                    format!("diagonal entry d[{i}][{i}] = {} must be 0", row[i]),
                ));
            }
            for (j, &d) in row.iter().enumerate() {
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::parameter(
                        "dist",
                        format!("d[{i}][{j}] = {d} must be finite and >= 0"),
                    ));
                }
                if (d - dist[j][i]).abs() > 1e-12 {
                    return Err(Error::parameter(
                        "dist",
                        format!(
                            "asymmetric: d[{i}][{j}] = {d}, d[{j}][{i}] = {}",
                            dist[j][i]
                        ),
                    ));
                }
            }
        }
        if check == TriangleCheck::Validate {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        if dist[i][j] > dist[i][l] + dist[l][j] + 1e-9 {
                            return Err(Error::parameter(
                                "dist",
                                format!("triangle inequality fails at ({i},{j}) via {l}"),
                            ));
                        }
                    }
                }
            }
        }
        Ok(Self { dist })
    }

    /// Discrete metric 1{x≠y} on `n` points.
    pub fn discrete(n: usize) -> Result<Self> {
        let dist = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::new(dist, TriangleCheck::Skip)
    }

    pub fn size(&self) -> usize {
        self.dist.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }
}

/// Joint distribution coupling two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    joint: Vec<Vec<f64>>,
}

impl Coupling {
    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }

    /// Checks row/column marginals and total mass within 1e-9.
    pub fn validate(&self, mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<()> {
        let n = self.joint.len();
        ensure_same_len(n, mu.support_size(), "coupling rows")?;
        ensure_same_len(n, nu.support_size(), "coupling columns")?;
        let mut total = 0.0;
        let mut col_sums = vec![0.0f64; n];
        for (i, row) in self.joint.iter().enumerate() {
            let row_sum: f64 = row.iter().sum();
            if (row_sum - mu.weights()[i]).abs() > MARGINAL_TOLERANCE {
                return Err(Error::Internal(format!(
                    "coupling row {i} sums to {row_sum}, expected {}",
                    mu.weights()[i]
                )));
            }
            total += row_sum;
            for (j, &x) in row.iter().enumerate() {
                if x < -MARGINAL_TOLERANCE {
                    return Err(Error::Internal(format!(
                        "negative coupling mass at ({i},{j})"
                    )));
                }
                col_sums[j] += x;
            }
        }
        for (j, &s) in col_sums.iter().enumerate() {
            if (s - nu.weights()[j]).abs() > MARGINAL_TOLERANCE {
                return Err(Error::Internal(format!(
                    "coupling column {j} sums to {s}, expected {}",
                    nu.weights()[j]
                )));
            }
        }
        if (total - 1.0).abs() > MARGINAL_TOLERANCE {
            return Err(Error::Internal(format!("coupling total mass {total} != 1")));
        }
        Ok(())
    }
}

/// Exact W1(μ,ν) under the given ground metric, with one optimal coupling.
///
/// The objective is within 1e-9 of the true LP optimum; when several optimal
/// couplings exist an arbitrary one is returned.
pub fn w1_exact(
    mu: &FiniteMeasure,
    nu: &FiniteMeasure,
    space: &FiniteMetricSpace,
) -> Result<(f64, Coupling)> {
    let n = space.size();
    ensure_same_len(mu.support_size(), n, "mu vs metric space")?;
    ensure_same_len(nu.support_size(), n, "nu vs metric space")?;

    let mut joint = vec![vec![0.0f64; n]; n];
    let mut supply: Vec<f64> = mu.weights().to_vec();
    let mut demand: Vec<f64> = nu.weights().to_vec();

    // Diagonal pre-matching: shipping i -> i is free and, by the triangle
    // inequality, never suboptimal.
    for i in 0..n {
        let mass = supply[i].min(demand[i]);
        joint[i][i] = mass;
        supply[i] -= mass;
        demand[i] -= mass;
    }

    min_cost_assign(&mut joint, &mut supply, &mut demand, space)?;

    let mut cost = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &mass) in row.iter().enumerate() {
            if mass > 0.0 {
                cost += mass * space.distance(i, j);
            }
        }
    }
    Ok((cost, Coupling { joint }))
}

/// Successive shortest augmenting paths with potentials on the bipartite
/// transportation graph. Each augmentation saturates a source or a sink, so
/// at most 2n iterations run; reduced costs stay non-negative throughout.
fn min_cost_assign(
    joint: &mut [Vec<f64>],
    supply: &mut [f64],
    demand: &mut [f64],
    space: &FiniteMetricSpace,
) -> Result<()> {
    let n = space.size();
    const MASS_EPS: f64 = 1e-15;
    let mut pot_src = vec![0.0f64; n];
    let mut pot_dst = vec![0.0f64; n];
    let mut iterations = 0usize;

    loop {
        iterations += 1;
        if iterations > 10 * n * n + 100 {
            return Err(Error::Internal(format!(
                "transport solver did not converge after {iterations} augmentations \
                 (remaining supply {:e})",
                supply.iter().sum::<f64>()
            )));
        }
        let sources: Vec<usize> = (0..n).filter(|&i| supply[i] > MASS_EPS).collect();
        if sources.is_empty() {
            return Ok(());
        }

        // Dijkstra over the residual graph from all unsaturated sources.
        let mut dist_src = vec![f64::INFINITY; n];
        let mut dist_dst = vec![f64::INFINITY; n];
        let mut prev_dst = vec![usize::MAX; n]; // source feeding this sink
        let mut prev_src = vec![usize::MAX; n]; // sink feeding this source (backward edge)
        let mut done_src = vec![false; n];
        let mut done_dst = vec![false; n];
        for &s in &sources {
            dist_src[s] = 0.0;
        }

        loop {
            // pick the closest unfinished node on either side
            let mut best = f64::INFINITY;
            let mut pick: Option<(bool, usize)> = None;
            for i in 0..n {
                if !done_src[i] && dist_src[i] < best {
                    best = dist_src[i];
                    pick = Some((true, i));
                }
                if !done_dst[i] && dist_dst[i] < best {
                    best = dist_dst[i];
                    pick = Some((false, i));
                }
            }
            let Some((is_source, u)) = pick else { break };
            if is_source {
                done_src[u] = true;
                for j in 0..n {
                    let reduced = space.distance(u, j) + pot_src[u] - pot_dst[j];
                    let cand = dist_src[u] + reduced.max(0.0);
                    if cand < dist_dst[j] {
                        dist_dst[j] = cand;
                        prev_dst[j] = u;
                    }
                }
            } else {
                done_dst[u] = true;
                for i in 0..n {
                    if joint[i][u] > MASS_EPS {
                        let reduced = -space.distance(i, u) - pot_src[i] + pot_dst[u];
                        let cand = dist_dst[u] + reduced.max(0.0);
                        if cand < dist_src[i] {
                            dist_src[i] = cand;
                            prev_src[i] = u;
                        }
                    }
                }
            }
        }

        let target = (0..n)
            .filter(|&j| demand[j] > MASS_EPS && dist_dst[j].is_finite())
            .min_by(|&a, &b| dist_dst[a].total_cmp(&dist_dst[b]))
            .ok_or_else(|| {
                Error::Internal("transport solver: no augmenting path to remaining demand".into())
            })?;

        // Trace the path back and find its bottleneck.
        let mut path = Vec::new(); // (source, sink) forward edges in order
        let mut sink = target;
        let mut bottleneck = demand[target];
        loop {
            let src = prev_dst[sink];
            path.push((src, sink));
            let back = prev_src[src];
            if back == usize::MAX {
                bottleneck = bottleneck.min(supply[src]);
                break;
            }
            bottleneck = bottleneck.min(joint[src][back]);
            sink = back;
        }

        let (first_src, _) = *path.last().unwrap();
        supply[first_src] -= bottleneck;
        demand[target] -= bottleneck;
        for idx in 0..path.len() {
            let (src, dst) = path[idx];
            joint[src][dst] += bottleneck;
            if idx + 1 < path.len() {
                // backward edge between this source and the previous sink
                joint[src][path[idx + 1].1] -= bottleneck;
            }
        }

        for i in 0..n {
            if dist_src[i].is_finite() {
                pot_src[i] += dist_src[i];
            }
        }
        for j in 0..n {
            if dist_dst[j].is_finite() {
                pot_dst[j] += dist_dst[j];
            }
        }
    }
}

/// Hamming sequence space: all `base_size^seq_len` sequences, lexicographic
/// indexing, unnormalized Hamming distance.
pub fn hamming_space(base_size: usize, seq_len: usize) -> Result<FiniteMetricSpace> {
    if base_size < 1 || seq_len < 1 {
        return Err(Error::parameter(
            "hamming_space",
            "base_size and seq_len must be >= 1",
        ));
    }
    let points = (base_size as u128).saturating_pow(seq_len as u32);
    if points > SPACE_CAP {
        return Err(Error::Capacity {
            requested: points,
            cap: SPACE_CAP,
            context: "hamming_space point count",
        });
    }
    let points = points as usize;
    let digits = |mut idx: usize| -> Vec<usize> {
        let mut seq = vec![0usize; seq_len];
        for slot in seq.iter_mut().rev() {
            *slot = idx % base_size;
            idx /= base_size;
        }
        seq
    };
    let seqs: Vec<Vec<usize>> = (0..points).map(digits).collect();
    let mut dist = vec![vec![0.0f64; points]; points];
    for i in 0..points {
        for j in i + 1..points {
            let d = seqs[i].iter().zip(&seqs[j]).filter(|(a, b)| a != b).count() as f64;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    FiniteMetricSpace::new(dist, TriangleCheck::Skip)
}

/// Exact law of length-`n` trajectories under `(P, rho)`, indexed
/// lexicographically to match [`hamming_space`].
pub fn chain_path_law(chain: &MarkovChainModel, n: usize) -> Result<FiniteMeasure> {
    if n < 1 {
        return Err(Error::parameter("n", "path length must be >= 1"));
    }
    let count = chain.path_count(n as u32);
    if count > SPACE_CAP {
        return Err(Error::Capacity {
            requested: count,
            cap: SPACE_CAP,
            context: "chain_path_law path count",
        });
    }
    let mut weights = Vec::with_capacity(count as usize);
    for_each_path(chain.state_count(), n, |path| {
        weights.push(chain.path_probability(path));
    });
    FiniteMeasure::new(weights)
}

/// One sampled (or deterministic) measure that broke the TCI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TciViolation {
    pub mu: Vec<f64>,
    pub ratio: f64,
}

/// Outcome of a brute-force TCI verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TciReport {
    pub max_ratio: f64,
    pub num_violations: usize,
    /// Measure achieving `max_ratio`; None if every sampled ratio was skipped.
    pub worst_mu: Option<Vec<f64>>,
    pub sigma2: f64,
    pub seed: u64,
    pub num_samples: usize,
    /// Sampled measures whose KL fell below the 1e-14 floor (μ ≈ ν).
    pub skipped: usize,
    pub violations: Vec<TciViolation>,
}

/// Verifies W1(μ,ν) ≤ √(2σ²·D(μ‖ν)) over random and extreme measures μ.
///
/// Draws `num_samples` flat-Dirichlet measures plus a deterministic battery of
/// simplex vertices and edge midpoints (TCI violations, if any, concentrate
/// near the boundary). Reports the max ratio W1/√(2σ²D) and any ratio
/// exceeding 1 + 1e-9.
pub fn tci_check(
    nu: &FiniteMeasure,
    space: &FiniteMetricSpace,
    sigma2: f64,
    num_samples: usize,
    seed: u64,
) -> Result<TciReport> {
    ensure_same_len(nu.support_size(), space.size(), "nu vs metric space")?;
    if !nu.is_strictly_positive() {
        return Err(Error::Precondition(
            "tci_check requires a strictly positive reference measure".into(),
        ));
    }
    if sigma2 <= 0.0 {
        return Err(Error::parameter("sigma2", "must be > 0"));
    }
    let n = space.size();

    let mut battery: Vec<FiniteMeasure> = Vec::new();
    for i in 0..n {
        battery.push(FiniteMeasure::point_mass(i, n)?);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut w = vec![0.0; n];
            w[i] = 0.5;
            w[j] = 0.5;
            battery.push(FiniteMeasure::new(w)?);
        }
    }

    let sampled: Vec<FiniteMeasure> = (0..num_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, &[s as u64]);
            // flat Dirichlet via normalized Exp(1) draws
            let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= sum);
            FiniteMeasure::new(w)
        })
        .collect::<Result<_>>()?;

    let mut max_ratio = 0.0f64;
    let mut worst_mu = None;
    let mut skipped = 0usize;
    let mut violations = Vec::new();
    for mu in battery.iter().chain(&sampled) {
        let divergence = kl_divergence(mu, nu)?;
        if divergence < KL_FLOOR {
            skipped += 1;
            continue;
        }
        let (w1, _) = w1_exact(mu, nu, space)?;
        let ratio = w1 / (2.0 * sigma2 * divergence).sqrt();
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_mu = Some(mu.weights().to_vec());
        }
        if ratio > 1.0 + RATIO_SLACK {
            violations.push(TciViolation {
                mu: mu.weights().to_vec(),
                ratio,
            });
        }
    }
    Ok(TciReport {
        max_ratio,
        num_violations: violations.len(),
        worst_mu,
        sigma2,
        seed,
        num_samples,
        skipped,
        violations,
    })
}
