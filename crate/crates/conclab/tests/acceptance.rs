//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`) and enforcing its runtime
//! budget.

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};

use conclab::bounds::{
    approach3_bound, covering_bound, gaussian_bound, marton_sigma2, mgf_check, theorem1_bound,
    ChainBoundInputs, ConcentrationInputs,
};
use conclab::experiments::{
    compare_bounds, complexity_table, exact_tail, mc_tail, EtaMode, ExpectedDevRule, IndexRule,
};
use conclab::markov::{dobrushin, MarkovChainModel};
use conclab::measures::{tv_distance, FiniteMeasure};
use conclab::transport::{
    chain_path_law, hamming_space, tci_check, w1_exact, FiniteMetricSpace, TriangleCheck,
};

fn criterion(label: &str, budget: Duration, body: impl FnOnce() + UnwindSafe) {
    let start = Instant::now();
    let outcome = catch_unwind(body);
    let elapsed = start.elapsed();
    let status = if outcome.is_ok() && elapsed <= budget {
        "PASS"
    } else {
        "FAIL"
    };
    println!("acceptance {label}: {status} ({elapsed:.2?}, budget {budget:.0?})");
    if let Err(payload) = outcome {
        resume_unwind(payload);
    }
    assert!(
        elapsed <= budget,
        "criterion {label} exceeded its {budget:?} budget ({elapsed:?})"
    );
}

fn uniform_iid_chain() -> MarkovChainModel {
    MarkovChainModel::new(
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        FiniteMeasure::uniform(2).unwrap(),
    )
    .unwrap()
}

/// Two-state chain with Dobrushin coefficient 0.7, started at its
/// stationary measure (2/3, 1/3).
fn lazy_two_state_stationary() -> MarkovChainModel {
    MarkovChainModel::new(
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        FiniteMeasure::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap(),
    )
    .unwrap()
}

#[test]
fn criterion_1_exact_tail_oracle() {
    criterion("1 exact-tail oracle", Duration::from_secs(5), || {
        let chain = uniform_iid_chain();
        // Binomial count j of 4 fair draws: the l1 deviation 2|j/4 - 1/2|
        // reaches 0.5 unless j = 2, so the tail is 1 - C(4,2)/16 = 0.625.
        let tail = exact_tail(&chain, 4, 1.0, 0.5, false).unwrap();
        assert_eq!(tail, 0.625);
        let (estimate, _hw) = mc_tail(&chain, 4, 1.0, 0.5, 100_000, 0, false).unwrap();
        assert!(
            (estimate - 0.625).abs() <= 0.01,
            "Monte Carlo estimate {estimate} not within 0.01 of 0.625"
        );
    });
}

#[test]
fn criterion_2_bound_validity() {
    criterion("2 bound validity", Duration::from_secs(30), || {
        let chain = lazy_two_state_stationary();
        assert!((dobrushin(&chain) - 0.7).abs() < 1e-12);
        let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        for n in [8usize, 10] {
            for p in [1.0, 2.0] {
                let reports = compare_bounds(&chain, n, p, &grid, 10_000, 0).unwrap();
                for report in &reports {
                    assert!(report.exact_flag, "expected exact enumeration");
                    assert_eq!(report.half_width, 0.0);
                    for (name, bound) in [
                        ("bound1", &report.bound1),
                        ("bound2", &report.bound2),
                        ("bound3", &report.bound3),
                    ] {
                        if let Some(clamped) = bound.clamped() {
                            assert!(
                                report.empirical <= clamped,
                                "{name} violated at n={n} p={p} eps={}: \
                                 empirical {} > bound {clamped}",
                                report.eps,
                                report.empirical
                            );
                        }
                    }
                }
            }
        }
    });
}

/// Min-cost perfect matching of unit masses by bitmask DP: an exact,
/// independent transport oracle for measures with denominator-`units`
/// rational weights.
fn matching_w1(mu_counts: &[u32], nu_counts: &[u32], space: &FiniteMetricSpace) -> f64 {
    let expand = |counts: &[u32]| {
        counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| (0..c).map(move |_| i))
            .collect::<Vec<usize>>()
    };
    let mu_units = expand(mu_counts);
    let nu_units = expand(nu_counts);
    assert_eq!(mu_units.len(), nu_units.len());
    let units = mu_units.len();
    let full = 1usize << units;
    let mut dp = vec![f64::INFINITY; full];
    dp[0] = 0.0;
    for mask in 0..full - 1 {
        if !dp[mask].is_finite() {
            continue;
        }
        let i = mask.count_ones() as usize;
        for (j, &nu_point) in nu_units.iter().enumerate() {
            if mask & (1 << j) == 0 {
                let next = mask | (1 << j);
                let cost = dp[mask] + space.distance(mu_units[i], nu_point);
                if cost < dp[next] {
                    dp[next] = cost;
                }
            }
        }
    }
    dp[full - 1] / units as f64
}

#[test]
fn criterion_3_w1_equals_tv_and_matching_oracle() {
    criterion("3 W1 oracles", Duration::from_secs(10), || {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let k = rng.gen_range(2..=8);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let total: f64 = w.iter().sum();
                FiniteMeasure::new(w.iter().map(|x| x / total).collect()).unwrap()
            };
            let mu = draw(&mut rng);
            let nu = draw(&mut rng);
            let space = FiniteMetricSpace::discrete(k).unwrap();
            let (w1, _) = w1_exact(&mu, &nu, &space).unwrap();
            let tv = tv_distance(&mu, &nu).unwrap();
            assert!((w1 - tv).abs() <= 1e-9, "w1 {w1} vs tv {tv} on {k} points");
        }

        // Rational-weight instances on random planar metrics, checked
        // against the unit-mass matching oracle.
        const UNITS: u32 = 12;
        for _ in 0..20 {
            let k = rng.gen_range(2..=5);
            let points: Vec<(f64, f64)> = (0..k)
                .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
                .collect();
            let dist: Vec<Vec<f64>> = points
                .iter()
                .map(|a| {
                    points
                        .iter()
                        .map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                        .collect()
                })
                .collect();
            let space = FiniteMetricSpace::new(dist, TriangleCheck::Validate).unwrap();
            let compose = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut counts = vec![0u32; k];
                for _ in 0..UNITS {
                    counts[rng.gen_range(0..k)] += 1;
                }
                counts
            };
            let mu_counts = compose(&mut rng);
            let nu_counts = compose(&mut rng);
            let to_measure = |counts: &[u32]| {
                FiniteMeasure::new(counts.iter().map(|&c| c as f64 / UNITS as f64).collect())
                    .unwrap()
            };
            let (w1, _) =
                w1_exact(&to_measure(&mu_counts), &to_measure(&nu_counts), &space).unwrap();
            let oracle = matching_w1(&mu_counts, &nu_counts, &space);
            assert!(
                (w1 - oracle).abs() <= 1e-9,
                "w1 {w1} vs matching oracle {oracle} on {k} points"
            );
        }
    });
}

#[test]
fn criterion_4_tci_on_path_space() {
    criterion("4 TCI verification", Duration::from_secs(10), || {
        let chain = lazy_two_state_stationary();
        let n = 3;
        let r = dobrushin(&chain);
        let sigma2 = marton_sigma2(n, r).unwrap();
        let nu = chain_path_law(&chain, n).unwrap();
        let space = hamming_space(2, n).unwrap();
        let report = tci_check(&nu, &space, sigma2, 1000, 0).unwrap();
        assert_eq!(
            report.num_violations, 0,
            "violations: {:?}",
            report.violations
        );
        assert!(
            report.max_ratio <= 1.0 + 1e-9,
            "max ratio {} exceeds 1",
            report.max_ratio
        );
    });
}

#[test]
fn criterion_5_mgf_check() {
    criterion("5 MGF check", Duration::from_secs(5), || {
        let chain = uniform_iid_chain();
        let lambdas = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        for p in [1.0, 2.0] {
            for h in [vec![1.0, 0.0], vec![1.0, 1.0]] {
                let report = mgf_check(&chain, 4, p, &h, &lambdas, 1000, 0).unwrap();
                assert!(report.exact, "16-path instance must enumerate exactly");
                assert_eq!(
                    report.num_violations, 0,
                    "violations at p={p} h={h:?}: {:?}",
                    report.points
                );
            }
        }
    });
}

#[test]
fn criterion_6_complexity_scaling() {
    criterion("6 complexity scaling", Duration::from_secs(1), || {
        let k_list = [4usize, 16, 64, 256];
        let band = |values: &[f64]| {
            let max = values.iter().cloned().fold(f64::MIN, f64::max);
            let min = values.iter().cloned().fold(f64::MAX, f64::min);
            max / min
        };

        // index = sqrt(K): the n2/n3 advantage grows like log K.
        let rows = complexity_table(
            &k_list,
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
                "n2/n3 not strictly increasing: {} then {}",
                pair[0].ratio_2_3,
                pair[1].ratio_2_3
            );
        }
        let normalized: Vec<f64> = rows.iter().map(|row| row.ratio_2_3_per_log_k).collect();
        assert!(
            band(&normalized) <= 5.0,
            "n2/(n3 ln K) spread {normalized:?} exceeds factor 5"
        );

        // index = e^{K/2}: the advantage grows like K itself.
        let rows = complexity_table(
            &k_list,
            1.0,
            0.1,
            0.05,
            0.5,
            IndexRule::Exponential,
            EtaMode::Optimize,
            ExpectedDevRule::Envelope,
        )
        .unwrap();
        let normalized: Vec<f64> = rows.iter().map(|row| row.ratio_2_3_per_k).collect();
        assert!(
            band(&normalized) <= 5.0,
            "n2/(n3 K) spread {normalized:?} exceeds factor 5"
        );
    });
}

#[test]
fn criterion_7_internal_consistency() {
    criterion("7 internal consistency", Duration::from_secs(30), || {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // The headline bound is exactly the min of its two branches.
        for _ in 0..10_000 {
            let inputs = ConcentrationInputs {
                k: rng.gen_range(1..=32),
                sigma2: 0.01 + rng.gen::<f64>() * 10.0,
                lip: 0.01 + rng.gen::<f64>() * 3.0,
                tau_p: 0.5 + rng.gen::<f64>() * 2.0,
                eps: 0.01 + rng.gen::<f64>() * 2.0,
                eta: 0.01 + rng.gen::<f64>() * 0.99,
            };
            let result = theorem1_bound(&inputs, false).unwrap();
            // Branches evaluated at the effective threshold eps / tau_p.
            let scaled = ConcentrationInputs {
                tau_p: 1.0,
                eps: inputs.eps / inputs.tau_p,
                ..inputs
            };
            let covering = covering_bound(&scaled).unwrap();
            let gaussian = gaussian_bound(&scaled).unwrap();
            assert_eq!(result.raw, covering.min(gaussian));
        }

        // The unit-index lifted tail of approach 3 is the square root of the
        // covering branch under the plug-in substitutions.
        for _ in 0..1000 {
            let c = ChainBoundInputs {
                k: rng.gen_range(1..8),
                n: rng.gen_range(1..150),
                r: rng.gen::<f64>() * 0.9,
                p: 1.0 + rng.gen::<f64>() * 3.0,
                index: 1.0,
                delta: 0.05,
                eps: 0.01 + rng.gen::<f64>() * 0.7,
            };
            let eta = 0.05 + rng.gen::<f64>() * 0.95;
            let tau = 0.7 + rng.gen::<f64>();
            let lifted = approach3_bound(&c, eta, tau).unwrap().raw().unwrap();
            let covering = covering_bound(&ConcentrationInputs {
                k: c.k,
                sigma2: marton_sigma2(c.n, c.r).unwrap(),
                lip: 2.0f64.sqrt() / c.n as f64,
                tau_p: 1.0,
                eps: c.eps / tau,
                eta,
            })
            .unwrap();
            let (log_lifted, log_cov) = (lifted.ln(), covering.ln());
            assert!(
                log_lifted.is_finite() && log_cov.is_finite(),
                "instance escaped the finite range: {c:?}"
            );
            let tolerance = 1e-12 * log_cov.abs().max(1.0);
            assert!(
                (log_lifted - 0.5 * log_cov).abs() <= tolerance,
                "log lifted {log_lifted} vs half log covering {}",
                0.5 * log_cov
            );
        }
    });
}

#[test]
fn criterion_8_deterministic_csv() {
    criterion("8 deterministic CSV", Duration::from_secs(60), || {
        let dir = tempfile::tempdir().unwrap();
        let chain_path = dir.path().join("chain.json");
        std::fs::write(
            &chain_path,
            r#"{"K":2,"P":[[0.9,0.1],[0.2,0.8]],"rho":[0.25,0.75]}"#,
        )
        .unwrap();

        let run = |args: &[&str], out: &std::path::Path| {
            let output = Command::new(env!("CARGO_BIN_EXE_conclab"))
                .args(args)
                .arg("--csv")
                .arg(out)
                .output()
                .unwrap();
            assert!(
                output.status.success(),
                "run {args:?} failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
            std::fs::read(out).unwrap()
        };

        let chain = chain_path.to_str().unwrap();
        let compare_args = [
            "compare",
            "--chain",
            chain,
            "--n",
            "6",
            "--p",
            "1",
            "--eps-grid",
            "0.1:0.9:0.2",
            "--trials",
            "2000",
            "--seed",
            "42",
        ];
        let first = run(&compare_args, &dir.path().join("a.csv"));
        let second = run(&compare_args, &dir.path().join("b.csv"));
        assert_eq!(first, second, "compare CSV output is not byte-identical");
        assert!(!first.is_empty());

        let complexity_args = [
            "complexity",
            "--K-list",
            "4,16,64",
            "--p",
            "1",
            "--eps",
            "0.1",
            "--delta",
            "0.05",
            "--r",
            "0.5",
            "--index-rule",
            "power:1",
        ];
        let first = run(&complexity_args, &dir.path().join("c.csv"));
        let second = run(&complexity_args, &dir.path().join("d.csv"));
        assert_eq!(first, second, "complexity CSV output is not byte-identical");
    });
}
