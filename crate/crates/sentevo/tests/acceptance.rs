//! Release gate: every criterion below must hold before shipping. Each test
//! prints one `[acceptance] <name>: PASS|FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! Expected values are computed by independent oracle implementations local
//! to this file, never by the code under test.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentevo::evolution::{
    evaluate_chromosome, grid_oracle, run, Fitness, GaConfig, GaOutcome,
};
use sentevo::market_data::{
    align, normalize, parse_price_csv, parse_sentiment_csv, AlignedAssetSeries, DateRange,
};
use sentevo::metrics::{
    cum_return, downside_dev, hist_es, hist_var, max_drawdown, semi_dev, std_dev, MetricsError,
    ReturnSeries,
};
use sentevo::pipeline::{cmd_synth, derive_seed, SynthManifest};
use sentevo::portfolio::{estimate_inputs, frontier, solve_markowitz, Panel, QpProblem};
use sentevo::strategy::{
    decode, repair, Chromosome, SentimentField, VALID_FLAG_SETS,
};
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

fn criterion<F: FnOnce()>(name: &str, body: F) {
    match std::panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("[acceptance] {name}: PASS"),
        Err(e) => {
            println!("[acceptance] {name}: FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

// ---------------------------------------------------------------------------
// shared synthetic suite: 10 planted assets, 250 days, edge 0.003

const SUITE_SEED: u64 = 424242;
const SUITE_ASSETS: usize = 10;
const SUITE_DAYS: usize = 250;
const SUITE_EDGE: f64 = 0.003;

struct Suite {
    manifest: SynthManifest,
    series: Vec<AlignedAssetSeries>,
    ga: Vec<GaOutcome>,
    build_time: Duration,
}

static SUITE: OnceLock<Suite> = OnceLock::new();

fn suite() -> &'static Suite {
    SUITE.get_or_init(|| {
        let started = Instant::now();
        let dir = tempfile::tempdir().expect("tempdir");
        cmd_synth(SUITE_SEED, SUITE_ASSETS, SUITE_DAYS, SUITE_EDGE, dir.path())
            .expect("synth suite");
        let manifest: SynthManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).expect("manifest"),
        )
        .expect("manifest json");

        let window: DateRange = "2019-01-01:2021-12-31".parse().expect("window");
        let mut series = Vec::with_capacity(SUITE_ASSETS);
        let mut ga = Vec::with_capacity(SUITE_ASSETS);
        for asset in &manifest.assets {
            let raw =
                parse_sentiment_csv(&dir.path().join(format!("data/{}_sentiment.csv", asset.ticker)))
                    .expect("sentiment csv");
            let sentiment: Vec<_> = raw.iter().map(normalize).collect();
            let prices = parse_price_csv(&dir.path().join(format!("data/{}_prices.csv", asset.ticker)))
                .expect("price csv");
            let aligned = align(&asset.ticker, &sentiment, &prices, window).expect("align");

            let cfg = GaConfig {
                seed: derive_seed(SUITE_SEED, &asset.ticker),
                ..GaConfig::default()
            };
            ga.push(run(&cfg, &aligned).expect("ga run"));
            series.push(aligned);
        }
        Suite {
            manifest,
            series,
            ga,
            build_time: started.elapsed(),
        }
    })
}

// ---------------------------------------------------------------------------

#[test]
fn decode_fidelity() {
    criterion("decode fidelity", || {
        let started = Instant::now();
        let c = Chromosome::new([false, true, true, true], [0.4, 0.3, 0.5, 0.2]).unwrap();
        let rules = decode(&c).unwrap();
        assert_eq!(rules.entry.len(), 1);
        assert_eq!(rules.entry[0].field, SentimentField::BullRatio);
        assert_eq!(rules.entry[0].threshold, 0.3);
        assert_eq!(rules.exit.len(), 2);
        assert_eq!(rules.exit[0].field, SentimentField::BearIntensity);
        assert_eq!(rules.exit[0].threshold, 0.5);
        assert_eq!(rules.exit[1].field, SentimentField::BearRatio);
        assert_eq!(rules.exit[1].threshold, 0.2);
        assert_eq!(
            rules.to_string(),
            "enter long if bull_ratio >= 0.3000; exit if bear_intensity >= 0.5000 and bear_ratio >= 0.2000"
        );

        for flags in VALID_FLAG_SETS {
            let c = Chromosome::new(flags, [0.1, 0.2, 0.3, 0.4]).unwrap();
            let rules = decode(&c).unwrap();
            assert!(!rules.entry.is_empty());
            assert!(!rules.exit.is_empty());
            let active = flags.iter().filter(|&&b| b).count();
            assert_eq!(rules.entry.len() + rules.exit.len(), active);
        }
        assert!(started.elapsed() < Duration::from_secs(1), "decode too slow");
    });
}

#[test]
fn repair_exhaustiveness() {
    criterion("repair exhaustiveness", || {
        for pattern in 0u8..16 {
            let flags = [
                pattern & 1 != 0,
                pattern & 2 != 0,
                pattern & 4 != 0,
                pattern & 8 != 0,
            ];
            let entry_invalid = !flags[0] && !flags[1];
            let exit_invalid = !flags[2] && !flags[3];
            let mut entry_first = 0usize;
            let mut exit_first = 0usize;
            for seed in 0..1000u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 16 + pattern as u64);
                let broken = Chromosome::new_unchecked(flags, [0.5; 4]);
                let fixed = repair(&broken, &mut rng);
                assert!(fixed.is_valid(), "pattern {pattern:04b} seed {seed}");
                if entry_invalid {
                    assert!(fixed.flags[0] != fixed.flags[1], "exactly one entry flag set");
                    entry_first += fixed.flags[0] as usize;
                } else {
                    assert_eq!([fixed.flags[0], fixed.flags[1]], [flags[0], flags[1]]);
                }
                if exit_invalid {
                    assert!(fixed.flags[2] != fixed.flags[3], "exactly one exit flag set");
                    exit_first += fixed.flags[2] as usize;
                } else {
                    assert_eq!([fixed.flags[2], fixed.flags[3]], [flags[2], flags[3]]);
                }
                assert_eq!(fixed.thresholds, [0.5; 4]);
            }
            if entry_invalid {
                assert!(
                    (450..=550).contains(&entry_first),
                    "entry repair biased: {entry_first}/1000 on pattern {pattern:04b}"
                );
            }
            if exit_invalid {
                assert!(
                    (450..=550).contains(&exit_first),
                    "exit repair biased: {exit_first}/1000 on pattern {pattern:04b}"
                );
            }
        }
    });
}

// ---------------------------------------------------------------------------
// naive metric oracles, deliberately written the slow obvious way

fn oracle_cum(r: &[f64]) -> f64 {
    let mut wealth = 1.0;
    for x in r {
        wealth *= 1.0 + x;
    }
    wealth - 1.0
}

fn oracle_mean(r: &[f64]) -> f64 {
    r.iter().sum::<f64>() / r.len() as f64
}

fn oracle_std(r: &[f64]) -> f64 {
    let m = oracle_mean(r);
    let ss: f64 = r.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (r.len() - 1) as f64).sqrt()
}

fn oracle_drawdown(r: &[f64]) -> f64 {
    let mut wealth = vec![1.0];
    for x in r {
        wealth.push(wealth.last().unwrap() * (1.0 + x));
    }
    let mut dd = 0.0f64;
    for i in 0..wealth.len() {
        for j in i + 1..wealth.len() {
            dd = dd.max((wealth[i] - wealth[j]) / wealth[i]);
        }
    }
    dd
}

/// k-th smallest by repeated minimum extraction, k = ceil(n/20) in exact
/// integer arithmetic (alpha fixed at 0.05 here).
fn oracle_var05(r: &[f64]) -> f64 {
    let k = r.len().div_ceil(20);
    let mut pool = r.to_vec();
    let mut last = f64::NAN;
    for _ in 0..k {
        let (idx, _) = pool
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        last = pool.swap_remove(idx);
    }
    last
}

fn oracle_es05(r: &[f64]) -> f64 {
    let var = oracle_var05(r);
    let tail: Vec<f64> = r.iter().copied().filter(|&x| x <= var).collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn oracle_downside(r: &[f64], mar: f64) -> f64 {
    let ss: f64 = r
        .iter()
        .map(|&x| {
            let d = (x - mar).min(0.0);
            d * d
        })
        .sum();
    (ss / r.len() as f64).sqrt()
}

#[test]
fn metrics_oracle_equivalence() {
    criterion("metrics oracle equivalence", || {
        let started = Instant::now();
        let tol = 1e-12;
        for i in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let n = rng.random_range(5..=2000);
            // every tenth series is coarsely quantized to force ties
            let quantize = i % 10 == 0;
            let raw: Vec<f64> = (0..n)
                .map(|_| {
                    let x: f64 = rng.random_range(-0.04..0.04);
                    if quantize {
                        (x * 100.0).round() / 100.0
                    } else {
                        x
                    }
                })
                .collect();
            let rs = ReturnSeries::new(raw.clone()).unwrap();

            assert!((cum_return(&rs).unwrap() - oracle_cum(&raw)).abs() < tol, "cum i={i}");
            assert!((std_dev(&rs).unwrap() - oracle_std(&raw)).abs() < tol, "std i={i}");
            let dd = max_drawdown(&rs).unwrap();
            assert!((dd - oracle_drawdown(&raw)).abs() < tol, "dd i={i}");
            assert!((0.0..=1.0).contains(&dd), "dd range i={i}");
            assert!(
                (downside_dev(&rs, 0.001).unwrap() - oracle_downside(&raw, 0.001)).abs() < tol,
                "downside i={i}"
            );
            assert!(
                (semi_dev(&rs).unwrap() - oracle_downside(&raw, oracle_mean(&raw))).abs() < tol,
                "semi i={i}"
            );
            if n >= 20 {
                let var = hist_var(&rs, 0.05).unwrap();
                let es = hist_es(&rs, 0.05).unwrap();
                assert!((var - oracle_var05(&raw)).abs() < tol, "var i={i}");
                assert!((es - oracle_es05(&raw)).abs() < tol, "es i={i}");
                assert!(es <= var, "es>var i={i}");
            } else {
                assert!(matches!(
                    hist_var(&rs, 0.05),
                    Err(MetricsError::TooShort { .. })
                ));
            }
        }
        assert!(
            started.elapsed() < Duration::from_secs(30),
            "oracle sweep too slow: {:?}",
            started.elapsed()
        );
    });
}

#[test]
fn ga_matches_grid_oracle() {
    criterion("ga vs grid oracle", || {
        let s = suite();
        let started = Instant::now();
        let cfg = GaConfig::default();
        let mut worst = f64::INFINITY;
        for (i, (series, outcome)) in s.series.iter().zip(&s.ga).enumerate() {
            let grid = grid_oracle(series, 0.05, &cfg.objective, cfg.alpha).unwrap();
            let grid_fit = match grid.fitness {
                Fitness::Value(v) => v,
                Fitness::Degenerate => panic!("grid best degenerate on asset {i}"),
            };
            let ga_fit = match outcome.best.fitness {
                Fitness::Value(v) => v,
                Fitness::Degenerate => panic!("ga best degenerate on asset {i}"),
            };
            worst = worst.min(ga_fit / grid_fit);
            assert!(
                ga_fit >= 0.95 * grid_fit,
                "asset {i}: ga {ga_fit} < 0.95 x grid {grid_fit}"
            );
        }
        let total = started.elapsed() + s.build_time;
        println!("[acceptance]   worst ga/grid ratio {worst:.4}, runtime {total:.1?}");
        assert!(
            total < Duration::from_secs(120),
            "ga+grid too slow: {total:?}"
        );
    });
}

#[test]
fn planted_rule_recovery() {
    criterion("planted-rule recovery", || {
        let s = suite();
        let cfg = GaConfig::default();
        let mut recovered = 0;
        for ((asset, series), outcome) in s.manifest.assets.iter().zip(&s.series).zip(&s.ga) {
            let planted = evaluate_chromosome(&asset.chromosome, series, &cfg.objective, cfg.alpha)
                .unwrap();
            if outcome.best.fitness >= planted.fitness {
                recovered += 1;
            }
        }
        println!("[acceptance]   planted rule matched or beaten on {recovered}/10 assets");
        assert!(
            recovered >= 9,
            "ga matched or beat the planted rule on only {recovered}/10 assets"
        );
    });
}

#[test]
fn elitism_monotonicity() {
    criterion("elitism monotonicity", || {
        let s = suite();
        for run_idx in 0..20u64 {
            let cfg = GaConfig {
                seed: 5000 + run_idx,
                stall_limit: 100,
                ..GaConfig::default()
            };
            let series = &s.series[(run_idx as usize) % s.series.len()];
            let outcome = run(&cfg, series).unwrap();
            assert_eq!(outcome.log.len(), 100);
            for pair in outcome.log.windows(2) {
                assert!(
                    pair[1].best_fitness >= pair[0].best_fitness,
                    "run {run_idx} gen {}: best fell from {} to {}",
                    pair[1].generation,
                    pair[0].best_fitness,
                    pair[1].best_fitness
                );
            }
        }
    });
}

#[test]
fn qp_correctness() {
    criterion("qp correctness", || {
        let started = Instant::now();

        // analytic case: inverse-variance split of diag(1, 1, 4)
        let p = QpProblem::new(
            DVector::from_vec(vec![0.1, 0.1, 0.1]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0])),
            0.1,
            true,
        )
        .unwrap();
        let sol = solve_markowitz(&p).unwrap();
        for (got, want) in sol.weights.0.iter().zip([4.0 / 9.0, 4.0 / 9.0, 1.0 / 9.0]) {
            assert!((got - want).abs() < 1e-6, "diag case: {got} vs {want}");
        }

        // random PSD problems: certificate plus domination over random
        // feasible points
        for prob_idx in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + prob_idx);
            let n = rng.random_range(2..=10usize);
            let a = DMatrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
            let cov = &a * a.transpose();
            let r = DVector::from_fn(n, |_, _| rng.random_range(-0.01..0.02));
            let target = r.mean();
            let p = QpProblem::new(r.clone(), cov.clone(), target, true).unwrap();
            let sol = solve_markowitz(&p).unwrap();
            assert!(
                sol.kkt_residual <= 1e-8,
                "problem {prob_idx}: residual {}",
                sol.kkt_residual
            );

            // 1e5 random feasible candidates, blended onto the return
            // constraint when a raw simplex draw violates it
            let samples = 100_000usize;
            let imax = (0..n).max_by(|&i, &j| r[i].total_cmp(&r[j])).unwrap();
            let mut x_mat = DMatrix::zeros(samples, n);
            for s in 0..samples {
                let mut x: Vec<f64> = (0..n)
                    .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
                    .collect();
                let total: f64 = x.iter().sum();
                for v in &mut x {
                    *v /= total;
                }
                let ret: f64 = (0..n).map(|i| r[i] * x[i]).sum();
                if ret < target {
                    let t = (target - ret) / (r[imax] - ret);
                    for (i, v) in x.iter_mut().enumerate() {
                        *v *= 1.0 - t;
                        if i == imax {
                            *v += t;
                        }
                    }
                }
                for (i, v) in x.iter().enumerate() {
                    x_mat[(s, i)] = *v;
                }
            }
            let xc = &x_mat * &cov;
            for s in 0..samples {
                let mut v = 0.0;
                for i in 0..n {
                    v += xc[(s, i)] * x_mat[(s, i)];
                }
                assert!(
                    sol.variance <= v + 1e-9,
                    "problem {prob_idx}: sampled point beats optimum ({v} < {})",
                    sol.variance
                );
            }
        }

        // frontier: minimum variance cannot fall as the target rises
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let days: Vec<chrono::NaiveDate> = (0..60)
            .map(|i| {
                chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap()
                    + chrono::Days::new(i as u64)
            })
            .collect();
        let returns: Vec<ReturnSeries> = (0..5)
            .map(|k| {
                let drift = 0.0005 * k as f64;
                ReturnSeries::new(
                    (0..60)
                        .map(|_| drift + rng.random_range(-0.02..0.02))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let panel = Panel::new(
            (0..5).map(|k| format!("A{k}")).collect(),
            days,
            returns,
        )
        .unwrap();
        let (means, _) = estimate_inputs(&panel, None).unwrap();
        let lo = means.min();
        let hi = means.max();
        let targets: Vec<f64> = (0..9).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect();
        let points = frontier(&panel, &targets, true).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for point in &points {
            let sol = point.outcome.as_ref().expect("feasible frontier point");
            assert!(
                sol.variance >= prev - 1e-10,
                "frontier variance fell at target {}",
                point.target
            );
            prev = sol.variance;
        }

        assert!(
            started.elapsed() < Duration::from_secs(60),
            "qp sweep too slow: {:?}",
            started.elapsed()
        );
    });
}

#[test]
fn strategy_volatility_reduction() {
    criterion("strategy volatility reduction", || {
        let s = suite();
        let mut reduced = 0;
        for (series, outcome) in s.series.iter().zip(&s.ga) {
            let asset_sigma = std_dev(series.returns()).unwrap();
            if outcome.best.metrics.std_dev <= asset_sigma {
                reduced += 1;
            }
        }
        println!("[acceptance]   volatility reduced on {reduced}/10 assets");
        assert!(
            reduced >= 8,
            "strategy volatility below buy-and-hold on only {reduced}/10 assets"
        );
    });
}

fn run_cli(args: &[&str]) {
    let exe = env!("CARGO_BIN_EXE_sentevo");
    let status = Command::new(exe)
        .args(args)
        .status()
        .expect("spawn sentevo");
    assert!(status.success(), "sentevo {args:?} exited with {status}");
}

fn snapshot(root: &Path) -> std::collections::BTreeMap<std::path::PathBuf, Vec<u8>> {
    fn walk(
        root: &Path,
        dir: &Path,
        out: &mut std::collections::BTreeMap<std::path::PathBuf, Vec<u8>>,
    ) {
        for entry in std::fs::read_dir(dir).expect("read_dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("read file"));
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn end_to_end_determinism() {
    criterion("end-to-end determinism", || {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for dir in [dir_a.path(), dir_b.path()] {
            let out = dir.to_str().unwrap();
            run_cli(&[
                "synth", "--seed", "31", "--assets", "3", "--days", "90", "--edge", "0.003",
                "--out", out,
            ]);
            let config = dir.join("config.json");
            let config = config.to_str().unwrap();
            run_cli(&["optimize", "--config", config]);
            run_cli(&["compare", "--config", config]);
        }
        let a = snapshot(dir_a.path());
        let b = snapshot(dir_b.path());
        assert_eq!(
            a.keys().collect::<Vec<_>>(),
            b.keys().collect::<Vec<_>>(),
            "file trees differ"
        );
        for (path, bytes) in &a {
            assert_eq!(bytes, &b[path], "{} differs between runs", path.display());
        }
    });
}
