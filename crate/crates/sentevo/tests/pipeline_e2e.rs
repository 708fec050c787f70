//! CLI behavior: exit codes, artifact round-trips, flag overrides, and
//! agreement between the optimizer's reported winner and an independent
//! backtest of the same chromosome.

use sentevo::evolution::Fitness;
use sentevo::metrics::round_sig6;
use sentevo::pipeline::{
    derive_seed, BacktestFile, ComparisonReport, RunConfig, StrategyFile, SynthManifest,
};
use sentevo::strategy::Chromosome;
use std::path::Path;
use std::process::Command;

fn sentevo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sentevo"))
        .args(args)
        .output()
        .expect("spawn sentevo")
}

fn expect_code(args: &[&str], want: i32) -> std::process::Output {
    let out = sentevo(args);
    assert_eq!(
        out.status.code(),
        Some(want),
        "sentevo {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).expect("read json")).expect("parse json")
}

/// Small dataset: 2 assets, 80 trading days (the 30% test split must still
/// hold at least 20 returns for the tail metrics).
fn synth_small(dir: &Path, seed: u64) -> std::path::PathBuf {
    let out = dir.to_str().unwrap();
    expect_code(
        &[
            "synth", "--seed", &seed.to_string(), "--assets", "2", "--days", "80", "--edge",
            "0.004", "--out", out,
        ],
        0,
    );
    dir.join("config.json")
}

#[test]
fn usage_errors_exit_one() {
    expect_code(&["frobnicate"], 1);
    expect_code(&["optimize"], 1);
    expect_code(&["synth", "--days"], 1);
    expect_code(&["--help"], 0);
    expect_code(&["--version"], 0);
    expect_code(&["optimize", "--help"], 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // config referencing CSVs that do not exist
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "tickers": [
    {"ticker": "GHOST", "sentiment": "nope.csv", "prices": "nope.csv"}
  ],
  "train": "2020-01-01:2020-06-30",
  "test": "2020-07-01:2020-12-31"
}"#,
    )
    .unwrap();
    expect_code(&["optimize", "--config", config.to_str().unwrap()], 2);

    // malformed config is a usage error, not a data error
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    expect_code(&["optimize", "--config", broken.to_str().unwrap()], 1);

    // compare before optimize: no strategies anywhere
    let data_dir = tempfile::tempdir().unwrap();
    let config = synth_small(data_dir.path(), 3);
    expect_code(&["compare", "--config", config.to_str().unwrap()], 2);
}

#[test]
fn infeasible_target_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = synth_small(dir.path(), 5);
    expect_code(&["optimize", "--config", config_path.to_str().unwrap()], 0);

    // rewrite the config with an unattainable daily return target
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    config["target_return"] = serde_json::json!(1.0);
    let greedy = dir.path().join("greedy.json");
    std::fs::write(&greedy, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    expect_code(&["compare", "--config", greedy.to_str().unwrap()], 3);
}

#[test]
fn artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = synth_small(dir.path(), 7);
    let config = RunConfig::load(&config_path, &Default::default()).unwrap();
    let manifest: SynthManifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest.assets.len(), 2);
    assert_eq!(config.tickers.len(), 2);

    let arg = config_path.to_str().unwrap();
    expect_code(&["optimize", "--config", arg], 0);
    expect_code(&["backtest", "--config", arg], 0);
    expect_code(&["compare", "--config", arg], 0);

    let run = &config.out_dir;
    for paths in &config.tickers {
        let strategy: StrategyFile = read_json(&run.join(format!("strategies/{}.json", paths.ticker)));
        assert_eq!(strategy.ticker, paths.ticker);
        assert!(strategy.chromosome.is_valid());
        assert_eq!(strategy.display, strategy.chromosome.to_string());
        assert_eq!(strategy.seed, derive_seed(config.seed, &paths.ticker));
        let log = std::fs::read_to_string(run.join(format!("logs/{}_ga.csv", paths.ticker))).unwrap();
        let mut lines = log.lines();
        assert_eq!(
            lines.next().unwrap(),
            "gen,best_fitness,mean_fitness,best_chromosome"
        );
        // log rows cover generations 0..generations_run
        assert_eq!(log.lines().count(), strategy.generations_run + 1);
    }

    let summary = std::fs::read_to_string(run.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with(
        "ticker,asset_cum_return,asset_std_dev,asset_sharpe,strategy_cum_return"
    ));

    let report: ComparisonReport = read_json(&run.join("compare.json"));
    assert_eq!(report.tickers.len(), 2);
    assert_eq!(report.in_sample.len(), 2);
    let weight_sum: f64 = report.markowitz.weights.iter().map(|w| w.weight).sum();
    assert!((weight_sum - 1.0).abs() < 1e-9, "weights sum to {weight_sum}");
    assert!(report.markowitz.kkt_residual <= 1e-8);

    let weights_csv = std::fs::read_to_string(run.join("weights.csv")).unwrap();
    assert_eq!(weights_csv.lines().count(), 3);
    let risk = std::fs::read_to_string(run.join("risk_metrics.csv")).unwrap();
    let metrics: Vec<&str> = risk
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        metrics,
        ["semi_dev", "downside_dev", "max_drawdown", "var_95", "es_95"]
    );
    let wealth = std::fs::read_to_string(run.join("wealth_curves.csv")).unwrap();
    assert_eq!(
        wealth.lines().next().unwrap(),
        "date,markowitz,one_over_n,evolutionary"
    );
    assert!(wealth.lines().count() > 2);
}

#[test]
fn cli_overrides_take_effect() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = synth_small(dir.path(), 11);
    let arg = config_path.to_str().unwrap();
    let other_out = dir.path().join("elsewhere");
    expect_code(
        &[
            "optimize",
            "--config",
            arg,
            "--seed",
            "777",
            "--generations",
            "3",
            "--objective",
            "-semi_dev",
            "--out",
            other_out.to_str().unwrap(),
        ],
        0,
    );
    assert!(!dir.path().join("run").exists(), "default out dir must stay untouched");
    let strategy: StrategyFile = read_json(&other_out.join("strategies/SYN01.json"));
    assert_eq!(strategy.seed, derive_seed(777, "SYN01"));
    assert_eq!(strategy.objective, "-semi_dev");
    assert_eq!(strategy.generations_run, 3);
}

/// Swaps the chromosome inside an optimized strategy file so backtest and
/// compare re-simulate a handcrafted rule instead of the GA winner.
fn patch_strategy(path: &Path, chromosome: &Chromosome) {
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    value["chromosome"] = serde_json::to_value(chromosome).unwrap();
    value["display"] = serde_json::Value::String(chromosome.to_string());
    std::fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

#[test]
fn always_long_single_asset_collapses_portfolios() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = synth_small(dir.path(), 17);

    // shrink the universe to one ticker
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    let first = config["tickers"][0].clone();
    config["tickers"] = serde_json::json!([first]);
    let single = dir.path().join("single.json");
    std::fs::write(&single, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let arg = single.to_str().unwrap();

    expect_code(&["optimize", "--config", arg], 0);

    // entry fires on every day, exit needs an intensity the data never reaches
    let always = Chromosome::new([true, false, true, false], [0.0, 0.0, 1.0, 0.0]).unwrap();
    patch_strategy(&dir.path().join("run/strategies/SYN01.json"), &always);

    expect_code(&["backtest", "--config", arg], 0);
    expect_code(&["compare", "--config", arg], 0);

    // one asset held long every day: all three portfolios are the asset itself
    let report: ComparisonReport = read_json(&dir.path().join("run/compare.json"));
    assert_eq!(report.markowitz.weights.len(), 1);
    assert!((report.markowitz.weights[0].weight - 1.0).abs() < 1e-9);
    assert_eq!(report.markowitz.metrics, report.one_over_n.metrics);
    assert_eq!(report.one_over_n.metrics, report.evolutionary.metrics);

    let wealth = std::fs::read_to_string(dir.path().join("run/wealth_curves.csv")).unwrap();
    for line in wealth.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], cols[2], "{line}");
        assert_eq!(cols[1], cols[3], "{line}");
    }

    // and the strategy's out-of-sample report is the asset's buy-and-hold report
    let backtest: BacktestFile = read_json(&dir.path().join("run/backtests/SYN01.json"));
    assert_eq!(backtest.test, report.one_over_n.metrics);
}

#[test]
fn never_long_backtest_reports_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = synth_small(dir.path(), 19);
    let arg = config_path.to_str().unwrap();
    expect_code(&["optimize", "--config", arg], 0);

    // entry requires an intensity the data never reaches: no position ever opens
    let never = Chromosome::new([true, false, true, false], [1.0, 0.0, 1.0, 0.0]).unwrap();
    patch_strategy(&dir.path().join("run/strategies/SYN01.json"), &never);
    expect_code(&["backtest", "--config", arg], 0);

    let backtest: BacktestFile = read_json(&dir.path().join("run/backtests/SYN01.json"));
    for report in [&backtest.train, &backtest.test] {
        assert_eq!(report.cum_return, 0.0);
        assert_eq!(report.std_dev, 0.0);
        assert_eq!(report.sharpe_like, None);
        assert_eq!(report.max_drawdown, 0.0);
        assert_eq!(report.var_alpha, 0.0);
        assert_eq!(report.es_alpha, 0.0);
        assert_eq!(report.semi_dev, 0.0);
        assert_eq!(report.downside_dev, 0.0);
    }
}

#[test]
fn backtest_train_report_matches_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = synth_small(dir.path(), 13);
    let config = RunConfig::load(&config_path, &Default::default()).unwrap();
    let arg = config_path.to_str().unwrap();
    expect_code(&["optimize", "--config", arg], 0);
    expect_code(&["backtest", "--config", arg], 0);

    for paths in &config.tickers {
        let strategy: StrategyFile =
            read_json(&config.out_dir.join(format!("strategies/{}.json", paths.ticker)));
        let backtest: BacktestFile =
            read_json(&config.out_dir.join(format!("backtests/{}.json", paths.ticker)));
        assert_eq!(backtest.chromosome.flags, strategy.chromosome.flags);
        assert_eq!(backtest.chromosome.thresholds, strategy.chromosome.thresholds);
        // the independent re-simulation reproduces the optimizer's report
        assert_eq!(backtest.train, strategy.in_sample);
        match strategy.fitness {
            Fitness::Value(v) => {
                assert_eq!(Some(round_sig6(v)), strategy.in_sample.sharpe_like)
            }
            Fitness::Degenerate => panic!("degenerate winner on {}", paths.ticker),
        }
    }
}
