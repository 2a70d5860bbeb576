use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use qtrade::config::{ExperimentConfig, Strategy};
use qtrade::experiment::{
    evaluate_checkpoint, generate_csv, report, run_experiment, run_forecast, run_matrix,
    MatrixEntry, COMPARISON_CSV, MARKET_CSV,
};
use qtrade::plots::{emit_plots, read_evaluation, EQUITY_SVG, EVALUATION_CSV, TIMELINE_SVG};
use qtrade::synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
use qtrade::CliError;
use qtrade_core::tradeenv::{load_market_csv, ColumnMap};

fn config(out: &Path, strategy: Strategy, length: usize, episodes: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.out = out.to_path_buf();
    c.strategy = strategy;
    c.seed = 11;
    c.train.max_episodes = episodes;
    c.train.workers = Some(1);
    c.net.qubits = 4;
    c.forecast.epochs = 20;
    c.forecast.lookback = 4;
    c.data.synthetic = Some(SyntheticSpec {
        length,
        ..Default::default()
    });
    c
}

fn names(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn random_strategy_skips_training() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("random");
    let run = run_experiment(&config(&out, Strategy::Random, 10, 1)).unwrap();
    assert!(run.history.is_none());
    assert_eq!(
        names(&out),
        set(&[
            "config.toml",
            "evaluation.csv",
            "metrics.txt",
            "metrics.csv",
            "action_timeline.svg",
            "equity_curve.svg",
        ])
    );
    assert_eq!(run.files.len(), 6);
    assert_eq!(run.evaluation.steps.len(), 10);
}

#[test]
fn every_text_artifact_is_stamped() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(&tmp.path().join("run"), Strategy::Classical, 12, 5);
    let mut c2 = c.clone();
    c2.use_forecast = true;
    let run = run_experiment(&c2).unwrap();
    let stamp = c2.clone().resolve().unwrap().stamp();
    for f in &run.files {
        if f.extension().is_some_and(|x| x == "ckpt") {
            continue;
        }
        let text = std::fs::read_to_string(f).unwrap();
        assert!(
            text.lines().next().unwrap().contains(&stamp),
            "{}",
            f.display()
        );
    }
    assert!(names(&c.out).contains("forecaster.ckpt"));
    assert!(names(&c.out).contains("forecast.csv"));
}

#[test]
fn single_worker_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for strategy in [Strategy::Classical, Strategy::Quantum, Strategy::Random] {
        let a = config(
            &tmp.path().join(format!("{}_a", strategy.name())),
            strategy,
            24,
            30,
        );
        let mut b = a.clone();
        b.out = tmp.path().join(format!("{}_b", strategy.name()));
        run_experiment(&a).unwrap();
        run_experiment(&b).unwrap();
        // re-run from the emitted snapshot
        let mut c = ExperimentConfig::load(&a.out.join("config.toml")).unwrap();
        c.out = tmp.path().join(format!("{}_c", strategy.name()));
        run_experiment(&c).unwrap();
        let fa = csv_files(&a.out);
        assert!(!fa.is_empty());
        for f in fa {
            let name = f.file_name().unwrap();
            let x = std::fs::read(&f).unwrap();
            assert_eq!(x, std::fs::read(b.out.join(name)).unwrap(), "{name:?}");
            assert_eq!(x, std::fs::read(c.out.join(name)).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn plots_are_well_formed_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&config(&out, Strategy::Classical, 10, 3000)).unwrap();
    for svg in ["reward_curve.svg", TIMELINE_SVG, EQUITY_SVG] {
        let text = std::fs::read_to_string(out.join(svg)).unwrap();
        roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{svg}: {e}"));
    }
    let history = std::fs::read_to_string(out.join("training_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3000 + 2);

    let text = std::fs::read_to_string(out.join(TIMELINE_SVG)).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let markers = doc
        .descendants()
        .filter(|n| {
            n.attribute("class")
                .is_some_and(|c| c.split(' ').any(|w| w == "marker"))
        })
        .count();
    let rows = read_evaluation(&out.join(EVALUATION_CSV)).unwrap();
    assert_eq!(markers, rows.iter().filter(|r| r.action != "hold").count());
}

#[test]
fn empty_action_log_has_no_markers() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join(EVALUATION_CSV),
        "# seed=0\ndate,action,price,asset_value\n2022-01-07,hold,100,10000\n2022-01-14,hold,101,10000\n",
    )
    .unwrap();
    emit_plots(tmp.path(), false, "seed=0").unwrap();
    let text = std::fs::read_to_string(tmp.path().join(TIMELINE_SVG)).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert!(doc
        .descendants()
        .any(|n| n.attribute("class") == Some("price")));
    assert!(!text.contains("marker"));
}

fn matrix_config(out: &Path) -> ExperimentConfig {
    let mut c = config(out, Strategy::Classical, 40, 20);
    c.forecast.epochs = 5;
    c
}

fn csv_shape(path: &Path) -> (usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    (lines.len() - 1, lines[0].split(',').count() - 1)
}

#[test]
fn matrix_has_five_columns_and_twenty_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let c = matrix_config(&tmp.path().join("m"));
    let outcome = run_matrix(&c, &MatrixEntry::ALL).unwrap();
    assert!(outcome.failed().is_empty(), "{}", outcome.table);
    assert_eq!(csv_shape(&c.out.join(COMPARISON_CSV)), (20, 5));
    let header = outcome.csv.lines().next().unwrap();
    assert_eq!(
        header,
        "metric,classical,classical+lstm,quantum,quantum+lstm,random"
    );
    for d in [
        "classical",
        "classical_lstm",
        "quantum",
        "quantum_lstm",
        "random",
    ] {
        assert!(c.out.join(d).join("metrics.csv").exists(), "{d}");
    }
}

#[test]
fn matrix_single_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let c = matrix_config(&tmp.path().join("m"));
    run_matrix(&c, &[MatrixEntry::new(Strategy::Random, false)]).unwrap();
    assert_eq!(csv_shape(&c.out.join(COMPARISON_CSV)), (20, 1));
    assert!(matches!(run_matrix(&c, &[]), Err(CliError::Config(_))));
}

#[test]
fn matrix_isolates_a_failing_column() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = matrix_config(&tmp.path().join("m"));
    c.net.qubits = 40;
    let entries = [
        MatrixEntry::new(Strategy::Classical, false),
        MatrixEntry::new(Strategy::Quantum, false),
        MatrixEntry::new(Strategy::Random, false),
    ];
    let outcome = run_matrix(&c, &entries).unwrap();
    assert_eq!(outcome.failed(), vec!["quantum"]);
    assert!(outcome.table.contains("FAILED"));
    let csv = &outcome.csv;
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[2], "FAILED");
        assert_ne!(cells[1], "FAILED");
        assert_ne!(cells[3], "FAILED");
    }
    assert!(!c.out.join("quantum").exists());
}

#[test]
fn ar1_generator_matches_phi() {
    let spec = SyntheticSpec {
        kind: SyntheticKind::Ar1,
        length: 10_000,
        phi: 0.9,
        sigma: 0.002,
        drift: 0.0,
        seed: 5,
        ..Default::default()
    };
    let closes = generate_synthetic(&spec).unwrap().closes();
    let r: Vec<f64> = closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let m = r.iter().sum::<f64>() / r.len() as f64;
    let ss: f64 = r.iter().map(|x| (x - m) * (x - m)).sum();
    let num: f64 = r.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let rho = num / ss;
    assert!((0.8..=0.95).contains(&rho), "{rho}");
}

#[test]
fn generated_files_are_periodic_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let c = ExperimentConfig::default();
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    generate_csv(&c, &a).unwrap();
    generate_csv(&c, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let closes = load_market_csv(&a, &ColumnMap::default()).unwrap().closes();
    assert_eq!(closes.len(), 120);
    for t in 8..closes.len() {
        assert_eq!(closes[t], closes[t - 8]);
    }
}

#[test]
fn failed_emit_leaves_no_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    // a directory squatting on an artifact name makes that write fail
    std::fs::create_dir_all(out.join("metrics.csv")).unwrap();
    let err = run_experiment(&config(&out, Strategy::Classical, 12, 3)).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert_eq!(names(&out), set(&["metrics.csv"]));
}

#[test]
fn evaluate_from_checkpoint_reproduces_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    for (strategy, forecast) in [(Strategy::Classical, false), (Strategy::Quantum, true)] {
        let run_dir = tmp.path().join(format!("{}_{forecast}", strategy.name()));
        let mut c = config(&run_dir, strategy, 20, 20);
        c.use_forecast = forecast;
        run_experiment(&c).unwrap();
        let again = evaluate_checkpoint(&run_dir, &run_dir.join("evaluation")).unwrap();
        for f in [EVALUATION_CSV, "metrics.csv"] {
            assert_eq!(
                std::fs::read(run_dir.join(f)).unwrap(),
                std::fs::read(again.dir.join(f)).unwrap(),
                "{f}"
            );
        }
    }
    match evaluate_checkpoint(&tmp.path().join("nowhere"), &tmp.path().join("x")) {
        Err(CliError::Config(m)) => assert!(m.contains("config.toml"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_reads_back_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("alpha");
    let run = run_experiment(&config(&a, Strategy::Random, 30, 1)).unwrap();
    std::fs::remove_file(a.join(EQUITY_SVG)).unwrap();
    let cols = report(std::slice::from_ref(&a)).unwrap();
    assert_eq!(cols[0].0, "alpha");
    let back = cols[0].1.as_ref().unwrap();
    assert_eq!(back.trade_count, run.report.trade_count);
    assert_eq!(back.sharpe.value(), run.report.sharpe.value());
    assert!(a.join(EQUITY_SVG).exists());
}

#[test]
fn forecast_command_writes_augmented_market_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fc");
    let mut c = config(&out, Strategy::Classical, 40, 1);
    c.use_forecast = true;
    run_forecast(&c).unwrap();
    let s = load_market_csv(out.join(MARKET_CSV), &ColumnMap::default()).unwrap();
    assert!(s.has_forecast());
    assert_eq!(s.len(), 40);
}

#[test]
fn quantum_with_forecast_trades_on_sawtooth() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(&tmp.path().join("q"), Strategy::Quantum, 120, 1500);
    c.use_forecast = true;
    c.forecast.epochs = 100;
    c.forecast.lookback = 8;
    c.train.workers = Some(2);
    let run = run_experiment(&c).unwrap();
    assert!(run.report.trade_count > 0);
}

fn qtrade(args: &[&str]) -> i32 {
    let mut v = vec!["qtrade"];
    v.extend_from_slice(args);
    qtrade::cli::run(v)
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(qtrade(&["train", "--strategy", "bogus"]), 1);
    assert_eq!(qtrade(&["frobnicate"]), 1);
    assert_eq!(qtrade(&["--help"]), 0);

    let bad_toml = format!("{dir}/bad.toml");
    std::fs::write(
        &bad_toml,
        "[data]\npath = \"/no/such/file.csv\"\n[data.synthetic]\n",
    )
    .unwrap();
    assert_eq!(qtrade(&["train", "--config", &bad_toml]), 1);

    let csv = format!("{dir}/broken.csv");
    std::fs::write(
        &csv,
        "date,close,vix,fedfunds,dgs2,dgs10,hy_spread\n2022-01-07,abc,1,1,1,1,1\n",
    )
    .unwrap();
    let cfg = format!("{dir}/broken.toml");
    std::fs::write(
        &cfg,
        format!("strategy = \"random\"\n[data]\npath = \"{csv}\"\n"),
    )
    .unwrap();
    assert_eq!(
        qtrade(&["train", "--config", &cfg, "--out", &format!("{dir}/o")]),
        2
    );
    assert!(!Path::new(&format!("{dir}/o")).exists());

    let gen = format!("{dir}/gen.csv");
    assert_eq!(
        qtrade(&["generate", "--kind", "trend", "--length", "15", "--out", &gen]),
        0
    );
    assert_eq!(
        load_market_csv(&gen, &ColumnMap::default()).unwrap().len(),
        15
    );
    assert_eq!(qtrade(&["generate", "--length", "3", "--out", &gen]), 1);

    let run = format!("{dir}/run");
    assert_eq!(
        qtrade(&[
            "train",
            "--strategy",
            "random",
            "--seed",
            "3",
            "--out",
            &run
        ]),
        0
    );
    let snapshot = std::fs::read_to_string(format!("{run}/config.toml")).unwrap();
    assert!(snapshot.contains("seed = 3"));
    assert_eq!(qtrade(&["report", &run, "--out", &format!("{dir}/rep")]), 0);
    assert!(Path::new(&format!("{dir}/rep/comparison.txt")).exists());
}
