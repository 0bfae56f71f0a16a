use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cqns_core::market_data::load_prices;
use cqns_core::market_data::ModelParams;
use cqns_core::qubo::import_qubo;
use cqns_core::solvers::exhaustive_best;
use cqns_core::{MarketModel, Portfolio, ScoreParams, ScoredPortfolio};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn cqns(args: &[&str]) -> Output {
    cqns_env(args, &[])
}

fn cqns_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cqns"));
    cmd.args(args).env_remove("CQNS_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn fields(o: &Output) -> BTreeMap<String, String> {
    stdout(o).lines().filter_map(|l| l.split_once(' ').map(|(k, v)| (k.to_string(), v.to_string()))).collect()
}

fn model(name: &str) -> MarketModel {
    let u = load_prices(fixture(name), "MKT").unwrap();
    MarketModel::from_universe(&u, &ModelParams::default()).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn three_layer_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"alpha": 2.0, "ga.population": 100, "seed": 7, "data": "prices.csv"}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let o = cqns(&["--config", c, "--set", "alpha=3", "--set", "seed=5", "--seed", "9", "show-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["alpha"], 3.0);
    assert_eq!(v["ga.population"], 100);
    assert_eq!(v["ga.generations"], 40);
    assert_eq!(v["seed"], 9);
    // relative data paths in a file resolve next to that file
    assert_eq!(v["data"].as_str().unwrap(), dir.path().join("prices.csv").to_str().unwrap());
    assert!(stderr(&o).lines().any(|l| l == "seed 9"));
    assert!(stderr(&o).lines().any(|l| l.starts_with("config {")));

    let o = cqns(&["--config", c, "show-config"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((v["alpha"].as_f64(), v["seed"].as_u64()), (Some(2.0), Some(7)));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"ga.populaton": 100}"#).unwrap();
    let o = cqns(&["--config", cfg.to_str().unwrap(), "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ga.populaton"));
    let o = cqns(&["--set", "alpha=\"high\"", "show-config"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let s60 = fixture("synth60.csv");
    let o = cqns(&["--data", s60.to_str().unwrap(), "build-qubo", "--k", "70"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("target size 70 outside [2, 59]"), "{}", stderr(&o));

    let o = cqns(&["--data", "/nonexistent/prices.csv", "ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("market_data"));

    let tiny = fixture("tiny4.csv");
    let t = tiny.to_str().unwrap();
    assert_eq!(cqns(&["--data", t, "score", "--mask", "101"]).status.code(), Some(2));
    assert_eq!(cqns(&["--data", t, "score", "--mask", "S01,NOPE"]).status.code(), Some(2));
    assert_eq!(cqns(&["--data", t, "score", "--mask", "0000"]).status.code(), Some(1));
    assert_eq!(cqns(&["--data", t, "solve", "--solver", "tabu"]).status.code(), Some(2));
    assert_eq!(cqns(&["--data", t, "solve", "--solver", "annealing"]).status.code(), Some(2));
    assert_eq!(cqns(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cqns(&["score", "--mask", "1010"]).status.code(), Some(2));
    assert_eq!(cqns_env(&["show-config"], &[("CQNS_THREADS", "lots")]).status.code(), Some(2));
    assert_eq!(cqns(&["--data", t, "ingest"]).status.code(), Some(0));
    assert_eq!(cqns(&["--help"]).status.code(), Some(0));
}

#[test]
fn score_matches_library() {
    let m = model("synth12.csv");
    let data = fixture("synth12.csv");
    for (mask, p) in [
        ("101100000011", Portfolio::parse_bits("101100000011", 12).unwrap()),
        ("S02,S05,S09", Portfolio::parse_tickers("S02,S05,S09", &m.tickers).unwrap()),
        ("0b111111111111", Portfolio::full(12)),
    ] {
        let o = cqns(&["--data", data.to_str().unwrap(), "score", "--mask", mask]);
        assert!(o.status.success(), "{}", stderr(&o));
        let f = fields(&o);
        let want = ScoredPortfolio::score(&p, &m, &ScoreParams::default()).unwrap();
        assert_eq!(f["mask"], p.to_bit_string());
        assert_eq!(f["size"], p.size().to_string());
        for (key, x) in [
            ("expected_return", want.expected_return),
            ("variance", want.variance),
            ("stdev", want.stdev),
            ("cqns", want.cqns),
            ("cqr", want.cqr),
            ("sharpe", want.sharpe),
        ] {
            assert_eq!(f[key].parse::<f64>().unwrap().to_bits(), x.to_bits(), "{mask} {key}");
        }
    }
}

#[test]
fn campaign_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = fixture("tiny4.json");
    let args = ["--config", cfg.to_str().unwrap(), "--seed", "7", "--set"];
    let set = format!("output_dir={}", out.display());
    let run = |env: &[(&str, &str)]| {
        let mut a = args.to_vec();
        a.extend([set.as_str(), "campaign"]);
        let o = cqns_env(&a, env);
        assert!(o.status.success(), "{}", stderr(&o));
        tree(&out)
    };
    let first = run(&[]);
    let second = run(&[]);
    let capped = run(&[("CQNS_THREADS", "1")]);
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    assert!(first == second, "campaign output differs between runs");
    assert!(first == capped, "campaign output differs with one worker");
    for name in ["campaign.json", "comparison.csv", "frontier.csv", "summary.json", "qubo_k2.json", "qubo_k3.json"] {
        assert!(first.contains_key(name), "{name} missing");
    }

    // re-rendering from campaign.json reproduces the reports
    let again = dir.path().join("again");
    let o = cqns(&[
        "--config",
        cfg.to_str().unwrap(),
        "report",
        "--input",
        out.join("campaign.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (name, bytes) in tree(&again) {
        assert!(first[&name] == bytes, "{name} differs after report");
    }
}

#[test]
fn campaign_finds_the_exhaustive_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("tiny4.json");
    let set = format!("output_dir={}", dir.path().display());
    let o = cqns(&["--config", cfg.to_str().unwrap(), "--set", &set, "campaign"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = model("tiny4.csv");
    let best = exhaustive_best(&m, 1.0, 24).unwrap().overall;
    let table = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let row = table.lines().find(|l| l.starts_with("exhaustive,")).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[3].parse::<f64>().unwrap().to_bits(), best.value.to_bits());
    assert_eq!(cols[4], best.mask.to_bit_string());
    assert_eq!(cols[5], "true");
}

#[test]
fn solve_reports_best_mask() {
    let data = fixture("synth12.csv");
    let d = data.to_str().unwrap();
    let m = model("synth12.csv");
    let best = exhaustive_best(&m, 1.0, 24).unwrap();
    let o = cqns(&["--data", d, "solve", "--solver", "exhaustive"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fields(&o);
    assert_eq!(f["best_mask"], best.overall.mask.to_bit_string());
    assert_eq!(f["samples"], "4095");

    let o = cqns(&["--data", d, "--set", "tabu.reads=20", "solve", "--solver", "tabu", "--k", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fields(&o);
    assert_eq!(f["samples"], "20");
    assert_eq!(f["k"], "4");
    if f["best_mask"] != "none" {
        assert_eq!(f["best_size"], "4");
    }
}

#[test]
fn exported_qubos_match_build() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("synth12.csv");
    let d = data.to_str().unwrap();
    let single = dir.path().join("k5.json");
    let o = cqns(&["--data", d, "--seed", "3", "build-qubo", "--k", "5", "--out", single.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fields(&o);
    assert_eq!(f["ising_ranges"], "ok");
    assert!((f["max_abs_entry"].parse::<f64>().unwrap() - 0.9).abs() < 1e-12);

    let all = dir.path().join("all");
    let o =
        cqns(&["--data", d, "--seed", "3", "--set", "size_range=[4,6]", "export-qubo", "--out", all.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(tree(&all).len(), 3);
    assert_eq!(fs::read(&single).unwrap(), fs::read(all.join("qubo_k5.json")).unwrap());
    let (q, meta) = import_qubo(all.join("qubo_k5.json")).unwrap();
    assert_eq!(meta.seed, 3);
    assert_eq!(meta.model_hash, model("synth12.csv").content_hash());
    assert_eq!(q.target_size, 5);
    assert_eq!(q.scale.to_bits(), f["scale"].parse::<f64>().unwrap().to_bits());
}

#[test]
fn ingest_writes_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let o = cqns(&["--data", fixture("synth60.csv").to_str().unwrap(), "ingest", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fields(&o);
    assert_eq!(f["assets"], "60");
    assert_eq!(f["as_of"], "2021-12-22");
    let back: MarketModel = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert_eq!(back, model("synth60.csv"));
    assert_eq!(f["model_hash"], back.content_hash());
}
