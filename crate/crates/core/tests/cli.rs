use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use factor_mcls::backtest::Report;
use factor_mcls::cli::{self, RunConfig, EXIT_CONFIG, EXIT_DATA};

const BIN: &str = env!("CARGO_BIN_EXE_factor-mcls");

fn small_config(dir: &Path) -> PathBuf {
    let text = format!(
        r#"seed = 11
out_dir = "{out}"

[data]
tickers = ["AAPL", "KO", "MSFT"]

[data.synthetic]
kind = "djia"
seed = 5

[env]
k = 5
m = 4
horizon = 12

[agent]
hidden = [8]
batch_size = 8
warmup_episodes = 1
episodes = 2

[backtest]
periods = 10
"#,
        out = dir.join("out").display()
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn bin(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove(cli::OUT_ENV).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["factor-mcls"];
    full.extend_from_slice(args);
    cli::main_with_args(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_reports_the_full_synthetic_universe_and_caches_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ingest.toml");
    fs::write(&cfg, "[data.synthetic]\nkind = \"djia\"\nseed = 1\n").unwrap();
    let out = dir.path().join("a");
    let o = bin(&["ingest", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("n=29 days=1008 first=2019-01-02"), "{text}");

    // Re-ingesting the cache reproduces it byte for byte.
    let again = dir.path().join("b");
    let cache = out.join("prices.csv");
    let o = bin(&["ingest", "--config", s(&cfg), "--data", s(&cache), "--out", s(&again)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("n=29 "));
    assert_eq!(fs::read(&cache).unwrap(), fs::read(again.join("prices.csv")).unwrap());
}

#[test]
fn empty_price_file_fails_with_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "date,ticker,adj_close\n").unwrap();
    let o = bin(&["ingest", "--data", s(&empty), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no rows"));
}

#[test]
fn exit_codes_distinguish_config_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["ingest", "--out", s(dir.path())]), EXIT_CONFIG, "no data source");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[data.synthetic]\nkind = \"djia\"\nseed = 1\n[benchmarks.NOPE]\n").unwrap();
    assert_eq!(run(&["bench", "--config", s(&bad)]), EXIT_CONFIG, "unknown strategy");
    let cfg = small_config(dir.path());
    assert_eq!(run(&["bench", "--config", s(&cfg), "--only", "CRP,NOPE"]), EXIT_CONFIG);
    assert_eq!(run(&["ingest", "--data", s(&dir.path().join("missing.csv"))]), EXIT_DATA);
    assert_eq!(run(&["report", "--input", s(&dir.path().join("nothing"))]), EXIT_DATA);
    assert_eq!(run(&["backtest", "--config", s(&cfg), "--checkpoint", s(&dir.path().join("none"))]), EXIT_DATA);
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let env_out = dir.path().join("from_env");
    let flag_out = dir.path().join("from_flag");
    let o = Command::new(BIN).args(["ingest", "--config", s(&cfg)]).env(cli::OUT_ENV, &env_out).output().unwrap();
    assert!(o.status.success());
    assert!(env_out.join("prices.csv").exists());
    let o = Command::new(BIN)
        .args(["ingest", "--config", s(&cfg), "--out", s(&flag_out)])
        .env(cli::OUT_ENV, &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_out.join("prices.csv").exists());
    assert!(!dir.path().join("out").exists(), "config out_dir is the last resort");
}

#[test]
fn zero_episode_training_writes_one_trace_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("t0");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out), "--episodes", "0"]), 0);
    let text = fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2, "header plus the initial evaluation");
    assert!(out.join("checkpoint").is_dir());
}

fn train_and_bench(cfg: &Path, out: &Path) {
    assert_eq!(run(&["train", "--config", s(cfg), "--out", s(out)]), 0);
    assert_eq!(run(&["backtest", "--config", s(cfg), "--out", s(out)]), 0);
    let ckpt = out.join("checkpoint");
    assert_eq!(run(&["bench", "--config", s(cfg), "--out", s(out), "--checkpoint", s(&ckpt)]), 0);
    assert_eq!(run(&["report", "--input", s(out)]), 0);
}

#[test]
fn full_pipeline_is_reproducible_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    train_and_bench(&cfg, &a);
    train_and_bench(&cfg, &b);

    let hash = RunConfig::load(&cfg).unwrap().hash();
    let stamp = format!("config_hash={hash} seed=11");
    for name in ["trace.csv", "report.csv", "report.json", "run.json", "equity_Factor-MCLS.csv", "equity_UBAH.csv", "checkpoint/run.json"] {
        let x = fs::read(a.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs between runs");
        let text = String::from_utf8(x).unwrap();
        if name.ends_with(".json") {
            assert!(text.contains(&hash), "{name} lacks the config hash");
        } else {
            assert!(text.contains(&stamp), "{name} lacks the stamp");
        }
    }

    for name in ["checkpoint/checkpoint.bin", "checkpoint/checkpoint.meta.json", "trades_Factor-MCLS.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }

    let report = Report::read_csv(fs::File::open(a.join("report.csv")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 15, "14 benchmarks plus the agent");
    assert_eq!(report.ordered_names()[0], "Factor-MCLS");

    // Plot series line up with their sources.
    let plots = a.join("plots");
    let returns = fs::read_to_string(plots.join("training_returns.csv")).unwrap();
    assert_eq!(returns.lines().count(), 1 + 3, "initial record plus two episodes");
    let scatter = fs::read_to_string(plots.join("risk_return.csv")).unwrap();
    for line in scatter.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let m = &report.rows[f[0]];
        assert_eq!(f[1].parse::<f64>().unwrap(), m.std);
        assert_eq!(f[3].parse::<f64>().unwrap(), m.dr);
    }
    let curves = fs::read_to_string(plots.join("equity_curves.csv")).unwrap();
    let ubah = curves.lines().filter(|l| l.starts_with("UBAH,")).count();
    assert_eq!(ubah, 10 * 5);
}

#[test]
fn bench_subset_writes_only_the_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sub");
    assert_eq!(run(&["bench", "--config", s(&cfg), "--out", s(&out), "--only", "CRP,UBAH"]), 0);
    let report = Report::read_csv(fs::File::open(out.join("report.csv")).unwrap()).unwrap();
    assert_eq!(report.ordered_names(), vec!["CRP", "UBAH"]);
    let equity: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.starts_with("equity_"))
        .collect();
    assert_eq!(equity.len(), 2);
}

#[test]
fn report_with_only_a_trace_writes_training_series() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(&input).unwrap();
    let empty = factor_mcls::agent::TrainingTrace::default();
    let mut buf = Vec::new();
    empty.write_csv(&mut buf, &[]).unwrap();
    fs::write(input.join("trace.csv"), buf).unwrap();
    assert_eq!(run(&["report", "--input", s(&input)]), 0);
    let text = fs::read_to_string(input.join("plots/training_returns.csv")).unwrap();
    assert_eq!(text, "stage,ar,ard,av,npr,nprw\n");
    assert!(!input.join("plots/risk_return.csv").exists());
}
