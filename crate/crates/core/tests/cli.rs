use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aoisched::config::Config;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aoisched"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn exec(sub: &str, config: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--config").arg(config).args(extra).output().unwrap()
}

const SMALL: &str = r#"
n_devices = 4
antennas = 2
snr_db = 15
lambdas = 0.6
horizon = 200
runs = 3
seed = 5
policies = ["ds", "fs", "mwa", "random", "ds-reduced"]

[sweep]
parameter = "lambda"
values = [0.3, 0.8]
"#;

#[test]
fn invalid_configs_exit_with_status_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("missing.toml", "n_devices = 3\nantennas = 2\nsnr_db = 10\n"),
        (
            "too_many.toml",
            "n_devices = 2\nantennas = 3\nsnr_db = 10\nlambdas = 0.5\n",
        ),
        (
            "unknown.toml",
            "n_devices = 3\nantennas = 2\nsnr_db = 10\nlambdas = 0.5\nfoo = 1\n",
        ),
        ("rate.toml", "n_devices = 3\nantennas = 2\nsnr_db = 10\nlambdas = 1.5\n"),
        (
            "policy.toml",
            "n_devices = 3\nantennas = 2\nsnr_db = 10\nlambdas = 0.5\npolicies = [\"best\"]\n",
        ),
    ];
    for (name, text) in cases {
        let path = write(&dir, name, text);
        let out = exec("simulate", &path, &[]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
}

#[test]
fn unreadable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "c.toml", SMALL);
    let out = dir.path().join("missing").join("out.csv");
    let res = exec("bounds", &config, &["--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn simulate_is_byte_identical_without_timing() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "c.toml", SMALL);
    let files: Vec<Vec<u8>> = ["1", "2"]
        .iter()
        .map(|w| {
            let out = dir.path().join(format!("sim{w}.csv"));
            let res = exec(
                "simulate",
                &config,
                &["--no-timing", "--workers", w, "--out", out.to_str().unwrap()],
            );
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);

    let text = String::from_utf8(files[0].clone()).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    assert_eq!(header.len(), 14);
    assert_eq!(&header[0], "policy");
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 10);
    assert!(text.contains("\r\n"));
    for r in &records {
        assert_eq!(&r[13], "0");
        let mean: f64 = r[8].parse().unwrap();
        let lower: f64 = r[11].parse().unwrap();
        assert!(mean >= lower, "{r:?}");
    }
    assert_eq!(&records[0][0], "ds");
    assert_eq!(&records[0][4], "0.3");
    assert_eq!(&records[5][4], "0.8");
}

#[test]
fn seed_and_policy_flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "c.toml", SMALL);
    let run = |seed: &str| exec("simulate", &config, &["--no-timing", "--seed", seed, "--policy", "mwa"]).stdout;
    let a = String::from_utf8(run("1")).unwrap();
    let b = String::from_utf8(run("2")).unwrap();
    assert_eq!(a.lines().count(), 3);
    assert!(a.lines().skip(1).all(|l| l.starts_with("mwa,")));
    assert_ne!(a, b);
}

#[test]
fn config_round_trips_through_toml() {
    let config = Config::from_toml(SMALL).unwrap();
    let again = Config::from_toml(&config.to_toml()).unwrap();
    assert_eq!(config, again);
    let asym = Config::from_toml(
        "n_devices = 5\nantennas = 2\nsnr_db = 10\nlambdas = \"asym:0.9,0.25\"\nomegas = [1, 2, 3, 4, 5]\n",
    )
    .unwrap();
    assert_eq!(Config::from_toml(&asym.to_toml()).unwrap(), asym);
}

#[test]
fn optimized_scheduler_uses_the_best_group_size() {
    let dir = TempDir::new().unwrap();
    // At 15 dB with five antennas the throughput-optimal group size is four.
    let config = write(
        &dir,
        "c.toml",
        "n_devices = 6\nantennas = 5\nsnr_db = 15\nlambdas = 0.9\n",
    );
    let out = exec("optimize-xi", &config, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut mass_by_size = [0.0; 6];
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    for r in reader.records().map(Result::unwrap) {
        if let Ok(x) = r[2].parse::<f64>() {
            if r[1].starts_with('{') {
                mass_by_size[r[1].split(',').count()] += x;
            }
        }
    }
    assert!(mass_by_size[4] > 1.0 - 1e-6, "{mass_by_size:?}");
}

#[test]
fn bounds_for_a_single_device() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.toml",
        "n_devices = 1\nantennas = 1\nsnr_db = 20\nlambdas = 0.5\n",
    );
    let out = exec("bounds", &config, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let upper: f64 = rows[0][7].parse().unwrap();
    let lower: f64 = rows[0][8].parse().unwrap();
    assert!(lower > 0.0 && lower <= upper, "{lower} {upper}");
    assert_eq!(&rows[0][5], "1");
}

#[test]
fn verify_belief_reports_small_errors() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.toml",
        r#"
n_devices = 3
antennas = 2
snr_db = 15
lambdas = [0.4, 0.6, 0.8]

[verify]
samples = 4000
theta_targets = [[2, 2, 1]]
joint_slot = 3
joint_targets = [[1, 2, 0], [1, 3, 0], [1, 2, 1]]
joint_points = [[1, 1, 1], [2, 1, 2]]
"#,
    );
    let out = exec("verify-belief", &config, &["--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.iter().filter(|r| &r[0] == "theta").count(), 5);
    assert_eq!(rows.iter().filter(|r| &r[0] == "joint").count(), 10);
    for r in &rows {
        let err: f64 = r[5].parse().unwrap();
        assert!(err < 0.05, "{r:?}");
        assert_eq!(&r[6], "4000");
    }
}
