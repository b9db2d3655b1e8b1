//! End-to-end checks of the command-line surface: output determinism,
//! exit codes, parameter files.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kaondyn"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).env_remove("KAON_PARAMS").output().unwrap();
    assert!(
        out.status.success(),
        "kaondyn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).env_remove("KAON_PARAMS").output().unwrap().status.code().unwrap()
}

#[test]
fn run_csv_is_deterministic_and_well_formed() {
    let args = [
        "run",
        "--observable",
        "total-number",
        "--state",
        "1,0",
        "--t-end",
        "2.0",
        "--samples",
        "21",
    ];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_eq!(a.stdout, b.stdout, "byte-identical reruns expected");
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# params_hash")));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t_ns,value");
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), 21);
    let first: Vec<f64> = data[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert!((first[1] - 1.0).abs() < 1e-12);
}

#[test]
fn json_format_parses_and_echoes_metadata() {
    let out = run_ok(&[
        "run",
        "--observable",
        "strangeness",
        "--state",
        "ns:2",
        "--t-end",
        "1.0",
        "--samples",
        "5",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["metadata"]["observable"], "strangeness");
    assert_eq!(v["metadata"]["state"], "ns:2");
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn compare_mode_respects_tolerance_exit_codes() {
    let base = [
        "run",
        "--observable",
        "total-number",
        "--state",
        "1,0",
        "--t-end",
        "1.0",
        "--samples",
        "3",
        "--mode",
        "compare",
        "--cutoff",
        "1",
    ];
    let mut ok = base.to_vec();
    ok.extend(["--tol", "1e-8"]);
    assert_eq!(exit_code(&ok), 0);
    let mut tight = base.to_vec();
    tight.extend(["--tol", "1e-300"]);
    assert_eq!(exit_code(&tight), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        exit_code(&["run", "--observable", "total-number", "--samples", "1"]),
        1,
        "bad grid"
    );
    assert_eq!(
        exit_code(&["run", "--observable", "total-number", "--state", "nonsense"]),
        1,
        "bad state"
    );
    assert_eq!(
        exit_code(&[
            "run",
            "--observable",
            "total-number",
            "--params",
            "/nonexistent/params.txt",
        ]),
        1,
        "missing params file"
    );
}

#[test]
fn params_file_and_env_are_honored() {
    let dir = std::env::temp_dir().join(format!("kaondyn-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path: PathBuf = dir.join("params.txt");
    std::fs::write(
        &path,
        "tau_S_ns = 0.1\ntau_L_ns = 50\ndelta_m_per_ns = 5\nA_L = 0\n",
    )
    .unwrap();
    let args =
        ["run", "--observable", "total-number", "--t-end", "1.0", "--samples", "2", "--params"];
    let mut with_flag = args.to_vec();
    let path_str = path.to_str().unwrap();
    with_flag.push(path_str);
    let out_flag = run_ok(&with_flag);

    let out_env = bin()
        .args(["run", "--observable", "total-number", "--t-end", "1.0", "--samples", "2"])
        .env("KAON_PARAMS", path_str)
        .output()
        .unwrap();
    assert!(out_env.status.success());
    // identical physics, identical bytes apart from the source annotation
    let strip = |b: &[u8]| {
        String::from_utf8(b.to_vec())
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("# params_source"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&out_flag.stdout), strip(&out_env.stdout));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn figures_command_writes_four_files() {
    let dir = std::env::temp_dir().join(format!("kaondyn-cli-figs-{}", std::process::id()));
    let out = bin()
        .args(["figures", "--out", dir.to_str().unwrap()])
        .env_remove("KAON_PARAMS")
        .output()
        .unwrap();
    assert!(out.status.success());
    for name in ["fig1.csv", "fig2.csv", "fig3.csv", "fig4.csv"] {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        let data_rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(data_rows, 902, "{name}: header + 901 samples");
    }
    std::fs::remove_dir_all(&dir).ok();
}
