use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dperm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dperm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SWEEP: &[&str] = &[
    "sweep-clip",
    "--planted-n",
    "200",
    "--planted-d",
    "4",
    "--epsilon",
    "2",
    "--candidates",
    "p0,p50,p100,3.5",
    "--seeds",
    "1,2",
    "--iterations",
    "30",
    "--expected-batch",
    "20",
    "--step-sizes",
    "0.1,1",
];

const RNMM: &[&str] = &[
    "rnmm-pipeline",
    "--planted-n",
    "200",
    "--planted-d",
    "4",
    "--n-test",
    "50",
    "--epsilon-rnmm",
    "0.5",
    "--epsilon-dpsgd",
    "1.5",
    "--epsilon-total",
    "2",
    "--rnmm-clamp",
    "20",
    "--seed-count",
    "3",
    "--iterations",
    "30",
    "--expected-batch",
    "20",
    "--step-size",
    "0.5",
];

const PHI: &[&str] = &[
    "phi-scaling",
    "--n-values",
    "100,200",
    "--d",
    "2",
    "--tail-k",
    "2",
    "--epsilon",
    "2",
    "--seeds",
    "1,2,3",
    "--max-iterations",
    "100",
    "--expected-batch",
    "10",
];

const BIAS: &[&str] = &["bias-oracle", "--count", "10", "--seed", "5"];

const LOWER: &[&str] = &[
    "lower-bound-demo",
    "--d",
    "2",
    "--p",
    "0.3",
    "--k",
    "2",
    "--n",
    "60",
    "--seeds",
    "1,2",
    "--epsilon",
    "2",
    "--iterations",
    "40",
    "--expected-batch",
    "10",
    "--grid-step",
    "0.02",
];

#[test]
fn every_command_has_fixed_header_and_is_deterministic() {
    let cases: [(&[&str], &str); 5] = [
        (SWEEP, "tau,tau_kind,eta_best,mean_metric,std_metric"),
        (RNMM, "seed,tau_selected,tau_oracle,eps_rnmm,eps_dpsgd,metric_with,metric_without"),
        (PHI, "n,phi,k,median_risk"),
        (BIAS, "instance,p,tau,exact_bias,lemma_bound,corollary_bound,pass"),
        (
            LOWER,
            "seed,xbar_norm,degenerate,argmin_gap,empirical_moment,moment_target,risk,reference_scale",
        ),
    ];
    for (args, header) in cases {
        let first = dperm(args);
        assert!(
            first.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&first.stderr)
        );
        let second = dperm(args);
        assert_eq!(first.stdout, second.stdout, "{args:?} not deterministic");
        let text = stdout(&first);
        assert_eq!(text.lines().next(), Some(header));
        assert!(text.lines().count() > 1);
    }
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn csv_input_with_header_and_bias_column() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let mut text = String::from("x1,x2,label\n");
    for i in 0..60 {
        let t = i as f64 / 10.0;
        let label = usize::from(i % 2 == 1);
        let sign = if label == 1 { 1.0 } else { -1.0 };
        text.push_str(&format!("{},{},{label}\n", sign * (1.0 + t), 0.5 * t));
    }
    write(&train, &text);
    let out_path = dir.path().join("out.csv");
    let out = dperm(&[
        "sweep-clip",
        "--data",
        train.to_str().unwrap(),
        "--append-bias",
        "--epsilon",
        "inf",
        "--disable-noise",
        "--candidates",
        "inf,p50",
        "--seeds",
        "0",
        "--iterations",
        "20",
        "--expected-batch",
        "60",
        "--step-sizes",
        "0.5",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    // An infinite ε is not a valid privacy budget.
    assert_eq!(out.status.code(), Some(1));

    let out = dperm(&[
        "sweep-clip",
        "--data",
        train.to_str().unwrap(),
        "--append-bias",
        "--epsilon",
        "1",
        "--disable-noise",
        "--candidates",
        "inf,p50",
        "--seeds",
        "0",
        "--iterations",
        "20",
        "--expected-batch",
        "60",
        "--step-sizes",
        "0.5",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    let written = fs::read_to_string(&out_path).unwrap();
    let rows: Vec<&str> = written.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("inf,inf,"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bias.json");
    let out_path = dir.path().join("bias.csv");
    write(
        &cfg,
        &format!(
            r#"{{"command": "bias-oracle", "count": 4, "seed": 1, "output": {:?}}}"#,
            out_path.to_str().unwrap()
        ),
    );
    let out = dperm(&[
        "bias-oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--count",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&out_path).unwrap();
    // Two-atom instance (3 rows) plus 2 random instances × 3 p-values × 7 taus.
    assert_eq!(text.lines().count(), 1 + 3 + 2 * 3 * 7);

    let wrong = dperm(&["sweep-clip", "--config", cfg.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(dperm(&["--help"]).status.code(), Some(0));
    assert_eq!(dperm(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        dperm(&["bias-oracle", "--count", "abc"]).status.code(),
        Some(1)
    );
    // Missing required spec fields.
    assert_eq!(
        dperm(&["phi-scaling", "--epsilon", "1"]).status.code(),
        Some(1)
    );
    // Domain violation.
    assert_eq!(
        dperm(&["bias-oracle", "--count", "3", "--p-values", "0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        dperm(&["bias-oracle", "--config", "/nonexistent/spec.json"])
            .status
            .code(),
        Some(3)
    );
    let mut args = SWEEP.to_vec();
    args.truncate(1);
    args.extend([
        "--data",
        "/nonexistent/train.csv",
        "--epsilon",
        "1",
        "--candidates",
        "p0",
    ]);
    args.extend([
        "--seeds",
        "1",
        "--iterations",
        "5",
        "--expected-batch",
        "5",
        "--step-sizes",
        "0.1",
    ]);
    assert_eq!(dperm(&args).status.code(), Some(3));
}

#[test]
fn malformed_csv_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("bad.csv");
    write(&train, "1.0,2.0,0\n1.0,zzz,1\n");
    let out = dperm(&[
        "sweep-clip",
        "--data",
        train.to_str().unwrap(),
        "--epsilon",
        "1",
        "--candidates",
        "p0",
        "--seeds",
        "1",
        "--iterations",
        "5",
        "--expected-batch",
        "1",
        "--step-sizes",
        "0.1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
