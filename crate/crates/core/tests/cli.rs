use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gepsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gepsim"))
        .current_dir(dir)
        .env("GEPSIM_THREADS", "1")
        .args(args)
        .output()
        .expect("spawn gepsim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    lines
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

fn generate_symmetric(dir: &Path) {
    let out = gepsim(
        dir,
        &[
            "generate",
            "--family",
            "symmetric",
            "--n",
            "4",
            "--kappa-b",
            "100",
            "--spectrum",
            "1,2,3,4",
            "--seed",
            "7",
            "-o",
            "inst.gep",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn generate_reports_kappa_e() {
    let dir = tempfile::tempdir().unwrap();
    generate_symmetric(dir.path());
    let out = gepsim(
        dir.path(),
        &[
            "generate",
            "--family",
            "symmetric",
            "--n",
            "4",
            "--kappa-b",
            "100",
            "--spectrum",
            "1,2,3,4",
            "--seed",
            "7",
            "-o",
            "inst.gep",
        ],
    );
    let text = stdout(&out);
    let kappa_e: f64 = text
        .split_whitespace()
        .find_map(|w| w.strip_prefix("kappa_E="))
        .expect("kappa_E in summary")
        .parse()
        .unwrap();
    assert!((kappa_e - 10.0).abs() < 1e-6, "{text}");
    assert!(dir.path().join("inst.gep").exists());
}

#[test]
fn generate_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&gepsim(
            dir.path(),
            &["generate", "--family", "symmetric", "-o", "x.gep"]
        )),
        2
    );
    assert_eq!(
        code(&gepsim(
            dir.path(),
            &["generate", "--family", "nonsense", "--n", "2", "-o", "x.gep"]
        )),
        2
    );
    let out = gepsim(
        dir.path(),
        &[
            "generate",
            "--family",
            "quadratic",
            "--n",
            "2",
            "--coeffs",
            "0:1:2",
            "-o",
            "x.gep",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("SingularLeadingCoefficient"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn run_ode_meets_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    generate_symmetric(dir.path());
    let out = gepsim(
        dir.path(),
        &[
            "run",
            "--instance",
            "inst.gep",
            "--method",
            "ode",
            "--epsilon",
            "0.05",
            "--phi0",
            "modes",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let errs = csv_column(&stdout(&out), "abs_err");
    assert_eq!(errs.len(), 4);
    assert!(errs.iter().all(|e| e.parse::<f64>().unwrap() <= 0.05));
}

#[test]
fn run_csv_has_stable_columns() {
    let dir = tempfile::tempdir().unwrap();
    generate_symmetric(dir.path());
    let out = gepsim(
        dir.path(),
        &[
            "run",
            "--instance",
            "inst.gep",
            "--epsilon",
            "0.1",
            "--phi0",
            "eigvec:0",
            "-o",
            "run.csv",
            "--plot",
            "plot.py",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "instance_id,method,n,epsilon,rho,p,h,tau,kappaM,kappaM_bound_ratio,truncation_residual,j,lambda_true,lambda_est,abs_err,peak_mass"
    );
    let masses = csv_column(&csv, "peak_mass");
    assert!(masses.iter().all(|m| m.parse::<f64>().unwrap() >= 0.405));
    assert!(fs::read_to_string(dir.path().join("plot.py"))
        .unwrap()
        .contains("run.csv"));
}

#[test]
fn qpe_rejects_nonsymmetric_pencil() {
    let dir = tempfile::tempdir().unwrap();
    let gen = gepsim(
        dir.path(),
        &[
            "generate",
            "--family",
            "diagonalizable_real",
            "--n",
            "3",
            "--seed",
            "1",
            "-o",
            "d.gep",
        ],
    );
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    assert_eq!(
        code(&gepsim(
            dir.path(),
            &[
                "run",
                "--instance",
                "d.gep",
                "--method",
                "qpe",
                "--epsilon",
                "0.1"
            ]
        )),
        2
    );
}

#[test]
fn singular_b_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = |name: &str, body: &str| fs::write(dir.path().join(name), body).unwrap();
    mtx(
        "a.mtx",
        "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 2.0\n",
    );
    mtx(
        "b.mtx",
        "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n",
    );
    let out = gepsim(
        dir.path(),
        &[
            "generate",
            "--family",
            "diagonalizable_real",
            "--n",
            "2",
            "--a-mtx",
            "a.mtx",
            "--b-mtx",
            "b.mtx",
            "-o",
            "s.gep",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for args in [
        &["run", "--instance", "s.gep", "--epsilon", "0.1"][..],
        &["verify-be", "--instance", "s.gep"],
        &["report", "--instance", "s.gep"],
    ] {
        let out = gepsim(dir.path(), args);
        assert_eq!(code(&out), 4, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains("SingularB"));
    }
}

#[test]
fn sweep_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sweep.cfg"),
        "# three epsilons, two repetitions\nfamily = symmetric\nn = 2\ninstances = 1\nepsilons = 0.2,0.1,0.05\nreps = 2\nseed = 3\n",
    )
    .unwrap();
    let a = gepsim(dir.path(), &["sweep", "--config", "sweep.cfg"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let b = gepsim(dir.path(), &["sweep", "--config", "sweep.cfg"]);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 1 + 6);
    let upper = csv_column(&text, "norm_upper_ratio");
    assert!(
        upper.iter().all(|r| r.parse::<f64>().unwrap() <= 1.0),
        "{upper:?}"
    );
}

#[test]
fn sweep_missing_config_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&gepsim(dir.path(), &["sweep", "--config", "absent.cfg"])),
        3
    );
}

#[test]
fn verify_be_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let gen = gepsim(
        dir.path(),
        &[
            "generate",
            "--family",
            "symmetric",
            "--n",
            "1",
            "--seed",
            "2",
            "-o",
            "one.gep",
        ],
    );
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    let ok = gepsim(
        dir.path(),
        &["verify-be", "--instance", "one.gep", "--p", "3"],
    );
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(stdout(&ok).contains("unitarity"));

    generate_symmetric(dir.path());
    assert_eq!(
        code(&gepsim(
            dir.path(),
            &["verify-be", "--instance", "inst.gep", "--p", "129"]
        )),
        2
    );

    fs::write(dir.path().join("bad.gep"), "not an instance\n").unwrap();
    assert_eq!(
        code(&gepsim(dir.path(), &["verify-be", "--instance", "bad.gep"])),
        3
    );
}

#[test]
fn baseline_compare_and_report() {
    let dir = tempfile::tempdir().unwrap();
    generate_symmetric(dir.path());
    let cmp = gepsim(
        dir.path(),
        &[
            "baseline-compare",
            "--instance",
            "inst.gep",
            "--epsilon",
            "0.1",
        ],
    );
    assert_eq!(code(&cmp), 0, "{}", stderr(&cmp));
    assert!(csv_column(&stdout(&cmp), "agree")
        .iter()
        .all(|a| a == "true"));
    let rep = gepsim(
        dir.path(),
        &["report", "--instance", "inst.gep", "--epsilon", "0.1"],
    );
    assert_eq!(code(&rep), 0, "{}", stderr(&rep));
    assert!(stdout(&rep).contains("kappa_M"));
}
