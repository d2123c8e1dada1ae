use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fujita-lab");

const ODE: &str = "\
weight.kind = axis
weight.exponent = 0
dim = 1
p = 2
grid.L = 4
grid.cells = 64
time.horizon = 5
data.kind = constant
data.amplitude = 1
";

const SWEEP: &str = "\
weight.kind = axis
weight.exponent = 0
dim = 1
p = 2
grid.L = 32
grid.cells = 256
time.horizon = 20
data.kind = bump
data.amplitude = 1
sweep.p = 1.5, 2, 4
sweep.alpha = -0.5, 0, 0.5
";

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn fujita(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("FUJITA_LAB_OUT");
    if let Some(p) = env_out {
        c.env("FUJITA_LAB_OUT", p);
    }
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ode_blow_up_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ode.cfg", ODE);
    let out = dir.path().join("out");
    let o = fujita(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "simulate",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("BlowUp t∈["), "{s}");
    let inner = s.trim().trim_start_matches("BlowUp t∈[").trim_end_matches(']');
    let (lo, hi) = inner.split_once(',').unwrap();
    let (lo, hi): (f64, f64) = (lo.parse().unwrap(), hi.parse().unwrap());
    assert!(lo >= 0.98 && hi <= 1.02 && lo <= hi);
    assert!(out.join("run.json").exists());
    assert!(out.join("channel_strong_inf.csv").exists());
}

#[test]
fn simulate_artifacts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ode.cfg", &ODE.replace("constant", "bump"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = fujita(
            &[
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "simulate",
            ],
            None,
        );
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["run.json", "channel_strong_inf.csv", "channel_mass.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn weight_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let good = write(
        dir.path(),
        "good.cfg",
        "weight.kind = axis\nweight.exponent = 0.5\ndim = 1\n",
    );
    let o = fujita(
        &[
            "--config",
            good.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "weight-check",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("weight_check.json")).unwrap();
    assert!(report.contains("\"pass\": true"));

    let bad = write(
        dir.path(),
        "bad.cfg",
        "weight.kind = axis\nweight.exponent = 1.5\ndim = 1\n",
    );
    let o = fujita(&["--config", bad.to_str().unwrap(), "weight-check"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("weight.exponent"));

    let missing = write(dir.path(), "missing.cfg", "weight.kind = axis\ndim = 1\n");
    let o = fujita(&["--config", missing.to_str().unwrap(), "weight-check"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("weight.exponent"));
}

#[test]
fn corrupt_and_unknown_configs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("corrupt.cfg", "weight.kind axis\n"),
        (
            "unknown.cfg",
            "weight.kind = axis\nweight.exponent = 0\ncolour = blue\n",
        ),
        ("dup.cfg", "weight.exponent = 0\nweight.exponent = 0.5\n"),
    ] {
        let cfg = write(dir.path(), name, text);
        let o = fujita(&["--config", cfg.to_str().unwrap(), "kernel-verify"], None);
        assert_eq!(o.status.code(), Some(2), "{name}");
    }
    let o = fujita(&["weight-check"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kernel_verify_gaussian_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "k.cfg",
        "weight.kind = axis\nweight.exponent = 0\ndim = 1\ngrid.L = 16\ngrid.cells = 512\n\
         kernel.t0 = 0.1\nkernel.t1 = 1\nkernel.dt = 0.001\n",
    );
    let out = dir.path().join("out");
    let o = fujita(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "kernel-verify",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("gaussian"));
    let csv = std::fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert!(csv.starts_with("t,x,value"));
}

#[test]
fn contaminated_kernel_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "k.cfg",
        "weight.kind = axis\nweight.exponent = 0\ndim = 1\ngrid.L = 2\ngrid.cells = 64\n\
         kernel.t0 = 0.1\nkernel.t1 = 10\nkernel.dt = 0.01\n",
    );
    let o = fujita(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "kernel-verify",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sweep_is_deterministic_and_honours_output_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.cfg",
        &format!("{SWEEP}output.dir = {}\n", dir.path().join("cfg").display()),
    );
    let cfg = cfg.to_str().unwrap();
    let env_dir = dir.path().join("env");
    let flag_dir = dir.path().join("flag");

    assert_eq!(
        fujita(&["--config", cfg, "--jobs", "3", "sweep"], None).status.code(),
        Some(0)
    );
    assert_eq!(
        fujita(&["--config", cfg, "--jobs", "1", "sweep"], Some(&env_dir))
            .status
            .code(),
        Some(0)
    );
    let o = fujita(
        &["--config", cfg, "--out", flag_dir.to_str().unwrap(), "sweep"],
        Some(&env_dir),
    );
    assert_eq!(o.status.code(), Some(0));

    let a = std::fs::read_to_string(dir.path().join("cfg/sweep.csv")).unwrap();
    let b = std::fs::read_to_string(env_dir.join("sweep.csv")).unwrap();
    let c = std::fs::read_to_string(flag_dir.join("sweep.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.lines().count(), 10);
    assert!(a.starts_with("p,alpha,N,"));
}

#[test]
fn fit_recovers_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,value\n");
    for i in 0..=40 {
        let t = 10f64.powf(i as f64 / 10.0);
        csv.push_str(&format!("{t},{}\n", t.powf(-1.0 / 3.0)));
    }
    let series = write(dir.path(), "s.csv", &csv);
    let out = dir.path().join("out");
    let o = fujita(
        &[
            "fit",
            series.to_str().unwrap(),
            "--window",
            "1,100",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let slope: f64 = stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((slope + 1.0 / 3.0).abs() < 1e-12);

    let broken = write(dir.path(), "broken.csv", "t,value\n1,2,3\n");
    assert_eq!(fujita(&["fit", broken.to_str().unwrap()], None).status.code(), Some(2));
}

#[test]
fn picard_reports_monotone_iterates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "picard.cfg",
        "weight.kind = axis\nweight.exponent = 0\ndim = 1\np = 2\ngrid.L = 8\ngrid.cells = 128\n\
         time.horizon = 1\ntime.dt0 = 0.001\ndata.kind = bump\ndata.amplitude = 0.5\ndata.radius = 2\n\
         picard.iterations = 4\npicard.tau = 0.2\n",
    );
    let out = dir.path().join("out");
    let o = fujita(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "picard",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("monotone true"));
    assert!(out.join("picard.json").exists());
}
