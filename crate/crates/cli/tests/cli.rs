use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn small_config() -> Value {
    json!({
        "model": { "kappa": 2.0, "m": 0.04, "sigma": 0.3, "rho": 0.1, "r": 0.0 },
        "option": { "strike": 1.0, "maturity": 1.0, "kind": "call" },
        "domain": { "x_min": -1.2, "x_max": 1.2, "a": 0.0001, "y_max": 0.4, "nx": 64, "ny": 48 },
        "time": { "maturity": 1.0, "steps": 64 },
        "mc": { "paths": 20000, "steps": 50, "seed": 3 },
        "y0": 0.04
    })
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(cfg: &Value) -> Run {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("run.json"), serde_json::to_string_pretty(cfg).unwrap()).unwrap();
        Run { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("run.json")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, cmd: &str, out: &str, extra: &[&str], env: &[(&str, &str)]) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_hestonvar"));
        c.arg(cmd).arg("--config").arg(self.config()).arg("--out").arg(self.out(out));
        c.args(extra);
        for (k, v) in env {
            c.env(k, v);
        }
        c.output().unwrap()
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `method -> (price, std_error, abs_diff)` from compare.csv.
fn compare_rows(text: &str) -> Vec<(String, f64, Option<f64>, f64)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,price,std_error,abs_diff_vs_analytic"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().ok(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn feasibility_reports_the_tightest_constraint() {
    let run = Run::new(&small_config());
    let o = run.exec("feasibility", "f", &[], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("eps3-window"));
    let cert: Value = serde_json::from_str(&read(&run.out("f").join("certificate.json"))).unwrap();
    let obj = cert.as_object().unwrap();
    assert_eq!(obj["certified"], "false");
    assert_eq!(obj["failing_constraint"], "eps3-window");
    assert!(obj.values().all(Value::is_string));
    assert!(obj.keys().all(|k| k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("alpha6-eps3") && l.contains("FAIL")));
}

#[test]
fn strong_correlation_fails_the_rho_window() {
    let run = Run::new(&small_config());
    let o = run.exec("feasibility", "f", &["--set", "model.rho=0.99"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rho-window"));
}

#[test]
fn feller_violation_is_named() {
    let run = Run::new(&small_config());
    let o = run.exec("feasibility", "f", &["--set", "model.sigma=0.9"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("feller"));
}

#[test]
fn explicit_tuple_is_certified_not_searched() {
    let mut cfg = small_config();
    cfg["variational"] = json!({ "a": 0.0001, "nu": 0.01, "mu": 1.0, "omega": 1.05 });
    cfg["epsilons"] = json!({ "eps1": 0.1, "eps2": 0.5, "eps3": 0.5 });
    cfg["delta"] = json!(0.05);
    let run = Run::new(&cfg);
    let o = run.exec("feasibility", "f", &[], &[]);
    assert_eq!(o.status.code(), Some(2));
    let cert: Value = serde_json::from_str(&read(&run.out("f").join("certificate.json"))).unwrap();
    assert_eq!(cert["nu"], "0.01");
    assert_eq!(cert["omega"], "1.05");
}

#[test]
fn configuration_errors_exit_with_4() {
    let run = Run::new(&small_config());
    type Case<'a> = (&'a [&'a str], &'a [(&'a str, &'a str)]);
    let cases: [Case; 5] = [
        (&["--set", "bogus=1"], &[]),
        (&["--set", "model.kappa=-1"], &[]),
        (&["--set", "time.maturity=2.0"], &[]),
        (&["--set", "noequals"], &[]),
        (&[], &[("HESTONVAR_THREADS", "0")]),
    ];
    for (extra, env) in cases {
        let o = run.exec("mc-compare", "e", extra, env);
        assert_eq!(o.status.code(), Some(4), "{extra:?} {env:?}: {}", stderr(&o));
    }
    let mut cfg = small_config();
    cfg.as_object_mut().unwrap().remove("y0");
    assert_eq!(Run::new(&cfg).exec("price", "e", &[], &[]).status.code(), Some(4));

    let o = Command::new(env!("CARGO_BIN_EXE_hestonvar")).args(["price", "--nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    let o = Command::new(env!("CARGO_BIN_EXE_hestonvar"))
        .args(["mc-compare", "--config"])
        .arg(run.config())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "missing output directory");
}

#[test]
fn price_writes_all_outputs_and_agrees_with_the_oracles() {
    let run = Run::new(&small_config());
    let o = run.exec("price", "p", &[], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let dir = run.out("p");

    let rows = compare_rows(&read(&dir.join("compare.csv")));
    let methods: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(methods, ["pde", "analytic", "mc", "pde-flipped", "parity"]);
    let analytic = rows[1].1;
    assert!((rows[0].1 - analytic).abs() <= 0.05 * analytic, "{rows:?}");
    let (mc, se) = (rows[2].1, rows[2].2.unwrap());
    assert!((mc - analytic).abs() <= 4.0 * se);
    assert!(rows[4].3 <= 1e-10);

    let surface = read(&dir.join("surface.csv"));
    assert!(surface.starts_with("S,y,U\n"));
    assert_eq!(surface.lines().count(), 1 + 65 * 49);
    assert!(!surface.contains('\r'));

    let norms = read(&dir.join("norms.csv"));
    assert!(norms.starts_with("t,l2_norm\n0,0\n"));
    assert_eq!(norms.lines().count(), 1 + 65);

    let cert: Value = serde_json::from_str(&read(&dir.join("certificate.json"))).unwrap();
    assert_eq!(cert["certified"], "false");
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let run = Run::new(&small_config());
    assert!(run.exec("price", "a", &[], &[("HESTONVAR_THREADS", "1")]).status.success());
    assert!(run.exec("price", "b", &[], &[("HESTONVAR_THREADS", "3")]).status.success());
    for f in ["compare.csv", "surface.csv", "norms.csv", "certificate.json"] {
        assert_eq!(fs::read(run.out("a").join(f)).unwrap(), fs::read(run.out("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn strike_line_outside_the_domain_gives_the_discounted_payoff() {
    let mut cfg = small_config();
    cfg["option"] = json!({ "strike": 20.0, "maturity": 1.0, "kind": "put" });
    cfg["model"]["r"] = json!(0.02);
    let run = Run::new(&cfg);
    let o = run.exec("price", "p", &[], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = compare_rows(&read(&run.out("p").join("compare.csv")));
    let baseline = 20.0 * (-0.02f64).exp() - 1.0;
    assert!((rows[0].1 - baseline).abs() <= 1e-12, "{rows:?}");
}

#[test]
fn spot_rescaling_matches_the_unit_spot_run() {
    let unit = Run::new(&small_config());
    let mut cfg = small_config();
    cfg["s0"] = json!(100.0);
    cfg["option"]["strike"] = json!(100.0);
    let scaled = Run::new(&cfg);
    assert!(unit.exec("price", "p", &[], &[]).status.success());
    assert!(scaled.exec("price", "p", &[], &[]).status.success());
    let a = compare_rows(&read(&unit.out("p").join("compare.csv")));
    let b = compare_rows(&read(&scaled.out("p").join("compare.csv")));
    for i in [0, 1] {
        assert!((100.0 * a[i].1 - b[i].1).abs() <= 1e-9 * b[i].1, "{a:?} {b:?}");
    }
}

#[test]
fn mc_compare_stays_within_three_standard_errors() {
    let run = Run::new(&small_config());
    let o = run.exec("mc-compare", "m", &[], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = compare_rows(&read(&run.out("m").join("compare.csv")));
    assert_eq!(rows.len(), 2);
    assert!(rows[1].3 <= 3.0 * rows[1].2.unwrap(), "{rows:?}");
}

#[test]
fn convergence_sweeps_are_deterministic_and_refine() {
    let mut cfg = small_config();
    cfg["domain"]["nx"] = json!(24);
    cfg["domain"]["ny"] = json!(16);
    cfg["time"]["steps"] = json!(16);
    let run = Run::new(&cfg);
    assert!(run.exec("convergence", "a", &[], &[]).status.success());
    assert!(run.exec("convergence", "b", &[], &[]).status.success());
    let text = read(&run.out("a").join("convergence.csv"));
    assert_eq!(
        fs::read(run.out("a").join("convergence.csv")).unwrap(),
        fs::read(run.out("b").join("convergence.csv")).unwrap()
    );

    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sweep,level,nx,ny,nt,y_max,price,delta,observed_order"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    let deltas = |sweep: &str| -> Vec<f64> {
        rows.iter().filter(|r| r[0] == sweep && !r[7].is_empty()).map(|r| r[7].parse().unwrap()).collect()
    };
    for sweep in ["nx", "ny", "nt", "y_max"] {
        let d = deltas(sweep);
        assert!(d[1] < d[0], "{sweep}: {d:?}");
    }
    let d = deltas("y_max");
    assert!(d[1] < d[0], "{d:?}");
    let order =
        |sweep: &str| -> f64 { rows.iter().find(|r| r[0] == sweep && r[1] == "2").unwrap()[8].parse().unwrap() };
    assert!(order("nx") >= 1.0, "{text}");
    assert!(order("nt") >= 0.9, "{text}");
}
