use std::path::{Path, PathBuf};

use fredstab_cli::run;

const CONFIG: &str = r#"{
  "plant": {"tau0": 1, "tau1": 1, "a": 0.3, "b": 0, "N": "0.6+sin(pi*v)/5", "M": "cos(v)"}
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fredstab").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn sub(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    invoke(&args)
}

#[test]
fn verify_passes_on_reference_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (code, out, err) = sub("verify", &cfg, dir.path(), &[]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("verify: all checks passed"), "{out}");
    assert!(!out.contains("FAIL"), "{out}");
}

#[test]
fn iteration_cap_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (code, _, err) =
        sub("kernels", &cfg, dir.path(), &["--method", "iterative", "--maxiter", "3", "--tol", "1e-10"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("3 iterations"), "{err}");
}

#[test]
fn iterative_method_agrees_with_direct_on_small_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let small = r#"{"plant": {"tau0": 1, "tau1": 1.5, "a": 0.3, "b": 1,
        "N": "0.006+sin(pi*v)/500", "M": "0.01*cos(v)"}}"#;
    let cfg = write_config(dir.path(), small);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(sub("kernels", &cfg, &a, &["--n", "40"]).0, 0);
    assert_eq!(sub("kernels", &cfg, &b, &["--n", "40", "--method", "iterative"]).0, 0);
    // right limits only: a jump row shares its `nu` with the row after it
    let read = |d: &Path| -> Vec<f64> {
        let mut rows: Vec<(String, f64)> = Vec::new();
        for l in std::fs::read_to_string(d.join("kernel_g.csv")).unwrap().lines().skip(1) {
            let (nu, v) = l.split_once(',').unwrap();
            if rows.last().is_some_and(|r| r.0 == nu) {
                rows.pop();
            }
            rows.push((nu.to_owned(), v.parse().unwrap()));
        }
        rows.into_iter().map(|r| r.1).collect()
    };
    let (ga, gb) = (read(&a), read(&b));
    assert_eq!((ga.len(), gb.len()), (61, 61));
    let diff = ga.iter().zip(&gb).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff < 1e-8, "{diff}");
}

#[test]
fn iteration_on_reference_config_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (code, _, err) = sub("kernels", &cfg, dir.path(), &["--n", "40", "--method", "iterative"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("diverge"), "{err}");
}

#[test]
fn open_loop_simulation_grows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (code, out, err) = sub("simulate", &cfg, dir.path(), &["--mode", "open"]);
    assert_eq!(code, 0, "{out}{err}");
    let csv = std::fs::read_to_string(dir.path().join("open_loop.csv")).unwrap();
    assert!(csv.starts_with("t,x,U\n"));
    assert!(!dir.path().join("closed_loop.csv").exists());
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let mut c = l.split(',');
            (c.next().unwrap().parse().unwrap(), c.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows[0].0, -1.0);
    let sup = |lo: f64, hi: f64| {
        rows.iter().filter(|r| r.0 >= lo && r.0 <= hi).fold(0.0f64, |m, r| m.max(r.1.abs()))
    };
    assert!(sup(19.0, 20.0) > sup(0.0, 1.0));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(sub("kernels", &cfg, d, &["--n", "50"]).0, 0);
        assert_eq!(sub("simulate", &cfg, d, &["--n", "50", "--dt", "0.02", "--t-max", "5"]).0, 0);
        assert_eq!(sub("spectrum", &cfg, d, &[]).0, 0);
    }
    for name in ["kernel_f.csv", "kernel_g.csv", "residuals.csv", "open_loop.csv", "closed_loop.csv", "roots.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty() && x == y, "{name}");
    }
}

#[test]
fn spectrum_finds_the_real_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (code, out, err) = sub("spectrum", &cfg, dir.path(), &[]);
    assert_eq!(code, 0, "{out}{err}");
    let csv = std::fs::read_to_string(dir.path().join("roots.csv")).unwrap();
    assert!(csv.starts_with("re,im,abs_F,multiplicity\n"));
    let real = csv.lines().skip(1).any(|l| {
        let c: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        c[1].abs() < 1e-9 && (c[0] - 0.0419).abs() < 1e-3
    });
    assert!(real, "{csv}");
}

#[test]
fn check_reports_controllability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (code, out, err) = sub("check", &cfg, dir.path(), &[]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("principal-part") && out.contains("spectral controllability: pass"), "{out}");
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (CONFIG.replace("\"a\": 0.3, ", ""), "plant.a"),
        (CONFIG.replace("0.3", "1.5"), "principal-part"),
        (CONFIG.replace("\"b\": 0", "\"b\": 0, \"extra\": 1"), "extra"),
    ];
    for (text, needle) in cases {
        let cfg = write_config(dir.path(), &text);
        let (code, _, err) = sub("check", &cfg, dir.path(), &[]);
        assert_eq!(code, 1, "{err}");
        assert!(err.contains(needle), "{needle}: {err}");
    }
    let cfg = write_config(dir.path(), CONFIG);
    let (code, _, err) = sub("kernels", &cfg, dir.path(), &["--n", "4"]);
    assert_eq!(code, 1);
    assert!(err.contains("numerics.n"), "{err}");
}

#[test]
fn missing_files_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = sub("check", &dir.path().join("nope.json"), dir.path(), &[]);
    assert_eq!(code, 3, "{err}");

    let cfg = write_config(dir.path(), CONFIG);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let (code, _, err) = sub("spectrum", &cfg, &blocker.join("sub"), &[]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn bad_arguments_exit_one() {
    let (code, _, err) = invoke(&["simulate", "--config", "x.json", "--mode", "sideways"]);
    assert_eq!(code, 1, "{err}");
    let (code, out, _) = invoke(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("verify"));
}

#[test]
fn shipped_configs_verify() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for name in ["reference.json", "regular.json"] {
        let (code, out, err) = sub("verify", &root.join(name), dir.path(), &[]);
        assert_eq!(code, 0, "{name}: {out}{err}");
    }
}
