//! Subcommand implementations.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use fredstab::fredholm::{assemble, residuals, solve_direct, solve_successive, FredholmError};
use fredstab::quadrature::PiecewiseSamples;
use fredstab::simulator::{
    estimate_decay_rate, estimate_input_decay_rate, simulate, Feedback, History, SimError,
};
use fredstab::spectral::{
    check_spectral_controllability, find_zeros, sampling_limit, CharF0, ClosedLoop,
    Controllability, SpectralError, CONTROLLABILITY_TOL, DEFAULT_NSPEC,
};
use fredstab::{ControllerKernels, KernelCase, KernelExpr, ResidualReport, Trajectory};

use crate::config::{check_numerics, load_config, Method, RunConfig};
use crate::{CliError, Command, Common, Mode};

const RESIDUAL_TOL: f64 = 1e-3;
const CHARFUN_TOL: f64 = 5e-3;
const RATE_REL_TOL: f64 = 0.1;
const DECAY_RATIO_TOL: f64 = 1e-3;

impl From<FredholmError> for CliError {
    fn from(e: FredholmError) -> Self {
        match e {
            FredholmError::InvalidCase(_) | FredholmError::AssumptionViolated(_) | FredholmError::Model(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidRegion(_) | SpectralError::Sampling { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidArgument(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    let result = match cmd {
        Command::Check(c) => configured(c).and_then(|cfg| check(&cfg, &mut text)),
        Command::Kernels(c) => configured(c).and_then(|cfg| kernels(&cfg, &c.out, &mut text)),
        Command::Simulate { common, mode } => {
            configured(common).and_then(|cfg| simulate_cmd(&cfg, *mode, &common.out, &mut text))
        }
        Command::Spectrum(c) => configured(c).and_then(|cfg| spectrum(&cfg, &c.out, &mut text)),
        Command::Verify(c) => configured(c).and_then(|cfg| verify(&cfg, &mut text)),
    };
    out.write_all(text.as_bytes()).map_err(io)?;
    result
}

/// Loads the configuration and applies command-line overrides.
fn configured(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = load_config(&c.config)?;
    let num = &mut cfg.numerics;
    num.n = c.n.unwrap_or(num.n);
    num.method = c.method.unwrap_or(num.method);
    num.tol = c.tol.unwrap_or(num.tol);
    num.maxiter = c.maxiter.unwrap_or(num.maxiter);
    num.dt = c.dt.unwrap_or(num.dt);
    num.t_max = c.t_max.unwrap_or(num.t_max);
    let problems = check_numerics(&cfg.numerics, &cfg.spectrum);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("; ")));
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn check(cfg: &RunConfig, text: &mut String) -> Result<(), CliError> {
    let _ = write!(text, "{}", fredstab::model::validate(&cfg.plant));
    let report = check_spectral_controllability(&cfg.plant, cfg.spectrum.rect(), CONTROLLABILITY_TOL)?;
    let _ = writeln!(text, "open-loop roots in region: {}", report.root_count());
    for (r, f1) in report.roots.iter().zip(&report.f1_at_f0_roots) {
        let _ = writeln!(text, "  s = {:.10} {:+.10}i  |F1(s)| = {:e}", r.s.re, r.s.im, f1);
    }
    match report.controllability {
        Controllability::PassInRegion => {
            let _ = writeln!(text, "spectral controllability: pass");
            Ok(())
        }
        Controllability::Fail { witness, abs_f1 } => Err(CliError::Validation(format!(
            "spectral controllability fails at s = {witness} (|F1| = {abs_f1:e})"
        ))),
        Controllability::NotChecked => Err(CliError::Numerical(format!(
            "{} region(s) could not be resolved; controllability not established",
            report.unresolved.len()
        ))),
    }
}

fn solve(cfg: &RunConfig, text: &mut String) -> Result<ControllerKernels, CliError> {
    let d = assemble(&cfg.plant, cfg.numerics.n)?;
    let case = match d.case {
        KernelCase::Regular => "regular",
        KernelCase::Degenerate => "degenerate",
    };
    let _ = writeln!(text, "case: {case}; unknowns: {}", d.size());
    match cfg.numerics.method {
        Method::Direct => {
            let (k, info) = solve_direct(&d)?;
            let _ = writeln!(
                text,
                "direct solve: condition estimate {:e}, backward error {:e}",
                info.condition, info.backward_error
            );
            Ok(k)
        }
        Method::Iterative => {
            let (k, trace) = solve_successive(&d, cfg.numerics.tol, cfg.numerics.maxiter)?;
            let last = trace.last().copied().unwrap_or(0.0);
            let _ = writeln!(text, "successive approximations: {} iterations, last difference {last:e}", trace.len());
            Ok(k)
        }
    }
}

/// `nu,<name>`; a jump gives two rows at the same `nu`, left limit first.
fn samples_csv(name: &str, s: &PiecewiseSamples) -> String {
    let mut out = format!("nu,{name}\n");
    for i in 0..s.len() {
        let nu = i as f64 * s.step();
        if s.jumps().iter().any(|&(j, _)| j == i) {
            let _ = writeln!(out, "{},{}", nu, s.left(i));
        }
        let _ = writeln!(out, "{},{}", nu, s.right(i));
    }
    out
}

fn residuals_csv(r: &ResidualReport, k: &ControllerKernels) -> String {
    let mut out = String::from("equation,nu,residual\n");
    let rows = [("I1", 0.0, &r.i1), ("I2", k.tau0, &r.i2), ("I3", k.tau1, &r.i3)];
    for (name, origin, values) in rows {
        for (j, v) in values.iter().enumerate() {
            let _ = writeln!(out, "{name},{},{v}", origin + j as f64 * k.step);
        }
    }
    out
}

fn summarize_residuals(r: &ResidualReport, text: &mut String) {
    let _ = writeln!(text, "sup |I1| = {:e}", r.sup_i1);
    if !r.i2.is_empty() {
        let _ = writeln!(text, "sup |I2| = {:e}", r.sup_i2);
    }
    let _ = writeln!(text, "sup |I3| = {:e}", r.sup_i3);
}

fn kernels(cfg: &RunConfig, dir: &Path, text: &mut String) -> Result<(), CliError> {
    let k = solve(cfg, text)?;
    if k.case == KernelCase::Degenerate {
        let _ = writeln!(text, "f(0) = {}, f(tau0) = {}", k.f0, k.f1);
    }
    let r = residuals(&cfg.plant, &k)?;
    summarize_residuals(&r, text);
    write_file(dir, "kernel_f.csv", &samples_csv("f", &k.f))?;
    write_file(dir, "kernel_g.csv", &samples_csv("g", &k.g))?;
    write_file(dir, "residuals.csv", &residuals_csv(&r, &k))?;
    let _ = writeln!(text, "wrote kernel_f.csv, kernel_g.csv, residuals.csv to {}", dir.display());
    Ok(())
}

fn as_fn(e: &KernelExpr) -> impl Fn(f64) -> f64 + '_ {
    move |t| e.eval(t).unwrap_or(f64::NAN)
}

fn run_loop(cfg: &RunConfig, k: Option<&ControllerKernels>) -> Result<Trajectory, CliError> {
    let (x0, u0) = (as_fn(&cfg.x0), as_fn(&cfg.u0));
    let history = History { x0: &x0, u0: &u0 };
    let (plant, feedback) = match k {
        Some(k) => (cfg.plant.with_tau1(k.tau1), Feedback::Closed(k)),
        None => (cfg.plant.clone(), Feedback::Open(None)),
    };
    Ok(simulate(&plant, feedback, &history, cfg.numerics.t_max, cfg.numerics.dt)?)
}

fn rate_start(cfg: &RunConfig) -> f64 {
    3.0 * cfg.plant.tau0.max(cfg.plant.tau1)
}

fn describe(label: &str, cfg: &RunConfig, tr: &Trajectory, text: &mut String) {
    let w = tr.tau0;
    let t = tr.t_max();
    let _ = writeln!(
        text,
        "{label}: sup|x| on [0, {w}] = {:e}, on [{}, {t}] = {:e}",
        tr.sup_x(0.0, w),
        t - w,
        tr.sup_x(t - w, t)
    );
    match estimate_decay_rate(tr, rate_start(cfg)) {
        Ok(r) => {
            let _ = writeln!(text, "{label}: rate of |x| = {r}");
        }
        Err(e) => {
            let _ = writeln!(text, "{label}: rate of |x| unavailable ({e})");
        }
    }
}

fn simulate_cmd(cfg: &RunConfig, mode: Mode, dir: &Path, text: &mut String) -> Result<(), CliError> {
    if matches!(mode, Mode::Open | Mode::Both) {
        let tr = run_loop(cfg, None)?;
        describe("open loop", cfg, &tr, text);
        write_file(dir, "open_loop.csv", &tr.to_csv())?;
    }
    if matches!(mode, Mode::Closed | Mode::Both) {
        let k = solve(cfg, text)?;
        let tr = run_loop(cfg, Some(&k))?;
        describe("closed loop", cfg, &tr, text);
        if let Ok(r) = estimate_input_decay_rate(&tr, rate_start(cfg)) {
            let _ = writeln!(text, "closed loop: rate of |U| = {r}");
        }
        write_file(dir, "closed_loop.csv", &tr.to_csv())?;
    }
    let _ = writeln!(text, "wrote trajectories to {}", dir.display());
    Ok(())
}

fn spectrum(cfg: &RunConfig, dir: &Path, text: &mut String) -> Result<(), CliError> {
    let limit = sampling_limit(&cfg.plant, DEFAULT_NSPEC);
    if cfg.spectrum.im_max > limit {
        return Err(CliError::Validation(format!(
            "spectrum.im_max = {} exceeds the resolvable limit {limit}",
            cfg.spectrum.im_max
        )));
    }
    let f0 = CharF0::new(&cfg.plant, DEFAULT_NSPEC).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = find_zeros(&f0, cfg.spectrum.rect(), cfg.spectrum.root_tol)?;
    let _ = writeln!(text, "winding number: {}; roots: {}", report.winding_total, report.roots.len());
    let unstable = report.roots.iter().filter(|r| r.s.re >= 0.0).count();
    let _ = writeln!(text, "roots with Re s >= 0: {unstable}");
    write_file(dir, "roots.csv", &report.roots_csv())?;
    let _ = writeln!(text, "wrote roots.csv to {}", dir.display());
    if !report.unresolved.is_empty() {
        return Err(CliError::Numerical(format!("{} region(s) left unresolved", report.unresolved.len())));
    }
    Ok(())
}

fn verify(cfg: &RunConfig, text: &mut String) -> Result<(), CliError> {
    let mut failures = Vec::new();
    let mut record = |ok: bool, line: String, text: &mut String| {
        let _ = writeln!(text, "[{}] {line}", if ok { "pass" } else { "FAIL" });
        if !ok {
            failures.push(line);
        }
    };

    let k = solve(cfg, text)?;
    let r = residuals(&cfg.plant, &k)?;
    record(r.sup() <= RESIDUAL_TOL, format!("sup residual = {:e} (tol {RESIDUAL_TOL:e})", r.sup()), text);

    let (a, tau0) = (cfg.plant.a, cfg.plant.tau0);
    let cl = ClosedLoop::new(&cfg.plant, &k)?;
    let mut worst = 0.0f64;
    for i in -40..=40 {
        let s = Complex64::new(0.0, 0.5 * i as f64 / tau0);
        let target = 1.0 - a * (-tau0 * s).exp();
        worst = worst.max((cl.charfun(s)? - target).norm());
    }
    record(
        worst <= CHARFUN_TOL,
        format!("max |charfun(iw) - (1 - a e^(-tau0 iw))| = {worst:e} (tol {CHARFUN_TOL:e})"),
        text,
    );

    let tr = run_loop(cfg, Some(&k))?;
    let w = tr.tau0;
    let t = tr.t_max();
    let ratio = tr.sup_x(t - w, t) / tr.sup_x(0.0, w);
    record(ratio <= DECAY_RATIO_TOL, format!("closed loop sup ratio last/first window = {ratio:e}"), text);
    if a != 0.0 {
        let target = a.abs().ln() / tau0;
        let rate = estimate_decay_rate(&tr, rate_start(cfg))?;
        record(
            (rate - target).abs() <= RATE_REL_TOL * target.abs(),
            format!("closed loop rate = {rate} (target {target}, within 10%)"),
            text,
        );
    } else {
        let _ = writeln!(text, "[skip] decay rate: a = 0, closed loop has no exponential mode");
    }

    if failures.is_empty() {
        let _ = writeln!(text, "verify: all checks passed");
        Ok(())
    } else {
        Err(CliError::Numerical(format!("tolerance breach: {}", failures.join("; "))))
    }
}
