//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use fredstab::fredholm::{
    assemble, kernel_distance, residuals, solve_direct, solve_successive, ControllerKernels,
    FredholmError,
};
use fredstab::model::decompose_delays;
use fredstab::quadrature::{make_grid, trapezoid};
use fredstab::simulator::{
    estimate_decay_rate, estimate_input_decay_rate, simulate, Feedback, History, Trajectory,
};
use fredstab::spectral::{
    check_controllability, check_spectral_controllability, eval_f0, find_zeros, CharF0,
    ClosedLoop, Controllability, FnPair, Rect, CONTROLLABILITY_TOL, DEFAULT_NSPEC, ROOT_TOL,
};
use fredstab::PlantModel;

const N_SRC: &str = "0.6 + sin(pi*v)/5";
const M_SRC: &str = "cos(v)";
const N: usize = 200;
const DT: f64 = 0.005;
const T_MAX: f64 = 20.0;

type Outcome = Result<String, String>;

struct Gate {
    failed: usize,
}

impl Gate {
    fn report(&mut self, id: &str, title: &str, outcome: Outcome) {
        match outcome {
            Ok(detail) => println!("PASS  {id:<3} {title}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL  {id:<3} {title}: {detail}");
            }
        }
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn plant(tau1: f64, a: f64, b: f64, n: &str, m: &str) -> PlantModel {
    PlantModel::from_formulas(1.0, tau1, a, b, n, m).expect("formulas parse")
}

fn degenerate() -> PlantModel {
    plant(1.0, 0.3, 0.0, N_SRC, M_SRC)
}

fn regular() -> PlantModel {
    plant(1.5, 0.3, 1.0, N_SRC, M_SRC)
}

fn one(_: f64) -> f64 {
    1.0
}

fn zero(_: f64) -> f64 {
    0.0
}

fn solve(m: &PlantModel, n: usize) -> Result<ControllerKernels, String> {
    let d = assemble(m, n).map_err(|e| e.to_string())?;
    solve_direct(&d).map(|(k, _)| k).map_err(|e| e.to_string())
}

fn run(m: &PlantModel, k: Option<&ControllerKernels>, x0: &dyn Fn(f64) -> f64) -> Result<Trajectory, String> {
    let feedback = match k {
        Some(k) => Feedback::Closed(k),
        None => Feedback::Open(None),
    };
    let plant = match k {
        Some(k) => m.with_tau1(k.tau1),
        None => m.clone(),
    };
    simulate(&plant, feedback, &History { x0, u0: &zero }, T_MAX, DT).map_err(|e| e.to_string())
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let m = degenerate();
    let k = solve(&m, N)?;
    let open = run(&m, None, &one)?;
    let closed = run(&m, Some(&k), &one)?;
    let target = 0.3f64.ln();
    let rate = estimate_decay_rate(&closed, 3.0).map_err(|e| e.to_string())?;
    let u_rate = estimate_input_decay_rate(&closed, 3.0).map_err(|e| e.to_string())?;
    let (late, early) = (open.sup_x(15.0, 20.0), open.sup_x(0.0, 5.0));
    let ratio = closed.sup_x(19.0, 20.0) / closed.sup_x(0.0, 1.0);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = late > early && within(rate, target, 0.1) && ratio <= 1e-3 && u_rate <= -0.5 && elapsed <= 60.0;
    check(
        ok,
        format!(
            "open sup[15,20]={late:.4} vs sup[0,5]={early:.4}; closed rate={rate:.5} (target {target:.5}); \
             sup[19,20]/sup[0,1]={ratio:.2e}; U rate={u_rate:.4}; {elapsed:.1}s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let m = degenerate();
    let r1 = residuals(&m, &solve(&m, N)?).map_err(|e| e.to_string())?;
    let r2 = residuals(&m, &solve(&m, 2 * N)?).map_err(|e| e.to_string())?;
    let s1 = r1.sup_i1.max(r1.sup_i3);
    let s2 = r2.sup_i1.max(r2.sup_i3);
    let ratio = s1 / s2;
    check(
        r1.sup_i1 <= 1e-3 && r1.sup_i3 <= 1e-3 && (3.0..=5.0).contains(&ratio),
        format!(
            "n=200: sup_I1={:.3e}, sup_I3={:.3e}; n=400: {s2:.3e}; ratio={ratio:.3}",
            r1.sup_i1, r1.sup_i3
        ),
    )
}

fn criterion_3() -> Outcome {
    let m = regular();
    let (dec, _) = decompose_delays(1.0, 1.5, 1.0 / N as f64).map_err(|e| e.to_string())?;
    if dec.n0 != 1 || (dec.gamma - 0.5).abs() > 1e-12 {
        return Err(format!("decomposition n0={}, gamma={}", dec.n0, dec.gamma));
    }
    let k = solve(&m, N)?;
    let r = residuals(&m, &k).map_err(|e| e.to_string())?;
    let closed = run(&m, Some(&k), &one)?;
    let rate = estimate_decay_rate(&closed, 3.0).map_err(|e| e.to_string())?;
    let step = k.step;
    let g0 = &k.g_blocks[0];
    let g0_sup = (0..dec.gamma_steps).map(|i| g0.right(i).abs()).fold(0.0, f64::max);
    let target = 0.3f64.ln();
    check(
        r.sup() <= 1e-3 && within(rate, target, 0.1) && g0_sup <= 10.0 * step * step,
        format!(
            "n0=1, gamma=0.5; sup_I1={:.3e}, sup_I2={:.3e}, sup_I3={:.3e}; rate={rate:.5}; \
             sup|g0| on [0,0.5)={g0_sup:.1e} (bound {:.1e})",
            r.sup_i1,
            r.sup_i2,
            r.sup_i3,
            10.0 * step * step
        ),
    )
}

fn criterion_4() -> Outcome {
    let m = degenerate();
    let k = solve(&m, N)?;
    let cl = ClosedLoop::new(&m, &k).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in -40..=40 {
        let s = Complex64::new(0.0, 0.5 * i as f64);
        let target = 1.0 - 0.3 * (-s).exp();
        worst = worst.max((cl.charfun(s).map_err(|e| e.to_string())? - target).norm());
    }
    check(worst <= 5e-3, format!("max |charfun(iω) − (1 − 0.3e^(−iω))| = {worst:.3e}"))
}

fn criterion_5() -> Outcome {
    let m = degenerate();
    let lo = eval_f0(&m, Complex64::new(0.02, 0.0), DEFAULT_NSPEC).re;
    let hi = eval_f0(&m, Complex64::new(0.05, 0.0), DEFAULT_NSPEC).re;
    let f0 = CharF0::new(&m, DEFAULT_NSPEC).map_err(|e| e.to_string())?;
    let rep = find_zeros(&f0, Rect::new(0.02, 0.05, -0.01, 0.01), ROOT_TOL).map_err(|e| e.to_string())?;
    let root = rep.roots.first().map(|r| r.s).ok_or("no root found")?;
    let ok_real = lo < 0.0 && hi > 0.0 && rep.winding_total == 1 && (root.re - 0.0435).abs() <= 0.005;

    let pure = CharF0::new(&plant(1.0, 0.3, 1.0, "0", "0"), DEFAULT_NSPEC).map_err(|e| e.to_string())?;
    let region = Rect::new(-3.0, 1.0, -7.0 * PI, 7.0 * PI);
    let rep2 = find_zeros(&pure, region, ROOT_TOL).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for k in -3..=3 {
        let exact = Complex64::new(0.3f64.ln(), 2.0 * PI * k as f64);
        let d = rep2.roots.iter().map(|r| (r.s - exact).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    check(
        ok_real && rep2.roots.len() == 7 && worst <= 1e-8,
        format!(
            "F0(0.02)={lo:.5}, F0(0.05)={hi:.5}, winding={}, root={:.6}; N≡0: {} roots, max error {worst:.1e}",
            rep.winding_total,
            root.re,
            rep2.roots.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let rep = check_spectral_controllability(&degenerate(), Rect::new(-5.0, 1.0, -40.0, 40.0), CONTROLLABILITY_TOL)
        .map_err(|e| e.to_string())?;
    let min_f1 = rep.f1_at_f0_roots.iter().cloned().fold(f64::INFINITY, f64::min);
    let id = FnPair(|s: Complex64| s, |_| Complex64::new(1.0, 0.0));
    let double = check_controllability(&id, &id, Rect::new(-1.0, 1.3, -1.0, 1.2), ROOT_TOL, CONTROLLABILITY_TOL)
        .map_err(|e| e.to_string())?;
    let witness = match double.controllability {
        Controllability::Fail { witness, .. } => Some(witness),
        _ => None,
    };
    check(
        rep.controllability == Controllability::PassInRegion && witness.is_some_and(|w| w.norm() < 1e-12),
        format!(
            "model: {:?} with {} roots, min |F1| at roots {min_f1:.3e}; test double: witness {:?}",
            rep.controllability,
            rep.roots.len(),
            witness
        ),
    )
}

fn criterion_7() -> Outcome {
    let m = regular().scale_kernels(0.01);
    let d = assemble(&m, N).map_err(|e| e.to_string())?;
    let (direct, _) = solve_direct(&d).map_err(|e| e.to_string())?;
    let (iter, trace) = solve_successive(&d, 1e-12, 200).map_err(|e: FredholmError| e.to_string())?;
    let dist = kernel_distance(&direct, &iter);
    let mut zero_sup = 0.0f64;
    for (tau1, b) in [(1.0, 1.0), (1.5, 1.0), (1.0, 0.0)] {
        let k = solve(&plant(tau1, 0.3, b, "0", if b == 0.0 { "1" } else { "0" }), 50)?;
        zero_sup = zero_sup.max(k.f.sup_norm()).max(k.g.sup_norm());
    }
    check(
        dist <= 1e-8 && zero_sup <= 1e-12,
        format!("{} iterations, |direct − iterative| = {dist:.2e}; zero-kernel sup = {zero_sup:.1e}", trace.len()),
    )
}

fn criterion_8() -> Outcome {
    let m = plant(1.0, 0.3, 1.0, "0", "0");
    let tr = run(&m, None, &one)?;
    let mut geo = 0.0f64;
    for (j, &x) in tr.x.iter().enumerate() {
        let k = (j as f64 * DT / 1.0 + 1e-9).floor() as i32;
        geo = geo.max((x - 0.3f64.powi(k + 1)).abs());
    }
    let mz = degenerate();
    let k = solve(&mz, 50)?;
    let z1 = run(&mz, None, &zero)?;
    let z2 = simulate(&mz, Feedback::Closed(&k), &History { x0: &zero, u0: &zero }, 5.0, 0.02)
        .map_err(|e| e.to_string())?;
    let zeros = z1.x.iter().chain(&z1.u).chain(&z2.x).chain(&z2.u).all(|&v| v == 0.0);
    let g = make_grid(1.0, 10).map_err(|e| e.to_string())?;
    let lin: Vec<f64> = g.nodes().iter().map(|t| 3.0 * t - 1.0).collect();
    let trap_err = (trapezoid(&lin, g.step()) - 0.5).abs();
    check(
        geo <= 1e-12 && zeros && trap_err <= 1e-14,
        format!("geometric error {geo:.1e}; zero data stays zero: {zeros}; trapezoid(3t−1) error {trap_err:.1e}"),
    )
}

fn main() {
    let mut gate = Gate { failed: 0 };
    gate.report("1", "open/closed-loop reproduction (b = 0)", criterion_1());
    gate.report("2", "kernel-equation residuals and order", criterion_2());
    gate.report("3", "regular-case synthesis (b ≠ 0)", criterion_3());
    gate.report("4", "characteristic-function collapse", criterion_4());
    gate.report("5", "zero location", criterion_5());
    gate.report("6", "spectral controllability", criterion_6());
    gate.report("7", "solver cross-validation", criterion_7());
    gate.report("8", "exact trivia", criterion_8());
    println!("acceptance: {} of 8 criteria passed", 8 - gate.failed);
    if gate.failed > 0 {
        std::process::exit(1);
    }
}
