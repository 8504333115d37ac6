//! Fixed-step marching of the plant in open or closed loop.
//!
//! All integrals use the trapezoid rule on the time grid. The endpoint terms
//! at the current time make every step a 2×2 linear solve in `(x, U)`.
//! Delays must be multiples of the step, so the solution's jumps (at `t = 0`
//! and their delayed copies) sit on nodes; both one-sided limits are kept
//! at every node, which preserves second order across them.

use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::Kernel;
use crate::fredholm::{ControllerKernels, KernelCase};
use crate::model::PlantModel;
use crate::quadrature::PiecewiseSamples;

const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step at t = {t} is singular (determinant {det}); reduce dt")]
    SingularStep { t: f64, det: f64 },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("decay-rate fit impossible: {0}")]
    DegenerateFit(String),
}

/// Control input for `t ≥ 0`.
pub enum Feedback<'a> {
    /// Prescribed input; `None` means `U ≡ 0`.
    Open(Option<&'a dyn Fn(f64) -> f64>),
    Closed(&'a ControllerKernels),
}

/// Initial data on `[−τ0, 0]` for `x` and `[−τ1, 0]` for `U`.
pub struct History<'a> {
    pub x0: &'a dyn Fn(f64) -> f64,
    pub u0: &'a dyn Fn(f64) -> f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    /// `t_j = j·step`, `j = 0..`.
    pub times: Vec<f64>,
    /// Right limits at the nodes.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Left limits at the nodes (differ from `x`, `u` only at jumps).
    pub x_left: Vec<f64>,
    pub u_left: Vec<f64>,
    /// `x0` at `t = −τ0 … 0`.
    pub x_history: Vec<f64>,
    /// `U0` at `t = −τ1 … 0`.
    pub u_history: Vec<f64>,
    pub tau0: f64,
    pub tau1: f64,
    /// Snapped minus requested `(τ0, τ1)`.
    pub snap: (f64, f64),
}

impl Trajectory {
    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// `sup |x|` over the nodes in `[t0, t1]`.
    pub fn sup_x(&self, t0: f64, t1: f64) -> f64 {
        window_sup(&self.times, &self.x, t0, t1, true)
    }

    pub fn sup_u(&self, t0: f64, t1: f64) -> f64 {
        window_sup(&self.times, &self.u, t0, t1, true)
    }

    /// CSV with columns `t,x,U`; history rows first (negative `t`), with an
    /// empty cell where a history does not reach.
    pub fn to_csv(&self) -> String {
        let px = self.x_history.len() - 1;
        let pu = self.u_history.len() - 1;
        let h = px.max(pu);
        let mut out = String::from("t,x,U\n");
        for m in (1..=h).rev() {
            let t = -(m as f64) * self.step;
            let cell = |hist: &[f64], p: usize| {
                if m <= p {
                    hist[p - m].to_string()
                } else {
                    String::new()
                }
            };
            let _ = writeln!(out, "{},{},{}", t, cell(&self.x_history, px), cell(&self.u_history, pu));
        }
        for j in 0..self.times.len() {
            let _ = writeln!(out, "{},{},{}", self.times[j], self.x[j], self.u[j]);
        }
        out
    }
}

fn window_sup(times: &[f64], v: &[f64], t0: f64, t1: f64, closed: bool) -> f64 {
    let slack = 1e-9;
    times
        .iter()
        .zip(v)
        .filter(|(&t, _)| t >= t0 - slack && if closed { t <= t1 + slack } else { t < t1 - slack })
        .fold(0.0, |m, (_, x)| m.max(x.abs()))
}

/// One kernel on the time grid: `right[i]`, `left[i]` at `ν = i·dt`.
struct Sampled {
    right: Vec<f64>,
    left: Vec<f64>,
}

impl Sampled {
    fn from_samples(s: &PiecewiseSamples) -> Self {
        Self {
            right: (0..s.len()).map(|i| s.right(i)).collect(),
            left: (0..s.len()).map(|i| s.left(i)).collect(),
        }
    }

    fn from_kernel(k: &Kernel, dt: f64, steps: usize) -> Result<Self, SimError> {
        let v = k
            .sample(dt, steps)
            .map_err(|e| SimError::InvalidArgument(format!("kernel evaluation: {e}")))?;
        Ok(Self { right: v.clone(), left: v })
    }

    fn steps(&self) -> usize {
        self.right.len() - 1
    }
}

/// Node values with both one-sided limits, indexed from `−offset`.
struct Signal {
    left: Vec<f64>,
    right: Vec<f64>,
    offset: usize,
}

impl Signal {
    fn l(&self, m: isize) -> f64 {
        self.left[(m + self.offset as isize) as usize]
    }
    fn r(&self, m: isize) -> f64 {
        self.right[(m + self.offset as isize) as usize]
    }
    fn set(&mut self, m: isize, left: f64, right: f64) {
        let i = (m + self.offset as isize) as usize;
        self.left[i] = left;
        self.right[i] = right;
    }
}

/// `∫_0^{p dt} K(ν) s(t_j − ν) dν` without the implicit `K(0) s⁻(t_j)` term.
fn explicit_conv(k: &Sampled, s: &Signal, j: isize) -> f64 {
    let p = k.steps();
    let mut acc = 0.0;
    for i in 0..p {
        let ii = i as isize;
        if i > 0 {
            acc += k.right[i] * s.l(j - ii);
        }
        acc += k.left[i + 1] * s.r(j - ii - 1);
    }
    acc
}

fn steps_of(delay: f64, dt: f64, name: &str) -> Result<(usize, f64), SimError> {
    let ratio = delay / dt;
    let p = ratio.round();
    if p < 1.0 || (ratio - p).abs() > 1e-12 * p {
        return Err(SimError::InvalidArgument(format!("dt = {dt} does not divide {name} = {delay}")));
    }
    let p = p as usize;
    Ok((p, p as f64 * dt - delay))
}

struct Law {
    f: Sampled,
    g: Sampled,
    /// Coefficient of `x(t)` (degenerate law).
    pointwise: f64,
    /// Coefficient of `x(t − τ0)` (degenerate law).
    delayed: f64,
}

pub fn simulate(
    m: &PlantModel,
    feedback: Feedback<'_>,
    history: &History<'_>,
    t_max: f64,
    dt: f64,
) -> Result<Trajectory, SimError> {
    if !(dt > 0.0 && dt.is_finite() && t_max > 0.0 && t_max.is_finite()) {
        return Err(SimError::InvalidArgument(format!("need dt > 0 and t_max > 0 (dt = {dt}, t_max = {t_max})")));
    }
    let (p0, s0) = steps_of(m.tau0, dt, "tau0")?;
    let (p1, s1) = steps_of(m.tau1, dt, "tau1")?;
    let tau0 = p0 as f64 * dt;
    let tau1 = p1 as f64 * dt;
    let steps = (t_max / dt).round() as usize;
    let plant = PlantModel::new(tau0, tau1, m.a, m.b, m.n_kernel().expr().clone(), m.m_kernel().expr().clone());
    let nk = Sampled::from_kernel(plant.n_kernel(), dt, p0)?;
    let mk = Sampled::from_kernel(plant.m_kernel(), dt, p1)?;

    let law = match &feedback {
        Feedback::Open(_) => None,
        Feedback::Closed(k) => {
            let fits = |s: &PiecewiseSamples, p: usize| (s.length() / dt).round() as usize == p;
            if !fits(&k.f, p0) || !fits(&k.g, p1) {
                return Err(SimError::InvalidArgument(
                    "controller kernels do not match the plant delays".into(),
                ));
            }
            Some(match k.case {
                KernelCase::Regular => Law {
                    f: Sampled::from_samples(&k.f.resample(dt)),
                    g: Sampled::from_samples(&k.g.resample(dt)),
                    pointwise: 0.0,
                    delayed: 0.0,
                },
                KernelCase::Degenerate => {
                    let fp = k.fprime.as_ref().ok_or_else(|| {
                        SimError::InvalidArgument("degenerate controller without f'".into())
                    })?;
                    Law {
                        f: Sampled::from_samples(&fp.resample(dt)),
                        g: Sampled::from_samples(&k.g.resample(dt)),
                        pointwise: k.f0,
                        delayed: -k.f1,
                    }
                }
            })
        }
    };

    let h = p0.max(p1);
    let len = h + steps + 1;
    let mut x = Signal { left: vec![0.0; len], right: vec![0.0; len], offset: h };
    let mut u = Signal { left: vec![0.0; len], right: vec![0.0; len], offset: h };
    let x_history: Vec<f64> = (0..=p0).map(|i| (history.x0)((i as f64 - p0 as f64) * dt)).collect();
    let u_history: Vec<f64> = (0..=p1).map(|i| (history.u0)((i as f64 - p1 as f64) * dt)).collect();
    if let Some(i) = x_history.iter().position(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { t: (i as f64 - p0 as f64) * dt });
    }
    if let Some(i) = u_history.iter().position(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { t: (i as f64 - p1 as f64) * dt });
    }
    for (i, &v) in x_history.iter().enumerate() {
        let mi = i as isize - p0 as isize;
        x.set(mi, v, v);
    }
    for (i, &v) in u_history.iter().enumerate() {
        let mi = i as isize - p1 as isize;
        u.set(mi, v, v);
    }

    let half = 0.5 * dt;
    let (a, b) = (plant.a, plant.b);
    let open_input = |t: f64| match &feedback {
        Feedback::Open(Some(f)) => f(t),
        _ => 0.0,
    };
    let (ip0, ip1) = (p0 as isize, p1 as isize);
    for j in 0..=steps as isize {
        let t = j as f64 * dt;
        // explicit parts of the left limits
        let rx = half * (explicit_conv(&nk, &x, j) + explicit_conv(&mk, &u, j))
            + a * x.l(j - ip0)
            + b * u.l(j - ip1);
        let jump_x = a * (x.r(j - ip0) - x.l(j - ip0)) + b * (u.r(j - ip1) - u.l(j - ip1));
        let (cn, cm) = (half * nk.right[0], half * mk.right[0]);
        let (xl, ul, xr, ur);
        match &law {
            None => {
                let ut = open_input(t);
                (ul, ur) = if j == 0 { (u.l(0), ut) } else { (ut, ut) };
                xl = if j == 0 {
                    x.l(0)
                } else {
                    let det = 1.0 - cn;
                    if det.abs() < SINGULAR_DET {
                        return Err(SimError::SingularStep { t, det });
                    }
                    (rx + cm * ul) / det
                };
                // at t = 0 the input's history enters only through delays
                xr = if j == 0 { rx + cn * xl + cm * u.l(0) } else { xl } + jump_x;
            }
            Some(law) => {
                let ru = half * (explicit_conv(&law.f, &x, j) + explicit_conv(&law.g, &u, j))
                    + law.delayed * x.l(j - ip0);
                let jump_u_delayed = law.delayed * (x.r(j - ip0) - x.l(j - ip0));
                if j == 0 {
                    // everything integral is history; only x(0⁺) couples U(0⁺)
                    xl = x.l(0);
                    ul = u.l(0);
                    xr = rx + cn * xl + cm * ul + jump_x;
                    let cf = half * law.f.right[0];
                    let cg = half * law.g.right[0];
                    ur = ru + cf * xl + cg * ul + jump_u_delayed + law.pointwise * xr;
                } else {
                    let cf = half * law.f.right[0] + law.pointwise;
                    let cg = half * law.g.right[0];
                    // [1 − cN, −cM; −cF, 1 − cG] (x, U) = (rx, ru)
                    let det = (1.0 - cn) * (1.0 - cg) - cm * cf;
                    if det.abs() < SINGULAR_DET {
                        return Err(SimError::SingularStep { t, det });
                    }
                    xl = ((1.0 - cg) * rx + cm * ru) / det;
                    ul = (cf * rx + (1.0 - cn) * ru) / det;
                    xr = xl + jump_x;
                    ur = ul + law.pointwise * (xr - xl) + jump_u_delayed;
                }
            }
        }
        if !(xl.is_finite() && ul.is_finite() && xr.is_finite() && ur.is_finite()) {
            return Err(SimError::NonFinite { t });
        }
        x.set(j, xl, xr);
        u.set(j, ul, ur);
    }

    let range = h..len;
    Ok(Trajectory {
        step: dt,
        times: (0..=steps).map(|j| j as f64 * dt).collect(),
        x: x.right[range.clone()].to_vec(),
        u: u.right[range.clone()].to_vec(),
        x_left: x.left[range.clone()].to_vec(),
        u_left: u.left[range].to_vec(),
        x_history,
        u_history,
        tau0,
        tau1,
        snap: (s0, s1),
    })
}

/// Least-squares slope of `ln sup|v|` over consecutive windows of width
/// `width` starting at `t_start`, against the window midpoints.
pub fn estimate_rate(times: &[f64], v: &[f64], width: f64, t_start: f64) -> Result<f64, SimError> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let count = ((t_end - t_start) / width + 1e-9).floor();
    if !(count >= 4.0) {
        return Err(SimError::DegenerateFit(format!(
            "need at least 4 windows of width {width} in [{t_start}, {t_end}]"
        )));
    }
    let count = count as usize;
    let mut pts = Vec::with_capacity(count);
    for w in 0..count {
        let a = t_start + w as f64 * width;
        let s = window_sup(times, v, a, a + width, false);
        if !(s > 0.0) {
            return Err(SimError::DegenerateFit(format!("zero window on [{a}, {}]", a + width)));
        }
        pts.push((a + 0.5 * width, s.ln()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Decay (negative) or growth rate of `|x|` after `t_start`.
pub fn estimate_decay_rate(traj: &Trajectory, t_start: f64) -> Result<f64, SimError> {
    estimate_rate(&traj.times, &traj.x, traj.tau0, t_start)
}

/// Same fit applied to the input.
pub fn estimate_input_decay_rate(traj: &Trajectory, t_start: f64) -> Result<f64, SimError> {
    estimate_rate(&traj.times, &traj.u, traj.tau0, t_start)
}
