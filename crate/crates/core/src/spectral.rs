//! The transcendental functions
//!
//! ```text
//! F0(s) = 1 − a e^{−τ0 s} − ∫_0^τ0 N(ν) e^{−νs} dν
//! F1(s) = b e^{−τ1 s} + ∫_0^τ1 M(ν) e^{−νs} dν
//! ```
//!
//! their zeros in rectangles (argument principle plus Newton), the rank test
//! `rank[F0(s), F1(s)] = 1` on a bounded region, and the closed-loop
//! characteristic function of a synthesized controller.
//!
//! Integrals are trapezoid sums, so the evaluated functions are themselves
//! entire and their derivatives are exact.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{EvalError, Kernel};
use crate::fredholm::{ControllerKernels, KernelCase};
use crate::model::PlantModel;

pub const DEFAULT_NSPEC: usize = 400;
pub const ROOT_TOL: f64 = 1e-8;
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Threshold on `|F1|` at zeros of `F0` below which the rank test fails.
pub const CONTROLLABILITY_TOL: f64 = 1e-6;

const NEWTON_MAX: usize = 50;
const MIN_MULTIPLE_DIAM: f64 = 1e-8;
const BOUNDARY_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("function vanishes on the region boundary near {0} (after retries)")]
    BoundaryZero(Complex64),
    #[error("|Im s| = {im} exceeds the sampling limit {limit}; increase n_spec")]
    Sampling { im: f64, limit: f64 },
    #[error("controller transfer function has a pole at {0}")]
    Pole(Complex64),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Number of quadrature nodes for transforms of kernels solved on `n` intervals.
pub fn nspec_for(n: usize) -> usize {
    DEFAULT_NSPEC.max(8 * n)
}

/// An entire function with its derivative.
pub trait Holomorphic {
    fn value(&self, s: Complex64) -> Complex64;
    fn derivative(&self, s: Complex64) -> Complex64;
}

/// `(F, F')` from two closures.
pub struct FnPair<F, D>(pub F, pub D);

impl<F, D> Holomorphic for FnPair<F, D>
where
    F: Fn(Complex64) -> Complex64,
    D: Fn(Complex64) -> Complex64,
{
    fn value(&self, s: Complex64) -> Complex64 {
        (self.0)(s)
    }
    fn derivative(&self, s: Complex64) -> Complex64 {
        (self.1)(s)
    }
}

/// Trapezoid sum for `∫_0^L v(ν) e^{−νs} dν` with its `s`-derivative.
#[derive(Debug, Clone)]
struct ExpSum {
    step: f64,
    values: Vec<f64>,
}

impl ExpSum {
    fn new(kernel: &Kernel, nodes: usize) -> Result<Self, EvalError> {
        let step = kernel.support() / nodes as f64;
        Ok(Self { step, values: kernel.sample(step, nodes)? })
    }

    fn eval(&self, s: Complex64) -> (Complex64, Complex64) {
        let w = (-s * self.step).exp();
        let last = self.values.len() - 1;
        let mut z = Complex64::new(1.0, 0.0);
        let (mut v, mut d) = (Complex64::default(), Complex64::default());
        for (k, &y) in self.values.iter().enumerate() {
            let c = if k == 0 || k == last { 0.5 * y } else { y };
            v += z * c;
            d -= z * (c * k as f64 * self.step);
            z *= w;
        }
        (v * self.step, d * self.step)
    }
}

/// `F0` of a plant.
#[derive(Debug, Clone)]
pub struct CharF0 {
    tau0: f64,
    a: f64,
    n: ExpSum,
}

impl CharF0 {
    pub fn new(m: &PlantModel, nspec: usize) -> Result<Self, EvalError> {
        Ok(Self { tau0: m.tau0, a: m.a, n: ExpSum::new(m.n_kernel(), nspec)? })
    }
}

impl Holomorphic for CharF0 {
    fn value(&self, s: Complex64) -> Complex64 {
        1.0 - self.a * (-self.tau0 * s).exp() - self.n.eval(s).0
    }
    fn derivative(&self, s: Complex64) -> Complex64 {
        self.tau0 * self.a * (-self.tau0 * s).exp() - self.n.eval(s).1
    }
}

/// `F1` of a plant.
#[derive(Debug, Clone)]
pub struct CharF1 {
    tau1: f64,
    b: f64,
    m: ExpSum,
}

impl CharF1 {
    pub fn new(m: &PlantModel, nspec: usize) -> Result<Self, EvalError> {
        let nodes = ((nspec as f64) * m.tau1 / m.tau0).ceil() as usize;
        Ok(Self { tau1: m.tau1, b: m.b, m: ExpSum::new(m.m_kernel(), nodes.max(1))? })
    }
}

impl Holomorphic for CharF1 {
    fn value(&self, s: Complex64) -> Complex64 {
        self.b * (-self.tau1 * s).exp() + self.m.eval(s).0
    }
    fn derivative(&self, s: Complex64) -> Complex64 {
        -self.tau1 * self.b * (-self.tau1 * s).exp() + self.m.eval(s).1
    }
}

/// `F0(s)`; NaN if a kernel cannot be evaluated.
pub fn eval_f0(m: &PlantModel, s: Complex64, nspec: usize) -> Complex64 {
    CharF0::new(m, nspec).map_or(Complex64::new(f64::NAN, f64::NAN), |f| f.value(s))
}

/// `F1(s)`; NaN if a kernel cannot be evaluated.
pub fn eval_f1(m: &PlantModel, s: Complex64, nspec: usize) -> Complex64 {
    CharF1::new(m, nspec).map_or(Complex64::new(f64::NAN, f64::NAN), |f| f.value(s))
}

/// Largest `|Im s|` the transforms resolve with `nspec` nodes.
pub fn sampling_limit(m: &PlantModel, nspec: usize) -> f64 {
    nspec as f64 / (4.0 * m.tau1.max(m.tau0))
}

fn guard(m: &PlantModel, nspec: usize, im: f64) -> Result<(), SpectralError> {
    let limit = sampling_limit(m, nspec);
    if im.abs() > limit {
        Err(SpectralError::Sampling { im: im.abs(), limit })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Self { re_min, re_max, im_min, im_max }
    }

    /// `[−5, 1] × [−40/τ0, 40/τ0]`.
    pub fn default_for(tau0: f64) -> Self {
        Self::new(-5.0, 1.0, -40.0 / tau0, 40.0 / tau0)
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    pub fn contains(&self, s: Complex64, slack: f64) -> bool {
        s.re >= self.re_min - slack
            && s.re <= self.re_max + slack
            && s.im >= self.im_min - slack
            && s.im <= self.im_max + slack
    }

    fn inflate(&self, by: f64) -> Self {
        Self::new(self.re_min - by, self.re_max + by, self.im_min - by, self.im_max + by)
    }

    /// Quadrants around the point at fractions `(tx, ty)` of the sides.
    fn split(&self, tx: f64, ty: f64) -> [Rect; 4] {
        let xm = self.re_min + tx * self.width();
        let ym = self.im_min + ty * self.height();
        [
            Self::new(self.re_min, xm, self.im_min, ym),
            Self::new(xm, self.re_max, self.im_min, ym),
            Self::new(self.re_min, xm, ym, self.im_max),
            Self::new(xm, self.re_max, ym, self.im_max),
        ]
    }

    fn validate(&self) -> Result<(), SpectralError> {
        let ok = [self.re_min, self.re_max, self.im_min, self.im_max].iter().all(|v| v.is_finite())
            && self.re_max > self.re_min
            && self.im_max > self.im_min;
        if ok {
            Ok(())
        } else {
            Err(SpectralError::InvalidRegion(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub s: Complex64,
    pub abs_f: f64,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controllability {
    PassInRegion,
    Fail { witness: Complex64, abs_f1: f64 },
    NotChecked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Region actually scanned (inflated if the requested boundary hit a zero).
    pub region: Rect,
    pub roots: Vec<Root>,
    /// Boxes whose zeros could not be resolved, with their winding numbers.
    pub unresolved: Vec<(Rect, i64)>,
    pub winding_total: i64,
    pub controllability: Controllability,
    pub f1_at_f0_roots: Vec<f64>,
}

impl SpectrumReport {
    pub fn root_count(&self) -> i64 {
        self.roots.iter().map(|r| r.multiplicity as i64).sum()
    }

    /// CSV with columns `re,im,abs_F,multiplicity`.
    pub fn roots_csv(&self) -> String {
        let mut out = String::from("re,im,abs_F,multiplicity\n");
        for r in &self.roots {
            let _ = writeln!(out, "{},{},{},{}", r.s.re, r.s.im, r.abs_f, r.multiplicity);
        }
        out
    }
}

struct BoundaryHit(Complex64);

/// Winding number of `f` along the boundary of `r`, counterclockwise.
fn winding<F: Holomorphic + ?Sized>(f: &F, r: &Rect) -> Result<i64, BoundaryHit> {
    let corners = [
        Complex64::new(r.re_min, r.im_min),
        Complex64::new(r.re_max, r.im_min),
        Complex64::new(r.re_max, r.im_max),
        Complex64::new(r.re_min, r.im_max),
    ];
    let spacing = (0.05f64).min(r.diameter() / 16.0);
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let pieces = (((b - a).norm() / spacing).ceil() as usize).max(8);
        let mut za = a;
        let mut fa = sample(f, za)?;
        for k in 1..=pieces {
            let zb = a + (b - a) * (k as f64 / pieces as f64);
            let fb = sample(f, zb)?;
            total += arg_change(f, za, fa, zb, fb, 0)?;
            za = zb;
            fa = fb;
        }
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

fn sample<F: Holomorphic + ?Sized>(f: &F, z: Complex64) -> Result<Complex64, BoundaryHit> {
    let v = f.value(z);
    if !(v.norm() > BOUNDARY_TOL) {
        return Err(BoundaryHit(z));
    }
    Ok(v)
}

fn arg_change<F: Holomorphic + ?Sized>(
    f: &F,
    za: Complex64,
    fa: Complex64,
    zb: Complex64,
    fb: Complex64,
    depth: usize,
) -> Result<f64, BoundaryHit> {
    let d = (fb / fa).arg();
    if d.abs() < PI / 2.0 {
        return Ok(d);
    }
    if depth >= 40 {
        return Err(BoundaryHit(0.5 * (za + zb)));
    }
    let zm = 0.5 * (za + zb);
    let fm = sample(f, zm)?;
    Ok(arg_change(f, za, fa, zm, fm, depth + 1)? + arg_change(f, zm, fm, zb, fb, depth + 1)?)
}

/// Newton with multiplicity `mult` (quadratic for a zero of that order).
fn newton<F: Holomorphic + ?Sized>(f: &F, start: Complex64, mult: u32, tol: f64) -> Option<Complex64> {
    let mut s = start;
    for _ in 0..NEWTON_MAX {
        let v = f.value(s);
        let d = f.derivative(s);
        if v.norm() == 0.0 {
            break;
        }
        if d.norm() == 0.0 || !v.is_finite() {
            return None;
        }
        let delta = v / d * mult as f64;
        s -= delta;
        if delta.norm() <= 1e-15 * (1.0 + s.norm()) {
            break;
        }
    }
    (f.value(s).norm() <= tol).then_some(s)
}

struct Search {
    roots: Vec<Root>,
    unresolved: Vec<(Rect, i64)>,
}

const SPLITS: [(f64, f64); 3] = [(0.5127, 0.4931), (0.4719, 0.5313), (0.5381, 0.4587)];

fn explore<F: Holomorphic + ?Sized>(f: &F, r: Rect, w: i64, tol: f64, out: &mut Search) {
    if w <= 0 {
        return;
    }
    let try_newton = |out: &mut Search| {
        let s = newton(f, r.center(), w as u32, tol)?;
        r.contains(s, 1e-12 * (1.0 + s.norm())).then(|| {
            out.roots.push(Root { s, abs_f: f.value(s).norm(), multiplicity: w as u32 });
        })
    };
    if w == 1 && try_newton(out).is_some() {
        return;
    }
    let small = if w == 1 { 1e-6 } else { MIN_MULTIPLE_DIAM };
    if r.diameter() >= small {
        for (tx, ty) in SPLITS {
            let parts = r.split(tx, ty);
            let windings: Result<Vec<i64>, _> = parts.iter().map(|p| winding(f, p)).collect();
            if let Ok(ws) = windings {
                if ws.iter().sum::<i64>() == w {
                    for (p, pw) in parts.into_iter().zip(ws) {
                        explore(f, p, pw, tol, out);
                    }
                    return;
                }
            }
        }
    }
    // a cluster that cannot be separated further: treat as one multiple zero
    if w > 1 && try_newton(out).is_some() {
        return;
    }
    out.unresolved.push((r, w));
}

/// Zeros of `f` inside `region`.
pub fn find_zeros<F: Holomorphic + ?Sized>(
    f: &F,
    region: Rect,
    root_tol: f64,
) -> Result<SpectrumReport, SpectralError> {
    region.validate()?;
    let step = (0.05f64).min(0.01 * region.diameter());
    let mut r = region;
    let mut attempt = 0;
    let w = loop {
        match winding(f, &r) {
            Ok(w) => break w,
            Err(BoundaryHit(z)) if attempt == BOUNDARY_RETRIES => {
                return Err(SpectralError::BoundaryZero(z))
            }
            Err(_) => {
                attempt += 1;
                r = region.inflate(step * attempt as f64);
            }
        }
    };
    let mut search = Search { roots: Vec::new(), unresolved: Vec::new() };
    explore(f, r, w, root_tol, &mut search);
    search.roots.sort_by(|a, b| a.s.re.total_cmp(&b.s.re).then(a.s.im.total_cmp(&b.s.im)));
    Ok(SpectrumReport {
        region: r,
        roots: search.roots,
        unresolved: search.unresolved,
        winding_total: w,
        controllability: Controllability::NotChecked,
        f1_at_f0_roots: Vec::new(),
    })
}

/// Rank test on the zeros of `f0` found in `region`.
pub fn check_controllability<A, B>(
    f0: &A,
    f1: &B,
    region: Rect,
    root_tol: f64,
    tol: f64,
) -> Result<SpectrumReport, SpectralError>
where
    A: Holomorphic + ?Sized,
    B: Holomorphic + ?Sized,
{
    let mut report = find_zeros(f0, region, root_tol)?;
    report.f1_at_f0_roots = report.roots.iter().map(|r| f1.value(r.s).norm()).collect();
    let witness = report
        .roots
        .iter()
        .zip(&report.f1_at_f0_roots)
        .find(|(_, &v)| v <= tol)
        .map(|(r, &v)| (r.s, v));
    report.controllability = match witness {
        Some((witness, abs_f1)) => Controllability::Fail { witness, abs_f1 },
        None if report.unresolved.is_empty() => Controllability::PassInRegion,
        None => Controllability::NotChecked,
    };
    Ok(report)
}

pub fn check_spectral_controllability(
    m: &PlantModel,
    region: Rect,
    tol: f64,
) -> Result<SpectrumReport, SpectralError> {
    guard(m, DEFAULT_NSPEC, region.im_min)?;
    guard(m, DEFAULT_NSPEC, region.im_max)?;
    let f0 = CharF0::new(m, DEFAULT_NSPEC)?;
    let f1 = CharF1::new(m, DEFAULT_NSPEC)?;
    check_controllability(&f0, &f1, region, ROOT_TOL, tol)
}

/// Transform data of a controller for repeated evaluation.
pub struct ClosedLoop {
    f0: CharF0,
    f1: CharF1,
    plant: PlantModel,
    nspec: usize,
    refine: usize,
    kernels: ControllerKernels,
}

impl ClosedLoop {
    pub fn new(m: &PlantModel, k: &ControllerKernels) -> Result<Self, SpectralError> {
        let plant = m.with_tau1(k.tau1);
        let n = k.f.len().saturating_sub(1).max(1);
        let nspec = nspec_for(n);
        Ok(Self {
            f0: CharF0::new(&plant, nspec)?,
            f1: CharF1::new(&plant, nspec)?,
            refine: nspec.div_ceil(n),
            nspec,
            plant,
            kernels: k.clone(),
        })
    }

    pub fn g_hat(&self, s: Complex64) -> Complex64 {
        self.kernels.g.laplace(s, self.refine)
    }

    /// `∫f e^{−νs}`, multiplied by `s` for the degenerate law.
    pub fn phi(&self, s: Complex64) -> Complex64 {
        let fhat = self.kernels.f.laplace(s, self.refine);
        match self.kernels.case {
            KernelCase::Regular => fhat,
            KernelCase::Degenerate => s * fhat,
        }
    }

    /// `F0 (1 − Ĝ) − F1 Φ`.
    pub fn charfun(&self, s: Complex64) -> Result<Complex64, SpectralError> {
        guard(&self.plant, self.nspec, s.im)?;
        Ok(self.f0.value(s) * (1.0 - self.g_hat(s)) - self.f1.value(s) * self.phi(s))
    }

    /// `Φ / (1 − Ĝ)`.
    pub fn transfer(&self, s: Complex64) -> Result<Complex64, SpectralError> {
        guard(&self.plant, self.nspec, s.im)?;
        let den = 1.0 - self.g_hat(s);
        if den.norm() <= 1e-12 {
            return Err(SpectralError::Pole(s));
        }
        Ok(self.phi(s) / den)
    }
}

pub fn closed_loop_charfun(
    m: &PlantModel,
    k: &ControllerKernels,
    s: Complex64,
) -> Result<Complex64, SpectralError> {
    ClosedLoop::new(m, k)?.charfun(s)
}

pub fn controller_transfer(
    k: &ControllerKernels,
    m: &PlantModel,
    s: Complex64,
) -> Result<Complex64, SpectralError> {
    ClosedLoop::new(m, k)?.transfer(s)
}
