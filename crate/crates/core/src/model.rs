//! Plant data and the assumptions that can be checked algebraically.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{EvalError, ExprError, Kernel, KernelExpr};
use crate::spectral;

/// Threshold for the nonzero-scalar conditions of the degenerate case.
pub const TOL_ASSUMPTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `x(t) = a x(t-τ0) + ∫N x + b U(t-τ1) + ∫M U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub tau0: f64,
    pub tau1: f64,
    pub a: f64,
    pub b: f64,
    n: Kernel,
    m: Kernel,
}

impl PlantModel {
    pub fn new(tau0: f64, tau1: f64, a: f64, b: f64, n: KernelExpr, m: KernelExpr) -> Self {
        Self { tau0, tau1, a, b, n: Kernel::new(n, tau0), m: Kernel::new(m, tau1) }
    }

    pub fn from_formulas(
        tau0: f64,
        tau1: f64,
        a: f64,
        b: f64,
        n: &str,
        m: &str,
    ) -> Result<Self, ExprError> {
        Ok(Self::new(tau0, tau1, a, b, KernelExpr::parse(n)?, KernelExpr::parse(m)?))
    }

    /// State kernel `N` on `[0, τ0]`.
    pub fn n_kernel(&self) -> &Kernel {
        &self.n
    }

    /// Input kernel `M` on `[0, τ1]`.
    pub fn m_kernel(&self) -> &Kernel {
        &self.m
    }

    pub fn is_degenerate(&self) -> bool {
        self.b == 0.0
    }

    /// Same plant with the input delay replaced (kernel support follows).
    pub fn with_tau1(&self, tau1: f64) -> Self {
        let mut out = self.clone();
        out.tau1 = tau1;
        out.m = self.m.with_support(tau1);
        out
    }

    /// Same plant with both kernels multiplied by `factor`.
    pub fn scale_kernels(&self, factor: f64) -> Self {
        let scale = |k: &Kernel| {
            Kernel::new(
                KernelExpr::Mul(Box::new(KernelExpr::Num(factor)), Box::new(k.expr().clone())),
                k.support(),
            )
        };
        let mut out = self.clone();
        out.n = scale(&self.n);
        out.m = scale(&self.m);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, value: f64, detail: impl Into<String>) {
        self.checks.push(Check { name, passed, value, detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "[{tag}] {:<28} value = {:<24} {}", c.name, c.value, c.detail)?;
        }
        Ok(())
    }
}

/// Checks the standing assumptions. Failures are report entries.
pub fn validate(m: &PlantModel) -> ValidationReport {
    let mut r = ValidationReport::default();
    r.push(
        "principal-part",
        m.a.abs() < 1.0 && m.a.is_finite(),
        m.a.abs(),
        "|a| < 1",
    );
    let delays_ok = m.tau0 > 0.0 && m.tau1 > 0.0 && m.tau0.is_finite() && m.tau1.is_finite();
    r.push("positive-delays", delays_ok, m.tau0.min(m.tau1), "tau0 > 0, tau1 > 0");
    let order_ok = m.tau1 >= m.tau0 * (1.0 - 1e-12);
    r.push("delay-order", order_ok, m.tau1 - m.tau0, "tau1 >= tau0");

    let probe = |k: &Kernel| -> Result<(), EvalError> {
        let h = k.support() / 100.0;
        (0..=100).try_for_each(|i| k.expr().eval(i as f64 * h).map(|_| ()))
    };
    for (name, k) in [("kernel-N-finite", m.n_kernel()), ("kernel-M-finite", m.m_kernel())] {
        match probe(k) {
            Ok(()) => r.push(name, true, 0.0, "finite on its support"),
            Err(e) => r.push(name, false, f64::NAN, e.to_string()),
        }
    }
    if !delays_ok || !r.passed() {
        return r;
    }

    if m.is_degenerate() {
        let equal = (m.tau1 - m.tau0).abs() <= 1e-12 * m.tau0;
        r.push("equal-delays", equal, m.tau1 - m.tau0, "b = 0 requires tau0 = tau1");
        let m0 = m.m_kernel().eval(0.0).unwrap_or(f64::NAN);
        let m1 = m.m_kernel().eval(m.tau1).unwrap_or(f64::NAN);
        let endpoint = m.a * m0 - m1;
        r.push(
            "endpoint-combination",
            endpoint.abs() > TOL_ASSUMPTION,
            endpoint,
            "a M(0) - M(tau1) != 0",
        );
        let f0 = spectral::eval_f0(m, Complex64::new(0.0, 0.0), spectral::DEFAULT_NSPEC).re;
        r.push("static-gain", f0.abs() > TOL_ASSUMPTION, f0, "F0(0) != 0");
    }
    r
}

/// `τ1 = (n0 + 1) τ0 - γ` with `γ` on the working grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDecomposition {
    pub n0: usize,
    pub gamma: f64,
    /// `γ / Δ`.
    pub gamma_steps: usize,
    /// Grid subintervals per `τ0`.
    pub steps_per_tau0: usize,
    pub step: f64,
    /// The input delay actually used, `(n0 + 1) τ0 - γ`.
    pub tau1: f64,
    /// Snapped minus requested input delay.
    pub snap: f64,
}

impl DelayDecomposition {
    /// Number of grid subintervals on `[0, τ1]`.
    pub fn steps_tau1(&self) -> usize {
        (self.n0 + 1) * self.steps_per_tau0 - self.gamma_steps
    }

    /// Index of the interior node `ν = γ`, if any.
    pub fn interior_gamma(&self) -> Option<usize> {
        (self.gamma_steps > 0).then_some(self.gamma_steps)
    }

    pub fn blocks(&self) -> usize {
        self.n0 + 2
    }
}

pub fn decompose_delays(
    tau0: f64,
    tau1: f64,
    step: f64,
) -> Result<(DelayDecomposition, Option<String>), ModelError> {
    if !(tau0 > 0.0 && step > 0.0 && tau1.is_finite()) {
        return Err(ModelError::InvalidArgument(format!(
            "need tau0 > 0 and step > 0, got tau0 = {tau0}, step = {step}"
        )));
    }
    if tau1 < tau0 * (1.0 - 1e-12) {
        return Err(ModelError::InvalidArgument(format!("tau1 = {tau1} < tau0 = {tau0}")));
    }
    let per = (tau0 / step).round() as usize;
    if per == 0 || ((per as f64) * step - tau0).abs() > 1e-9 * tau0 {
        return Err(ModelError::InvalidArgument(format!("step {step} does not divide tau0 = {tau0}")));
    }
    let mut ratio = tau1 / tau0;
    if (ratio - ratio.round()).abs() < 1e-12 * ratio {
        ratio = ratio.round();
    }
    let mut n0 = (ratio.ceil() as usize).max(1) - 1;
    let exact_gamma = (n0 + 1) as f64 * tau0 - tau1;
    let mut g = (exact_gamma / step).round() as usize;
    if g >= per {
        // γ rounded up to τ0: τ1 sits on a multiple of τ0
        n0 -= 1;
        g -= per;
    }
    let gamma = g as f64 * step;
    let snapped = (n0 + 1) as f64 * tau0 - gamma;
    let moved = (gamma - exact_gamma).abs();
    let warning = (moved > step / 2.0)
        .then(|| format!("gamma snapped by {moved}, more than half a grid step"));
    Ok((
        DelayDecomposition {
            n0,
            gamma,
            gamma_steps: g,
            steps_per_tau0: per,
            step,
            tau1: snapped,
            snap: snapped - tau1,
        },
        warning,
    ))
}
