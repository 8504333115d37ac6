//! Residuals of the kernel equations, evaluated directly from the kernel
//! formulas with a refined trapezoid rule (no reuse of the assembled matrix).

use crate::expr::Kernel;
use crate::model::PlantModel;
use crate::quadrature::PiecewiseSamples;

use super::{ControllerKernels, FredholmError, KernelCase, Side};

/// Quadrature substeps per grid interval.
const REFINE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Grid subintervals per `τ0`.
    pub n: usize,
    /// `|I1|` at the nodes of `[0, τ0]`.
    pub i1: Vec<f64>,
    /// `|I2|` at the nodes of `[τ0, τ1]` (empty when `τ0 = τ1`).
    pub i2: Vec<f64>,
    /// `|I3|` at the nodes of `[τ1, τ0 + τ1]`.
    pub i3: Vec<f64>,
    pub sup_i1: f64,
    pub sup_i2: f64,
    pub sup_i3: f64,
}

impl ResidualReport {
    pub fn sup(&self) -> f64 {
        self.sup_i1.max(self.sup_i2).max(self.sup_i3)
    }
}

/// A kernel sampled at the refined lattice `q Δ / REFINE`.
struct Fine {
    values: Vec<f64>,
}

impl Fine {
    fn new(kernel: &Kernel, step: f64) -> Result<Self, FredholmError> {
        let h = step / REFINE as f64;
        let count = (kernel.support() / h).round() as usize;
        Ok(Self { values: kernel.sample(h, count)? })
    }

    fn at(&self, q: isize) -> f64 {
        usize::try_from(q).ok().and_then(|q| self.values.get(q)).copied().unwrap_or(0.0)
    }
}

fn value(s: &PiecewiseSamples, idx: isize, side: Side) -> f64 {
    match usize::try_from(idx) {
        Ok(i) if i < s.len() => match side {
            Side::Left => s.left(i),
            Side::Right => s.right(i),
        },
        _ => 0.0,
    }
}

/// `∫_{lo Δ}^{hi Δ} s(η) K((shift Δ) − η) dη` with both ends on grid nodes.
fn conv(s: &PiecewiseSamples, lo: isize, hi: isize, kernel: &Fine, shift: isize) -> f64 {
    let lo = lo.max(0);
    let hi = hi.min(s.len() as isize - 1);
    let r = REFINE as isize;
    let h = s.step() / REFINE as f64;
    let mut acc = 0.0;
    for i in lo..hi {
        let a = s.right(i as usize);
        let b = s.left(i as usize + 1);
        let base = (shift - i) * r;
        let mut piece = 0.5 * (kernel.at(base) * a + kernel.at(base - r) * b);
        for k in 1..r {
            let t = k as f64 / r as f64;
            piece += kernel.at(base - k) * (a * (1.0 - t) + b * t);
        }
        acc += piece * h;
    }
    acc
}

/// Max of `|residual|` over the sides relevant at node `pos` of `first..=last`.
fn node_residual(first: isize, last: isize, pos: isize, eval: impl Fn(Side) -> f64) -> f64 {
    let mut out = 0.0f64;
    if pos < last {
        out = out.max(eval(Side::Right).abs());
    }
    if pos > first || first == last {
        out = out.max(eval(Side::Left).abs());
    }
    out
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(*x))
}

pub fn residuals(m: &PlantModel, k: &ControllerKernels) -> Result<ResidualReport, FredholmError> {
    let plant = m.with_tau1(k.tau1);
    let step = k.step;
    let n = (plant.tau0 / step).round() as isize;
    let t1 = (plant.tau1 / step).round() as isize;
    let nk = plant.n_kernel();
    let nf = Fine::new(nk, step)?;
    let n_at = |j: isize| -> Result<f64, FredholmError> { Ok(nk.eval(j as f64 * step)?) };
    let (f, g) = (&k.f, &k.g);

    let (i1, i2, i3) = match k.case {
        KernelCase::Regular => {
            let mf = Fine::new(plant.m_kernel(), step)?;
            let (a, b) = (plant.a, plant.b);
            let mut i1 = Vec::new();
            for j in 0..=n {
                let c = n_at(j)? + conv(f, 0, j, &mf, j) - conv(g, 0, j, &nf, j);
                i1.push(node_residual(0, n, j, |s| value(g, j, s) + c));
            }
            let mut i2 = Vec::new();
            if t1 > n {
                for j in n..=t1 {
                    let c = conv(f, 0, n, &mf, j) - conv(g, j - n, j, &nf, j);
                    i2.push(node_residual(n, t1, j, |s| value(g, j, s) - a * value(g, j - n, s) + c));
                }
            }
            let mut i3 = Vec::new();
            for j in t1..=t1 + n {
                let c = conv(f, j - t1, n, &mf, j) - conv(g, j - n, t1, &nf, j);
                i3.push(node_residual(t1, t1 + n, j, |s| {
                    b * value(f, j - t1, s) - a * value(g, j - n, s) + c
                }));
            }
            (i1, i2, i3)
        }
        KernelCase::Degenerate => {
            let mk = plant.m_kernel();
            let m0 = mk.eval(0.0)?;
            let m1 = mk.eval(plant.tau1)?;
            let mp = Fine::new(&mk.derivative(), step)?;
            let a = plant.a;
            let mut i1 = Vec::new();
            let mut i3 = Vec::new();
            for j in 0..=n {
                let c = n_at(j)? + conv(f, 0, j, &mp, j) - conv(g, 0, j, &nf, j);
                i1.push(node_residual(0, n, j, |s| value(g, j, s) + m0 * value(f, j, s) + c));
                let c = conv(f, j, n, &mp, n + j) - conv(g, j, n, &nf, n + j);
                i3.push(node_residual(0, n, j, |s| -a * value(g, j, s) - m1 * value(f, j, s) + c));
            }
            (i1, Vec::new(), i3)
        }
    };
    Ok(ResidualReport {
        n: n as usize,
        sup_i1: sup(&i1),
        sup_i2: sup(&i2),
        sup_i3: sup(&i3),
        i1,
        i2,
        i3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fredholm::{assemble, solve_direct};

    const N_SRC: &str = "0.6 + sin(pi*v)/5";

    fn model(tau1: f64, b: f64, n: &str, m: &str) -> PlantModel {
        PlantModel::from_formulas(1.0, tau1, 0.3, b, n, m).unwrap()
    }

    #[test]
    fn zero_everything() {
        let m = model(1.5, 1.0, "0", "0");
        let k = ControllerKernels::zero(KernelCase::Regular, 1.0, 1.5, 0.05);
        let r = residuals(&m, &k).unwrap();
        assert_eq!((r.sup_i1, r.sup_i2, r.sup_i3), (0.0, 0.0, 0.0));
        assert_eq!((r.i1.len(), r.i2.len(), r.i3.len()), (21, 11, 21));
    }

    #[test]
    fn zero_kernels_expose_n() {
        let m = model(1.0, 0.0, N_SRC, "cos(v)");
        let k = ControllerKernels::zero(KernelCase::Degenerate, 1.0, 1.0, 0.01);
        let r = residuals(&m, &k).unwrap();
        assert!((r.sup_i1 - 0.8).abs() < 1e-12);
        assert_eq!(r.sup_i3, 0.0);
        assert!(r.i2.is_empty());
    }

    #[test]
    fn sup_matches_arrays() {
        let m = model(1.5, 1.0, N_SRC, "cos(v)");
        let k = ControllerKernels::zero(KernelCase::Regular, 1.0, 1.5, 0.1);
        let r = residuals(&m, &k).unwrap();
        assert!(r.i1.iter().chain(&r.i2).chain(&r.i3).all(|&v| v >= 0.0));
        assert_eq!(r.sup_i2, r.i2.iter().cloned().fold(0.0, f64::max));
    }

    fn order_ratio(m: &PlantModel, n: usize) -> (f64, f64) {
        let sup = |n| {
            let (k, _) = solve_direct(&assemble(m, n).unwrap()).unwrap();
            residuals(m, &k).unwrap().sup()
        };
        let (a, b) = (sup(n), sup(2 * n));
        (a, a / b)
    }

    #[test]
    fn degenerate_residuals_are_second_order() {
        let (r, ratio) = order_ratio(&model(1.0, 0.0, N_SRC, "cos(v)"), 40);
        assert!(r < 1e-2, "{r}");
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn regular_residuals_are_second_order() {
        let (r, ratio) = order_ratio(&model(1.5, 1.0, N_SRC, "cos(v)"), 40);
        assert!(r < 1e-2, "{r}");
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
    }
}
