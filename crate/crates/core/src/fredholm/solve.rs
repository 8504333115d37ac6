use crate::linalg::Lu;
use crate::model::DelayDecomposition;
use crate::quadrature::PiecewiseSamples;

use super::{ControllerKernels, FredholmDiscretization, FredholmError, KernelCase};

/// Diagnostics of a direct solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    /// 1-norm condition estimate of the assembled matrix.
    pub condition: f64,
    /// `‖A h − r‖∞ / (‖A‖∞ ‖h‖∞)`.
    pub backward_error: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn solve_direct(d: &FredholmDiscretization) -> Result<(ControllerKernels, SolveInfo), FredholmError> {
    let lu = Lu::factor(&d.matrix)?;
    let h = lu.solve(&d.rhs)?;
    let res: Vec<f64> = d.matrix.mul_vec(&h).iter().zip(&d.rhs).map(|(a, b)| a - b).collect();
    let scale = d.matrix.norm_inf() * sup(&h);
    let info = SolveInfo {
        condition: lu.condition_estimate(),
        backward_error: if scale > 0.0 { sup(&res) / scale } else { sup(&res) },
    };
    Ok((kernels(d, &h), info))
}

/// Fixed-point iteration `h ← K⁻¹(r − J h)` where `K` is the pointwise part
/// and `J` the quadrature part of the matrix. Returns the kernels and the
/// sup-norm of each successive difference.
pub fn solve_successive(
    d: &FredholmDiscretization,
    tol: f64,
    maxiter: usize,
) -> Result<(ControllerKernels, Vec<f64>), FredholmError> {
    let k = Lu::factor(&d.pointwise)?;
    let j = d.matrix.sub(&d.pointwise_full());
    let len = d.layout.len();
    let apply_kinv = |v: &[f64]| -> Result<Vec<f64>, FredholmError> {
        let mut out = vec![0.0; v.len()];
        let mut local = vec![0.0; d.blocks];
        for p in 0..len {
            for (b, l) in local.iter_mut().enumerate() {
                *l = v[b * len + p];
            }
            for (b, x) in k.solve(&local)?.into_iter().enumerate() {
                out[b * len + p] = x;
            }
        }
        Ok(out)
    };

    let mut h = apply_kinv(&d.rhs)?;
    let mut trace = Vec::new();
    let mut rising = 0;
    while trace.len() < maxiter {
        let jh = j.mul_vec(&h);
        let r: Vec<f64> = d.rhs.iter().zip(&jh).map(|(a, b)| a - b).collect();
        let next = apply_kinv(&r)?;
        let diff = next.iter().zip(&h).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !diff.is_finite() {
            trace.push(diff);
            return Err(FredholmError::Divergence { trace });
        }
        if trace.last().is_some_and(|&prev| diff >= prev) {
            rising += 1;
        } else {
            rising = 0;
        }
        trace.push(diff);
        h = next;
        if diff <= tol {
            return Ok((kernels(d, &h), trace));
        }
        if rising >= 5 {
            return Err(FredholmError::Divergence { trace });
        }
    }
    Err(FredholmError::MaxIter { trace })
}

fn kernels(d: &FredholmDiscretization, h: &[f64]) -> ControllerKernels {
    let len = d.layout.len();
    let step = d.grid.step();
    let blocks: Vec<PiecewiseSamples> =
        h.chunks(len).map(|chunk| d.layout.unpack(step, chunk)).collect();
    let (f, g_blocks) = blocks.split_last().expect("at least two blocks");
    let f = f.clone();
    let g_blocks = g_blocks.to_vec();
    let (g, fprime) = match d.case {
        KernelCase::Regular => {
            let dec = d.decomposition.expect("regular system carries a decomposition");
            (stitch_g(&g_blocks, &dec), None)
        }
        KernelCase::Degenerate => (g_blocks[0].clone(), Some(f.derivative())),
    };
    let n = d.grid.n();
    ControllerKernels {
        case: d.case,
        tau0: d.plant.tau0,
        tau1: d.plant.tau1,
        step,
        f0: f.right(0),
        f1: f.left(n),
        f,
        g,
        g_blocks,
        fprime,
        decomposition: d.decomposition,
    }
}

/// Assembles `g` on `[0, τ1]` from `g_k(ν) = g(ν + kτ0 − γ)`. Block
/// boundaries take the right block's value and keep the left block's as a
/// left limit.
pub fn stitch_g(blocks: &[PiecewiseSamples], dec: &DelayDecomposition) -> PiecewiseSamples {
    let n = dec.steps_per_tau0;
    let gs = dec.gamma_steps;
    let total = dec.steps_tau1();
    let end = (dec.n0 + 1) * n;
    let mut values = Vec::with_capacity(total + 1);
    let mut jumps = Vec::new();
    for m in 0..=total {
        let pos = m + gs;
        let right = (pos < end).then(|| blocks[pos / n].right(pos % n));
        let left = (m > 0).then(|| {
            let k = pos.div_ceil(n) - 1;
            blocks[k].left(pos - k * n)
        });
        match (left, right) {
            (Some(l), Some(r)) => {
                values.push(r);
                if l != r {
                    jumps.push((m, l));
                }
            }
            (None, Some(r)) => values.push(r),
            (Some(l), None) => values.push(l),
            (None, None) => values.push(0.0),
        }
    }
    jumps
        .into_iter()
        .fold(PiecewiseSamples::new(dec.step, values), |s, (m, l)| s.with_jump(m, l))
}

/// Sup-norm of the difference of two kernel sets on their common samples.
pub fn kernel_distance(a: &ControllerKernels, b: &ControllerKernels) -> f64 {
    let diff = |x: &PiecewiseSamples, y: &PiecewiseSamples| {
        let mut m = 0.0f64;
        for i in 0..x.len().min(y.len()) {
            m = m.max((x.right(i) - y.right(i)).abs()).max((x.left(i) - y.left(i)).abs());
        }
        m
    };
    diff(&a.f, &b.f).max(diff(&a.g, &b.g))
}
