//! Kernel equations for the feedback `U = ∫f x + ∫g U`.
//!
//! Two families are supported:
//!
//! * **regular** (`b ≠ 0`): unknowns `(g_0, …, g_{n0}, f)` on `[0, τ0]`
//!   where `g_k(ν) = g(ν + kτ0 − γ)`, giving an `(n0 + 2)`-block system;
//! * **degenerate** (`b = 0`, `τ0 = τ1`): unknowns `(g, f)` with pointwise
//!   part `K = [[1, M(0)], [−a, −M(τ0)]]`.
//!
//! Both are discretized by node collocation with the trapezoid rule on a
//! single uniform grid. In the regular case every unknown may jump at the
//! node `ν = γ`; that node then carries two unknowns (left and right limit)
//! and two collocation rows.

mod assemble;
mod residual;
mod solve;

pub use assemble::{assemble, assemble_degenerate, assemble_regular};
pub use residual::{residuals, ResidualReport};
pub use solve::{kernel_distance, solve_direct, solve_successive, stitch_g, SolveInfo};

use thiserror::Error;

use crate::expr::EvalError;
use crate::linalg::{LinalgError, Matrix};
use crate::model::{DelayDecomposition, ModelError, PlantModel};
use crate::quadrature::{Grid, PiecewiseSamples, QuadError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FredholmError {
    #[error("wrong synthesis branch: {0}")]
    InvalidCase(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("discretized operator is numerically singular: {0}")]
    Singular(#[from] LinalgError),
    #[error("successive approximations diverge (last differences {:?})", last_of(.trace))]
    Divergence { trace: Vec<f64> },
    #[error("successive approximations hit {} iterations without reaching tolerance", .trace.len())]
    MaxIter { trace: Vec<f64> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

fn last_of(trace: &[f64]) -> &[f64] {
    &trace[trace.len().saturating_sub(5)..]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelCase {
    Regular,
    Degenerate,
}

/// One-sided position at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Position of each unknown inside a block: nodes `0..=n` in order, with the
/// optional jump node holding its left limit just before its right limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub n: usize,
    pub jump: Option<usize>,
}

impl BlockLayout {
    pub fn len(&self) -> usize {
        self.n + 1 + usize::from(self.jump.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn offset(&self, node: usize, side: Side) -> usize {
        match self.jump {
            Some(g) if node > g || (node == g && side == Side::Right) => node + 1,
            _ => node,
        }
    }

    /// All `(node, side)` positions in storage order.
    pub fn positions(&self) -> Vec<(usize, Side)> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..=self.n {
            if Some(i) == self.jump {
                out.push((i, Side::Left));
                out.push((i, Side::Right));
            } else if i == self.n {
                out.push((i, Side::Left));
            } else {
                out.push((i, Side::Right));
            }
        }
        out
    }

    /// Unpacks one block of a solution vector.
    pub fn unpack(&self, step: f64, block: &[f64]) -> PiecewiseSamples {
        let values = (0..=self.n).map(|i| block[self.offset(i, Side::Right)]).collect();
        let s = PiecewiseSamples::new(step, values);
        match self.jump {
            Some(g) => s.with_jump(g, block[self.offset(g, Side::Left)]),
            None => s,
        }
    }
}

/// Dense discretization of the block operator, `matrix · h = rhs`.
#[derive(Debug, Clone)]
pub struct FredholmDiscretization {
    pub case: KernelCase,
    pub blocks: usize,
    pub grid: Grid,
    pub layout: BlockLayout,
    pub matrix: Matrix,
    pub rhs: Vec<f64>,
    /// Pointwise coefficient pattern, `blocks × blocks`, applied per node.
    pub pointwise: Matrix,
    /// Plant with the snapped input delay used for the assembly.
    pub plant: PlantModel,
    pub decomposition: Option<DelayDecomposition>,
}

impl FredholmDiscretization {
    pub fn size(&self) -> usize {
        self.blocks * self.layout.len()
    }

    pub fn index(&self, block: usize, node: usize, side: Side) -> usize {
        block * self.layout.len() + self.layout.offset(node, side)
    }

    /// Matrix of the pointwise part `K ⊗ Id` in the full unknown space.
    pub fn pointwise_full(&self) -> Matrix {
        let len = self.layout.len();
        let mut k = Matrix::zeros(self.size(), self.size());
        for r in 0..self.blocks {
            for c in 0..self.blocks {
                let v = self.pointwise[(r, c)];
                if v != 0.0 {
                    for p in 0..len {
                        k[(r * len + p, c * len + p)] = v;
                    }
                }
            }
        }
        k
    }
}

/// Sampled feedback kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerKernels {
    pub case: KernelCase,
    pub tau0: f64,
    pub tau1: f64,
    pub step: f64,
    /// `f` on `[0, τ0]`.
    pub f: PiecewiseSamples,
    /// `g` on `[0, τ1]`, stitched from the block unknowns.
    pub g: PiecewiseSamples,
    /// Raw block solutions `g_0 … g_{n0}` (regular) or `g` (degenerate).
    pub g_blocks: Vec<PiecewiseSamples>,
    /// `f'` for the degenerate law.
    pub fprime: Option<PiecewiseSamples>,
    pub f0: f64,
    pub f1: f64,
    pub decomposition: Option<DelayDecomposition>,
}

impl ControllerKernels {
    /// Zero kernels on the given grids.
    pub fn zero(case: KernelCase, tau0: f64, tau1: f64, step: f64) -> Self {
        let nf = (tau0 / step).round() as usize;
        let ng = (tau1 / step).round() as usize;
        let f = PiecewiseSamples::new(step, vec![0.0; nf + 1]);
        let g = PiecewiseSamples::new(step, vec![0.0; ng + 1]);
        Self {
            case,
            tau0,
            tau1,
            step,
            fprime: (case == KernelCase::Degenerate).then(|| f.clone()),
            g_blocks: vec![g.clone()],
            f,
            g,
            f0: 0.0,
            f1: 0.0,
            decomposition: None,
        }
    }
}
