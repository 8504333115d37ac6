use crate::expr::Kernel;
use crate::linalg::Matrix;
use crate::model::{decompose_delays, DelayDecomposition, PlantModel, TOL_ASSUMPTION};
use crate::quadrature::Grid;

use super::{BlockLayout, FredholmDiscretization, FredholmError, KernelCase, Side};

/// Kernel values on the lattice `k Δ`, `k = 0..=last`, zero elsewhere.
struct Lattice {
    values: Vec<f64>,
}

impl Lattice {
    fn sample(kernel: &Kernel, step: f64, last: usize) -> Result<Self, FredholmError> {
        Ok(Self { values: kernel.sample(step, last)? })
    }

    fn last(&self) -> isize {
        self.values.len() as isize - 1
    }

    /// Closed-support value.
    fn at(&self, k: isize) -> f64 {
        if k < 0 || k > self.last() {
            0.0
        } else {
            self.values[k as usize]
        }
    }

    /// One-sided limit at `k`: zero when approaching the support from outside.
    fn limit(&self, k: isize, side: Side) -> f64 {
        match side {
            Side::Left if k == 0 => 0.0,
            Side::Right if k == self.last() => 0.0,
            _ => self.at(k),
        }
    }
}

/// `coef ∫_{η_lo}^{η_hi} h_block(η) K((j - i) + shift) dη`.
struct Term<'a> {
    block: usize,
    lo: usize,
    hi: usize,
    kernel: &'a Lattice,
    shift: isize,
    coef: f64,
}

struct Assembler {
    d: FredholmDiscretization,
}

impl Assembler {
    fn new(
        case: KernelCase,
        blocks: usize,
        grid: Grid,
        layout: BlockLayout,
        plant: PlantModel,
        decomposition: Option<DelayDecomposition>,
    ) -> Self {
        let size = blocks * layout.len();
        Self {
            d: FredholmDiscretization {
                case,
                blocks,
                grid,
                layout,
                matrix: Matrix::zeros(size, size),
                rhs: vec![0.0; size],
                pointwise: Matrix::zeros(blocks, blocks),
                plant,
                decomposition,
            },
        }
    }

    fn pointwise(&mut self, row_block: usize, col_block: usize, coef: f64) {
        self.d.pointwise[(row_block, col_block)] = coef;
        for (node, side) in self.d.layout.positions() {
            let r = self.d.index(row_block, node, side);
            let c = self.d.index(col_block, node, side);
            self.d.matrix[(r, c)] += coef;
        }
    }

    fn integral(&mut self, row: usize, j: usize, t: &Term<'_>) {
        if t.hi <= t.lo {
            return;
        }
        let w = 0.5 * self.d.grid.step() * t.coef;
        for i in t.lo..t.hi {
            let k = j as isize - i as isize + t.shift;
            let right = self.d.index(t.block, i, Side::Right);
            let left = self.d.index(t.block, i + 1, Side::Left);
            self.d.matrix[(row, right)] += w * t.kernel.at(k);
            self.d.matrix[(row, left)] += w * t.kernel.at(k - 1);
        }
    }
}

/// Block system for `b ≠ 0`, unknown order `(g_0, …, g_{n0}, f)`.
pub fn assemble_regular(
    m: &PlantModel,
    dec: &DelayDecomposition,
    grid: &Grid,
) -> Result<FredholmDiscretization, FredholmError> {
    if m.is_degenerate() {
        return Err(FredholmError::InvalidCase("regular assembly needs b != 0".into()));
    }
    let n = grid.n();
    if dec.steps_per_tau0 != n || (dec.step - grid.step()).abs() > 1e-12 * grid.step() {
        return Err(FredholmError::InvalidCase("decomposition does not match the grid".into()));
    }
    let plant = m.with_tau1(dec.tau1);
    let n0 = dec.n0;
    let gs = dec.gamma_steps as isize;
    let t1 = dec.steps_tau1();
    let step = grid.step();
    let nl = Lattice::sample(plant.n_kernel(), step, n)?;
    let ml = Lattice::sample(plant.m_kernel(), step, t1)?;

    let blocks = n0 + 2;
    let fb = n0 + 1;
    let layout = BlockLayout { n, jump: dec.interior_gamma() };
    let mut asm = Assembler::new(KernelCase::Regular, blocks, *grid, layout, plant.clone(), Some(*dec));

    asm.pointwise(0, 0, 1.0);
    for k in 1..=n0 {
        asm.pointwise(k, k, 1.0);
        asm.pointwise(k, k - 1, -plant.a);
    }
    asm.pointwise(fb, fb, plant.b);
    asm.pointwise(fb, n0, -plant.a);

    let n_i = n as isize;
    for (j, side) in layout.positions() {
        let ji = j as isize;

        // block 0: g_0 - ∫_0^ν g_0 N(ν-η) + ∫_0^ν f M(ν-γ-η) = -N(ν-γ)
        let row = asm.d.index(0, j, side);
        asm.integral(row, j, &Term { block: 0, lo: 0, hi: j, kernel: &nl, shift: 0, coef: -1.0 });
        let hi = (ji - gs).max(0) as usize;
        asm.integral(row, j, &Term { block: fb, lo: 0, hi, kernel: &ml, shift: -gs, coef: 1.0 });
        asm.d.rhs[row] = -nl.limit(ji - gs, side);

        // blocks 1..=n0
        for k in 1..=n0 {
            let row = asm.d.index(k, j, side);
            let shift = k as isize * n_i - gs;
            asm.integral(row, j, &Term { block: k - 1, lo: j, hi: n, kernel: &nl, shift: n_i, coef: -1.0 });
            asm.integral(row, j, &Term { block: k, lo: 0, hi: j, kernel: &nl, shift: 0, coef: -1.0 });
            let hi = (ji + shift).clamp(0, n_i) as usize;
            asm.integral(row, j, &Term { block: fb, lo: 0, hi, kernel: &ml, shift, coef: 1.0 });
            asm.d.rhs[row] = -nl.limit(ji + shift, side);
        }

        // last block: b f - a g_{n0} - ∫_ν^τ0 g_{n0} N(ν+τ0-η) + ∫_ν^τ0 f M(ν+τ1-η) = 0
        let row = asm.d.index(fb, j, side);
        asm.integral(row, j, &Term { block: n0, lo: j, hi: n, kernel: &nl, shift: n_i, coef: -1.0 });
        asm.integral(row, j, &Term { block: fb, lo: j, hi: n, kernel: &ml, shift: t1 as isize, coef: 1.0 });
    }
    Ok(asm.d)
}

/// Two-block system for `b = 0`, `τ0 = τ1`, unknown order `(g, f)`.
pub fn assemble_degenerate(m: &PlantModel, grid: &Grid) -> Result<FredholmDiscretization, FredholmError> {
    if !m.is_degenerate() {
        return Err(FredholmError::InvalidCase("degenerate assembly needs b = 0".into()));
    }
    if (m.tau1 - m.tau0).abs() > 1e-12 * m.tau0 {
        return Err(FredholmError::InvalidCase(format!(
            "b = 0 is implemented for tau0 = tau1 only (got {} and {})",
            m.tau0, m.tau1
        )));
    }
    if (grid.length() - m.tau0).abs() > 1e-12 * m.tau0 {
        return Err(FredholmError::InvalidCase("grid does not cover [0, tau0]".into()));
    }
    let plant = m.with_tau1(m.tau0);
    let n = grid.n();
    let step = grid.step();
    let m0 = plant.m_kernel().eval(0.0)?;
    let m1 = plant.m_kernel().eval(plant.tau0)?;
    let det = plant.a * m0 - m1;
    if det.abs() <= TOL_ASSUMPTION {
        return Err(FredholmError::AssumptionViolated(format!(
            "a M(0) - M(tau0) = {det} is numerically zero"
        )));
    }
    let nl = Lattice::sample(plant.n_kernel(), step, n)?;
    let mpl = Lattice::sample(&plant.m_kernel().derivative(), step, n)?;

    let layout = BlockLayout { n, jump: None };
    let mut asm = Assembler::new(KernelCase::Degenerate, 2, *grid, layout, plant.clone(), None);
    let (gb, fb) = (0, 1);
    asm.pointwise(gb, gb, 1.0);
    asm.pointwise(gb, fb, m0);
    asm.pointwise(fb, gb, -plant.a);
    asm.pointwise(fb, fb, -m1);

    let n_i = n as isize;
    for (j, side) in layout.positions() {
        // g + M(0) f + ∫_0^ν [f M'(ν-η) - g N(ν-η)] = -N(ν)
        let row = asm.d.index(gb, j, side);
        asm.integral(row, j, &Term { block: fb, lo: 0, hi: j, kernel: &mpl, shift: 0, coef: 1.0 });
        asm.integral(row, j, &Term { block: gb, lo: 0, hi: j, kernel: &nl, shift: 0, coef: -1.0 });
        asm.d.rhs[row] = -nl.at(j as isize);

        // -a g - M(τ0) f + ∫_ν^τ0 [f M'(τ0+ν-η) - g N(τ0+ν-η)] = 0
        let row = asm.d.index(fb, j, side);
        asm.integral(row, j, &Term { block: fb, lo: j, hi: n, kernel: &mpl, shift: n_i, coef: 1.0 });
        asm.integral(row, j, &Term { block: gb, lo: j, hi: n, kernel: &nl, shift: n_i, coef: -1.0 });
    }
    Ok(asm.d)
}

/// Picks the branch from `b`, decomposing the delays on a grid of `n`
/// subintervals per `τ0`.
pub fn assemble(m: &PlantModel, n: usize) -> Result<FredholmDiscretization, FredholmError> {
    let grid = Grid::new(m.tau0, n)?;
    if m.is_degenerate() {
        assemble_degenerate(m, &grid)
    } else {
        let (dec, _) = decompose_delays(m.tau0, m.tau1, grid.step())?;
        assemble_regular(m, &dec, &grid)
    }
}
