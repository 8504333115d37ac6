//! Uniform grids and composite trapezoid sums.

use std::ops::{Add, Mul};

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{EvalError, Kernel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("invalid grid: {0}")]
    InvalidArgument(String),
    #[error("node index {index} out of range 0..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Uniform grid `ν_i = i Δ`, `i = 0..=n`, on `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    step: f64,
    length: f64,
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self, QuadError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(QuadError::InvalidArgument(format!("length must be positive, got {length}")));
        }
        if n < 2 {
            return Err(QuadError::InvalidArgument(format!("need at least 2 subintervals, got {n}")));
        }
        Ok(Self { n, step: length / n as f64, length })
    }

    /// Grid with a prescribed step, `length = n * step`.
    pub fn with_step(step: f64, n: usize) -> Result<Self, QuadError> {
        let mut g = Self::new(step * n as f64, n)?;
        g.step = step;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.length
        } else {
            i as f64 * self.step
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }
}

pub fn make_grid(length: f64, n: usize) -> Result<Grid, QuadError> {
    Grid::new(length, n)
}

/// Composite trapezoid `Δ (s_0/2 + s_1 + ... + s_{n-1} + s_n/2)`.
pub fn trapezoid<T>(samples: &[T], step: f64) -> T
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    match samples {
        [] | [_] => T::default(),
        [first, inner @ .., last] => {
            let mid = inner.iter().fold(T::default(), |acc, &s| acc + s);
            (mid + (*first + *last) * 0.5) * step
        }
    }
}

/// Trapezoid value of `∫_0^{ν_j} f(η) k(ν_j + shift - η) dη` on the grid
/// nodes `η_i`, `i = 0..=j`, with `k` zero outside its support.
pub fn convolve_at(
    fsamples: &[f64],
    grid: &Grid,
    kernel: &Kernel,
    j: usize,
    shift: f64,
) -> Result<f64, QuadError> {
    if j > grid.n() || fsamples.len() <= j {
        return Err(QuadError::IndexOutOfRange { index: j, n: grid.n() });
    }
    if j == 0 {
        return Ok(0.0);
    }
    let nu = grid.node(j);
    let vals: Vec<f64> = (0..=j)
        .map(|i| Ok(fsamples[i] * kernel.eval(nu + shift - grid.node(i))?))
        .collect::<Result<_, EvalError>>()?;
    Ok(trapezoid(&vals, grid.step()))
}

/// Samples of a piecewise-smooth function on a uniform grid with step
/// `step`, possibly discontinuous at some nodes.
///
/// `values[i]` is the right limit at node `i` (the value at the last node is
/// its left limit). Nodes listed in `jumps` also carry a distinct left limit.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSamples {
    step: f64,
    values: Vec<f64>,
    jumps: Vec<(usize, f64)>,
}

impl PiecewiseSamples {
    pub fn new(step: f64, values: Vec<f64>) -> Self {
        Self { step, values, jumps: Vec::new() }
    }

    /// Registers a left limit at interior node `index`.
    pub fn with_jump(mut self, index: usize, left: f64) -> Self {
        debug_assert!(index > 0 && index + 1 < self.values.len());
        match self.jumps.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(k) => self.jumps[k].1 = left,
            Err(k) => self.jumps.insert(k, (index, left)),
        }
        self
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Length of the sampled interval.
    pub fn length(&self) -> f64 {
        self.step * (self.values.len().saturating_sub(1)) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &[(usize, f64)] {
        &self.jumps
    }

    pub fn right(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn left(&self, i: usize) -> f64 {
        match self.jumps.binary_search_by_key(&i, |&(k, _)| k) {
            Ok(k) => self.jumps[k].1,
            Err(_) => self.values[i],
        }
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let last = self.values.len().checked_sub(1)?;
        if last == 0 {
            return Some((0, 0.0));
        }
        let pos = x / self.step;
        let slack = 1e-9;
        if pos < -slack || pos > last as f64 + slack {
            return None;
        }
        let pos = pos.clamp(0.0, last as f64);
        let mut i = pos.floor() as usize;
        let mut t = pos - i as f64;
        // snap to nodes
        if t > 1.0 - slack {
            i += 1;
            t = 0.0;
        } else if t < slack {
            t = 0.0;
        }
        if i >= last {
            return Some((last, 0.0));
        }
        Some((i, t))
    }

    /// Linear interpolation, right limit at nodes, zero outside.
    pub fn eval(&self, x: f64) -> f64 {
        match self.locate(x) {
            None => 0.0,
            Some((i, t)) if t == 0.0 => {
                if i + 1 == self.values.len() {
                    self.left(i)
                } else {
                    self.right(i)
                }
            }
            Some((i, t)) => self.right(i) * (1.0 - t) + self.left(i + 1) * t,
        }
    }

    /// Linear interpolation with the left limit at nodes, zero outside.
    pub fn eval_left(&self, x: f64) -> f64 {
        match self.locate(x) {
            None => 0.0,
            Some((i, t)) if t == 0.0 => {
                if i == 0 {
                    self.right(0)
                } else {
                    self.left(i)
                }
            }
            Some((i, t)) => self.right(i) * (1.0 - t) + self.left(i + 1) * t,
        }
    }

    /// Resamples onto a grid of step `step` covering the same interval.
    /// Jumps that land on the new nodes are kept as jumps.
    pub fn resample(&self, step: f64) -> Self {
        let count = (self.length() / step).round() as usize;
        let values = (0..=count).map(|m| self.eval(m as f64 * step)).collect();
        let mut out = Self::new(step, values);
        for &(idx, left) in &self.jumps {
            let pos = idx as f64 * self.step / step;
            let m = pos.round() as usize;
            if (pos - m as f64).abs() < 1e-9 && m > 0 && m < count {
                out = out.with_jump(m, left);
            }
        }
        out
    }

    /// Second-order finite-difference derivative: central inside each
    /// smooth piece, one-sided three-point at piece ends.
    pub fn derivative(&self) -> Self {
        let n = self.values.len();
        if n < 3 {
            let d = if n == 2 { (self.values[1] - self.values[0]) / self.step } else { 0.0 };
            return Self::new(self.step, vec![d; n]);
        }
        let h = self.step;
        let mut breaks: Vec<usize> = vec![0];
        breaks.extend(self.jumps.iter().map(|&(i, _)| i));
        breaks.push(n - 1);
        let mut right = vec![0.0; n];
        let mut left = vec![0.0; n];
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            // piece values: right(a), values a+1..b-1, left(b)
            let val = |i: usize| {
                if i == a {
                    self.right(a)
                } else if i == b {
                    self.left(b)
                } else {
                    self.values[i]
                }
            };
            let d = |i: usize| -> f64 {
                if b - a == 1 {
                    (val(b) - val(a)) / h
                } else if i == a {
                    (-3.0 * val(a) + 4.0 * val(a + 1) - val(a + 2)) / (2.0 * h)
                } else if i == b {
                    (3.0 * val(b) - 4.0 * val(b - 1) + val(b - 2)) / (2.0 * h)
                } else {
                    (val(i + 1) - val(i - 1)) / (2.0 * h)
                }
            };
            for i in a..=b {
                if i == a {
                    right[i] = d(i);
                } else if i == b {
                    left[i] = d(i);
                } else {
                    right[i] = d(i);
                    left[i] = right[i];
                }
            }
        }
        right[n - 1] = left[n - 1];
        let mut out = Self::new(h, right);
        for &(i, _) in &self.jumps {
            out = out.with_jump(i, left[i]);
        }
        out
    }

    /// Trapezoid value of `∫_0^L s(η) w(η) dη` with `refine` equal
    /// substeps per sample interval; one-sided limits are used at jumps.
    pub fn integrate_weighted<T, W>(&self, refine: usize, weight: W) -> T
    where
        T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
        W: Fn(f64) -> T,
    {
        let refine = refine.max(1);
        let h = self.step / refine as f64;
        let mut acc = T::default();
        for i in 0..self.values.len().saturating_sub(1) {
            let a = self.right(i);
            let b = self.left(i + 1);
            let x0 = i as f64 * self.step;
            let mut piece = (weight(x0) * a + weight(x0 + self.step) * b) * 0.5;
            for k in 1..refine {
                let t = k as f64 / refine as f64;
                piece = piece + weight(x0 + k as f64 * h) * (a * (1.0 - t) + b * t);
            }
            acc = acc + piece * h;
        }
        acc
    }

    /// `∫_0^L s(η) e^{-η s} dη`.
    pub fn laplace(&self, s: Complex64, refine: usize) -> Complex64 {
        self.integrate_weighted(refine, |eta| (-s * eta).exp())
    }

    /// `∫_0^L |s(η)| dη` by the trapezoid rule.
    pub fn abs_integral(&self) -> f64 {
        (0..self.values.len().saturating_sub(1))
            .map(|i| 0.5 * self.step * (self.right(i).abs() + self.left(i + 1).abs()))
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .chain(self.jumps.iter().map(|(_, l)| l))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_examples() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(make_grid(1.5, 3).unwrap().step(), 0.5);
        assert!(matches!(make_grid(0.0, 4), Err(QuadError::InvalidArgument(_))));
        assert!(matches!(make_grid(1.0, 1), Err(QuadError::InvalidArgument(_))));
        assert!(matches!(make_grid(-1.0, 4), Err(QuadError::InvalidArgument(_))));
    }

    #[test]
    fn grid_invariants() {
        for &(len, n) in &[(1.0, 3usize), (0.7, 7), (1.5, 300), (2.0, 401)] {
            let g = make_grid(len, n).unwrap();
            let nodes = g.nodes();
            assert_eq!(nodes[0], 0.0);
            assert_eq!(*nodes.last().unwrap(), len);
            assert!(nodes.windows(2).all(|w| w[1] > w[0]));
            assert!((g.step() * n as f64 - len).abs() <= 4.0 * f64::EPSILON * len);
        }
    }

    #[test]
    fn trapezoid_examples() {
        assert_eq!(trapezoid(&[0.0, 0.5, 1.0], 0.5), 0.5);
        assert_eq!(trapezoid(&[1.0; 5], 0.25), 1.0);
        let g = make_grid(1.0, 200).unwrap();
        let s: Vec<f64> = g.nodes().iter().map(|&v| (PI * v).sin() / 5.0).collect();
        assert!((trapezoid(&s, g.step()) - 2.0 / (5.0 * PI)).abs() < 1e-5);
        assert_relative_eq!(2.0 / (5.0 * PI), 0.127324, epsilon = 1e-6);
    }

    #[test]
    fn trapezoid_order_two() {
        let cases: Vec<(Box<dyn Fn(f64) -> f64>, f64)> = vec![
            (Box::new(|v: f64| v.exp()), 1f64.exp() - 1.0),
            (Box::new(|v: f64| (3.0 * v).cos()), (3f64).sin() / 3.0),
            (Box::new(|v: f64| 1.0 / (1.0 + v * v)), PI / 4.0),
            (Box::new(|v: f64| v * v * v), 0.25),
        ];
        for (f, exact) in cases {
            let err = |n: usize| {
                let g = make_grid(1.0, n).unwrap();
                let s: Vec<f64> = g.nodes().iter().map(|&v| f(v)).collect();
                (trapezoid(&s, g.step()) - exact).abs()
            };
            for n in [10, 20, 40, 80] {
                let ratio = err(n) / err(2 * n);
                assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
            }
        }
    }

    #[test]
    fn convolve_examples() {
        let g = make_grid(1.0, 100).unwrap();
        let one = Kernel::parse("1", 1.0).unwrap();
        let ones = vec![1.0; 101];
        assert_eq!(convolve_at(&ones, &g, &one, 0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(convolve_at(&ones, &g, &one, 100, 0.0).unwrap(), 1.0, epsilon = 1e-14);

        let g = make_grid(1.0, 200).unwrap();
        let eta = g.nodes();
        let cos = Kernel::parse("cos(v)", 1.0).unwrap();
        let v = convolve_at(&eta, &g, &cos, 200, 0.0).unwrap();
        // ∫_0^1 η cos(1 − η) dη = 1 − cos 1
        assert!((v - (1.0 - 1f64.cos())).abs() < 1e-4);
        assert!(matches!(
            convolve_at(&eta, &g, &cos, 201, 0.0),
            Err(QuadError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn convolve_zero_extension() {
        let g = make_grid(1.0, 50).unwrap();
        let k = Kernel::parse("2 + v", 1.0).unwrap();
        let f = vec![1.0; 51];
        for j in 0..=50 {
            let nu = g.node(j);
            assert_eq!(convolve_at(&f, &g, &k, j, 1.0 + nu + 0.1).unwrap(), 0.0);
            assert_eq!(convolve_at(&f, &g, &k, j, -(nu + 0.1) - 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn piecewise_samples_limits() {
        let s = PiecewiseSamples::new(0.5, vec![0.0, 1.0, 5.0, 6.0]).with_jump(2, 2.0);
        assert_eq!(s.eval(1.0), 5.0);
        assert_eq!(s.eval_left(1.0), 2.0);
        assert_eq!(s.eval(0.75), 1.5);
        assert_eq!(s.eval(1.25), 5.5);
        assert_eq!(s.eval(1.5), 6.0);
        assert_eq!(s.eval(2.0), 0.0);
        // integral of the piecewise-linear function: 0.25 + 0.75 + 2.75
        assert_relative_eq!(s.integrate_weighted(3, |_| 1.0), 0.25 + 0.75 + 2.75, epsilon = 1e-14);
        let r = s.resample(0.25);
        assert_eq!(r.len(), 7);
        assert_eq!(r.left(4), 2.0);
        assert_eq!(r.right(4), 5.0);
    }

    #[test]
    fn piecewise_derivative_is_second_order() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let vals: Vec<f64> = (0..=n).map(|i| (2.0 * i as f64 * h).sin()).collect();
            let d = PiecewiseSamples::new(h, vals).derivative();
            (0..=n)
                .map(|i| (d.right(i) - 2.0 * (2.0 * i as f64 * h).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(50) / err(100);
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
    }

    proptest! {
        #[test]
        fn trapezoid_is_linear(
            u in proptest::collection::vec(-10.0f64..10.0, 2..60),
            seed in proptest::collection::vec(-10.0f64..10.0, 60),
            alpha in -5.0f64..5.0,
            beta in -5.0f64..5.0,
            step in 0.001f64..1.0,
        ) {
            let w = &seed[..u.len()];
            let comb: Vec<f64> = u.iter().zip(w).map(|(x, y)| alpha * x + beta * y).collect();
            let lhs = trapezoid(&comb, step);
            let rhs = alpha * trapezoid(&u, step) + beta * trapezoid(w, step);
            let scale = step * u.len() as f64 * 10.0 * (alpha.abs() + beta.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-14 * scale.max(1.0));
        }
    }
}
