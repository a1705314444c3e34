//! Uniform grids, grid functions, cumulative quadrature, and finite
//! differences.
//!
//! Every integral in the solver is taken here. Cumulative integration uses
//! composite Simpson between even nodes and cubic-exact half-interval rules
//! for the odd nodes, so the result is exact on polynomials of degree <= 3
//! (for grids with at least 5 nodes) and globally fourth order on smooth
//! integrands.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{EvalError, Expr};

/// Uniform partition of `[x_lo, x_hi]` into `n` nodes. `n` is odd and at
/// least 3 so composite Simpson applies cleanly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_lo: f64,
    x_hi: f64,
    n: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid: x_lo {x_lo} must be < x_hi {x_hi} and n {n} must be odd and >= 3")]
    InvalidGrid { x_lo: f64, x_hi: f64, n: usize },
    #[error("evaluation failed at node {index} (x = {x}): {source}")]
    Tabulate {
        index: usize,
        x: f64,
        source: EvalError,
    },
    #[error("x = {x} is outside the grid domain [{x_lo}, {x_hi}]")]
    OutOfDomain { x: f64, x_lo: f64, x_hi: f64 },
    #[error("base point {x} does not coincide with a grid node")]
    BaseNotANode { x: f64 },
}

impl Grid {
    pub fn new(x_lo: f64, x_hi: f64, n: usize) -> Result<Grid, GridError> {
        if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() || n < 3 || n % 2 == 0 {
            return Err(GridError::InvalidGrid { x_lo, x_hi, n });
        }
        Ok(Grid { x_lo, x_hi, n })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k < self.n);
        self.x_lo + k as f64 * self.step()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|k| self.node(k))
    }

    /// Index of the node coinciding with `x`, if any (up to a small
    /// step-relative tolerance).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let t = (x - self.x_lo) / self.step();
        let k = t.round();
        if k < 0.0 || k > (self.n - 1) as f64 {
            return None;
        }
        let k = k as usize;
        if (x - self.node(k)).abs() <= self.step() * 1e-6 {
            Some(k)
        } else {
            None
        }
    }

    /// Same interval with the step halved (`n -> 2n - 1`).
    pub fn refine(&self) -> Grid {
        Grid {
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            n: 2 * self.n - 1,
        }
    }
}

/// Samples of a scalar function on a [`Grid`].
///
/// Values are finite unless the function was explicitly masked (pole masks
/// set masked nodes to NaN); quadrature and differencing expect unmasked
/// input.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> GridFunction {
        assert_eq!(
            values.len(),
            grid.n(),
            "value count {} does not match grid size {}",
            values.len(),
            grid.n()
        );
        GridFunction { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> GridFunction {
        GridFunction::new(grid, vec![c; grid.n()])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_eq!(self.grid, other.grid, "grid mismatch in zip_with");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        GridFunction::new(self.grid, values)
    }

    /// Sup norm over finite entries.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// CSV dump, one row per node, full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (k, &v) in self.values.iter().enumerate() {
            out.push_str(&g17(self.grid.node(k)));
            out.push(',');
            out.push_str(&g17(v));
            out.push('\n');
        }
        out
    }
}

/// Format with 17 significant digits; decimal round trips exactly.
pub fn g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pointwise evaluation of `e` on `grid`. Evaluation failures are annotated
/// with the offending node.
pub fn tabulate(
    e: &Expr,
    grid: Grid,
    params: &BTreeMap<String, f64>,
) -> Result<GridFunction, GridError> {
    let mut values = Vec::with_capacity(grid.n());
    for k in 0..grid.n() {
        let x = grid.node(k);
        let v = e
            .eval(x, params)
            .map_err(|source| GridError::Tabulate { index: k, x, source })?;
        values.push(v);
    }
    Ok(GridFunction::new(grid, values))
}

/// Cumulative integral anchored at the first node: `F(x_lo) = 0` and
/// `F(x_k) ~ integral of f from x_lo to x_k`.
pub fn cumulative_integral(f: &GridFunction) -> GridFunction {
    GridFunction::new(f.grid, integrate_slice(&f.values, f.grid.step()))
}

/// Cumulative integral anchored at node `base`: zero there, integrating
/// outward over the sub-grids left and right of the base.
pub fn cumulative_integral_from(f: &GridFunction, base: usize) -> GridFunction {
    assert!(base < f.grid.n(), "base index out of range");
    let h = f.grid.step();
    let mut out = vec![0.0; f.grid.n()];
    let right = integrate_slice(&f.values[base..], h);
    for (j, v) in right.into_iter().enumerate() {
        out[base + j] = v;
    }
    if base > 0 {
        let reversed: Vec<f64> = f.values[..=base].iter().rev().copied().collect();
        let left = integrate_slice(&reversed, h);
        for (j, v) in left.into_iter().enumerate() {
            out[base - j] = -v;
        }
    }
    GridFunction::new(f.grid, out)
}

/// `integral of f over the whole grid` — the last node of the cumulative
/// integral.
pub fn definite_integral(f: &GridFunction) -> f64 {
    *integrate_slice(&f.values, f.grid.step())
        .last()
        .expect("grid has at least 3 nodes")
}

/// Cumulative quadrature over a uniformly spaced slice.
///
/// Even nodes accumulate composite Simpson pairs. Odd nodes add one
/// half-interval rule built from a cubic through four neighbouring nodes,
/// so every prefix is exact for polynomials of degree <= 3 once the slice
/// has at least 4 points. Slices of length 2 and 3 fall back to the
/// trapezoid and the three-point parabola.
fn integrate_slice(v: &[f64], h: f64) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m];
    if m < 2 {
        return out;
    }
    if m == 2 {
        out[1] = h * (v[0] + v[1]) / 2.0;
        return out;
    }
    for k in 1..m {
        if k % 2 == 0 {
            out[k] = out[k - 2] + h / 3.0 * (v[k - 2] + 4.0 * v[k - 1] + v[k]);
        } else {
            let half = if k == 1 {
                if m >= 4 {
                    h / 24.0 * (9.0 * v[0] + 19.0 * v[1] - 5.0 * v[2] + v[3])
                } else {
                    h / 12.0 * (5.0 * v[0] + 8.0 * v[1] - v[2])
                }
            } else if k + 1 < m {
                h / 24.0 * (-v[k - 2] + 13.0 * v[k - 1] + 13.0 * v[k] - v[k + 1])
            } else {
                h / 24.0 * (v[k - 3] - 5.0 * v[k - 2] + 19.0 * v[k - 1] + 9.0 * v[k])
            };
            out[k] = out[k - 1] + half;
        }
    }
    out
}

/// Second difference: central on interior nodes, one-sided O(h^2) stencils at
/// the endpoints.
pub fn second_difference(f: &GridFunction) -> GridFunction {
    let n = f.grid.n();
    let h2 = f.grid.step() * f.grid.step();
    let v = &f.values;
    let mut out = vec![0.0; n];
    for k in 1..n - 1 {
        out[k] = (v[k - 1] - 2.0 * v[k] + v[k + 1]) / h2;
    }
    if n >= 4 {
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
        out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    } else {
        out[0] = (v[0] - 2.0 * v[1] + v[2]) / h2;
        out[n - 1] = out[0];
    }
    GridFunction::new(f.grid, out)
}

/// First difference: central on interior nodes, one-sided O(h^2) at the
/// endpoints. Used only for independent verification, never to build the
/// solution itself.
pub fn first_difference(f: &GridFunction) -> GridFunction {
    let n = f.grid.n();
    let h = f.grid.step();
    let v = &f.values;
    let mut out = vec![0.0; n];
    for k in 1..n - 1 {
        out[k] = (v[k + 1] - v[k - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    GridFunction::new(f.grid, out)
}

/// Local cubic interpolation through the four nodes nearest `x`; exact at
/// the nodes themselves.
pub fn eval_at(f: &GridFunction, x: f64) -> Result<f64, GridError> {
    let grid = f.grid;
    let slack = 1e-12 * (grid.x_hi() - grid.x_lo());
    if x < grid.x_lo() - slack || x > grid.x_hi() + slack {
        return Err(GridError::OutOfDomain {
            x,
            x_lo: grid.x_lo(),
            x_hi: grid.x_hi(),
        });
    }
    let h = grid.step();
    let t = (x - grid.x_lo()) / h;
    let nearest = t.round().clamp(0.0, (grid.n() - 1) as f64) as usize;
    if (x - grid.node(nearest)).abs() <= h * 1e-9 {
        return Ok(f.values[nearest]);
    }
    let window = if grid.n() == 3 {
        0
    } else {
        let cell = (t.floor() as isize).clamp(0, grid.n() as isize - 2) as usize;
        cell.saturating_sub(1).min(grid.n() - 4)
    };
    let count = if grid.n() == 3 { 3 } else { 4 };
    let mut acc = 0.0;
    for i in 0..count {
        let xi = grid.node(window + i);
        let mut basis = 1.0;
        for j in 0..count {
            if i != j {
                let xj = grid.node(window + j);
                basis *= (x - xj) / (xi - xj);
            }
        }
        acc += f.values[window + i] * basis;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn no_params() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Grid {
        Grid::new(lo, hi, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(0.0, 1.0, 100).is_err()); // even
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert!(Grid::new(1.0, 0.0, 101).is_err());
    }

    #[test]
    fn tabulate_identity_function() {
        let g = grid(0.0, 1.0, 101);
        let f = tabulate(&parse("x").unwrap(), g, &no_params()).unwrap();
        for k in 0..101 {
            assert!((f.value(k) - k as f64 / 100.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tabulate_gaussian_at_first_node() {
        let g = grid(0.0, 1.0, 101);
        let f = tabulate(&parse("exp(-x^2/2)").unwrap(), g, &no_params()).unwrap();
        assert_eq!(f.value(0), 1.0);
    }

    #[test]
    fn tabulate_singular_coefficient_errors_at_node() {
        let g = grid(0.0, 1.0, 101);
        let err = tabulate(&parse("2/x^2").unwrap(), g, &no_params()).unwrap_err();
        match err {
            GridError::Tabulate { index, x, .. } => {
                assert_eq!(index, 0);
                assert_eq!(x, 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn cumulative_integral_of_one_is_x() {
        let g = grid(0.0, 1.0, 101);
        let f = GridFunction::constant(g, 1.0);
        let ci = cumulative_integral(&f);
        for k in 0..101 {
            assert!(
                (ci.value(k) - g.node(k)).abs() < 1e-14,
                "node {k}: {} vs {}",
                ci.value(k),
                g.node(k)
            );
        }
    }

    #[test]
    fn cumulative_integral_of_cos_reaches_sin() {
        let g = grid(0.0, 1.0, 101);
        let f = tabulate(&parse("cos(x)").unwrap(), g, &no_params()).unwrap();
        let ci = cumulative_integral(&f);
        assert!((ci.value(100) - 1f64.sin()).abs() <= 1e-8);
    }

    #[test]
    fn cumulative_integral_of_decaying_exponential() {
        // integral of e^{-2t} over [0,1] is (1 - e^{-2})/2
        let g = grid(0.0, 1.0, 101);
        let f = tabulate(&parse("exp(-2*x)").unwrap(), g, &no_params()).unwrap();
        let ci = cumulative_integral(&f);
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((ci.value(100) - exact).abs() <= 1e-8);
    }

    #[test]
    fn definite_integral_examples() {
        let g = grid(0.0, 1.0, 101);
        let one = GridFunction::constant(g, 1.0);
        assert!((definite_integral(&one) - 1.0).abs() < 1e-14);

        let x = tabulate(&parse("x").unwrap(), g, &no_params()).unwrap();
        assert!((definite_integral(&x) - 0.5).abs() < 1e-14);

        let f = tabulate(&parse("4/(1+x^2)").unwrap(), g, &no_params()).unwrap();
        assert!((definite_integral(&f) - std::f64::consts::PI).abs() <= 1e-8);
    }

    #[test]
    fn cumulative_integral_exact_on_cubics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let lo = rng.gen_range(-2.0..0.0);
            let hi = lo + rng.gen_range(0.5..3.0);
            let n = [5, 9, 21, 101][rng.gen_range(0..4)];
            let g = grid(lo, hi, n);
            let c: [f64; 4] = rng.gen();
            let f = GridFunction::new(
                g,
                g.nodes()
                    .map(|x| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x)
                    .collect(),
            );
            let ci = cumulative_integral(&f);
            let anti = |x: f64| {
                c[0] * x + c[1] * x * x / 2.0 + c[2] * x * x * x / 3.0 + c[3] * x * x * x * x / 4.0
            };
            for k in 0..n {
                let exact = anti(g.node(k)) - anti(lo);
                assert!(
                    (ci.value(k) - exact).abs() <= 1e-12 * (1.0 + exact.abs()),
                    "cubic exactness failed at node {k} of n={n}: {} vs {exact}",
                    ci.value(k)
                );
            }
        }
    }

    #[test]
    fn cumulative_integral_is_linear() {
        let g = grid(0.0, 2.0, 41);
        let f = tabulate(&parse("sin(x)").unwrap(), g, &no_params()).unwrap();
        let gfun = tabulate(&parse("exp(-x)").unwrap(), g, &no_params()).unwrap();
        let (a, b) = (2.5, -1.25);
        let combined = f.zip_with(&gfun, |u, v| a * u + b * v);
        let lhs = cumulative_integral(&combined);
        let cf = cumulative_integral(&f);
        let cg = cumulative_integral(&gfun);
        for k in 0..g.n() {
            let rhs = a * cf.value(k) + b * cg.value(k);
            assert!((lhs.value(k) - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn anchored_integral_is_zero_at_base_and_consistent() {
        let g = grid(-1.0, 1.0, 41);
        let f = tabulate(&parse("exp(x)").unwrap(), g, &no_params()).unwrap();
        let base = 20; // x = 0
        let ci = cumulative_integral_from(&f, base);
        assert_eq!(ci.value(base), 0.0);
        for k in 0..g.n() {
            let exact = g.node(k).exp() - 1.0;
            assert!(
                (ci.value(k) - exact).abs() <= 1e-9,
                "anchored integral at node {k}: {} vs {exact}",
                ci.value(k)
            );
        }
    }

    #[test]
    fn second_difference_of_square_is_two() {
        let g = grid(-1.0, 1.0, 21);
        let f = GridFunction::new(g, g.nodes().map(|x| x * x).collect());
        let d2 = second_difference(&f);
        for k in 0..g.n() {
            assert!((d2.value(k) - 2.0).abs() < 1e-10, "node {k}: {}", d2.value(k));
        }
    }

    #[test]
    fn second_difference_of_cos() {
        // step close to 1e-2 on [0, pi/4]
        let g = grid(0.0, std::f64::consts::FRAC_PI_4, 79);
        let f = tabulate(&parse("cos(x)").unwrap(), g, &no_params()).unwrap();
        let d2 = second_difference(&f);
        for k in 0..g.n() {
            let exact = -g.node(k).cos();
            assert!(
                (d2.value(k) - exact).abs() <= 1e-4,
                "node {k}: {} vs {exact}",
                d2.value(k)
            );
        }
    }

    #[test]
    fn second_difference_of_constant_is_zero() {
        let g = grid(0.0, 1.0, 11);
        let f = GridFunction::constant(g, 3.25);
        let d2 = second_difference(&f);
        for k in 0..g.n() {
            assert!(d2.value(k).abs() < 1e-10);
        }
    }

    #[test]
    fn double_cumulative_then_second_difference_recovers_f() {
        let g = grid(0.0, 1.0, 201);
        let f = tabulate(&parse("sin(3*x)").unwrap(), g, &no_params()).unwrap();
        let ff = cumulative_integral(&cumulative_integral(&f));
        let rec = second_difference(&ff);
        let h = g.step();
        for k in 1..g.n() - 1 {
            assert!(
                (rec.value(k) - f.value(k)).abs() <= 10.0 * h * h,
                "node {k}: {} vs {}",
                rec.value(k),
                f.value(k)
            );
        }
    }

    #[test]
    fn eval_at_is_exact_at_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let g = grid(0.0, 1.0, 21);
            let f = GridFunction::new(g, (0..21).map(|_| rng.gen_range(-5.0..5.0)).collect());
            for k in 0..21 {
                assert_eq!(eval_at(&f, g.node(k)).unwrap(), f.value(k));
            }
        }
    }

    #[test]
    fn eval_at_interpolates_sin_at_midpoints() {
        let g = grid(0.0, 1.0, 101);
        let f = tabulate(&parse("sin(x)").unwrap(), g, &no_params()).unwrap();
        for k in 0..g.n() - 1 {
            let x = g.node(k) + g.step() / 2.0;
            let v = eval_at(&f, x).unwrap();
            assert!((v - x.sin()).abs() <= 1e-7, "midpoint {x}: {v} vs {}", x.sin());
        }
    }

    #[test]
    fn eval_at_rejects_out_of_domain() {
        let g = grid(0.0, 1.0, 11);
        let f = GridFunction::constant(g, 1.0);
        assert!(matches!(
            eval_at(&f, 1.5),
            Err(GridError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn csv_round_trips_values() {
        let g = grid(0.0, 1.0, 3);
        let f = GridFunction::new(g, vec![1.0 / 3.0, 0.1, 2.0f64.sqrt()]);
        let csv = f.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,value"));
        for (k, line) in lines.enumerate() {
            let (xs, vs) = line.split_once(',').unwrap();
            assert_eq!(xs.parse::<f64>().unwrap(), g.node(k));
            assert_eq!(vs.parse::<f64>().unwrap(), f.value(k));
        }
    }

    #[test]
    fn index_of_finds_nodes() {
        let g = grid(0.5, 2.5, 501);
        assert_eq!(g.index_of(1.0), Some(125));
        assert_eq!(g.index_of(0.5), Some(0));
        assert_eq!(g.index_of(2.5), Some(500));
        assert_eq!(g.index_of(1.0001), None);
        assert_eq!(g.index_of(3.0), None);
    }
}
