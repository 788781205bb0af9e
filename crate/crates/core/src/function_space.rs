//! Discretized real function spaces on an interval.
//!
//! Functions are stored as samples on a shared uniform [`Grid`] and the inner
//! product `⟨f|h⟩ = ∫_a^b f(x) h(x) dx` is approximated by composite trapezoid
//! quadrature on that grid. Every other module computes inner products only
//! through this one, so all Gram matrices in the crate share one quadrature
//! rule and are exactly symmetric.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance for the uniform-spacing invariant of [`Grid`].
const SPACING_TOL: f64 = 1e-12;

/// Uniform grid `x_1 < … < x_N` on `[a, b]` with spacing `h = (b-a)/(N-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    points: Vec<f64>,
}

impl Grid {
    /// Builds a uniform grid with `n_points ≥ 2` nodes on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n_points: usize) -> Result<Arc<Grid>> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidArgument(format!(
                "grid interval must satisfy a < b, got [{a}, {b}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        let h = (b - a) / (n_points - 1) as f64;
        let mut points: Vec<f64> = (0..n_points).map(|i| a + i as f64 * h).collect();
        // Pin the right endpoint; rounding in a + (N-1)h can miss b by an ulp.
        points[n_points - 1] = b;
        let grid = Grid { a, b, points };
        debug_assert!(grid.check_uniform());
        Ok(Arc::new(grid))
    }

    fn check_uniform(&self) -> bool {
        let h = self.spacing();
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= SPACING_TOL * h)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.points.len() - 1) as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Trapezoid quadrature weight of node `i` (`h/2` at the ends, `h` inside).
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.points.len() {
            0.5 * h
        } else {
            h
        }
    }

    /// Two grids are compatible when they describe the same discretization.
    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.a == other.a && self.b == other.b && self.points.len() == other.points.len())
    }
}

/// A real-valued function represented by its samples on a [`Grid`].
#[derive(Debug, Clone)]
pub struct SampledFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl SampledFunction {
    /// Wraps a sample vector; its length must match the grid and all values
    /// must be finite.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample vector has {} entries for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample values must be finite, found {bad}"
            )));
        }
        Ok(SampledFunction { grid, values })
    }

    /// Samples a closure onto the grid.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&x| f(x)).collect();
        SampledFunction::new(Arc::clone(grid), values)
    }

    /// The zero function on `grid`.
    pub fn zero(grid: &Arc<Grid>) -> Self {
        SampledFunction {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &SampledFunction) -> Result<SampledFunction> {
        check_same_grid(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(s, o)| s + alpha * o)
            .collect();
        SampledFunction::new(Arc::clone(&self.grid), values)
    }

    /// Pointwise scaling.
    pub fn scale(&self, alpha: f64) -> SampledFunction {
        SampledFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Quadrature L2 norm `sqrt(⟨f|f⟩)`.
    pub fn norm(&self) -> f64 {
        inner_product(self, self).expect("same grid").sqrt()
    }

    /// Serializes as CSV with columns `x,value` at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48 + 16);
        out.push_str("x,value\n");
        for (x, v) in self.grid.points().iter().zip(&self.values) {
            let _ = writeln!(out, "{x:.16e},{v:.16e}");
        }
        out
    }

    /// Parses the CSV form written by [`SampledFunction::to_csv`]. The `x`
    /// column must describe a uniform grid.
    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if lineno == 0 {
                if line != "x,value" {
                    return Err(Error::parse(origin, 1, "expected header `x,value`"));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (xs_str, vs_str) = line.split_once(',').ok_or_else(|| {
                Error::parse(origin, lineno + 1, "expected two comma-separated fields")
            })?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(origin, lineno + 1, e.to_string()))
            };
            xs.push(parse(xs_str)?);
            vs.push(parse(vs_str)?);
        }
        if xs.len() < 2 {
            return Err(Error::parse(origin, 1, "need at least two sample rows"));
        }
        let grid = Grid::uniform(xs[0], *xs.last().unwrap(), xs.len())?;
        for (i, (&x, &gx)) in xs.iter().zip(grid.points()).enumerate() {
            if (x - gx).abs() > SPACING_TOL * grid.spacing().max(1.0) {
                return Err(Error::parse(
                    origin,
                    i + 2,
                    format!("x column is not uniform: {x} vs expected {gx}"),
                ));
            }
        }
        SampledFunction::new(grid, vs)
    }
}

/// Ordered collection of sampled functions spanning a subspace.
#[derive(Debug, Clone)]
pub struct SpanningSet {
    label: String,
    functions: Vec<SampledFunction>,
}

impl SpanningSet {
    /// A spanning set is non-empty and lives on a single grid.
    pub fn new(label: impl Into<String>, functions: Vec<SampledFunction>) -> Result<Self> {
        let label = label.into();
        let first = functions
            .first()
            .ok_or_else(|| Error::DegenerateInput(format!("spanning set `{label}` is empty")))?;
        for f in &functions[1..] {
            check_same_grid(first, f)?;
        }
        Ok(SpanningSet { label, functions })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.functions[0].grid()
    }

    pub fn functions(&self) -> &[SampledFunction] {
        &self.functions
    }

    pub fn get(&self, i: usize) -> &SampledFunction {
        &self.functions[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SampledFunction> {
        self.functions.iter()
    }

    /// Linear combination `Σ c_i f_i`.
    pub fn combine(&self, coeffs: &[f64]) -> Result<SampledFunction> {
        if coeffs.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} functions",
                coeffs.len(),
                self.len()
            )));
        }
        let n = self.grid().len();
        let mut values = vec![0.0; n];
        for (c, f) in coeffs.iter().zip(&self.functions) {
            for (v, fv) in values.iter_mut().zip(f.values()) {
                *v += c * fv;
            }
        }
        SampledFunction::new(Arc::clone(self.grid()), values)
    }

    /// Returns the set with every member scaled to unit quadrature norm.
    ///
    /// Members with zero norm are left untouched.
    pub fn normalized(&self, label: impl Into<String>) -> Result<SpanningSet> {
        let functions = self
            .functions
            .iter()
            .map(|f| {
                let n = f.norm();
                if n > 0.0 {
                    f.scale(1.0 / n)
                } else {
                    f.clone()
                }
            })
            .collect();
        SpanningSet::new(label, functions)
    }

    /// Matrix `B` with `B[i][j] = sqrt(w_i) f_j(x_i)`, so that `BᵀB` equals
    /// the quadrature Gram matrix. Factorizations of `B` (SVD, pivoted QR)
    /// resolve tiny singular values far below the eigenvalue noise floor of
    /// the explicitly formed Gram matrix.
    pub fn weighted_sample_matrix(&self) -> DMatrix<f64> {
        let grid = self.grid();
        let n = grid.len();
        let m = self.len();
        let sqrt_w: Vec<f64> = (0..n).map(|i| grid.weight(i).sqrt()).collect();
        DMatrix::from_fn(n, m, |i, j| sqrt_w[i] * self.functions[j].values()[i])
    }
}

pub(crate) fn check_same_grid(f: &SampledFunction, h: &SampledFunction) -> Result<()> {
    if f.grid().same_as(h.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "[{}, {}] x {} vs [{}, {}] x {}",
            f.grid().a(),
            f.grid().b(),
            f.grid().len(),
            h.grid().a(),
            h.grid().b(),
            h.grid().len()
        )))
    }
}

/// Composite-trapezoid approximation of `∫_a^b f(x) h(x) dx`.
///
/// The summation order is fixed and each term is the symmetric product
/// `w_i * (f_i * h_i)`, so the result is bitwise symmetric in its arguments.
pub fn inner_product(f: &SampledFunction, h: &SampledFunction) -> Result<f64> {
    check_same_grid(f, h)?;
    let grid = f.grid();
    let n = grid.len();
    let fh = f.values();
    let hv = h.values();
    let mut acc = 0.5 * (fh[0] * hv[0]) + 0.5 * (fh[n - 1] * hv[n - 1]);
    for i in 1..n - 1 {
        acc += fh[i] * hv[i];
    }
    Ok(acc * grid.spacing())
}

/// Matrix of pairwise inner products, entry `(i, j) = ⟨A_i|B_j⟩`.
///
/// With `A = B` the result is exactly symmetric because the quadrature sum
/// commutes termwise.
pub fn gram_matrix(a: &SpanningSet, b: &SpanningSet) -> Result<DMatrix<f64>> {
    check_same_grid(&a.functions[0], &b.functions[0])?;
    let mut g = DMatrix::zeros(a.len(), b.len());
    for (i, fa) in a.iter().enumerate() {
        for (j, fb) in b.iter().enumerate() {
            g[(i, j)] = inner_product(fa, fb)?;
        }
    }
    Ok(g)
}
