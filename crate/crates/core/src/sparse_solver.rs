//! Nonlinear separation: sparse recovery of the signal coefficients by
//! minimizing the q-norm-like objective `Σ_i |c_i|^q`, `0 < q ≤ 1`, subject
//! to recursively selected normal-equation constraints.
//!
//! The observed mixture is first projected onto the complement of the
//! background subspace, which turns separation into finding a sparse
//! representation `f_W = Σ_i c_i u_i`. The full normal-equation system
//! `⟨u_n|f°_W⟩ = Σ_i c_i ⟨u_n|u_i⟩` is ill posed, so equations are fed to the
//! optimizer one at a time: starting from the uniform estimate `c_i = C`,
//! each round adds the currently worst-predicted equation and re-minimizes
//! the objective under the enlarged constraint set with a reweighted
//! pseudoinverse (FOCUSS) iteration. The loop stops when the sample-domain
//! fidelity drops below the data-error allowance δ.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function_space::{check_same_grid, gram_matrix, inner_product, SampledFunction, SpanningSet};
use crate::oblique::{project_orthogonal, OrthonormalBasis};

/// Relative threshold below which the uniform-initialization denominator is
/// considered degenerate.
const DEGENERATE_DENOMINATOR_REL: f64 = 1e-14;

/// Point-evaluation functionals `⟨x_j|·⟩` at grid nodes, with measured values.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    /// Grid node indices carrying a measurement.
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl MeasurementSet {
    /// Measurements at an explicit subset of grid nodes.
    pub fn new(grid_len: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument(
                "measurement set needs at least one point".into(),
            ));
        }
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} measurement points vs {} values",
                indices.len(),
                values.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= grid_len) {
            return Err(Error::InvalidArgument(format!(
                "measurement index {bad} outside grid of {grid_len} points"
            )));
        }
        Ok(MeasurementSet { indices, values })
    }

    /// One measurement per grid node: the values of `f`.
    pub fn full_grid(f: &SampledFunction) -> Self {
        MeasurementSet {
            indices: (0..f.len()).collect(),
            values: f.values().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The sparse separation problem: complement spanning set, projected data,
/// sparsity exponent and stopping allowance. Gram data is cached once.
#[derive(Debug, Clone)]
pub struct SeparationProblem {
    u_set: SpanningSet,
    f_w_obs: SampledFunction,
    q: f64,
    delta: f64,
    max_constraints: usize,
    measurements: MeasurementSet,
    /// Gram matrix `⟨u_n|u_i⟩`.
    gram: DMatrix<f64>,
    /// Right-hand sides `⟨u_n|f°_W⟩`.
    beta: DVector<f64>,
    /// Raw samples `u_i(x_j)` (rows j, columns i) for fidelity evaluation.
    samples: DMatrix<f64>,
}

impl SeparationProblem {
    pub fn new(
        u_set: SpanningSet,
        f_w_obs: SampledFunction,
        q: f64,
        delta: f64,
        max_constraints: Option<usize>,
    ) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "q must lie in (0, 1], got {q}"
            )));
        }
        if !(delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must be nonnegative, got {delta}"
            )));
        }
        check_same_grid(u_set.get(0), &f_w_obs)?;
        let m = u_set.len();
        let max_constraints = max_constraints.unwrap_or(m);
        if max_constraints < 1 || max_constraints > m {
            return Err(Error::InvalidArgument(format!(
                "max_constraints {max_constraints} outside 1..={m}"
            )));
        }
        let gram = gram_matrix(&u_set, &u_set)?;
        let beta = DVector::from_iterator(
            m,
            u_set
                .iter()
                .map(|u| inner_product(u, &f_w_obs))
                .collect::<Result<Vec<_>>>()?,
        );
        let n = u_set.grid().len();
        let samples = DMatrix::from_fn(n, m, |j, i| u_set.get(i).values()[j]);
        let measurements = MeasurementSet::full_grid(&f_w_obs);
        Ok(SeparationProblem {
            u_set,
            f_w_obs,
            q,
            delta,
            max_constraints,
            measurements,
            gram,
            beta,
            samples,
        })
    }

    pub fn dimension(&self) -> usize {
        self.u_set.len()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn max_constraints(&self) -> usize {
        self.max_constraints
    }

    pub fn u_set(&self) -> &SpanningSet {
        &self.u_set
    }

    pub fn f_w_obs(&self) -> &SampledFunction {
        &self.f_w_obs
    }

    pub fn measurements(&self) -> &MeasurementSet {
        &self.measurements
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Constraint rows for the 1-based equation indices in `selected`.
    fn selected_system(&self, selected: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let r = selected.len();
        let m = self.dimension();
        let a = DMatrix::from_fn(r, m, |k, i| self.gram[(selected[k] - 1, i)]);
        let b = DVector::from_fn(r, |k, _| self.beta[selected[k] - 1]);
        (a, b)
    }
}

/// Projects observed data onto the complement of the background subspace:
/// `f°_W = f_obs - P_perp f_obs`.
pub fn project_data_to_w(
    f_obs: &SampledFunction,
    wperp_basis: &OrthonormalBasis,
) -> Result<SampledFunction> {
    let p = project_orthogonal(wperp_basis, f_obs)?;
    f_obs.axpy(-1.0, &p)
}

/// Uniform starting estimate `C = Σ_n ⟨u_n|f°_W⟩ / Σ_{i,n} ⟨u_i|u_n⟩`,
/// the least-squares optimal constant population.
pub fn initial_uniform_coefficients(prob: &SeparationProblem) -> Result<f64> {
    let numerator: f64 = prob.beta.iter().sum();
    let denominator: f64 = prob.gram.iter().sum();
    let scale: f64 = prob.gram.iter().map(|g| g.abs()).sum();
    if denominator.abs() < DEGENERATE_DENOMINATOR_REL * scale || scale == 0.0 {
        return Err(Error::DegenerateDenominator(format!(
            "gram sum {denominator:.3e} below {DEGENERATE_DENOMINATOR_REL} x scale {scale:.3e}"
        )));
    }
    Ok(numerator / denominator)
}

/// Per-equation prediction errors `|⟨u_n|f°_W⟩ - Σ_i c_i ⟨u_n|u_i⟩|`.
pub fn normal_equation_residuals(prob: &SeparationProblem, coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.len() != prob.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for dimension {}",
            coeffs.len(),
            prob.dimension()
        )));
    }
    let c = DVector::from_column_slice(coeffs);
    let predicted = &prob.gram * c;
    Ok(prob
        .beta
        .iter()
        .zip(predicted.iter())
        .map(|(b, p)| (b - p).abs())
        .collect())
}

/// Picks the unselected equation with the largest residual; ties break to the
/// lowest index. Indices are 1-based.
pub fn select_worst_equation(residuals: &[f64], already_selected: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &r) in residuals.iter().enumerate() {
        let idx = i + 1;
        if already_selected.contains(&idx) {
            continue;
        }
        match best {
            Some((_, best_r)) if r <= best_r => {}
            _ => best = Some((idx, r)),
        }
    }
    best.map(|(idx, _)| idx)
        .ok_or(Error::Exhausted(residuals.len()))
}

/// Options for a single FOCUSS solve.
#[derive(Debug, Clone)]
pub struct FocussOptions {
    pub max_iterations: usize,
    /// Stop when `‖c_{k+1} - c_k‖ / max(‖c_k‖, 1e-30)` falls below this.
    pub rel_change_tol: f64,
    /// Relative singular-value cutoff for the pseudoinverse.
    pub pinv_rel_tol: f64,
}

impl Default for FocussOptions {
    fn default() -> Self {
        FocussOptions {
            max_iterations: 500,
            rel_change_tol: 1e-9,
            pinv_rel_tol: 1e-12,
        }
    }
}

/// Result of one FOCUSS solve.
#[derive(Debug, Clone)]
pub struct FocussOutcome {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration cap was hit first; the best iterate is still
    /// returned.
    pub converged: bool,
    /// `‖A c - b‖` at the returned iterate.
    pub constraint_violation: f64,
    /// Largest single-iteration increase of the objective observed during
    /// the solve (descent diagnostic; ~0 up to round-off).
    pub max_objective_increase: f64,
}

/// The q-norm-like objective `Σ_i |c_i|^q`.
pub fn q_objective(coeffs: &[f64], q: f64) -> f64 {
    coeffs.iter().map(|c| c.abs().powf(q)).sum()
}

/// Minimizes `Σ|c_i|^q` subject to `A c = b` by reweighted pseudoinverse
/// iterations `c_{k+1} = W_k (A W_k)† b`, `W_k = diag(|c_i^k|^(1 - q/2))`.
///
/// A coefficient that reaches exactly zero stays zero (its column is removed
/// by the weighting).
pub fn focuss_minimize(
    a_sel: &DMatrix<f64>,
    b_sel: &DVector<f64>,
    q: f64,
    c_init: &[f64],
    opts: &FocussOptions,
) -> Result<FocussOutcome> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "q must lie in (0, 1], got {q}"
        )));
    }
    let m = a_sel.ncols();
    if c_init.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} initial coefficients for {} columns",
            c_init.len(),
            m
        )));
    }
    if a_sel.nrows() != b_sel.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} constraint rows vs {} right-hand sides",
            a_sel.nrows(),
            b_sel.len()
        )));
    }
    if let Some(bad) = c_init.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial coefficients must be finite, found {bad}"
        )));
    }

    let weight_exp = 1.0 - q / 2.0;
    let mut c: Vec<f64> = c_init.to_vec();
    let mut objective = q_objective(&c, q);
    let mut max_increase = 0.0_f64;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iterations {
        iterations += 1;
        let weights: Vec<f64> = c.iter().map(|ci| ci.abs().powf(weight_exp)).collect();
        let mut aw = a_sel.clone();
        for (j, &w) in weights.iter().enumerate() {
            aw.column_mut(j).scale_mut(w);
        }
        let svd = aw.svd(true, true);
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        if sigma_max <= 0.0 {
            return Err(Error::SingularSystem(
                "weighted constraint matrix has zero pseudoinverse scale".into(),
            ));
        }
        let y = svd
            .solve(b_sel, opts.pinv_rel_tol * sigma_max)
            .map_err(|e| Error::SingularSystem(e.into()))?;
        let c_next: Vec<f64> = weights.iter().zip(y.iter()).map(|(w, yi)| w * yi).collect();

        let change_sq: f64 = c_next
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let norm_sq: f64 = c.iter().map(|v| v * v).sum();
        let rel_change = change_sq.sqrt() / norm_sq.sqrt().max(1e-30);

        let objective_next = q_objective(&c_next, q);
        max_increase = max_increase.max(objective_next - objective);
        objective = objective_next;
        c = c_next;

        if rel_change < opts.rel_change_tol {
            converged = true;
            break;
        }
    }

    let violation = (a_sel * DVector::from_column_slice(&c) - b_sel).norm();
    Ok(FocussOutcome {
        coeffs: c,
        iterations,
        converged,
        constraint_violation: violation,
        max_objective_increase: max_increase,
    })
}

/// Sum of squared sample-domain misfits
/// `Σ_j (f°_W(x_j) - Σ_i c_i u_i(x_j))²` over the measurement set (plain
/// sums, no quadrature weights).
pub fn fidelity(prob: &SeparationProblem, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != prob.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for dimension {}",
            coeffs.len(),
            prob.dimension()
        )));
    }
    let model = &prob.samples * DVector::from_column_slice(coeffs);
    Ok(prob
        .measurements
        .indices()
        .iter()
        .zip(prob.measurements.values())
        .map(|(&j, &obs)| {
            let d = obs - model[j];
            d * d
        })
        .sum())
}

/// How each constraint round initializes its FOCUSS solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundStart {
    /// Restart every round from the uniform estimate `c_i = C`. A freshly
    /// started solve sees the full coefficient pool each round; this is the
    /// default because a solve run to convergence concentrates its iterate
    /// onto few atoms and the zero-weight lock would otherwise shrink the
    /// pool irreversibly round over round.
    #[default]
    UniformRestart,
    /// Continue from the previous round's coefficients.
    WarmStart,
}

/// Options for the outer separation loop.
#[derive(Debug, Clone)]
pub struct SeparateOptions {
    pub round_start: RoundStart,
    /// Coefficients below `clamp_rel · max|c|` are set to exactly zero after
    /// each round, making support reporting well defined.
    pub clamp_rel: f64,
    pub focuss: FocussOptions,
}

impl Default for SeparateOptions {
    fn default() -> Self {
        SeparateOptions {
            round_start: RoundStart::default(),
            clamp_rel: 1e-12,
            focuss: FocussOptions::default(),
        }
    }
}

/// Per-round log record of the separation loop.
#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    /// 1-based index of the normal equation added this round.
    pub constraint_index: usize,
    pub residual_before: f64,
    pub residual_after: f64,
    pub focuss_iterations: usize,
    pub focuss_converged: bool,
    pub constraint_violation: f64,
}

/// Final state of a separation run.
#[derive(Debug, Clone)]
pub struct SeparationState {
    pub coeffs: Vec<f64>,
    /// Selected constraint indices (1-based) in selection order.
    pub selected: Vec<usize>,
    /// Final sample-domain fidelity (left side of the stopping rule).
    pub residual_sq: f64,
    /// True iff the δ tolerance was met.
    pub success: bool,
    /// The uniform starting value C.
    pub initial_coefficient: f64,
    pub rounds: Vec<RoundRecord>,
}

impl SeparationState {
    /// 1-based indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Number of negative coefficients (reported, never enforced away).
    pub fn negative_count(&self) -> usize {
        self.coeffs.iter().filter(|c| **c < 0.0).count()
    }

    /// Coefficients CSV `i,c_i` over all model indices.
    pub fn coefficients_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("i,c_i\n");
        for (i, c) in self.coeffs.iter().enumerate() {
            let _ = writeln!(out, "{},{c:.16e}", i + 1);
        }
        out
    }
}

#[derive(Serialize)]
struct SolverReport<'a> {
    q: f64,
    delta: f64,
    success: bool,
    n_constraints: usize,
    selected: &'a [usize],
    final_residual_sq: f64,
    support: Vec<usize>,
    initial_coefficient: f64,
    negative_coefficient_count: usize,
    rounds: &'a [RoundRecord],
}

/// Structured solver report (JSON).
pub fn solver_report_json(prob: &SeparationProblem, state: &SeparationState) -> String {
    let report = SolverReport {
        q: prob.q(),
        delta: prob.delta(),
        success: state.success,
        n_constraints: state.selected.len(),
        selected: &state.selected,
        final_residual_sq: state.residual_sq,
        support: state.support(),
        initial_coefficient: state.initial_coefficient,
        negative_coefficient_count: state.negative_count(),
        rounds: &state.rounds,
    };
    serde_json::to_string_pretty(&report).expect("report serializes")
}

fn clamp_small(coeffs: &mut [f64], clamp_rel: f64) {
    let max = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let threshold = clamp_rel * max;
    for c in coeffs.iter_mut() {
        if c.abs() < threshold {
            *c = 0.0;
        }
    }
}

/// Runs the full separation loop with default options.
pub fn separate(prob: &SeparationProblem) -> Result<SeparationState> {
    separate_with(prob, &SeparateOptions::default())
}

/// Runs the full separation loop: uniform initialization, worst-equation
/// selection, constrained FOCUSS re-minimization, stop at fidelity ≤ δ or at
/// the constraint cap (reported as failure).
pub fn separate_with(prob: &SeparationProblem, opts: &SeparateOptions) -> Result<SeparationState> {
    let m = prob.dimension();
    let c_uniform = initial_uniform_coefficients(prob)?;
    let mut coeffs = vec![c_uniform; m];
    let mut residual = fidelity(prob, &coeffs)?;
    let mut selected: Vec<usize> = Vec::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();

    while residual > prob.delta && selected.len() < prob.max_constraints {
        let residuals = normal_equation_residuals(prob, &coeffs)?;
        let idx = select_worst_equation(&residuals, &selected)?;
        selected.push(idx);
        let (a_sel, b_sel) = prob.selected_system(&selected);
        let start = match opts.round_start {
            RoundStart::UniformRestart => vec![c_uniform; m],
            RoundStart::WarmStart => coeffs.clone(),
        };
        let outcome = focuss_minimize(&a_sel, &b_sel, prob.q(), &start, &opts.focuss)?;
        let mut c_new = outcome.coeffs;
        clamp_small(&mut c_new, opts.clamp_rel);
        let residual_after = fidelity(prob, &c_new)?;
        rounds.push(RoundRecord {
            constraint_index: idx,
            residual_before: residual,
            residual_after,
            focuss_iterations: outcome.iterations,
            focuss_converged: outcome.converged,
            constraint_violation: outcome.constraint_violation,
        });
        coeffs = c_new;
        residual = residual_after;
    }

    Ok(SeparationState {
        success: residual <= prob.delta,
        coeffs,
        selected,
        residual_sq: residual,
        initial_coefficient: c_uniform,
        rounds,
    })
}
