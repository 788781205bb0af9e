//! Orthogonal and oblique projectors constructed from spanning sets.
//!
//! Given a spanning set `{v_i}` of the signal subspace and an orthonormal
//! basis `{o_j}` of the background subspace, the complement set
//! `u_i = v_i - P_perp v_i` defines the Gram operator `G = U*U`. Its spectral
//! system `{σ_n, ψ_n}` yields the biorthogonal pairs
//! `ξ_n = U ψ_n / σ_n`, `η_n = V ψ_n / σ_n` and the oblique projector
//! `E = Σ_n |η_n⟩⟨ξ_n|`, which fixes the signal subspace and annihilates the
//! background subspace. Truncating the sum regularizes the projector at the
//! cost of annihilating the dropped `η` directions as well.
//!
//! Two numerically distinct factorizations are offered for the spectral
//! system. The canonical formulation is the eigendecomposition of the Gram
//! matrix, but eigenvalues below `eps·λ_max` drown in round-off there, so the
//! default route takes an SVD of the quadrature-weighted sample matrix, whose
//! singular values stay accurate down to `eps·σ_max`. Both agree wherever the
//! Gram route is well conditioned.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::function_space::{
    check_same_grid, gram_matrix, inner_product, Grid, SampledFunction, SpanningSet,
};

/// Factorization used to extract a spectral system from a spanning set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectralRoute {
    /// SVD of the `sqrt(w)`-scaled sample matrix. Resolves singular values
    /// down to `eps·σ_max` and returns left vectors that are orthonormal by
    /// construction.
    #[default]
    WeightedSvd,
    /// Eigendecomposition of the explicitly formed Gram matrix. Matches the
    /// textbook construction; eigenvalues below `eps·λ_max` are round-off.
    GramEigen,
}

/// Orthonormal functions spanning the numerically significant range of a
/// spanning set.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    functions: Vec<SampledFunction>,
    rank_tolerance_used: f64,
}

impl OrthonormalBasis {
    pub fn functions(&self) -> &[SampledFunction] {
        &self.functions
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

    pub fn rank_tolerance_used(&self) -> f64 {
        self.rank_tolerance_used
    }
}

/// Retained spectral data `{σ_n, ψ_n}` of the Gram operator, `σ` descending.
#[derive(Debug, Clone)]
pub struct SingularSystem {
    sigmas: Vec<f64>,
    /// `M x N`; column `n` holds the coefficient vector `ψ_n`.
    psis: DMatrix<f64>,
    /// Weighted left singular vectors (`n_points x N`), present on the
    /// [`SpectralRoute::WeightedSvd`] route.
    left: Option<DMatrix<f64>>,
    route: SpectralRoute,
}

impl SingularSystem {
    pub fn rank(&self) -> usize {
        self.sigmas.len()
    }

    /// Singular values in descending order.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Eigenvalues `λ_n = σ_n²` of the Gram operator.
    pub fn lambdas(&self) -> Vec<f64> {
        self.sigmas.iter().map(|s| s * s).collect()
    }

    pub fn psis(&self) -> &DMatrix<f64> {
        &self.psis
    }

    pub fn route(&self) -> SpectralRoute {
        self.route
    }

    /// CSV rows `n,sigma_n,lambda_n` at full precision, descending.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sigma_n,lambda_n\n");
        for (i, s) in self.sigmas.iter().enumerate() {
            let _ = writeln!(out, "{},{:.16e},{:.16e}", i + 1, s, s * s);
        }
        out
    }
}

fn validate_rel_tol(rel_tol: f64) -> Result<()> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relative tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    Ok(())
}

/// Orthonormalizes a spanning set, discarding directions whose singular value
/// falls below `rel_tol` times the largest one (equivalently, Gram eigenvalues
/// below `rel_tol²·λ_max`).
pub fn orthonormalize(set: &SpanningSet, rel_tol: f64) -> Result<OrthonormalBasis> {
    orthonormalize_with(set, rel_tol, SpectralRoute::default())
}

/// [`orthonormalize`] with an explicit factorization route.
pub fn orthonormalize_with(
    set: &SpanningSet,
    rel_tol: f64,
    route: SpectralRoute,
) -> Result<OrthonormalBasis> {
    validate_rel_tol(rel_tol)?;
    let sys = build_singular_system_with(set, rel_tol, route).map_err(|e| match e {
        Error::DegenerateInput(_) => Error::DegenerateInput(format!(
            "spanning set `{}` is numerically zero",
            set.label()
        )),
        other => other,
    })?;
    let grid = set.grid();
    let functions = match &sys.left {
        Some(left) => unweight_columns(grid, left),
        // o_k = Σ_j (ψ_{k,j} / σ_k) y_j
        None => (0..sys.rank())
            .map(|k| {
                let coeffs: Vec<f64> = sys
                    .psis
                    .column(k)
                    .iter()
                    .map(|p| p / sys.sigmas[k])
                    .collect();
                set.combine(&coeffs)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(OrthonormalBasis {
        functions,
        rank_tolerance_used: rel_tol,
    })
}

/// Turns weighted sample columns back into grid functions.
fn unweight_columns(grid: &Arc<Grid>, cols: &DMatrix<f64>) -> Vec<SampledFunction> {
    let inv_sqrt_w: Vec<f64> = (0..grid.len()).map(|i| 1.0 / grid.weight(i).sqrt()).collect();
    (0..cols.ncols())
        .map(|k| {
            let values: Vec<f64> = cols
                .column(k)
                .iter()
                .zip(&inv_sqrt_w)
                .map(|(v, w)| v * w)
                .collect();
            SampledFunction::new(Arc::clone(grid), values).expect("finite by construction")
        })
        .collect()
}

/// Orthogonal projection `P f = Σ_j ⟨o_j|f⟩ |o_j⟩`.
pub fn project_orthogonal(basis: &OrthonormalBasis, f: &SampledFunction) -> Result<SampledFunction> {
    check_same_grid(&basis.functions[0], f)?;
    let mut out = SampledFunction::zero(f.grid());
    for o in &basis.functions {
        let c = inner_product(o, f)?;
        out = out.axpy(c, o)?;
    }
    Ok(out)
}

/// Complement spanning set `u_i = v_i - P_perp v_i`.
pub fn complement_spanning_set(
    v_set: &SpanningSet,
    wperp_basis: &OrthonormalBasis,
) -> Result<SpanningSet> {
    let functions = v_set
        .iter()
        .map(|v| {
            let p = project_orthogonal(wperp_basis, v)?;
            v.axpy(-1.0, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    SpanningSet::new(format!("{}_complement", v_set.label()), functions)
}

/// Spectral system of `G = gram(U, U)`, keeping `λ_n > max(rank_tol²·λ_max, 0)`.
///
/// `rank_tol = 0` keeps every strictly positive singular value (the full,
/// possibly ill-posed system).
pub fn build_singular_system(u_set: &SpanningSet, rank_tol: f64) -> Result<SingularSystem> {
    build_singular_system_with(u_set, rank_tol, SpectralRoute::default())
}

/// [`build_singular_system`] with an explicit factorization route.
pub fn build_singular_system_with(
    u_set: &SpanningSet,
    rank_tol: f64,
    route: SpectralRoute,
) -> Result<SingularSystem> {
    if rank_tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must be nonnegative, got {rank_tol}"
        )));
    }
    match route {
        SpectralRoute::WeightedSvd => {
            let b = u_set.weighted_sample_matrix();
            let svd = b.svd(true, true);
            let sig = &svd.singular_values;
            let sigma_max = sig.iter().cloned().fold(0.0_f64, f64::max);
            if sigma_max <= 0.0 {
                return Err(Error::DegenerateInput(
                    "gram matrix is numerically zero".into(),
                ));
            }
            let threshold = rank_tol * sigma_max;
            let keep: Vec<usize> = (0..sig.len())
                .filter(|&i| sig[i] > threshold && sig[i] > 0.0)
                .collect();
            let u = svd.u.expect("requested");
            let v_t = svd.v_t.expect("requested");
            let sigmas: Vec<f64> = keep.iter().map(|&i| sig[i]).collect();
            debug_assert!(sigmas.windows(2).all(|w| w[0] >= w[1]));
            let psis = DMatrix::from_fn(u_set.len(), keep.len(), |j, n| v_t[(keep[n], j)]);
            let left = DMatrix::from_fn(u.nrows(), keep.len(), |i, n| u[(i, keep[n])]);
            Ok(SingularSystem {
                sigmas,
                psis,
                left: Some(left),
                route,
            })
        }
        SpectralRoute::GramEigen => {
            let g = gram_matrix(u_set, u_set)?;
            let eig = g.symmetric_eigen();
            // Round-off can push PSD eigenvalues slightly negative; clamp.
            let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
            let lambda_max = lambdas.iter().cloned().fold(0.0_f64, f64::max);
            if lambda_max <= 0.0 {
                return Err(Error::DegenerateInput(
                    "gram matrix is numerically zero".into(),
                ));
            }
            let mut order: Vec<usize> = (0..lambdas.len()).collect();
            // Stable sort: equal eigenvalues keep eigen-solver output order.
            order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap());
            let threshold = rank_tol * rank_tol * lambda_max;
            let keep: Vec<usize> = order
                .into_iter()
                .filter(|&i| lambdas[i] > threshold && lambdas[i] > 0.0)
                .collect();
            let sigmas: Vec<f64> = keep.iter().map(|&i| lambdas[i].sqrt()).collect();
            let psis =
                DMatrix::from_fn(u_set.len(), keep.len(), |j, n| eig.eigenvectors[(j, keep[n])]);
            Ok(SingularSystem {
                sigmas,
                psis,
                left: None,
                route,
            })
        }
    }
}

/// Oblique projector `E = Σ_n |η_n⟩⟨ξ_n|` onto `span{v_i}` along the
/// orthogonal complement of `span{u_i}`.
#[derive(Debug, Clone)]
pub struct ObliqueProjector {
    xis: Vec<SampledFunction>,
    etas: Vec<SampledFunction>,
    system: SingularSystem,
    v_set: SpanningSet,
}

/// Builds the projector from matched spanning sets and the spectral system of
/// `gram(U, U)`: `ξ_n = U ψ_n / σ_n`, `η_n = V ψ_n / σ_n`.
pub fn build_oblique_projector(
    v_set: &SpanningSet,
    u_set: &SpanningSet,
    system: &SingularSystem,
) -> Result<ObliqueProjector> {
    if v_set.len() != u_set.len() {
        return Err(Error::DimensionMismatch(format!(
            "signal set has {} functions, complement set {}",
            v_set.len(),
            u_set.len()
        )));
    }
    if system.psis.nrows() != u_set.len() {
        return Err(Error::DimensionMismatch(format!(
            "spectral system built for {} functions, sets have {}",
            system.psis.nrows(),
            u_set.len()
        )));
    }
    check_same_grid(v_set.get(0), u_set.get(0))?;

    let xis = match &system.left {
        // The left singular vectors are orthonormal by construction, which is
        // what keeps biorthogonality meaningful for small σ_n.
        Some(left) => unweight_columns(u_set.grid(), left),
        None => spectral_combinations(u_set, system)?,
    };
    let etas = spectral_combinations(v_set, system)?;
    Ok(ObliqueProjector {
        xis,
        etas,
        system: system.clone(),
        v_set: v_set.clone(),
    })
}

/// `f_n = (1/σ_n) Σ_i ψ_{n,i} s_i` for every retained mode.
fn spectral_combinations(set: &SpanningSet, system: &SingularSystem) -> Result<Vec<SampledFunction>> {
    (0..system.rank())
        .map(|n| {
            let coeffs: Vec<f64> = system
                .psis
                .column(n)
                .iter()
                .map(|p| p / system.sigmas[n])
                .collect();
            set.combine(&coeffs)
        })
        .collect()
}

impl ObliqueProjector {
    pub fn rank(&self) -> usize {
        self.system.rank()
    }

    pub fn xis(&self) -> &[SampledFunction] {
        &self.xis
    }

    pub fn etas(&self) -> &[SampledFunction] {
        &self.etas
    }

    pub fn system(&self) -> &SingularSystem {
        &self.system
    }

    pub fn signal_set(&self) -> &SpanningSet {
        &self.v_set
    }

    /// Applies the projector: `E f = Σ_n ⟨ξ_n|f⟩ |η_n⟩`.
    pub fn apply(&self, f: &SampledFunction) -> Result<SampledFunction> {
        check_same_grid(&self.xis[0], f)?;
        let mut out = SampledFunction::zero(f.grid());
        for (xi, eta) in self.xis.iter().zip(&self.etas) {
            let c = inner_product(xi, f)?;
            out = out.axpy(c, eta)?;
        }
        Ok(out)
    }

    /// Keeps the `r` leading spectral terms, `1 ≤ r ≤ rank`.
    ///
    /// The result is again a projector; it annihilates the dropped `ξ` and
    /// `η` directions together with the original null space.
    pub fn truncate(&self, r: usize) -> Result<ObliqueProjector> {
        if r < 1 || r > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "truncation rank {r} outside 1..={}",
                self.rank()
            )));
        }
        let system = SingularSystem {
            sigmas: self.system.sigmas[..r].to_vec(),
            psis: self.system.psis.columns(0, r).into_owned(),
            left: self
                .system
                .left
                .as_ref()
                .map(|l| l.columns(0, r).into_owned()),
            route: self.system.route,
        };
        Ok(ObliqueProjector {
            xis: self.xis[..r].to_vec(),
            etas: self.etas[..r].to_vec(),
            system,
            v_set: self.v_set.clone(),
        })
    }

    /// Dual functionals `w_i = Σ_n |ξ_n⟩ ψ_{n,i} / σ_n`, so that
    /// `E = Σ_i |v_i⟩⟨w_i|` reproduces [`ObliqueProjector::apply`].
    pub fn dual_vectors(&self) -> Vec<SampledFunction> {
        let m = self.v_set.len();
        let grid = self.v_set.grid();
        (0..m)
            .map(|i| {
                let mut w = SampledFunction::zero(grid);
                for (n, xi) in self.xis.iter().enumerate() {
                    let c = self.system.psis[(i, n)] / self.system.sigmas[n];
                    w = w.axpy(c, xi).expect("same grid");
                }
                w
            })
            .collect()
    }

    /// Applies the dual representation `E f = Σ_i ⟨w_i|f⟩ |v_i⟩` with
    /// precomputed dual vectors.
    pub fn apply_with_duals(
        &self,
        duals: &[SampledFunction],
        f: &SampledFunction,
    ) -> Result<SampledFunction> {
        if duals.len() != self.v_set.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dual vectors for {} signal functions",
                duals.len(),
                self.v_set.len()
            )));
        }
        let coeffs = duals
            .iter()
            .map(|w| inner_product(w, f))
            .collect::<Result<Vec<_>>>()?;
        self.v_set.combine(&coeffs)
    }
}

/// Dual functionals via the orthogonalized-complement Gram variant: the
/// `u_i` are first orthogonalized to `{q_k}` and `w_i = Σ_k (G_q†)_{i,k} q_k`
/// with `G_q[(k, j)] = ⟨q_k|v_j⟩`. Theoretically equivalent to the plain Gram
/// construction, numerically distinct on ill-posed inputs.
pub fn dual_vectors_orthogonalized(
    v_set: &SpanningSet,
    u_set: &SpanningSet,
    rel_tol: f64,
    pinv_rel_tol: f64,
) -> Result<Vec<SampledFunction>> {
    let q_basis = orthonormalize(u_set, rel_tol)?;
    let m = v_set.len();
    let mp = q_basis.len();
    let mut g_q = DMatrix::zeros(mp, m);
    for (k, q) in q_basis.functions().iter().enumerate() {
        for (j, v) in v_set.iter().enumerate() {
            g_q[(k, j)] = inner_product(q, v)?;
        }
    }
    let g_q_pinv = pseudoinverse(&g_q, pinv_rel_tol)?;
    Ok((0..m)
        .map(|i| {
            let mut w = SampledFunction::zero(v_set.grid());
            for (k, q) in q_basis.functions().iter().enumerate() {
                w = w.axpy(g_q_pinv[(i, k)], q).expect("same grid");
            }
            w
        })
        .collect())
}

/// Applies the projector through the matrix pseudoinverse of the Gram matrix:
/// `E f = V G† U* f`. Numerically independent of the spectral-sum route and
/// used to cross-check it.
pub fn apply_via_gram_pinv(
    v_set: &SpanningSet,
    u_set: &SpanningSet,
    f: &SampledFunction,
    pinv_rel_tol: f64,
) -> Result<SampledFunction> {
    let g = gram_matrix(u_set, u_set)?;
    let beta = DVector::from_iterator(
        u_set.len(),
        u_set
            .iter()
            .map(|u| inner_product(u, f))
            .collect::<Result<Vec<_>>>()?,
    );
    let coeffs = pseudoinverse(&g, pinv_rel_tol)? * beta;
    v_set.combine(coeffs.as_slice())
}

/// Moore-Penrose pseudoinverse with singular values below
/// `rel_tol * σ_max` treated as zero.
pub fn pseudoinverse(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max <= 0.0 {
        return Err(Error::SingularSystem(
            "matrix has zero pseudoinverse scale".into(),
        ));
    }
    let threshold = rel_tol * sigma_max;
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold {
            let col = v_t.row(k).transpose() / s;
            let row = u.column(k).transpose();
            out += col * row;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::Grid;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::uniform(0.0, 1.0, n).unwrap()
    }

    fn poly_set(g: &Arc<Grid>, degrees: &[u32]) -> SpanningSet {
        SpanningSet::new(
            "poly",
            degrees
                .iter()
                .map(|&d| SampledFunction::from_fn(g, |x| x.powi(d as i32)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn orthonormalize_independent_pair() {
        let g = grid(1001);
        let set = poly_set(&g, &[0, 1]);
        let basis = orthonormalize(&set, 1e-10).unwrap();
        assert_eq!(basis.len(), 2);
        for (i, a) in basis.functions().iter().enumerate() {
            for (j, b) in basis.functions().iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((inner_product(a, b).unwrap() - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn orthonormalize_duplicate_drops_rank() {
        let g = grid(101);
        let one = SampledFunction::from_fn(&g, |_| 1.0).unwrap();
        let set = SpanningSet::new("dup", vec![one.clone(), one]).unwrap();
        let basis = orthonormalize(&set, 1e-10).unwrap();
        assert_eq!(basis.len(), 1);
    }

    #[test]
    fn orthonormalize_zero_set_is_degenerate() {
        let g = grid(11);
        let set = SpanningSet::new("zero", vec![SampledFunction::zero(&g)]).unwrap();
        assert!(matches!(
            orthonormalize(&set, 1e-10),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn orthonormalize_routes_agree_on_projection() {
        let g = grid(501);
        let set = poly_set(&g, &[0, 1, 2]);
        let svd_basis = orthonormalize_with(&set, 1e-10, SpectralRoute::WeightedSvd).unwrap();
        let eig_basis = orthonormalize_with(&set, 1e-10, SpectralRoute::GramEigen).unwrap();
        assert_eq!(svd_basis.len(), eig_basis.len());
        let f = SampledFunction::from_fn(&g, |x| (5.0 * x).sin()).unwrap();
        let pa = project_orthogonal(&svd_basis, &f).unwrap();
        let pb = project_orthogonal(&eig_basis, &f).unwrap();
        let diff = pa.axpy(-1.0, &pb).unwrap();
        assert!(diff.norm() < 1e-9);
    }

    #[test]
    fn projection_fixes_basis_and_kills_complement() {
        let g = grid(1001);
        let set = poly_set(&g, &[0, 1]);
        let basis = orthonormalize(&set, 1e-10).unwrap();
        let o1 = &basis.functions()[0];
        let p = project_orthogonal(&basis, o1).unwrap();
        assert!(p.axpy(-1.0, o1).unwrap().norm() < 1e-8);

        // x - 1/2 shifted to be orthogonal to both o's: use x² residual.
        let f = SampledFunction::from_fn(&g, |x| x * x).unwrap();
        let pf = project_orthogonal(&basis, &f).unwrap();
        let resid = f.axpy(-1.0, &pf).unwrap();
        for o in basis.functions() {
            assert!(inner_product(o, &resid).unwrap().abs() < 1e-8 * f.norm());
        }
        // The residual is orthogonal, so projecting it gives ~zero.
        let p_resid = project_orthogonal(&basis, &resid).unwrap();
        assert!(p_resid.norm() < 1e-8 * resid.norm());
    }

    #[test]
    fn complement_of_orthogonal_functions_is_identity() {
        let g = grid(1001);
        // sin(2πx) is orthogonal to constants on [0,1].
        let v = SpanningSet::new(
            "v",
            vec![SampledFunction::from_fn(&g, |x| (std::f64::consts::TAU * x).sin()).unwrap()],
        )
        .unwrap();
        let wperp = orthonormalize(
            &SpanningSet::new("w", vec![SampledFunction::from_fn(&g, |_| 1.0).unwrap()]).unwrap(),
            1e-10,
        )
        .unwrap();
        let u = complement_spanning_set(&v, &wperp).unwrap();
        let diff = u.get(0).axpy(-1.0, v.get(0)).unwrap();
        assert!(diff.norm() < 1e-8 * v.get(0).norm());
    }

    #[test]
    fn complement_of_contained_function_vanishes() {
        let g = grid(1001);
        let one = SampledFunction::from_fn(&g, |_| 1.0).unwrap();
        let v = SpanningSet::new("v", vec![one.scale(2.5)]).unwrap();
        let wperp =
            orthonormalize(&SpanningSet::new("w", vec![one]).unwrap(), 1e-10).unwrap();
        let u = complement_spanning_set(&v, &wperp).unwrap();
        assert!(u.get(0).norm() < 1e-8);
    }

    #[test]
    fn singular_system_of_orthonormal_set_is_unit() {
        let g = grid(1001);
        let set = poly_set(&g, &[0, 1, 2]);
        let basis = orthonormalize(&set, 1e-10).unwrap();
        let as_set = SpanningSet::new("o", basis.functions().to_vec()).unwrap();
        for route in [SpectralRoute::WeightedSvd, SpectralRoute::GramEigen] {
            let sys = build_singular_system_with(&as_set, 0.0, route).unwrap();
            assert_eq!(sys.rank(), 3);
            for s in sys.sigmas() {
                assert!((s - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn singular_system_of_single_function_gives_its_norm() {
        let g = grid(1001);
        let two = SampledFunction::from_fn(&g, |_| 2.0).unwrap();
        let set = SpanningSet::new("c", vec![two]).unwrap();
        let sys = build_singular_system(&set, 0.0).unwrap();
        assert_eq!(sys.rank(), 1);
        assert!((sys.sigmas()[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn singular_system_routes_agree_when_well_conditioned() {
        let g = grid(501);
        let set = poly_set(&g, &[0, 1, 2, 3]);
        let svd = build_singular_system_with(&set, 0.0, SpectralRoute::WeightedSvd).unwrap();
        let eig = build_singular_system_with(&set, 0.0, SpectralRoute::GramEigen).unwrap();
        assert_eq!(svd.rank(), eig.rank());
        for (a, b) in svd.sigmas().iter().zip(eig.sigmas()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn rank_tol_truncates_spectrum() {
        let g = grid(201);
        let x = SampledFunction::from_fn(&g, |x| x).unwrap();
        let almost_x = SampledFunction::from_fn(&g, |x| x + 1e-6 * (x * 37.0).sin()).unwrap();
        let set = SpanningSet::new("near", vec![x, almost_x]).unwrap();
        let full = build_singular_system(&set, 0.0).unwrap();
        assert_eq!(full.rank(), 2);
        let cut = build_singular_system(&set, 1e-3).unwrap();
        assert_eq!(cut.rank(), 1);
    }

    /// Small, well-separated construction used by the projector tests:
    /// V = polynomials, W⊥ = high-frequency sines.
    fn toy_projector(g: &Arc<Grid>) -> (SpanningSet, SpanningSet, ObliqueProjector) {
        let v_set = poly_set(g, &[0, 1]);
        let y_set = SpanningSet::new(
            "y",
            vec![
                SampledFunction::from_fn(g, |x| (std::f64::consts::TAU * 3.0 * x).sin()).unwrap(),
            ],
        )
        .unwrap();
        let wperp = orthonormalize(&y_set, 1e-12).unwrap();
        let u_set = complement_spanning_set(&v_set, &wperp).unwrap();
        let sys = build_singular_system(&u_set, 0.0).unwrap();
        let proj = build_oblique_projector(&v_set, &u_set, &sys).unwrap();
        (v_set, y_set, proj)
    }

    #[test]
    fn projector_fixes_signal_and_kills_background() {
        let g = grid(1001);
        let (v_set, y_set, proj) = toy_projector(&g);
        let f_v = v_set.combine(&[0.7, -0.3]).unwrap();
        let rec = proj.apply(&f_v).unwrap();
        assert!(rec.axpy(-1.0, &f_v).unwrap().norm() < 1e-6 * f_v.norm().max(1.0));

        let y = y_set.get(0);
        let killed = proj.apply(y).unwrap();
        assert!(killed.norm() < 1e-6 * y.norm());
    }

    #[test]
    fn projector_is_idempotent() {
        let g = grid(1001);
        let (_, _, proj) = toy_projector(&g);
        let f = SampledFunction::from_fn(&g, |x| (7.0 * x).sin() + 0.2 * x).unwrap();
        let once = proj.apply(&f).unwrap();
        let twice = proj.apply(&once).unwrap();
        assert!(twice.axpy(-1.0, &once).unwrap().norm() <= 1e-8 * f.norm());
    }

    #[test]
    fn degenerate_background_gives_orthogonal_projector() {
        // U = V when W⊥ is trivial: E reduces to orthogonal projection.
        let g = grid(1001);
        let v_set = poly_set(&g, &[0, 1]);
        let sys = build_singular_system(&v_set, 0.0).unwrap();
        let proj = build_oblique_projector(&v_set, &v_set, &sys).unwrap();

        let f = SampledFunction::from_fn(&g, |x| x * x).unwrap();
        let oblique = proj.apply(&f).unwrap();
        let basis = orthonormalize(&v_set, 1e-12).unwrap();
        let orthogonal = project_orthogonal(&basis, &f).unwrap();
        assert!(oblique.axpy(-1.0, &orthogonal).unwrap().norm() < 1e-8);
    }

    #[test]
    fn truncate_full_rank_is_identity_on_random_inputs() {
        let g = grid(501);
        let (_, _, proj) = toy_projector(&g);
        let full = proj.truncate(proj.rank()).unwrap();
        for k in 0..10 {
            let f = SampledFunction::from_fn(&g, |x| ((k as f64 + 1.3) * x).sin()).unwrap();
            let a = proj.apply(&f).unwrap();
            let b = full.apply(&f).unwrap();
            assert!(a.axpy(-1.0, &b).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn truncate_kills_dropped_eta() {
        let g = grid(501);
        let (_, _, proj) = toy_projector(&g);
        let r = proj.rank() - 1;
        let truncated = proj.truncate(r).unwrap();
        let eta_last = &proj.etas()[proj.rank() - 1];
        let image = truncated.apply(eta_last).unwrap();
        assert!(image.norm() < 1e-8 * eta_last.norm());
    }

    #[test]
    fn truncate_range_checked() {
        let g = grid(201);
        let (_, _, proj) = toy_projector(&g);
        assert!(proj.truncate(0).is_err());
        assert!(proj.truncate(proj.rank() + 1).is_err());
    }

    #[test]
    fn dual_vectors_match_spectral_application() {
        let g = grid(501);
        let (_, _, proj) = toy_projector(&g);
        let duals = proj.dual_vectors();
        for k in 0..10 {
            let f =
                SampledFunction::from_fn(&g, |x| ((1.7 * k as f64 + 0.9) * x).cos() + x).unwrap();
            let spectral = proj.apply(&f).unwrap();
            let dual = proj.apply_with_duals(&duals, &f).unwrap();
            assert!(dual.axpy(-1.0, &spectral).unwrap().norm() <= 1e-8 * f.norm());
        }
    }

    #[test]
    fn dual_vectors_of_orthonormal_identity_system_are_the_set() {
        let g = grid(1001);
        let set = poly_set(&g, &[0, 1, 2]);
        let basis = orthonormalize(&set, 1e-10).unwrap();
        let o_set = SpanningSet::new("o", basis.functions().to_vec()).unwrap();
        let sys = build_singular_system(&o_set, 0.0).unwrap();
        let proj = build_oblique_projector(&o_set, &o_set, &sys).unwrap();
        let duals = proj.dual_vectors();
        // With σ_n = 1 the duals coincide with the (orthonormal) set up to
        // the eigenbasis rotation; check them functionally instead: the
        // coefficient matrix ⟨w_i|o_j⟩ must be the identity.
        for (i, w) in duals.iter().enumerate() {
            for (j, o) in o_set.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((inner_product(w, o).unwrap() - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dual_coefficient_matrix_is_idempotent() {
        let g = grid(501);
        let (v_set, _, proj) = toy_projector(&g);
        let duals = proj.dual_vectors();
        let m = v_set.len();
        let mut t = DMatrix::zeros(m, m);
        for (i, w) in duals.iter().enumerate() {
            for (j, v) in v_set.iter().enumerate() {
                t[(i, j)] = inner_product(w, v).unwrap();
            }
        }
        let t2 = &t * &t;
        for i in 0..m {
            for j in 0..m {
                assert!((t2[(i, j)] - t[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gram_pinv_route_matches_spectral_route() {
        let g = grid(501);
        let (v_set, y_set, proj) = toy_projector(&g);
        let wperp = orthonormalize(&y_set, 1e-12).unwrap();
        let u_set = complement_spanning_set(&v_set, &wperp).unwrap();
        for k in 0..5 {
            let f = SampledFunction::from_fn(&g, |x| (x * (k + 2) as f64).sin() + 0.1).unwrap();
            let spectral = proj.apply(&f).unwrap();
            let pinv_route = apply_via_gram_pinv(&v_set, &u_set, &f, 1e-12).unwrap();
            assert!(pinv_route.axpy(-1.0, &spectral).unwrap().norm() <= 1e-8 * f.norm());
        }
    }

    #[test]
    fn orthogonalized_dual_variant_agrees_when_well_posed() {
        let g = grid(501);
        let (v_set, y_set, proj) = toy_projector(&g);
        let wperp = orthonormalize(&y_set, 1e-12).unwrap();
        let u_set = complement_spanning_set(&v_set, &wperp).unwrap();
        let duals = dual_vectors_orthogonalized(&v_set, &u_set, 1e-12, 1e-12).unwrap();
        let f = SampledFunction::from_fn(&g, |x| (3.3 * x).cos() + x * x).unwrap();
        let via_q = proj.apply_with_duals(&duals, &f).unwrap();
        let spectral = proj.apply(&f).unwrap();
        assert!(via_q.axpy(-1.0, &spectral).unwrap().norm() <= 1e-8 * f.norm());
    }

    #[test]
    fn svd_report_csv_shape() {
        let g = grid(201);
        let set = poly_set(&g, &[0, 1, 2]);
        let sys = build_singular_system(&set, 0.0).unwrap();
        let csv = sys.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,sigma_n,lambda_n");
        assert_eq!(lines.len(), 1 + sys.rank());
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn pseudoinverse_of_zero_matrix_errors() {
        let z = DMatrix::zeros(3, 2);
        assert!(matches!(
            pseudoinverse(&z, 1e-12),
            Err(Error::SingularSystem(_))
        ));
    }
}
