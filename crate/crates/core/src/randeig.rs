//! Double-pass randomized solver for the generalized eigenproblem
//! `A ψ = λ B ψ`, and the two trace estimators for `tr(ℋ)` and `tr(ℋ²)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::fem::{dense_sym_eig, NormalStream};
use crate::linalg::{axpy, dot, DenseMat};
use crate::prior::GaussianPrior;
use crate::{float, par, Error, Result};

/// A linear operator given by its action.
pub type LinOp<'a> = &'a (dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync);

/// Dominant generalized eigenpairs, `|λ|` descending, `B`-orthonormal.
#[derive(Debug, Clone)]
pub struct EigPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Every Ritz value of the projected problem, `|λ|` descending; the
    /// entries past `values.len()` are used to detect clusters at the cut.
    pub ritz_values: Vec<f64>,
    pub oversampling: usize,
    pub seed: u64,
    /// Columns of the random basis kept after `B`-orthonormalization.
    pub basis_size: usize,
    /// Applications of `A` performed.
    pub a_applications: usize,
}

impl EigPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the leading `n` pairs.
    pub fn truncated(&self, n: usize) -> Result<EigPairs> {
        if n > self.len() {
            return Err(Error::NotEnoughEigenpairs {
                requested: n,
                available: self.len(),
            });
        }
        Ok(EigPairs {
            values: self.values[..n].to_vec(),
            vectors: self.vectors[..n].to_vec(),
            ..self.clone()
        })
    }
}

/// Relative `B`-norm below which a column is considered linearly dependent.
const DROP_TOL: f64 = 1e-10;

/// Random basis columns are drawn from this stream of the caller's seed.
pub const GEVP_STREAM: u64 = 0x6e76;

/// Double-pass randomized generalized eigensolver.
///
/// Draws a Gaussian `Ω` with `k + p` columns, forms `Y = B⁻¹ A Ω`,
/// `B`-orthonormalizes `Y` into `Q` by modified Gram–Schmidt with one
/// reorthogonalization pass, eigendecomposes `T = Qᵀ A Q`, and returns the
/// `k` pairs of largest `|λ|` with `Ψ = Q S_k`. Uses `2(k + p)` applications
/// of `A` unless columns are dropped.
pub fn double_pass_gevp(a: LinOp<'_>, b_inv: LinOp<'_>, b: LinOp<'_>, n: usize, k: usize, p: usize, seed: u64) -> Result<EigPairs> {
    let l = k + p;
    if l > n {
        return Err(Error::InvalidArgument(alloc::format!(
            "k + p = {l} exceeds the problem dimension {n}"
        )));
    }
    let mut rng = NormalStream::new(seed, GEVP_STREAM);
    let omega: Vec<Vec<f64>> = (0..l).map(|_| rng.normal_vec(n)).collect();
    let y = par::try_map_indexed(l, |j| b_inv(&a(&omega[j])?))?;

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(l);
    let mut bq: Vec<Vec<f64>> = Vec::with_capacity(l);
    for mut col in y {
        let norm0 = float::sqrt(dot(&col, &b(&col)?).max(0.0));
        if norm0 == 0.0 {
            continue;
        }
        for _pass in 0..2 {
            for (qi, bqi) in q.iter().zip(&bq) {
                let c = dot(bqi, &col);
                axpy(-c, qi, &mut col);
            }
        }
        let bcol = b(&col)?;
        let norm = float::sqrt(dot(&col, &bcol).max(0.0));
        if norm <= DROP_TOL * norm0 {
            continue;
        }
        q.push(col.iter().map(|x| x / norm).collect());
        bq.push(bcol.iter().map(|x| x / norm).collect());
    }
    let r = q.len();

    let aq = par::try_map_indexed(r, |j| a(&q[j]))?;
    let mut t = DenseMat::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            t[(i, j)] = dot(&q[i], &aq[j]);
        }
    }
    for i in 0..r {
        for j in 0..i {
            let s = 0.5 * (t[(i, j)] + t[(j, i)]);
            t[(i, j)] = s;
            t[(j, i)] = s;
        }
    }
    let eig = dense_sym_eig(&t)?;
    let keep = k.min(r);
    let mut vectors = Vec::with_capacity(keep);
    for j in 0..keep {
        let mut psi = vec![0.0; n];
        for i in 0..r {
            axpy(eig.vectors[(i, j)], &q[i], &mut psi);
        }
        vectors.push(psi);
    }
    Ok(EigPairs {
        values: eig.values[..keep].to_vec(),
        vectors,
        ritz_values: eig.values.clone(),
        oversampling: p,
        seed,
        basis_size: r,
        a_applications: l + r,
    })
}

/// Which trace estimator produced a [`TraceEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEstimator {
    /// Gaussian Monte Carlo.
    T1,
    /// Sum of dominant eigenvalues.
    T2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEstimate {
    pub estimator: TraceEstimator,
    pub n: usize,
    /// Estimate of `tr(ℋ)`.
    pub tr: f64,
    /// Estimate of `tr(ℋ²)`.
    pub tr_sq: f64,
    pub seed: Option<u64>,
    /// Hessian actions spent.
    pub hessian_actions: usize,
}

/// `Σ_{j≤N} λⱼ` and `Σ_{j≤N} λⱼ²`.
pub fn trace_from_eigs(eigs: &EigPairs, n: usize) -> Result<TraceEstimate> {
    if n > eigs.len() {
        return Err(Error::NotEnoughEigenpairs {
            requested: n,
            available: eigs.len(),
        });
    }
    let vals = &eigs.values[..n];
    Ok(TraceEstimate {
        estimator: TraceEstimator::T2,
        n,
        tr: vals.iter().sum(),
        tr_sq: vals.iter().map(|x| x * x).sum(),
        seed: Some(eigs.seed),
        hessian_actions: 0,
    })
}

/// Per-direction terms of the Gaussian estimator.
#[derive(Debug, Clone)]
pub struct GaussianTraceSamples {
    /// `⟨m̂ⱼ, Q_mm m̂ⱼ⟩`
    pub tr_terms: Vec<f64>,
    /// `⟨Q_mm m̂ⱼ, C Q_mm m̂ⱼ⟩`
    pub tr_sq_terms: Vec<f64>,
    pub seed: u64,
}

impl GaussianTraceSamples {
    /// Estimate from the first `n` directions.
    pub fn estimate(&self, n: usize) -> TraceEstimate {
        let n = n.min(self.tr_terms.len());
        let mean = |v: &[f64]| if n == 0 { 0.0 } else { v[..n].iter().sum::<f64>() / n as f64 };
        TraceEstimate {
            estimator: TraceEstimator::T1,
            n,
            tr: mean(&self.tr_terms),
            tr_sq: mean(&self.tr_sq_terms),
            seed: Some(self.seed),
            hessian_actions: n,
        }
    }
}

/// Gaussian trace stream id.
pub const TRACE_STREAM: u64 = 0x7472;

/// Evaluates the Gaussian-estimator terms for `n` directions
/// `m̂ⱼ = L ξⱼ ~ N(0, C)`; one Hessian action each.
pub fn gaussian_trace_samples(hess: LinOp<'_>, prior: &dyn GaussianPrior, n: usize, seed: u64) -> Result<GaussianTraceSamples> {
    let mut rng = NormalStream::new(seed, TRACE_STREAM);
    let dirs: Vec<Vec<f64>> = (0..n).map(|_| prior.apply_sqrt_c(&rng.normal_vec(prior.dim()))).collect();
    let terms = par::try_map_indexed(n, |j| {
        let h = hess(&dirs[j])?;
        Ok::<_, Error>((dot(&dirs[j], &h), dot(&h, &prior.apply_c(&h))))
    })?;
    Ok(GaussianTraceSamples {
        tr_terms: terms.iter().map(|t| t.0).collect(),
        tr_sq_terms: terms.iter().map(|t| t.1).collect(),
        seed,
    })
}

/// `T̂₁` with `n` directions.
pub fn gaussian_trace(hess: LinOp<'_>, prior: &dyn GaussianPrior, n: usize, seed: u64) -> Result<TraceEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("the Gaussian trace estimator needs N >= 1".into()));
    }
    Ok(gaussian_trace_samples(hess, prior, n, seed)?.estimate(n))
}

/// One row of a trace-error sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceErrorRow {
    pub n: usize,
    /// `|T̂₁(ℋ) − reference|`
    pub error1: f64,
    /// `|T̂₂(ℋ) − reference|`
    pub error2: f64,
    /// `Σ_{j>N} |λⱼ|` over the available spectrum.
    pub tail: f64,
}

/// Errors of both estimators of `tr(ℋ)` against `reference`, for each `N` in
/// `ns`. `T̂₁` reuses nested prefixes of one direction sequence.
pub fn trace_error_sweep(eigs: &EigPairs, gaussian: &GaussianTraceSamples, ns: &[usize], reference: f64) -> Result<Vec<TraceErrorRow>> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let t2 = trace_from_eigs(eigs, n)?;
        if n > gaussian.tr_terms.len() {
            return Err(Error::TooFewSamples {
                needed: n,
                got: gaussian.tr_terms.len(),
            });
        }
        let t1 = gaussian.estimate(n);
        rows.push(TraceErrorRow {
            n,
            error1: float::abs(t1.tr - reference),
            error2: float::abs(t2.tr - reference),
            tail: eigs.values[n..].iter().map(|x| float::abs(*x)).sum(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::DiagonalPrior;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[f64]) -> Result<Vec<f64>> + Sync {
        move |x: &[f64]| Ok(x.iter().zip(&d).map(|(a, b)| a * b).collect())
    }

    fn ident(x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }

    #[test]
    fn diagonal_operator() {
        let mut d = vec![0.0; 30];
        d[0] = 3.0;
        d[1] = 2.0;
        d[2] = 1.0;
        let a = diag_op(d);
        let e = double_pass_gevp(&a, &ident, &ident, 30, 2, 5, 1).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-10);
        assert!((e.values[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn pencil_of_equal_matrices() {
        let d: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let dinv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
        let a = diag_op(d.clone());
        let b = diag_op(d);
        let binv = diag_op(dinv);
        let e = double_pass_gevp(&a, &binv, &b, 20, 3, 2, 4).unwrap();
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_basis_is_shrunk() {
        let mut d = vec![0.0; 10];
        d[0] = 1.0;
        d[1] = -4.0;
        let a = diag_op(d);
        let e = double_pass_gevp(&a, &ident, &ident, 10, 4, 2, 9).unwrap();
        assert_eq!(e.basis_size, 2);
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn trace_arithmetic() {
        let e = EigPairs {
            values: vec![3.0, 2.0, 1.0],
            vectors: vec![vec![]; 3],
            ritz_values: vec![3.0, 2.0, 1.0],
            oversampling: 0,
            seed: 0,
            basis_size: 3,
            a_applications: 0,
        };
        let t = trace_from_eigs(&e, 3).unwrap();
        assert_eq!((t.tr, t.tr_sq), (6.0, 14.0));
        let t = trace_from_eigs(&e, 0).unwrap();
        assert_eq!((t.tr, t.tr_sq), (0.0, 0.0));
        assert!(trace_from_eigs(&e, 4).is_err());
    }

    #[test]
    fn gaussian_estimator_of_zero_operator() {
        let prior = DiagonalPrior::standard(5);
        let zero = |x: &[f64]| Ok(vec![0.0; x.len()]);
        let t = gaussian_trace(&zero, &prior, 10, 3).unwrap();
        assert_eq!((t.tr, t.tr_sq), (0.0, 0.0));
    }

    #[test]
    fn same_seed_same_pairs() {
        let d: Vec<f64> = (0..25).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = diag_op(d);
        let e1 = double_pass_gevp(&a, &ident, &ident, 25, 5, 5, 77).unwrap();
        let e2 = double_pass_gevp(&a, &ident, &ident, 25, 5, 5, 77).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }
}
