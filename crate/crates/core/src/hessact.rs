//! Gradient and Hessian actions of `Q` with respect to the uncertain
//! parameter, at a cached linearization point.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{axpy, dot, norm2, DenseMat};
use crate::model::{FormPoint, FormTag, Model, StateJacobian};
use crate::prior::GaussianPrior;
use crate::{float, Error, Result, SolveLedger};

/// State, adjoint, objective, and m-gradient at `(m̄, z)`, plus the
/// factorized state Jacobian reused by every linearized solve.
pub struct LinearizationPoint<'a, M: Model> {
    pub model: &'a M,
    pub m: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub q: f64,
    /// `ḡ = ∂_m Q` as a dual vector.
    pub grad: Vec<f64>,
    pub jacobian: M::Jacobian,
}

/// One Hessian action with its incremental state and adjoint.
#[derive(Debug, Clone)]
pub struct HessAction {
    pub hm: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
}

/// Solves the state and adjoint problems at `(m, z)`: one state solve and
/// one linear solve.
pub fn linearize<'a, M: Model>(model: &'a M, m: &[f64], z: &[f64], ledger: &SolveLedger) -> Result<LinearizationPoint<'a, M>> {
    let sol = model.solve_state(m, z, ledger)?;
    let u = sol.u;
    let jacobian = sol.jacobian;
    let q = model.objective(&u);
    let rhs: Vec<f64> = model.objective_du(&u).iter().map(|x| -x).collect();
    let v = jacobian.solve_transpose(&rhs, ledger)?;
    let grad = model.form(
        FormTag::M,
        &FormPoint {
            u: &u,
            v: &v,
            m,
            z,
        },
        &[],
    )?;
    Ok(LinearizationPoint {
        model,
        m: m.to_vec(),
        z: z.to_vec(),
        u,
        v,
        q,
        grad,
        jacobian,
    })
}

impl<'a, M: Model> LinearizationPoint<'a, M> {
    pub fn point(&self) -> FormPoint<'_> {
        FormPoint {
            u: &self.u,
            v: &self.v,
            m: &self.m,
            z: &self.z,
        }
    }

    pub fn form(&self, tag: FormTag, args: &[&[f64]]) -> Result<Vec<f64>> {
        self.model.form(tag, &self.point(), args)
    }

    /// `J û = −∂_vm r m̂`.
    pub fn inc_state(&self, m_hat: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        let mut rhs = self.form(FormTag::Vm, &[m_hat])?;
        rhs.iter_mut().for_each(|x| *x = -*x);
        self.jacobian.solve(&rhs, ledger)
    }

    /// `Jᵀ v̂ = −(∂_uu Q û + ∂_uu r û + ∂_um r m̂)`.
    pub fn inc_adjoint(&self, m_hat: &[f64], u_hat: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        let mut rhs = self.model.objective_duu(&self.u, u_hat);
        let uu = self.form(FormTag::Uu, &[u_hat])?;
        let um = self.form(FormTag::Um, &[m_hat])?;
        for i in 0..rhs.len() {
            rhs[i] = -(rhs[i] + uu[i] + um[i]);
        }
        self.jacobian.solve_transpose(&rhs, ledger)
    }

    /// `Q_mm m̂ = ∂_mv r v̂ + ∂_mu r û + ∂_mm r m̂`; exactly two linear solves.
    pub fn hess_action(&self, m_hat: &[f64], ledger: &SolveLedger) -> Result<HessAction> {
        let u_hat = self.inc_state(m_hat, ledger)?;
        let v_hat = self.inc_adjoint(m_hat, &u_hat, ledger)?;
        let mut hm = self.form(FormTag::Mm, &[m_hat])?;
        axpy(1.0, &self.form(FormTag::Mu, &[&u_hat])?, &mut hm);
        axpy(1.0, &self.form(FormTag::Mv, &[&v_hat])?, &mut hm);
        Ok(HessAction { hm, u_hat, v_hat })
    }

    pub fn hess_apply(&self, m_hat: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        Ok(self.hess_action(m_hat, ledger)?.hm)
    }

    /// Wraps this point and a ledger as a Hessian operator.
    pub fn hess_op<'b>(&'b self, ledger: &'b SolveLedger) -> HessOp<'b, 'a, M> {
        HessOp { lp: self, ledger }
    }
}

/// `m̂ ↦ Q_mm m̂` with solve accounting.
pub struct HessOp<'b, 'a, M: Model> {
    pub lp: &'b LinearizationPoint<'a, M>,
    pub ledger: &'b SolveLedger,
}

impl<M: Model> HessOp<'_, '_, M> {
    pub fn apply(&self, m_hat: &[f64]) -> Result<Vec<f64>> {
        self.lp.hess_apply(m_hat, self.ledger)
    }

    pub fn dim(&self) -> usize {
        self.lp.model.param_dim()
    }
}

/// How the prior preconditions the Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondMode {
    /// `C Q_mm`, whose eigenpairs are those of the pencil `(Q_mm, C⁻¹)`.
    Pencil,
    /// `Lᵀ Q_mm L` with `L Lᵀ = C`; symmetric, used as a dense oracle.
    Symmetric,
}

pub struct PrecondHessOp<'b, 'a, M: Model> {
    pub hess: HessOp<'b, 'a, M>,
    pub prior: &'b dyn GaussianPrior,
    pub mode: PrecondMode,
}

impl<M: Model> PrecondHessOp<'_, '_, M> {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            PrecondMode::Pencil => Ok(self.prior.apply_c(&self.hess.apply(x)?)),
            PrecondMode::Symmetric => {
                let hx = self.hess.apply(&self.prior.apply_sqrt_c(x))?;
                Ok(self.prior.apply_sqrt_c_transpose(&hx))
            }
        }
    }
}

/// Largest parameter dimension for which dense oracles are formed.
pub const DENSE_ORACLE_LIMIT: usize = 500;

/// Dense `Lᵀ Q_mm L`, column by column. Refuses `n > 500`.
pub fn dense_precond_hessian<M: Model>(op: &PrecondHessOp<'_, '_, M>) -> Result<DenseMat> {
    let n = op.hess.dim();
    if n > DENSE_ORACLE_LIMIT {
        return Err(Error::InvalidArgument(alloc::format!(
            "dense preconditioned Hessian limited to n <= {DENSE_ORACLE_LIMIT}, got {n}"
        )));
    }
    if op.mode != PrecondMode::Symmetric {
        return Err(Error::InvalidArgument("dense oracle requires the symmetric mode".into()));
    }
    let cols = crate::par::try_map_indexed(n, |j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        op.apply(&e)
    })?;
    Ok(DenseMat::from_columns(&cols))
}

/// Dense `Q_mm` (oracle scale only).
pub fn dense_hessian<M: Model>(lp: &LinearizationPoint<'_, M>, ledger: &SolveLedger) -> Result<DenseMat> {
    let n = lp.model.param_dim();
    if n > DENSE_ORACLE_LIMIT {
        return Err(Error::InvalidArgument(alloc::format!(
            "dense Hessian limited to n <= {DENSE_ORACLE_LIMIT}, got {n}"
        )));
    }
    let cols = crate::par::try_map_indexed(n, |j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        lp.hess_apply(&e, ledger)
    })?;
    Ok(DenseMat::from_columns(&cols))
}

/// One row of a finite-difference sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdRow {
    pub step: f64,
    /// Norm of the symmetric difference quotient.
    pub fd: f64,
    /// Norm of the analytic value.
    pub analytic: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FdTable {
    pub rows: Vec<FdRow>,
}

impl FdTable {
    pub fn min_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error).fold(f64::INFINITY, f64::min)
    }
}

/// Steps `10⁻¹, …, 10⁻⁷`.
pub fn default_steps() -> Vec<f64> {
    (1..=7).map(|k| float::exp(-(k as f64) * core::f64::consts::LN_10)).collect()
}

/// Compares `(f(h) − f(−h)) / 2h` with `analytic` for each step.
/// A zero analytic value with a zero quotient counts as exact.
pub fn central_difference_table<F>(analytic: &[f64], steps: &[f64], f: F) -> Result<FdTable>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let an = norm2(analytic);
    let mut rows = Vec::with_capacity(steps.len());
    for &h in steps {
        let fp = f(h)?;
        let fm = f(-h)?;
        let quotient: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let diff: f64 = norm2(&quotient.iter().zip(analytic).map(|(a, b)| a - b).collect::<Vec<_>>());
        let rel_error = if an > 0.0 {
            diff / an
        } else {
            diff
        };
        rows.push(FdRow {
            step: h,
            fd: norm2(&quotient),
            analytic: an,
            rel_error,
        });
    }
    Ok(FdTable { rows })
}

fn perturbed(m: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
    m.iter().zip(dir).map(|(a, b)| a + h * b).collect()
}

/// Central differences of `Q(m + h m̂)` against `⟨m̂, ḡ⟩`.
pub fn fd_check_gradient<M: Model>(model: &M, m: &[f64], z: &[f64], m_hat: &[f64], steps: &[f64]) -> Result<FdTable> {
    let ledger = SolveLedger::new();
    let lp = linearize(model, m, z, &ledger)?;
    let analytic = [dot(m_hat, &lp.grad)];
    central_difference_table(&analytic, steps, |h| {
        let sol = model.solve_state(&perturbed(m, m_hat, h), z, &ledger)?;
        Ok(vec![model.objective(&sol.u)])
    })
}

/// Central differences of `ḡ(m + h m̂)` against `Q_mm m̂`.
pub fn fd_check_hessian<M: Model>(model: &M, m: &[f64], z: &[f64], m_hat: &[f64], steps: &[f64]) -> Result<FdTable> {
    let ledger = SolveLedger::new();
    let lp = linearize(model, m, z, &ledger)?;
    let analytic = lp.hess_apply(m_hat, &ledger)?;
    central_difference_table(&analytic, steps, |h| Ok(linearize(model, &perturbed(m, m_hat, h), z, &ledger)?.grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Mesh2D, NormalStream};
    use crate::linalg::{norm_inf, sub};
    use crate::model::{random_toy, BoundaryData, EllipticModel, WellConfig};
    use crate::prior::DiagonalPrior;

    fn elliptic() -> EllipticModel {
        let mesh = Mesh2D::new(16, 8, 2.0, 1.0).unwrap();
        EllipticModel::new(&mesh, WellConfig::reference(), BoundaryData::REFERENCE).unwrap()
    }

    #[test]
    fn linearize_costs_one_state_and_one_linear_solve() {
        let model = elliptic();
        let ledger = SolveLedger::new();
        let m = vec![0.5; model.param_dim()];
        let lp = linearize(&model, &m, &[16.0; 20], &ledger).unwrap();
        let c = ledger.counts();
        assert_eq!((c.state, c.linear), (1, 1));
        assert!(lp.q.is_finite() && lp.q > 0.0);
        let before = ledger.counts();
        let dir = NormalStream::new(1, 0).normal_vec(model.param_dim());
        lp.hess_apply(&dir, &ledger).unwrap();
        assert_eq!(ledger.counts() - before, crate::ledger::SolveCounts { state: 0, linear: 2 });
    }

    #[test]
    fn repeated_linearization_is_bitwise_identical() {
        let model = elliptic();
        let m = NormalStream::new(3, 0).normal_vec(model.param_dim());
        let z = vec![10.0; 20];
        let ledger = SolveLedger::new();
        let a = linearize(&model, &m, &z, &ledger).unwrap();
        let b = linearize(&model, &m, &z, &ledger).unwrap();
        assert_eq!(a.grad, b.grad);
        assert_eq!(a.u, b.u);
        assert_eq!(a.q.to_bits(), b.q.to_bits());
    }

    #[test]
    fn toy_gradient_and_hessian_are_exact() {
        let toy = random_toy(12, 3, 0, 7);
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, &toy.mean, &[], &ledger).unwrap();
        assert!(norm_inf(&sub(&lp.grad, &toy.g)) < 1e-14);
        let dir = NormalStream::new(8, 0).normal_vec(12);
        let h = lp.hess_apply(&dir, &ledger).unwrap();
        assert!(norm_inf(&sub(&h, &toy.apply_h(&dir))) < 1e-14);
        // below 1e-6 the quotient is dominated by roundoff of order eps / h
        let steps: Vec<f64> = default_steps().into_iter().filter(|h| *h >= 1e-6).collect();
        let t = fd_check_hessian(&toy, &toy.mean, &[], &dir, &steps).unwrap();
        assert!(t.rows.iter().all(|r| r.rel_error <= 1e-10), "{t:?}");
    }

    #[test]
    fn zero_direction_is_exact() {
        let model = elliptic();
        let m = vec![0.0; model.param_dim()];
        let zero = vec![0.0; model.param_dim()];
        let t = fd_check_gradient(&model, &m, &[16.0; 20], &zero, &default_steps()).unwrap();
        assert!(t.rows.iter().all(|r| r.rel_error == 0.0));
        let ledger = SolveLedger::new();
        let lp = linearize(&model, &m, &[16.0; 20], &ledger).unwrap();
        assert!(lp.hess_apply(&zero, &ledger).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn elliptic_fd_checks() {
        let model = elliptic();
        let mut rng = NormalStream::new(11, 0);
        let m: Vec<f64> = rng.normal_vec(model.param_dim()).iter().map(|x| 0.2 * x).collect();
        let dir = rng.normal_vec(model.param_dim());
        let z = vec![16.0; 20];
        let g = fd_check_gradient(&model, &m, &z, &dir, &default_steps()).unwrap();
        assert!(g.min_error() <= 1e-5, "{g:?}");
        let h = fd_check_hessian(&model, &m, &z, &dir, &default_steps()).unwrap();
        assert!(h.min_error() <= 1e-4, "{h:?}");
    }

    #[test]
    fn toy_dense_preconditioned_hessian_with_identity_covariance() {
        let toy = random_toy(10, 4, 0, 5);
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, &toy.mean, &[], &ledger).unwrap();
        let prior = DiagonalPrior::standard(10);
        let op = PrecondHessOp {
            hess: lp.hess_op(&ledger),
            prior: &prior,
            mode: PrecondMode::Symmetric,
        };
        let d = dense_precond_hessian(&op).unwrap();
        let h = toy.dense_h();
        for i in 0..10 {
            for j in 0..10 {
                assert!((d[(i, j)] - h[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dense_oracle_refuses_large_problems() {
        let toy = random_toy(501, 1, 0, 5);
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, &toy.mean, &[], &ledger).unwrap();
        let prior = DiagonalPrior::standard(501);
        let op = PrecondHessOp {
            hess: lp.hess_op(&ledger),
            prior: &prior,
            mode: PrecondMode::Symmetric,
        };
        assert!(dense_precond_hessian(&op).is_err());
    }
}
