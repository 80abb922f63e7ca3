//! Exactly quadratic test model.
//!
//! `r(u, v, m, z) = ⟨v, u − m − G z⟩`, so `u = m + G z`, and
//! `Q(u) = q₀ + ⟨g, u − m̄⟩ + ½⟨u − m̄, H_s (u − m̄)⟩` with `H_s = U S Uᵀ`.
//! At `z = 0` the state map is the identity and every Taylor expansion in `m`
//! about `m̄` is exact.

use alloc::vec;
use alloc::vec::Vec;

use super::{FormPoint, FormTag, Model, Slot, StateJacobian, StateSolution};
use crate::linalg::{dot, DenseMat};
use crate::prior::GaussianPrior;
use crate::{float, Error, Result, SolveLedger};

#[derive(Debug, Clone)]
pub struct QuadraticToy {
    pub q0: f64,
    pub g: Vec<f64>,
    pub mean: Vec<f64>,
    /// Columns of `U` (each of length `n`).
    pub factors: Vec<Vec<f64>>,
    /// Symmetric core `S`.
    pub core: DenseMat,
    /// Control coupling `G`, `n × n_c`.
    pub coupling: DenseMat,
}

/// Identity Jacobian; solves are copies but still count as solves.
pub struct IdentityJacobian;

impl StateJacobian for IdentityJacobian {
    fn solve(&self, rhs: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        ledger.record_linear();
        Ok(rhs.to_vec())
    }

    fn solve_transpose(&self, rhs: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        ledger.record_linear();
        Ok(rhs.to_vec())
    }
}

impl QuadraticToy {
    pub fn new(q0: f64, g: Vec<f64>, mean: Vec<f64>, factors: Vec<Vec<f64>>, core: DenseMat, coupling: DenseMat) -> Result<Self> {
        let n = g.len();
        if mean.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: mean.len() });
        }
        if factors.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("low-rank factor columns must have length n".into()));
        }
        if core.nrows != factors.len() || core.ncols != factors.len() {
            return Err(Error::DimensionMismatch {
                expected: factors.len(),
                got: core.nrows,
            });
        }
        if core.asymmetry() > 1e-14 * core.max_abs().max(1.0) {
            return Err(Error::InvalidArgument("the quadratic core must be symmetric".into()));
        }
        if coupling.nrows != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: coupling.nrows,
            });
        }
        Ok(Self {
            q0,
            g,
            mean,
            factors,
            core,
            coupling,
        })
    }

    /// A model with no control (`n_c = 0`).
    pub fn uncontrolled(q0: f64, g: Vec<f64>, mean: Vec<f64>, factors: Vec<Vec<f64>>, core: DenseMat) -> Result<Self> {
        let n = g.len();
        Self::new(q0, g, mean, factors, core, DenseMat::zeros(n, 0))
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// `H_s x = U S Uᵀ x`.
    pub fn apply_h(&self, x: &[f64]) -> Vec<f64> {
        let ux: Vec<f64> = self.factors.iter().map(|c| dot(c, x)).collect();
        let sux = self.core.matvec(&ux);
        let mut out = vec![0.0; self.dim()];
        for (c, w) in self.factors.iter().zip(&sux) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        out
    }

    pub fn dense_h(&self) -> DenseMat {
        let n = self.dim();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                self.apply_h(&e)
            })
            .collect();
        DenseMat::from_columns(&cols)
    }

    /// `G z`.
    pub fn shift(&self, z: &[f64]) -> Vec<f64> {
        if self.coupling.ncols == 0 {
            return vec![0.0; self.dim()];
        }
        self.coupling.matvec(z)
    }

    /// Exact mean and variance of `Q` under `m ~ N(m̄, C)` at control `z`,
    /// from dense matrices: with `s = G z`, `E = q₀ + ⟨g, s⟩ + ½⟨s, H s⟩ +
    /// ½tr(C H)` and `Var = ⟨g + H s, C(g + H s)⟩ + ½tr((C H)²)`.
    pub fn exact_moments(&self, prior: &dyn GaussianPrior, z: &[f64]) -> (f64, f64) {
        let n = self.dim();
        let s = self.shift(z);
        let hs = self.apply_h(&s);
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                prior.apply_c(&self.apply_h(&e))
            })
            .collect();
        let ch = DenseMat::from_columns(&cols);
        let tr1 = ch.trace();
        let tr2 = ch.matmul(&ch).trace();
        let gs: Vec<f64> = self.g.iter().zip(&hs).map(|(a, b)| a + b).collect();
        let mean = self.q0 + dot(&self.g, &s) + 0.5 * dot(&s, &hs) + 0.5 * tr1;
        let var = dot(&gs, &prior.apply_c(&gs)) + 0.5 * tr2;
        (mean, var)
    }

    fn zeros(&self, n: usize) -> Vec<f64> {
        vec![0.0; n]
    }
}

impl Model for QuadraticToy {
    type Jacobian = IdentityJacobian;

    fn param_dim(&self) -> usize {
        self.dim()
    }

    fn state_dim(&self) -> usize {
        self.dim()
    }

    fn control_dim(&self) -> usize {
        self.coupling.ncols
    }

    fn solve_state(&self, m: &[f64], z: &[f64], ledger: &SolveLedger) -> Result<StateSolution<IdentityJacobian>> {
        if m.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: m.len() });
        }
        if z.len() != self.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.control_dim(),
                got: z.len(),
            });
        }
        let s = self.shift(z);
        let u = m.iter().zip(&s).map(|(a, b)| a + b).collect();
        ledger.record_state();
        Ok(StateSolution { u, jacobian: IdentityJacobian })
    }

    fn objective(&self, u: &[f64]) -> f64 {
        let d: Vec<f64> = u.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.q0 + dot(&self.g, &d) + 0.5 * dot(&d, &self.apply_h(&d))
    }

    fn objective_du(&self, u: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = u.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.apply_h(&d).iter().zip(&self.g).map(|(a, b)| a + b).collect()
    }

    fn objective_duu(&self, _u: &[f64], a: &[f64]) -> Vec<f64> {
        self.apply_h(a)
    }

    fn objective_duuu(&self, _u: &[f64], _a: &[f64], _b: &[f64]) -> Vec<f64> {
        self.zeros(self.dim())
    }

    fn vanishing_forms(&self) -> &'static [FormTag] {
        &[
            FormTag::M,
            FormTag::Uu,
            FormTag::Mm,
            FormTag::Mu,
            FormTag::Um,
            FormTag::Zu,
            FormTag::Zm,
            FormTag::Vmu,
            FormTag::Vmm,
            FormTag::Vum,
            FormTag::Vuu,
            FormTag::Umv,
            FormTag::Umu,
            FormTag::Umm,
            FormTag::Uum,
            FormTag::Uvu,
            FormTag::Uvm,
            FormTag::Uuv,
            FormTag::Uuu,
        ]
    }

    fn form(&self, tag: FormTag, p: &FormPoint<'_>, args: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_form_args(tag, args)?;
        let (out, dirs) = tag.slots();
        let n_out = self.slot_dim(out);
        match (out, dirs) {
            // first derivatives at the point
            (Slot::M, []) => Ok(p.v.iter().map(|x| -x).collect()),
            (Slot::Z, []) => Ok(self.coupling.transpose().matvec(p.v).iter().map(|x| -x).collect()),
            // r is bilinear in v and (u, m, z)
            (Slot::V, [Slot::U]) | (Slot::U, [Slot::V]) => Ok(args[0].to_vec()),
            (Slot::V, [Slot::M]) | (Slot::M, [Slot::V]) => Ok(args[0].iter().map(|x| -x).collect()),
            (Slot::V, [Slot::Z]) => Ok(self.shift(args[0]).iter().map(|x| -x).collect()),
            (Slot::Z, [Slot::V]) => Ok(self.coupling.transpose().matvec(args[0]).iter().map(|x| -x).collect()),
            _ => Ok(self.zeros(n_out)),
        }
    }
}

/// Random symmetric rank-`r` test problem used by unit and integration tests.
pub fn random_toy(n: usize, rank: usize, n_control: usize, seed: u64) -> QuadraticToy {
    let mut rng = crate::fem::NormalStream::new(seed, 0xA11CE);
    let g = rng.normal_vec(n);
    let mean = rng.normal_vec(n).iter().map(|x| 0.1 * x).collect();
    let scale = 1.0 / float::sqrt(n as f64);
    let factors = (0..rank)
        .map(|_| rng.normal_vec(n).iter().map(|x| x * scale).collect())
        .collect();
    let mut core = DenseMat::zeros(rank, rank);
    for i in 0..rank {
        for j in 0..=i {
            let x = rng.normal();
            core[(i, j)] = x;
            core[(j, i)] = x;
        }
    }
    let mut coupling = DenseMat::zeros(n, n_control);
    for i in 0..n {
        for j in 0..n_control {
            coupling[(i, j)] = scale * rng.normal();
        }
    }
    QuadraticToy::new(1.5, g, mean, factors, core, coupling).unwrap()
}
