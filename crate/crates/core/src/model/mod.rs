//! The derivative-form contract between PDE models and the estimator and
//! optimizer layers.
//!
//! A model is a weak-form residual `r(u, v, m, z)` together with an objective
//! `Q(u)`. Everything above this module touches the PDE only through
//! [`Model::solve_state`], the linearized solves on [`StateJacobian`], the
//! objective derivatives, and [`Model::form`].
//!
//! Form tags are literal partial derivatives of `r`. The first letter names
//! the slot that is left open (the output vector lives in that space); the
//! remaining letters name the directions, supplied in order. For example
//! `Vmu(m̂, û)` is the vector `k ↦ ∂_v ∂_m ∂_u r[φ_k, m̂, û]`. Slots that are
//! not differentiated are evaluated at the [`FormPoint`].

mod elliptic;
mod toy;

pub use elliptic::{BoundaryData, EllipticJacobian, EllipticModel, SolverKind, WellConfig};
pub use toy::{random_toy, IdentityJacobian, QuadraticToy};

use alloc::vec::Vec;

use crate::{Error, Result, SolveLedger};

/// The four arguments of the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    U,
    V,
    M,
    Z,
}

/// Multilinear form applications used by the gradient, Hessian, and
/// control-gradient equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormTag {
    /// `∂_m r` at the point: the unreduced m-gradient.
    M,
    /// `∂_z r` at the point.
    Z,
    Vu,
    Uv,
    Uu,
    Vm,
    Um,
    Mm,
    Mu,
    Mv,
    Vz,
    Zv,
    Zu,
    Zm,
    Vmu,
    Vmm,
    Vum,
    Vuu,
    Umv,
    Umu,
    Umm,
    Uum,
    Uvu,
    Uvm,
    Uuv,
    Uuu,
}

impl FormTag {
    pub const ALL: [FormTag; 26] = [
        FormTag::M,
        FormTag::Z,
        FormTag::Vu,
        FormTag::Uv,
        FormTag::Uu,
        FormTag::Vm,
        FormTag::Um,
        FormTag::Mm,
        FormTag::Mu,
        FormTag::Mv,
        FormTag::Vz,
        FormTag::Zv,
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
    ];

    /// Output slot followed by the direction slots.
    pub fn slots(self) -> (Slot, &'static [Slot]) {
        use Slot::*;
        match self {
            FormTag::M => (M, &[]),
            FormTag::Z => (Z, &[]),
            FormTag::Vu => (V, &[U]),
            FormTag::Uv => (U, &[V]),
            FormTag::Uu => (U, &[U]),
            FormTag::Vm => (V, &[M]),
            FormTag::Um => (U, &[M]),
            FormTag::Mm => (M, &[M]),
            FormTag::Mu => (M, &[U]),
            FormTag::Mv => (M, &[V]),
            FormTag::Vz => (V, &[Z]),
            FormTag::Zv => (Z, &[V]),
            FormTag::Zu => (Z, &[U]),
            FormTag::Zm => (Z, &[M]),
            FormTag::Vmu => (V, &[M, U]),
            FormTag::Vmm => (V, &[M, M]),
            FormTag::Vum => (V, &[U, M]),
            FormTag::Vuu => (V, &[U, U]),
            FormTag::Umv => (U, &[M, V]),
            FormTag::Umu => (U, &[M, U]),
            FormTag::Umm => (U, &[M, M]),
            FormTag::Uum => (U, &[U, M]),
            FormTag::Uvu => (U, &[V, U]),
            FormTag::Uvm => (U, &[V, M]),
            FormTag::Uuv => (U, &[U, V]),
            FormTag::Uuu => (U, &[U, U]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FormTag::M => "m",
            FormTag::Z => "z",
            FormTag::Vu => "vu",
            FormTag::Uv => "uv",
            FormTag::Uu => "uu",
            FormTag::Vm => "vm",
            FormTag::Um => "um",
            FormTag::Mm => "mm",
            FormTag::Mu => "mu",
            FormTag::Mv => "mv",
            FormTag::Vz => "vz",
            FormTag::Zv => "zv",
            FormTag::Zu => "zu",
            FormTag::Zm => "zm",
            FormTag::Vmu => "vmu",
            FormTag::Vmm => "vmm",
            FormTag::Vum => "vum",
            FormTag::Vuu => "vuu",
            FormTag::Umv => "umv",
            FormTag::Umu => "umu",
            FormTag::Umm => "umm",
            FormTag::Uum => "uum",
            FormTag::Uvu => "uvu",
            FormTag::Uvm => "uvm",
            FormTag::Uuv => "uuv",
            FormTag::Uuu => "uuu",
        }
    }

    pub fn arity(self) -> usize {
        self.slots().1.len()
    }
}

/// Where the undifferentiated slots of a form are evaluated.
#[derive(Debug, Clone, Copy)]
pub struct FormPoint<'a> {
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub m: &'a [f64],
    pub z: &'a [f64],
}

/// Factorized linearization `J = ∂_v ∂_u r` of the state equation, with
/// `(J x)_k = ∂_v ∂_u r[φ_k, x]`. Every solve is recorded as one linear solve.
pub trait StateJacobian: Send + Sync {
    /// Solves `J x = rhs` (incremental state type problems).
    fn solve(&self, rhs: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>>;
    /// Solves `Jᵀ y = rhs` (adjoint type problems).
    fn solve_transpose(&self, rhs: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>>;
}

/// A converged state with the state Jacobian at that state.
pub struct StateSolution<J> {
    pub u: Vec<f64>,
    pub jacobian: J,
}

/// Box constraints on the control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        if lower > upper {
            return Err(Error::InvalidArgument(alloc::format!(
                "lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        Ok(Self {
            lower: alloc::vec![lower; n],
            upper: alloc::vec![upper; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| x.max(*l).min(*u))
            .collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= *l && *x <= *u)
    }
}

/// A PDE-constrained model: residual forms plus an objective of the state.
///
/// Parameter vectors have length [`Model::param_dim`], state and adjoint
/// vectors [`Model::state_dim`], controls [`Model::control_dim`].
pub trait Model: Sync {
    type Jacobian: StateJacobian;

    fn param_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;

    /// Solves `∂_v r(u, ·, m, z) = 0`; records one state solve.
    fn solve_state(&self, m: &[f64], z: &[f64], ledger: &SolveLedger) -> Result<StateSolution<Self::Jacobian>>;

    fn objective(&self, u: &[f64]) -> f64;
    /// `∂_u Q`.
    fn objective_du(&self, u: &[f64]) -> Vec<f64>;
    /// `∂_uu Q[·, a]`.
    fn objective_duu(&self, u: &[f64], a: &[f64]) -> Vec<f64>;
    /// `∂_uuu Q[·, a, b]`.
    fn objective_duuu(&self, u: &[f64], a: &[f64], b: &[f64]) -> Vec<f64>;

    /// Applies the form `tag` at `point` to the directions `args`.
    fn form(&self, tag: FormTag, point: &FormPoint<'_>, args: &[&[f64]]) -> Result<Vec<f64>>;

    /// Tags whose result is identically zero for this model. Callers may skip
    /// them; [`Model::form`] still returns a zero vector.
    fn vanishing_forms(&self) -> &'static [FormTag] {
        &[]
    }

    fn slot_dim(&self, slot: Slot) -> usize {
        match slot {
            Slot::U | Slot::V => self.state_dim(),
            Slot::M => self.param_dim(),
            Slot::Z => self.control_dim(),
        }
    }

    /// Checks tag arity and argument lengths.
    fn check_form_args(&self, tag: FormTag, args: &[&[f64]]) -> Result<()> {
        let (_, dirs) = tag.slots();
        if args.len() != dirs.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "form {} takes {} directions, got {}",
                tag.name(),
                dirs.len(),
                args.len()
            )));
        }
        for (slot, a) in dirs.iter().zip(args) {
            let n = self.slot_dim(*slot);
            if a.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.len() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_tag_has_consistent_name_and_arity() {
        for tag in FormTag::ALL {
            let (_, dirs) = tag.slots();
            assert_eq!(tag.name().len(), 1 + dirs.len());
            assert_eq!(tag.arity(), dirs.len());
        }
    }

    #[test]
    fn bounds_projection() {
        let b = ControlBounds::uniform(3, 0.0, 32.0).unwrap();
        assert_eq!(b.project(&[-1.0, 5.0, 40.0]), alloc::vec![0.0, 5.0, 32.0]);
        assert!(b.contains(&[0.0, 32.0, 1.0]));
        assert!(ControlBounds::uniform(1, 2.0, 1.0).is_err());
    }
}
