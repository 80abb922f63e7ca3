//! Single-phase Darcy flow with log-permeability `m`, controlled by injection
//! rates at mollified point sources.
//!
//! `r(u, v, m, z) = ∫ e^m ∇u·∇v dx − Σ_i z_i ∫ f_i v dx` on `(0, Lx) × (0, Ly)`,
//! `u = g` on the left and right edges, homogeneous Neumann on top and bottom,
//! and `Q(u) = Σ_j (u(x^j) − ū_j)²` over the production wells.
//!
//! State vectors are full nodal vectors carrying the boundary values; adjoint
//! and incremental vectors vanish on Dirichlet nodes.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{FormPoint, FormTag, Model, Slot, StateJacobian, StateSolution};
use crate::fem::{assemble_mass, assemble_stiffness, element_gradients, factorize, CgConfig, CsrMatrix, Mesh2D, SolverHandle, Tensor2};
use crate::{float, Error, Result, SolveLedger};

/// Affine Dirichlet data `g(x) = c0 + c1·x₁ + c2·x₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl BoundaryData {
    /// `g = 2 − x₁`.
    pub const REFERENCE: BoundaryData = BoundaryData { c0: 2.0, c1: -1.0, c2: 0.0 };
    pub const ZERO: BoundaryData = BoundaryData { c0: 0.0, c1: 0.0, c2: 0.0 };

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.c0 + self.c1 * x[0] + self.c2 * x[1]
    }
}

/// Injection and production wells.
#[derive(Debug, Clone, PartialEq)]
pub struct WellConfig {
    pub injection: Vec<[f64; 2]>,
    pub production: Vec<[f64; 2]>,
    /// Standard deviation of the Gaussian mollifier.
    pub sigma: f64,
    /// Target pressures; `None` uses [`WellConfig::target_pressure`].
    pub targets: Option<Vec<f64>>,
}

impl WellConfig {
    /// 5×4 injection grid and 4×3 production grid on `(0, 2) × (0, 1)`.
    pub fn reference() -> Self {
        let mut injection = Vec::with_capacity(20);
        for &y in &[0.2, 0.4, 0.6, 0.8] {
            for &x in &[0.2, 0.6, 1.0, 1.4, 1.8] {
                injection.push([x, y]);
            }
        }
        let mut production = Vec::with_capacity(12);
        for &y in &[0.3, 0.5, 0.7] {
            for &x in &[0.7, 0.9, 1.1, 1.3] {
                production.push([x, y]);
            }
        }
        Self {
            injection,
            production,
            sigma: 0.05,
            targets: None,
        }
    }

    /// `ū = 3 − 8(x₁ − 1)² − 4(x₂ − 0.5)²`.
    pub fn target_pressure(x: [f64; 2]) -> f64 {
        3.0 - 8.0 * (x[0] - 1.0) * (x[0] - 1.0) - 4.0 * (x[1] - 0.5) * (x[1] - 0.5)
    }

    pub fn resolved_targets(&self) -> Vec<f64> {
        match &self.targets {
            Some(t) => t.clone(),
            None => self.production.iter().map(|&x| Self::target_pressure(x)).collect(),
        }
    }

    fn validate(&self, mesh: &Mesh2D) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("mollifier width must be positive, got {}", self.sigma)));
        }
        if self.injection.is_empty() || self.production.is_empty() {
            return Err(Error::InvalidArgument("need at least one injection and one production well".into()));
        }
        for p in self.injection.iter().chain(&self.production) {
            if !(p[0] > 0.0 && p[0] < mesh.lx && p[1] > 0.0 && p[1] < mesh.ly) {
                return Err(Error::InvalidArgument(format!(
                    "well at ({}, {}) is not strictly inside the domain",
                    p[0], p[1]
                )));
            }
        }
        if let Some(t) = &self.targets {
            if t.len() != self.production.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.production.len(),
                    got: t.len(),
                });
            }
        }
        Ok(())
    }
}

/// Which linear solver backs the state operator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    #[default]
    Direct,
    Cg(CgConfig),
}

#[derive(Debug, Clone)]
struct Element {
    nodes: [usize; 3],
    area: f64,
    grads: [[f64; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct EllipticModel {
    mesh: Mesh2D,
    wells: WellConfig,
    boundary: BoundaryData,
    solver: SolverKind,
    elements: Vec<Element>,
    dirichlet: Vec<bool>,
    free: Arc<Vec<usize>>,
    lifting: Vec<f64>,
    /// `sources[i][k] = M_L[k] f_i(x_k)`
    sources: Vec<Vec<f64>>,
    /// Barycentric interpolation rows of `B`.
    observation: Vec<[(usize, f64); 3]>,
    targets: Vec<f64>,
}

/// Factorized free-free block of the state operator.
pub struct EllipticJacobian {
    handle: SolverHandle,
    free: Arc<Vec<usize>>,
    n: usize,
}

impl EllipticJacobian {
    fn solve_free(&self, rhs: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: rhs.len() });
        }
        let b: Vec<f64> = self.free.iter().map(|&k| rhs[k]).collect();
        let x = self.handle.solve(&b)?;
        ledger.record_linear();
        let mut out = vec![0.0; self.n];
        for (&k, xi) in self.free.iter().zip(x) {
            out[k] = xi;
        }
        Ok(out)
    }
}

impl StateJacobian for EllipticJacobian {
    fn solve(&self, rhs: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        self.solve_free(rhs, ledger)
    }

    fn solve_transpose(&self, rhs: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        self.solve_free(rhs, ledger)
    }
}

impl EllipticModel {
    pub fn new(mesh: &Mesh2D, wells: WellConfig, boundary: BoundaryData) -> Result<Self> {
        wells.validate(mesh)?;
        let n = mesh.num_nodes();
        let elements = (0..mesh.num_triangles())
            .map(|t| {
                let (area, grads) = element_gradients(mesh, t);
                Element {
                    nodes: mesh.triangles[t],
                    area,
                    grads,
                }
            })
            .collect();
        let dirichlet = mesh.dirichlet_mask();
        let free: Vec<usize> = (0..n).filter(|&k| !dirichlet[k]).collect();
        let lifting = (0..n)
            .map(|k| if dirichlet[k] { boundary.eval(mesh.coords[k]) } else { 0.0 })
            .collect();
        let lumped = assemble_mass(mesh).row_sums();
        let s2 = wells.sigma * wells.sigma;
        let norm = 1.0 / (2.0 * core::f64::consts::PI * s2);
        let sources = wells
            .injection
            .iter()
            .map(|c| {
                mesh.coords
                    .iter()
                    .zip(&lumped)
                    .map(|(x, l)| {
                        let d2 = (x[0] - c[0]) * (x[0] - c[0]) + (x[1] - c[1]) * (x[1] - c[1]);
                        l * norm * float::exp(-0.5 * d2 / s2)
                    })
                    .collect()
            })
            .collect();
        let mut observation = Vec::with_capacity(wells.production.len());
        for &p in &wells.production {
            let (t, w) = mesh.locate(p)?;
            let tri = mesh.triangles[t];
            observation.push([(tri[0], w[0]), (tri[1], w[1]), (tri[2], w[2])]);
        }
        let targets = wells.resolved_targets();
        Ok(Self {
            mesh: mesh.clone(),
            wells,
            boundary,
            solver: SolverKind::Direct,
            elements,
            dirichlet,
            free: Arc::new(free),
            lifting,
            sources,
            observation,
            targets,
        })
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn wells(&self) -> &WellConfig {
        &self.wells
    }

    pub fn boundary(&self) -> BoundaryData {
        self.boundary
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Boundary values on Dirichlet nodes, zero elsewhere.
    pub fn lifting(&self) -> &[f64] {
        &self.lifting
    }

    /// Discrete source vectors `F e_i`.
    pub fn sources(&self) -> &[Vec<f64>] {
        &self.sources
    }

    /// `B u`: values at the production wells.
    pub fn observe(&self, u: &[f64]) -> Vec<f64> {
        self.observation
            .iter()
            .map(|row| row.iter().map(|&(k, w)| w * u[k]).sum())
            .collect()
    }

    fn observe_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.num_nodes()];
        for (row, yi) in self.observation.iter().zip(y) {
            for &(k, w) in row {
                out[k] += w * yi;
            }
        }
        self.mask(&mut out);
        out
    }

    fn mask(&self, x: &mut [f64]) {
        for (xi, &d) in x.iter_mut().zip(&self.dirichlet) {
            if d {
                *xi = 0.0;
            }
        }
    }

    /// `F z` as a nodal load vector.
    pub fn source_load(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.num_nodes()];
        for (col, zi) in self.sources.iter().zip(z) {
            for (o, c) in out.iter_mut().zip(col) {
                *o += zi * c;
            }
        }
        out
    }

    /// Full stiffness `A(m)` including Dirichlet rows.
    pub fn stiffness(&self, m: &[f64]) -> Result<CsrMatrix> {
        assemble_stiffness(&self.mesh, Tensor2::IDENTITY, Some(m))
    }

    pub fn jacobian(&self, m: &[f64]) -> Result<EllipticJacobian> {
        let a = self.stiffness(m)?;
        let keep: Vec<bool> = self.dirichlet.iter().map(|d| !d).collect();
        let aff = a.principal_submatrix(&keep);
        let handle = match self.solver {
            SolverKind::Direct => factorize(&aff)?,
            SolverKind::Cg(cfg) => SolverHandle::cg(aff, cfg),
        };
        Ok(EllipticJacobian {
            handle,
            free: self.free.clone(),
            n: self.mesh.num_nodes(),
        })
    }

    /// `‖(A(m)u − F z)_free‖∞ / ‖(F z − A(m) g)_free‖∞` together with the
    /// largest boundary-value violation.
    pub fn state_residual(&self, m: &[f64], z: &[f64], u: &[f64]) -> Result<(f64, f64)> {
        let a = self.stiffness(m)?;
        let au = a.matvec(u);
        let f = self.source_load(z);
        let ag = a.matvec(&self.lifting);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for &k in self.free.iter() {
            num = num.max(float::abs(au[k] - f[k]));
            den = den.max(float::abs(f[k] - ag[k]));
        }
        let bc = (0..u.len())
            .filter(|&k| self.dirichlet[k])
            .map(|k| float::abs(u[k] - self.lifting[k]))
            .fold(0.0, f64::max);
        Ok((if den > 0.0 { num / den } else { num }, bc))
    }

    fn check_len(&self, x: &[f64], n: usize) -> Result<()> {
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        Ok(())
    }
}

fn grad(e: &Element, f: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for a in 0..3 {
        let w = f[e.nodes[a]];
        g[0] += w * e.grads[a][0];
        g[1] += w * e.grads[a][1];
    }
    g
}

fn centroid(e: &Element, f: &[f64]) -> f64 {
    (f[e.nodes[0]] + f[e.nodes[1]] + f[e.nodes[2]]) / 3.0
}

impl Model for EllipticModel {
    type Jacobian = EllipticJacobian;

    fn param_dim(&self) -> usize {
        self.mesh.num_nodes()
    }

    fn state_dim(&self) -> usize {
        self.mesh.num_nodes()
    }

    fn control_dim(&self) -> usize {
        self.sources.len()
    }

    fn solve_state(&self, m: &[f64], z: &[f64], ledger: &SolveLedger) -> Result<StateSolution<EllipticJacobian>> {
        self.check_len(m, self.param_dim())?;
        self.check_len(z, self.control_dim())?;
        let jacobian = self.jacobian(m)?;
        let a = self.stiffness(m)?;
        let mut rhs = self.source_load(z);
        let ag = a.matvec(&self.lifting);
        for (r, x) in rhs.iter_mut().zip(ag) {
            *r -= x;
        }
        let b: Vec<f64> = self.free.iter().map(|&k| rhs[k]).collect();
        let x = jacobian.handle.solve(&b)?;
        ledger.record_state();
        let mut u = self.lifting.clone();
        for (&k, xi) in self.free.iter().zip(x) {
            u[k] = xi;
        }
        Ok(StateSolution { u, jacobian })
    }

    fn objective(&self, u: &[f64]) -> f64 {
        self.observe(u)
            .iter()
            .zip(&self.targets)
            .map(|(b, t)| (b - t) * (b - t))
            .sum()
    }

    fn objective_du(&self, u: &[f64]) -> Vec<f64> {
        let misfit: Vec<f64> = self.observe(u).iter().zip(&self.targets).map(|(b, t)| 2.0 * (b - t)).collect();
        self.observe_transpose(&misfit)
    }

    fn objective_duu(&self, _u: &[f64], a: &[f64]) -> Vec<f64> {
        let ba: Vec<f64> = self.observe(a).iter().map(|x| 2.0 * x).collect();
        self.observe_transpose(&ba)
    }

    fn objective_duuu(&self, _u: &[f64], _a: &[f64], _b: &[f64]) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    fn vanishing_forms(&self) -> &'static [FormTag] {
        &[
            FormTag::Uu,
            FormTag::Zu,
            FormTag::Zm,
            FormTag::Vuu,
            FormTag::Umu,
            FormTag::Uum,
            FormTag::Uvu,
            FormTag::Uuv,
            FormTag::Uuu,
        ]
    }

    fn form(&self, tag: FormTag, p: &FormPoint<'_>, args: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_form_args(tag, args)?;
        let (out, dirs) = tag.slots();
        let count = |s: Slot| (out == s) as usize + dirs.iter().filter(|&&d| d == s).count();
        let (nu, nv, nm, nz) = (count(Slot::U), count(Slot::V), count(Slot::M), count(Slot::Z));
        let mut res = vec![0.0; self.slot_dim(out)];
        if nu > 1 || nv > 1 || nz > 1 {
            return Ok(res);
        }
        let dir_of = |s: Slot| dirs.iter().position(|&d| d == s).map(|i| args[i]);
        if nz == 1 {
            // only the source term depends on z, and it is linear in z and v
            if nu != 0 || nm != 0 {
                return Ok(res);
            }
            match out {
                Slot::Z => {
                    let v = dir_of(Slot::V).unwrap_or(p.v);
                    for (r, col) in res.iter_mut().zip(&self.sources) {
                        *r = -self
                            .free
                            .iter()
                            .map(|&k| col[k] * v[k])
                            .sum::<f64>();
                    }
                }
                Slot::V => {
                    let zt = dir_of(Slot::Z).unwrap_or(p.z);
                    res = self.source_load(zt);
                    for r in res.iter_mut() {
                        *r = -*r;
                    }
                    self.mask(&mut res);
                }
                _ => unreachable!(),
            }
            return Ok(res);
        }
        let u = dir_of(Slot::U).unwrap_or(p.u);
        let v = dir_of(Slot::V).unwrap_or(p.v);
        let mdirs: Vec<&[f64]> = dirs
            .iter()
            .zip(args)
            .filter(|(d, _)| **d == Slot::M)
            .map(|(_, a)| *a)
            .collect();
        for e in &self.elements {
            let mut w = float::exp(centroid(e, p.m)) * e.area;
            for d in &mdirs {
                w *= centroid(e, d);
            }
            if w == 0.0 {
                continue;
            }
            match out {
                Slot::M => {
                    let gu = grad(e, u);
                    let gv = grad(e, v);
                    let val = w * (gu[0] * gv[0] + gu[1] * gv[1]) / 3.0;
                    for &k in &e.nodes {
                        res[k] += val;
                    }
                }
                Slot::U => {
                    let gv = grad(e, v);
                    for a in 0..3 {
                        res[e.nodes[a]] += w * (e.grads[a][0] * gv[0] + e.grads[a][1] * gv[1]);
                    }
                }
                Slot::V => {
                    let gu = grad(e, u);
                    for a in 0..3 {
                        res[e.nodes[a]] += w * (e.grads[a][0] * gu[0] + e.grads[a][1] * gu[1]);
                    }
                }
                Slot::Z => unreachable!(),
            }
        }
        if matches!(out, Slot::U | Slot::V) {
            self.mask(&mut res);
        }
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::NormalStream;
    use crate::linalg::{dot, norm_inf, sub};

    fn small() -> EllipticModel {
        let mesh = Mesh2D::new(16, 8, 2.0, 1.0).unwrap();
        EllipticModel::new(&mesh, WellConfig::reference(), BoundaryData::REFERENCE).unwrap()
    }

    fn point(model: &EllipticModel, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = NormalStream::new(seed, 0);
        let m: Vec<f64> = rng.normal_vec(model.param_dim()).iter().map(|x| 0.3 * x).collect();
        let z = vec![16.0; model.control_dim()];
        let ledger = SolveLedger::new();
        let u = model.solve_state(&m, &z, &ledger).unwrap().u;
        (m, z, u)
    }

    #[test]
    fn rejects_wells_outside_domain() {
        let mesh = Mesh2D::new(8, 4, 2.0, 1.0).unwrap();
        let mut w = WellConfig::reference();
        w.production[0] = [2.5, 0.5];
        assert!(EllipticModel::new(&mesh, w, BoundaryData::REFERENCE).is_err());
        let mut w = WellConfig::reference();
        w.injection[0] = [0.0, 0.5];
        assert!(EllipticModel::new(&mesh, w, BoundaryData::REFERENCE).is_err());
    }

    #[test]
    fn state_solution_satisfies_system() {
        let model = small();
        let (m, z, u) = point(&model, 1);
        let (res, bc) = model.state_residual(&m, &z, &u).unwrap();
        assert!(res <= 1e-10, "residual {res}");
        assert_eq!(bc, 0.0);
    }

    #[test]
    fn homogeneous_problem_has_zero_state() {
        let mesh = Mesh2D::new(8, 4, 2.0, 1.0).unwrap();
        let model = EllipticModel::new(&mesh, WellConfig::reference(), BoundaryData::ZERO).unwrap();
        let n = model.param_dim();
        let u = model.solve_state(&vec![0.1; n], &[0.0; 20], &SolveLedger::new()).unwrap().u;
        assert!(u.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn objective_unit_deviation() {
        let model = small();
        let n = model.state_dim();
        // a field that is linear in space interpolates exactly
        let u: Vec<f64> = model.mesh.coords.iter().map(|x| 0.5 + x[0] - 0.25 * x[1]).collect();
        let bu = model.observe(&u);
        for (b, p) in bu.iter().zip(&model.wells.production) {
            assert!((b - (0.5 + p[0] - 0.25 * p[1])).abs() < 1e-12);
        }
        let mut m2 = model.clone();
        m2.targets = bu.clone();
        assert!(m2.objective(&u).abs() < 1e-24);
        m2.targets[0] -= 1.0;
        assert!((m2.objective(&u) - 1.0).abs() < 1e-12);
        assert_eq!(n, 153);
    }

    #[test]
    fn sources_integrate_to_one() {
        let mesh = Mesh2D::new(64, 32, 2.0, 1.0).unwrap();
        let model = EllipticModel::new(&mesh, WellConfig::reference(), BoundaryData::REFERENCE).unwrap();
        for col in model.sources() {
            let s: f64 = col.iter().sum();
            assert!((s - 1.0).abs() <= 1e-3, "source integral {s}");
        }
    }

    #[test]
    fn vu_form_is_the_state_operator() {
        let model = small();
        let (m, z, u) = point(&model, 2);
        let v = vec![0.0; model.state_dim()];
        let mut w = NormalStream::new(3, 0).normal_vec(model.state_dim());
        model.mask(&mut w);
        let p = FormPoint { u: &u, v: &v, m: &m, z: &z };
        let jw = model.form(FormTag::Vu, &p, &[&w]).unwrap();
        let mut direct = model.stiffness(&m).unwrap().matvec(&w);
        model.mask(&mut direct);
        assert!(norm_inf(&sub(&jw, &direct)) < 1e-12 * norm_inf(&direct));
    }

    #[test]
    fn mixed_forms_are_adjoint() {
        let model = small();
        let (m, z, u) = point(&model, 4);
        let mut rng = NormalStream::new(5, 0);
        let mut v = rng.normal_vec(model.state_dim());
        model.mask(&mut v);
        let mut ut = rng.normal_vec(model.state_dim());
        model.mask(&mut ut);
        let mh = rng.normal_vec(model.param_dim());
        let p = FormPoint { u: &u, v: &v, m: &m, z: &z };
        let a = dot(&ut, &model.form(FormTag::Um, &p, &[&mh]).unwrap());
        let b = dot(&mh, &model.form(FormTag::Mu, &p, &[&ut]).unwrap());
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        let m2 = rng.normal_vec(model.param_dim());
        let a = model.form(FormTag::Umm, &p, &[&mh, &m2]).unwrap();
        let b = model.form(FormTag::Umm, &p, &[&m2, &mh]).unwrap();
        assert!(norm_inf(&sub(&a, &b)) <= 1e-12 * norm_inf(&a));
        let a = dot(&v, &model.form(FormTag::Vmu, &p, &[&mh, &ut]).unwrap());
        let b = dot(&ut, &model.form(FormTag::Umv, &p, &[&mh, &v]).unwrap());
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
    }

    #[test]
    fn vanishing_forms_return_zero() {
        let model = small();
        let (m, z, u) = point(&model, 6);
        let mut rng = NormalStream::new(7, 0);
        let v = rng.normal_vec(model.state_dim());
        let p = FormPoint { u: &u, v: &v, m: &m, z: &z };
        for &tag in model.vanishing_forms() {
            let args: Vec<Vec<f64>> = tag.slots().1.iter().map(|s| rng.normal_vec(model.slot_dim(*s))).collect();
            let refs: Vec<&[f64]> = args.iter().map(|a| a.as_slice()).collect();
            let r = model.form(tag, &p, &refs).unwrap();
            assert!(r.iter().all(|x| *x == 0.0), "{} is not zero", tag.name());
        }
    }

    #[test]
    fn zv_pairs_sources_with_adjoint() {
        let model = small();
        let (m, z, u) = point(&model, 8);
        let mut v = NormalStream::new(9, 0).normal_vec(model.state_dim());
        model.mask(&mut v);
        let p = FormPoint { u: &u, v: &v, m: &m, z: &z };
        let g = model.form(FormTag::Zv, &p, &[&v]).unwrap();
        for (gi, col) in g.iter().zip(model.sources()) {
            assert!((gi + dot(col, &v)).abs() < 1e-12);
        }
        let zt = NormalStream::new(10, 0).normal_vec(20);
        let a = dot(&zt, &g);
        let b = dot(&v, &model.form(FormTag::Vz, &p, &[&zt]).unwrap());
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
}
