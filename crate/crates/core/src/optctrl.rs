//! Mean-variance cost functionals `J(z) = Q̂(z) + β V̂(z) + β_p‖z‖²`, their
//! control gradients via adjoint sensitivities, and a projected L-BFGS
//! driver for box constraints.
//!
//! Every method writes its cost as a function of a few quantities computed
//! at the mean parameter (`Q̄`, `ḡ`, eigenvalues `λⱼ`) and at samples
//! (`Qᵢ`, `lᵢ`, `hᵢ`). The gradient needs only the partial derivatives of
//! that function; [`Sensitivities`] carries them and a single routine turns
//! them into `∇_z J`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::hessact::{linearize, LinearizationPoint};
use crate::ledger::SolveCounts;
use crate::linalg::{axpy, dot, norm_inf, scaled};
use crate::model::{ControlBounds, FormPoint, FormTag, Model, StateJacobian, StateSolution};
use crate::prior::GaussianPrior;
use crate::randeig::{double_pass_gevp, EigPairs};
use crate::{float, par, Error, Result, SolveLedger};

/// Default control penalty weight.
pub const DEFAULT_BETA_P: f64 = 1e-5;

/// Relative gap below which eigenvalues at the truncation index count as a
/// repeated eigenvalue.
pub const CLUSTER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Saa,
    Lin,
    Quad,
    LinMc,
    QuadMc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Saa, Method::Lin, Method::Quad, Method::LinMc, Method::QuadMc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Saa => "saa",
            Method::Lin => "lin",
            Method::Quad => "quad",
            Method::LinMc => "lin-mc",
            Method::QuadMc => "quad-mc",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.iter().copied().find(|m| m.name() == s)
    }

    pub fn uses_eigs(self) -> bool {
        matches!(self, Method::Quad | Method::QuadMc)
    }

    pub fn uses_samples(self) -> bool {
        matches!(self, Method::Saa | Method::LinMc | Method::QuadMc)
    }

    /// Expected `(cost, gradient)` solve counts for `N` eigenpairs with
    /// oversampling `p` and `M` samples.
    pub fn expected_counts(self, n: usize, p: usize, m: usize) -> (SolveCounts, SolveCounts) {
        let c = |state, linear| SolveCounts { state, linear };
        match self {
            Method::Saa => (c(m, 0), c(0, m)),
            Method::Lin => (c(1, 1), c(0, 2)),
            Method::Quad => (c(1, 1 + 4 * n + 4 * p), c(0, 2 + 2 * n)),
            Method::LinMc => (c(1 + m, 1), c(0, 2 + m)),
            Method::QuadMc => (c(1 + m, 1 + 4 * n + 4 * p + 2 * m), c(0, 2 + 2 * n + 3 * m)),
        }
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings of one cost functional.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub method: Method,
    pub beta: f64,
    pub beta_p: f64,
    /// Eigenpairs `N` kept in the trace estimates.
    pub n_eig: usize,
    pub oversampling: usize,
    pub samples: usize,
    /// Seed of the eigensolver's random matrix; fixed across evaluations.
    pub eig_seed: u64,
    /// Seed of the parameter samples; fixed across evaluations.
    pub sample_seed: u64,
}

impl CostConfig {
    pub fn new(method: Method, beta: f64) -> Self {
        Self {
            method,
            beta,
            beta_p: DEFAULT_BETA_P,
            n_eig: 100,
            oversampling: 10,
            samples: 100,
            eig_seed: 0,
            sample_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !(self.beta_p >= 0.0) {
            return Err(Error::InvalidArgument("beta and beta_p must be nonnegative".into()));
        }
        if self.method.uses_samples() && self.samples == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        Ok(())
    }
}

/// Where the eigenvectors of the quadratic methods come from.
#[derive(Debug, Clone, Copy)]
pub enum EigenSource<'e> {
    /// Recomputed by the randomized solver at every control, same seed.
    Randomized,
    /// Held fixed; `λⱼ` are the Rayleigh quotients at the current control.
    /// Makes the cost exactly consistent with its gradient.
    Frozen(&'e EigPairs),
}

/// Result of one cost (and optionally gradient) evaluation.
#[derive(Debug, Clone)]
pub struct CostEval {
    pub j: f64,
    pub grad: Option<Vec<f64>>,
    pub mean: f64,
    pub variance: f64,
    pub penalty: f64,
    /// Eigenpairs actually used after cluster trimming.
    pub n_used: usize,
    pub cost_counts: SolveCounts,
    pub grad_counts: SolveCounts,
    pub warnings: Vec<String>,
}

/// `β_p‖z‖²`
pub fn penalty(beta_p: f64, z: &[f64]) -> f64 {
    beta_p * dot(z, z)
}

/// `2 β_p z`
pub fn penalty_grad(beta_p: f64, z: &[f64]) -> Vec<f64> {
    scaled(2.0 * beta_p, z)
}

/// Partial derivatives of the cost with respect to the quantities it is
/// built from.
struct Sensitivities {
    /// `∂J/∂Q̄`
    c_q: f64,
    /// `∂J/∂ḡ` (a parameter-space vector).
    s: Vec<f64>,
    /// Directions `ψ_d` with their multipliers.
    dirs: Vec<Direction>,
    /// `∂J/∂Qᵢ`
    w: Vec<f64>,
}

/// A direction with its incremental state and adjoint and the matching
/// multipliers `ψ*`, `û*`, `v̂*`.
struct Direction {
    psi: Vec<f64>,
    psi_star: Vec<f64>,
    u_hat: Vec<f64>,
    v_hat: Vec<f64>,
    u_star: Vec<f64>,
    v_star: Vec<f64>,
}

/// One evaluated parameter sample.
struct Sample<J> {
    m: Vec<f64>,
    sol: StateSolution<J>,
    q: f64,
}

/// Eigen data at the current control.
struct EigenData {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    u_hat: Vec<Vec<f64>>,
    v_hat: Vec<Vec<f64>>,
}

/// Eigenvalues, eigenvectors and, when requested, `(Q_mm ψⱼ, C Q_mm ψⱼ)`.
type EigenCost = (Vec<f64>, Vec<Vec<f64>>, Option<Vec<(Vec<f64>, Vec<f64>)>>);

/// A cost functional bound to a model, a prior, and fixed random inputs.
pub struct CostFunctional<'a, M: Model> {
    pub model: &'a M,
    pub prior: &'a dyn GaussianPrior,
    pub config: CostConfig,
    /// `mᵢ − m̄`, drawn once so the cost is a deterministic function of `z`.
    pub perturbations: Vec<Vec<f64>>,
}

impl<'a, M: Model> CostFunctional<'a, M> {
    pub fn new(model: &'a M, prior: &'a dyn GaussianPrior, config: CostConfig) -> Result<Self> {
        config.validate()?;
        if prior.dim() != model.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.param_dim(),
                got: prior.dim(),
            });
        }
        let perturbations = if config.method.uses_samples() {
            crate::estimators::draw_perturbations(prior, config.samples, config.sample_seed)
        } else {
            Vec::new()
        };
        Ok(Self {
            model,
            prior,
            config,
            perturbations,
        })
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    /// Cost, and the gradient when `with_grad`, with randomized eigenpairs.
    pub fn evaluate(&self, z: &[f64], with_grad: bool, ledger: &SolveLedger) -> Result<CostEval> {
        self.evaluate_with(z, with_grad, EigenSource::Randomized, ledger)
    }

    pub fn evaluate_with(&self, z: &[f64], with_grad: bool, eig: EigenSource<'_>, ledger: &SolveLedger) -> Result<CostEval> {
        if z.len() != self.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.control_dim(),
                got: z.len(),
            });
        }
        match self.config.method {
            Method::Saa => self.eval_saa(z, with_grad, ledger),
            _ => self.eval_taylor(z, with_grad, eig, ledger),
        }
    }

    fn sample_states(&self, z: &[f64], ledger: &SolveLedger) -> Result<Vec<Sample<M::Jacobian>>> {
        let mean = self.prior.mean();
        par::try_map_indexed(self.perturbations.len(), |i| {
            let m: Vec<f64> = mean.iter().zip(&self.perturbations[i]).map(|(a, b)| a + b).collect();
            let sol = self.model.solve_state(&m, z, ledger).map_err(|e| e.in_sample(i))?;
            let q = self.model.objective(&sol.u);
            Ok(Sample { m, sol, q })
        })
    }

    /// `Σᵢ ∂_z r(uᵢ, vᵢ, mᵢ, z)` with `Jᵢᵀ vᵢ = −wᵢ ∂_u Q(uᵢ)`; one linear
    /// solve per sample.
    fn sample_gradient(&self, z: &[f64], samples: &[Sample<M::Jacobian>], w: &[f64], ledger: &SolveLedger) -> Result<Vec<f64>> {
        let parts = par::try_map_indexed(samples.len(), |i| {
            let s = &samples[i];
            let rhs = scaled(-w[i], &self.model.objective_du(&s.sol.u));
            let v = s.sol.jacobian.solve_transpose(&rhs, ledger).map_err(|e| e.in_sample(i))?;
            let pt = FormPoint {
                u: &s.sol.u,
                v: &v,
                m: &s.m,
                z,
            };
            self.model.form(FormTag::Z, &pt, &[])
        })?;
        let mut g = vec![0.0; z.len()];
        for p in &parts {
            axpy(1.0, p, &mut g);
        }
        Ok(g)
    }

    fn eval_saa(&self, z: &[f64], with_grad: bool, ledger: &SolveLedger) -> Result<CostEval> {
        let cfg = &self.config;
        let start = ledger.counts();
        let samples = self.sample_states(z, ledger)?;
        let q: Vec<f64> = samples.iter().map(|s| s.q).collect();
        let mean = crate::estimators::mean(&q);
        let variance = crate::estimators::population_variance(&q);
        let pen = penalty(cfg.beta_p, z);
        let j = mean + cfg.beta * variance + pen;
        let cost_counts = ledger.counts() - start;
        let mut grad = None;
        if with_grad {
            let mf = q.len() as f64;
            let w: Vec<f64> = q.iter().map(|qi| (1.0 + 2.0 * cfg.beta * (qi - mean)) / mf).collect();
            let mut g = penalty_grad(cfg.beta_p, z);
            axpy(1.0, &self.sample_gradient(z, &samples, &w, ledger)?, &mut g);
            grad = Some(g);
        }
        Ok(CostEval {
            j,
            grad,
            mean,
            variance,
            penalty: pen,
            n_used: 0,
            cost_counts,
            grad_counts: ledger.counts() - start - cost_counts,
            warnings: Vec::new(),
        })
    }

    /// Eigenpairs at the linearization point, trimmed so a repeated
    /// eigenvalue is never split by the truncation.
    fn eigen_cost(&self, lp: &LinearizationPoint<'_, M>, eig: EigenSource<'_>, warnings: &mut Vec<String>, ledger: &SolveLedger) -> Result<EigenCost> {
        let cfg = &self.config;
        match eig {
            EigenSource::Randomized => {
                let n = self.model.param_dim();
                let h = |x: &[f64]| lp.hess_apply(x, ledger);
                let c = |x: &[f64]| Ok(self.prior.apply_c(x));
                let cinv = |x: &[f64]| Ok(self.prior.apply_cinv(x));
                let pairs = double_pass_gevp(&h, &c, &cinv, n, cfg.n_eig, cfg.oversampling, cfg.eig_seed)?;
                let mut keep = pairs.len();
                let top = pairs.ritz_values.first().map(|x| float::abs(*x)).unwrap_or(0.0);
                while keep > 0
                    && keep < pairs.ritz_values.len()
                    && float::abs(pairs.ritz_values[keep - 1] - pairs.ritz_values[keep]) <= CLUSTER_TOL * top
                {
                    keep -= 1;
                }
                if keep < pairs.len() {
                    warnings.push(alloc::format!(
                        "repeated eigenvalue at the truncation index; using N = {keep} instead of {}",
                        pairs.len()
                    ));
                }
                let mut vectors = pairs.vectors;
                vectors.truncate(keep);
                Ok((pairs.values[..keep].to_vec(), vectors, None))
            }
            EigenSource::Frozen(pairs) => {
                let keep = cfg.n_eig.min(pairs.len());
                let vectors: Vec<Vec<f64>> = pairs.vectors[..keep].to_vec();
                let acts = par::try_map_indexed(keep, |j| lp.hess_action(&vectors[j], ledger))?;
                let values = (0..keep).map(|j| dot(&vectors[j], &acts[j].hm)).collect();
                let inc = acts.into_iter().map(|a| (a.u_hat, a.v_hat)).collect();
                Ok((values, vectors, Some(inc)))
            }
        }
    }

    fn eval_taylor(&self, z: &[f64], with_grad: bool, eig: EigenSource<'_>, ledger: &SolveLedger) -> Result<CostEval> {
        let cfg = &self.config;
        let method = cfg.method;
        let beta = cfg.beta;
        let start = ledger.counts();
        let mut warnings = Vec::new();

        let lp = linearize(self.model, self.prior.mean(), z, ledger)?;
        let cg = self.prior.apply_c(&lp.grad);
        let gcg = dot(&lp.grad, &cg);

        let mut eigen = None;
        let mut frozen_inc = None;
        if method.uses_eigs() {
            let (values, vectors, inc) = self.eigen_cost(&lp, eig, &mut warnings, ledger)?;
            eigen = Some((values, vectors));
            frozen_inc = inc;
        }
        let samples = if method.uses_samples() {
            self.sample_states(z, ledger)?
        } else {
            Vec::new()
        };
        let sample_acts = if method == Method::QuadMc {
            par::try_map_indexed(self.perturbations.len(), |i| {
                lp.hess_action(&self.perturbations[i], ledger).map_err(|e| e.in_sample(i))
            })?
        } else {
            Vec::new()
        };

        let (t1, t2) = match &eigen {
            Some((vals, _)) => (vals.iter().sum::<f64>(), vals.iter().map(|x| x * x).sum::<f64>()),
            None => (0.0, 0.0),
        };
        let mf = samples.len() as f64;
        let d: Vec<f64> = samples.iter().map(|s| s.q - lp.q).collect();
        let l: Vec<f64> = self.perturbations.iter().map(|dm| dot(dm, &lp.grad)).collect();
        let h: Vec<f64> = sample_acts
            .iter()
            .zip(&self.perturbations)
            .map(|(a, dm)| dot(dm, &a.hm))
            .collect();
        let mean_of = |f: &dyn Fn(usize) -> f64| (0..samples.len()).map(f).sum::<f64>() / mf;

        let (mean, variance) = match method {
            Method::Lin => (lp.q, gcg),
            Method::Quad => (lp.q + 0.5 * t1, gcg + 0.5 * t2),
            Method::LinMc => {
                let r = mean_of(&|i| d[i] - l[i]);
                (lp.q + r, gcg + mean_of(&|i| d[i] * d[i] - l[i] * l[i]) - r * r)
            }
            Method::QuadMc => {
                let r = mean_of(&|i| d[i] - l[i] - 0.5 * h[i]);
                let a = |i: usize| l[i] + 0.5 * h[i];
                let shift = 0.5 * t1 + r;
                (
                    lp.q + shift,
                    gcg + 0.25 * t1 * t1 + 0.5 * t2 + mean_of(&|i| d[i] * d[i] - a(i) * a(i)) - shift * shift,
                )
            }
            Method::Saa => unreachable!(),
        };
        let pen = penalty(cfg.beta_p, z);
        let j = mean + beta * variance + pen;
        let cost_counts = ledger.counts() - start;
        let n_used = eigen.as_ref().map(|e| e.0.len()).unwrap_or(0);
        if !with_grad {
            return Ok(CostEval {
                j,
                grad: None,
                mean,
                variance,
                penalty: pen,
                n_used,
                cost_counts,
                grad_counts: SolveCounts::default(),
                warnings,
            });
        }

        // incremental states and adjoints along the eigenvectors
        let eigen = match eigen {
            Some((values, vectors)) => {
                let (u_hat, v_hat) = match frozen_inc {
                    Some(inc) => inc.into_iter().unzip(),
                    None => {
                        let acts = par::try_map_indexed(vectors.len(), |j| lp.hess_action(&vectors[j], ledger))?;
                        acts.into_iter().map(|a| (a.u_hat, a.v_hat)).unzip()
                    }
                };
                Some(EigenData {
                    values,
                    vectors,
                    u_hat,
                    v_hat,
                })
            }
            None => None,
        };

        let mut sens = Sensitivities {
            c_q: 1.0,
            s: scaled(2.0 * beta, &cg),
            dirs: Vec::new(),
            w: Vec::new(),
        };
        let eigen_scale: Option<f64> = match method {
            Method::LinMc => {
                let r = mean_of(&|i| d[i] - l[i]);
                let ml = mean_of(&|i| l[i]);
                sens.c_q = -2.0 * beta * ml;
                sens.w = (0..samples.len()).map(|i| (1.0 + 2.0 * beta * (d[i] - r)) / mf).collect();
                for (i, dm) in self.perturbations.iter().enumerate() {
                    let coef = (-(1.0 - 2.0 * beta * r) - 2.0 * beta * l[i]) / mf;
                    axpy(coef, dm, &mut sens.s);
                }
                None
            }
            Method::Quad => Some(0.0),
            Method::QuadMc => {
                let r = mean_of(&|i| d[i] - l[i] - 0.5 * h[i]);
                let ma = mean_of(&|i| l[i] + 0.5 * h[i]);
                sens.c_q = beta * (t1 - 2.0 * ma);
                sens.w = (0..samples.len())
                    .map(|i| (1.0 + 2.0 * beta * (d[i] - r - 0.5 * t1)) / mf)
                    .collect();
                let e: Vec<f64> = (0..samples.len())
                    .map(|i| (-1.0 + beta * (t1 + 2.0 * r - 2.0 * (l[i] + 0.5 * h[i]))) / mf)
                    .collect();
                for (i, dm) in self.perturbations.iter().enumerate() {
                    axpy(e[i], dm, &mut sens.s);
                }
                // ∂J/∂hᵢ = eᵢ/2; the multipliers are solved for explicitly
                let kappa: Vec<f64> = e.iter().map(|x| 0.5 * x).collect();
                let stars = par::try_map_indexed(samples.len(), |i| {
                    let ps = scaled(kappa[i], &self.perturbations[i]);
                    let us = lp.inc_state(&ps, ledger)?;
                    let vs = lp.inc_adjoint(&ps, &us, ledger)?;
                    Ok::<_, Error>((ps, us, vs))
                })?;
                for (i, ((ps, us, vs), act)) in stars.into_iter().zip(sample_acts).enumerate() {
                    sens.dirs.push(Direction {
                        psi: self.perturbations[i].clone(),
                        psi_star: ps,
                        u_hat: act.u_hat,
                        v_hat: act.v_hat,
                        u_star: us,
                        v_star: vs,
                    });
                }
                Some(-beta * r)
            }
            _ => None,
        };
        if let (Some(shift), Some(eg)) = (eigen_scale, eigen) {
            for j in 0..eg.values.len() {
                let a = 0.5 + beta * eg.values[j] + shift;
                sens.dirs.push(Direction {
                    psi_star: scaled(a, &eg.vectors[j]),
                    u_star: scaled(a, &eg.u_hat[j]),
                    v_star: scaled(a, &eg.v_hat[j]),
                    psi: eg.vectors[j].clone(),
                    u_hat: eg.u_hat[j].clone(),
                    v_hat: eg.v_hat[j].clone(),
                });
            }
        }

        let mut g = penalty_grad(cfg.beta_p, z);
        axpy(1.0, &control_gradient(&lp, &sens, ledger)?, &mut g);
        if !sens.w.is_empty() {
            axpy(1.0, &self.sample_gradient(z, &samples, &sens.w, ledger)?, &mut g);
        }
        Ok(CostEval {
            j,
            grad: Some(g),
            mean,
            variance,
            penalty: pen,
            n_used,
            cost_counts,
            grad_counts: ledger.counts() - start - cost_counts,
            warnings,
        })
    }
}

/// Sums `coef · form(tag, args)` into `acc`, skipping forms the model
/// declares identically zero.
fn accumulate<M: Model>(lp: &LinearizationPoint<'_, M>, acc: &mut [f64], coef: f64, tag: FormTag, args: &[&[f64]]) -> Result<()> {
    if lp.model.vanishing_forms().contains(&tag) {
        return Ok(());
    }
    axpy(coef, &lp.form(tag, args)?, acc);
    Ok(())
}

/// The mean-point part of `∇_z J`: solves for `u*` and `v*` (two linear
/// solves) and returns `∂_zm r s + ∂_zv r v* + ∂_zu r u* + c_Q ∂_z r`-terms.
fn control_gradient<M: Model>(lp: &LinearizationPoint<'_, M>, sens: &Sensitivities, ledger: &SolveLedger) -> Result<Vec<f64>> {
    let model = lp.model;
    let nu = model.state_dim();
    let s = &sens.s;

    // J u* = −∂_vm r s − Σ_d (∂_vmm r[ψ, ψ*] + ∂_vmu r[ψ*, û] + ∂_vuu r[û*, û] + ∂_vum r[û*, ψ])
    let mut rhs = vec![0.0; nu];
    accumulate(lp, &mut rhs, -1.0, FormTag::Vm, &[s])?;
    let parts = par::try_map_indexed(sens.dirs.len(), |k| {
        let dd = &sens.dirs[k];
        let mut acc = vec![0.0; nu];
        accumulate(lp, &mut acc, -1.0, FormTag::Vmm, &[&dd.psi, &dd.psi_star])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Vmu, &[&dd.psi_star, &dd.u_hat])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Vuu, &[&dd.u_star, &dd.u_hat])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Vum, &[&dd.u_star, &dd.psi])?;
        Ok::<_, Error>(acc)
    })?;
    for p in &parts {
        axpy(1.0, p, &mut rhs);
    }
    let u_star = lp.jacobian.solve(&rhs, ledger)?;

    // Jᵀ v* = −c_Q ∂_u Q − ∂_um r s − (∂_uu r + ∂_uu Q) u* − Σ_d (third-order terms)
    let mut rhs = scaled(-sens.c_q, &model.objective_du(&lp.u));
    accumulate(lp, &mut rhs, -1.0, FormTag::Um, &[s])?;
    accumulate(lp, &mut rhs, -1.0, FormTag::Uu, &[&u_star])?;
    axpy(-1.0, &model.objective_duu(&lp.u, &u_star), &mut rhs);
    let parts = par::try_map_indexed(sens.dirs.len(), |k| {
        let dd = &sens.dirs[k];
        let mut acc = vec![0.0; nu];
        accumulate(lp, &mut acc, -1.0, FormTag::Umv, &[&dd.psi_star, &dd.v_hat])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Umu, &[&dd.psi_star, &dd.u_hat])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Umm, &[&dd.psi_star, &dd.psi])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Uvu, &[&dd.v_star, &dd.u_hat])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Uvm, &[&dd.v_star, &dd.psi])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Uuv, &[&dd.u_star, &dd.v_hat])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Uuu, &[&dd.u_star, &dd.u_hat])?;
        accumulate(lp, &mut acc, -1.0, FormTag::Uum, &[&dd.u_star, &dd.psi])?;
        axpy(-1.0, &model.objective_duuu(&lp.u, &dd.u_star, &dd.u_hat), &mut acc);
        Ok::<_, Error>(acc)
    })?;
    for p in &parts {
        axpy(1.0, p, &mut rhs);
    }
    let v_star = lp.jacobian.solve_transpose(&rhs, ledger)?;

    let mut g = vec![0.0; model.control_dim()];
    accumulate(lp, &mut g, 1.0, FormTag::Zm, &[s])?;
    accumulate(lp, &mut g, 1.0, FormTag::Zv, &[&v_star])?;
    accumulate(lp, &mut g, 1.0, FormTag::Zu, &[&u_star])?;
    Ok(g)
}

/// Projected L-BFGS settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    /// Stop when `‖P(z − ∇J) − z‖∞ < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Armijo constant.
    pub c1: f64,
    pub max_halvings: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 200,
            memory: 10,
            c1: 1e-4,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::LineSearchFailed => "line_search_failed",
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub j: f64,
    pub pg_norm: f64,
    pub evaluations: usize,
    pub state_solves: usize,
    pub linear_solves: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct OptTrace {
    pub rows: Vec<TraceRow>,
    pub z: Vec<f64>,
    pub j: f64,
    pub grad: Vec<f64>,
    pub termination: Termination,
    pub evaluations: usize,
}

/// Optional progress sources for [`lbfgs_b`]: a solve ledger and a clock in
/// seconds (the core has no clock of its own).
#[derive(Default, Clone, Copy)]
pub struct Monitor<'m> {
    pub ledger: Option<&'m SolveLedger>,
    pub clock: Option<&'m dyn Fn() -> f64>,
}

fn projected_gradient_norm(bounds: &ControlBounds, z: &[f64], g: &[f64]) -> f64 {
    let step: Vec<f64> = z.iter().zip(g).map(|(a, b)| a - b).collect();
    let p = bounds.project(&step);
    let diff: Vec<f64> = p.iter().zip(z).map(|(a, b)| a - b).collect();
    norm_inf(&diff)
}

/// Minimizes `f` over the box with a projected limited-memory BFGS method.
///
/// The quasi-Newton direction is computed on the variables not held at a
/// bound, the step is projected onto the box, and the step length is halved
/// until the Armijo condition holds. Accepted iterates never increase `J`.
pub fn lbfgs_b<F>(mut f: F, z0: &[f64], bounds: &ControlBounds, cfg: &LbfgsConfig, monitor: Monitor<'_>) -> Result<OptTrace>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if z0.len() != bounds.dim() {
        return Err(Error::DimensionMismatch {
            expected: bounds.dim(),
            got: z0.len(),
        });
    }
    let n = z0.len();
    let t0 = monitor.clock.map(|c| c()).unwrap_or(0.0);
    let mut evaluations = 0usize;
    let mut z = bounds.project(z0);
    let (mut j, mut g) = f(&z)?;
    evaluations += 1;
    let mut rows = Vec::new();
    let mut mem_s: Vec<Vec<f64>> = Vec::new();
    let mut mem_y: Vec<Vec<f64>> = Vec::new();
    let record = |iter: usize, j: f64, pg: f64, evaluations: usize, rows: &mut Vec<TraceRow>| {
        let c = monitor.ledger.map(|l| l.counts()).unwrap_or_default();
        rows.push(TraceRow {
            iter,
            j,
            pg_norm: pg,
            evaluations,
            state_solves: c.state,
            linear_solves: c.linear,
            seconds: monitor.clock.map(|c| c() - t0).unwrap_or(0.0),
        });
    };

    let mut iter = 0;
    let termination = loop {
        let pg = projected_gradient_norm(bounds, &z, &g);
        record(iter, j, pg, evaluations, &mut rows);
        if !(pg >= cfg.tol) {
            break Termination::Converged;
        }
        if iter >= cfg.max_iter {
            break Termination::MaxIterations;
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !((z[i] <= bounds.lower[i] && g[i] > 0.0) || (z[i] >= bounds.upper[i] && g[i] < 0.0)))
            .collect();
        let gf: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut dir = two_loop(&gf, &mem_s, &mem_y, &free);
        if !(dot(&dir, &gf) < 0.0) {
            mem_s.clear();
            mem_y.clear();
            dir = two_loop(&gf, &mem_s, &mem_y, &free);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            let zt = bounds.project(&trial);
            let step: Vec<f64> = zt.iter().zip(&z).map(|(a, b)| a - b).collect();
            let (jt, gt) = f(&zt)?;
            evaluations += 1;
            if jt <= j + cfg.c1 * dot(&g, &step) {
                accepted = Some((zt, jt, gt, step));
                break;
            }
            alpha *= 0.5;
        }
        let Some((zt, jt, gt, step)) = accepted else {
            break Termination::LineSearchFailed;
        };
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&step, &y) > 1e-12 * dot(&y, &y) {
            if mem_s.len() == cfg.memory {
                mem_s.remove(0);
                mem_y.remove(0);
            }
            mem_s.push(step);
            mem_y.push(y);
        }
        z = zt;
        j = jt;
        g = gt;
        iter += 1;
    };
    Ok(OptTrace {
        rows,
        z,
        j,
        grad: g,
        termination,
        evaluations,
    })
}

// −H g by the two-loop recursion restricted to the free variables. With no
// curvature pairs the step is scaled so its largest entry is one.
fn two_loop(g: &[f64], mem_s: &[Vec<f64>], mem_y: &[Vec<f64>], free: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect() };
    if mem_s.is_empty() {
        let gi = norm_inf(g);
        return if gi > 0.0 { scaled(-1.0 / gi, g) } else { vec![0.0; g.len()] };
    }
    let s: Vec<Vec<f64>> = mem_s.iter().map(|v| mask(v)).collect();
    let y: Vec<Vec<f64>> = mem_y.iter().map(|v| mask(v)).collect();
    let mut q = g.to_vec();
    let k = s.len();
    let mut alphas = vec![0.0; k];
    let mut rhos = vec![0.0; k];
    for i in (0..k).rev() {
        let sy = dot(&s[i], &y[i]);
        rhos[i] = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        alphas[i] = rhos[i] * dot(&s[i], &q);
        axpy(-alphas[i], &y[i], &mut q);
    }
    let (sy, yy) = (dot(&s[k - 1], &y[k - 1]), dot(&y[k - 1], &y[k - 1]));
    let gamma = if sy > 0.0 && yy > 0.0 { sy / yy } else { 1.0 };
    let mut r = scaled(gamma, &q);
    for i in 0..k {
        let b = rhos[i] * dot(&y[i], &r);
        axpy(alphas[i] - b, &s[i], &mut r);
    }
    mask(&r).iter().map(|x| -x).collect()
}

/// Central-difference check of `∇_z J` along `dir`, with a fixed eigen source.
pub fn fd_check_cost_gradient<M: Model>(cost: &CostFunctional<'_, M>, z: &[f64], dir: &[f64], steps: &[f64], eig: EigenSource<'_>) -> Result<crate::hessact::FdTable> {
    let ledger = SolveLedger::new();
    let g = cost
        .evaluate_with(z, true, eig, &ledger)?
        .grad
        .ok_or_else(|| Error::Degenerate("no gradient".into()))?;
    let analytic = [dot(&g, dir)];
    crate::hessact::central_difference_table(&analytic, steps, |t| {
        let zt: Vec<f64> = z.iter().zip(dir).map(|(a, b)| a + t * b).collect();
        Ok(vec![cost.evaluate_with(&zt, false, eig, &ledger)?.j])
    })
}
