//! Acceptance suite: one pass/fail line per criterion.

use std::time::Instant;

use ouu_core::estimators::{mc_corrected_quad, saa, taylor_quad_moments, variance_reduction, SampleBatch, TaylorTerms};
use ouu_core::fem::{dense_sym_eig, NormalStream};
use ouu_core::hessact::{default_steps, dense_precond_hessian, fd_check_gradient, fd_check_hessian, linearize, PrecondHessOp, PrecondMode};
use ouu_core::linalg::dot;
use ouu_core::model::{random_toy, EllipticModel, Model, QuadraticToy};
use ouu_core::optctrl::{CostFunctional, Method};
use ouu_core::prior::{DiagonalPrior, GaussianPrior, MaternPrior};
use ouu_core::randeig::{gaussian_trace_samples, EigPairs};
use ouu_core::SolveLedger;

use crate::commands::optimize::{run_stages, Stage};
use crate::commands::{cost_config, hessian_eigs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::setup::{self, Problem};

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

fn verdict(id: usize, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

pub const GRADIENT_TOL: f64 = 1e-5;
pub const HESSIAN_TOL: f64 = 1e-4;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const DERIVATIVE_SECONDS: f64 = 30.0;
pub const EIG_TOL: f64 = 1e-8;
pub const EIG_CUTOFF: f64 = 1e-8;
pub const TAIL_SLACK: f64 = 1e-10;
pub const MOMENT_TOL: f64 = 1e-8;
pub const REMAINDER_TOL: f64 = 1e-12;
pub const TABLE_MEAN: f64 = 2.54e1;
pub const TABLE_FACTOR: f64 = 2.0;
pub const LIN_RATIO: f64 = 1e-1;
pub const QUAD_RATIO: f64 = 1e-2;
pub const TABLE_SECONDS: f64 = 600.0;
pub const TRACE_GAIN: f64 = 10.0;
pub const DECAY_RATIO: f64 = 1e-3;
pub const MAX_TOTAL_ITERATIONS: usize = 200;
pub const OPT_MEAN: f64 = 1.0;
pub const OPT_VARIANCE: f64 = 0.1;
pub const RANK_TOL: f64 = 1e-3;
pub const RANK_SPREAD: usize = 2;

/// Elliptic problem from the default config with `overrides` applied.
pub fn elliptic(overrides: &[(&str, &str)]) -> CliResult<(RunConfig, EllipticModel, MaternPrior)> {
    let mut cfg = RunConfig::defaults();
    cfg.set("output.timings", "false")?;
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    match setup::build(&cfg)? {
        Problem::Elliptic { model, prior } => Ok((cfg, model, prior)),
        Problem::Toy { .. } => Err(CliError::Config("expected an elliptic config".into())),
    }
}

fn mesh_keys(nx: usize) -> [(&'static str, String); 2] {
    [("mesh.nx", nx.to_string()), ("mesh.ny", (nx / 2).to_string())]
}

fn elliptic_mesh(nx: usize) -> CliResult<(RunConfig, EllipticModel, MaternPrior)> {
    let keys = mesh_keys(nx);
    let o: Vec<(&str, &str)> = keys.iter().map(|(k, v)| (*k, v.as_str())).collect();
    elliptic(&o)
}

pub fn derivatives() -> CliResult<Verdict> {
    let t = Instant::now();
    let (cfg, model, prior) = elliptic_mesh(16)?;
    let (z, _) = setup::control(&cfg, model.control_dim())?;
    let n = model.param_dim();
    let steps = default_steps();
    let mbar = prior.mean();
    let ledger = SolveLedger::new();
    let lp = linearize(&model, mbar, &z, &ledger)?;
    let (mut grad, mut hess, mut sym) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..5u64 {
        let mut rng = NormalStream::derive(cfg.seed, 0x6163, trial);
        let a = prior.apply_sqrt_c(&rng.normal_vec(n));
        let b = prior.apply_sqrt_c(&rng.normal_vec(n));
        grad = grad.max(fd_check_gradient(&model, mbar, &z, &a, &steps)?.min_error());
        hess = hess.max(fd_check_hessian(&model, mbar, &z, &a, &steps)?.min_error());
        let (ha, hb) = (lp.hess_apply(&a, &ledger)?, lp.hess_apply(&b, &ledger)?);
        let (x, y) = (dot(&b, &ha), dot(&a, &hb));
        sym = sym.max((x - y).abs() / x.abs().max(y.abs()));
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = grad <= GRADIENT_TOL && hess <= HESSIAN_TOL && sym <= SYMMETRY_TOL && secs <= DERIVATIVE_SECONDS;
    Ok(verdict(
        1,
        "derivative correctness (16x8, 5 directions)",
        pass,
        format!(
            "gradient {grad:.2e} <= {GRADIENT_TOL:.0e}, Hessian {hess:.2e} <= {HESSIAN_TOL:.0e}, symmetry {sym:.2e} <= {SYMMETRY_TOL:.0e}, {secs:.1} s <= {DERIVATIVE_SECONDS} s"
        ),
    ))
}

struct OracleReport {
    eig_error: f64,
    orth_error: f64,
    tail_excess: f64,
    compared: usize,
}

/// Randomized GEVP (k = 20, p = 10) against the dense decomposition of
/// `Lᵀ Q_mm L`.
fn eig_oracle<M: Model>(model: &M, prior: &dyn GaussianPrior, z: &[f64], seed: u64) -> CliResult<OracleReport> {
    let (k, p) = (20, 10);
    let ledger = SolveLedger::new();
    let lp = linearize(model, prior.mean(), z, &ledger)?;
    let eigs = hessian_eigs(&lp, prior, k, p, seed, &ledger)?;
    let op = PrecondHessOp {
        hess: lp.hess_op(&ledger),
        prior,
        mode: PrecondMode::Symmetric,
    };
    let dense = dense_sym_eig(&dense_precond_hessian(&op)?)?;
    let l1 = dense.values[0].abs();
    let mut eig_error = 0.0f64;
    let mut compared = 0;
    for (j, lam) in dense.values.iter().enumerate().take(k) {
        if lam.abs() >= EIG_CUTOFF * l1 {
            eig_error = eig_error.max((eigs.values[j] - lam).abs() / lam.abs());
            compared += 1;
        }
    }
    let cinv: Vec<Vec<f64>> = eigs.vectors.iter().map(|v| prior.apply_cinv(v)).collect();
    let mut orth_error = 0.0f64;
    for (i, v) in eigs.vectors.iter().enumerate() {
        for (j, w) in cinv.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            orth_error = orth_error.max((dot(v, w) - target).abs());
        }
    }
    let trace: f64 = dense.values.iter().sum();
    let mut tail_excess = f64::NEG_INFINITY;
    for nn in 1..=eigs.len() {
        let err = (eigs.values[..nn].iter().sum::<f64>() - trace).abs();
        let tail: f64 = dense.values[nn..].iter().map(|x| x.abs()).sum();
        tail_excess = tail_excess.max(err - tail);
    }
    Ok(OracleReport {
        eig_error,
        orth_error,
        tail_excess,
        compared,
    })
}

pub fn eigensolver_oracle() -> CliResult<Verdict> {
    // n = 30 equals k + p, so the sketch spans the whole space
    let (cfg, model, prior) = elliptic(&[("mesh.nx", "5"), ("mesh.ny", "4")])?;
    let (z, _) = setup::control(&cfg, model.control_dim())?;
    let a = eig_oracle(&model, &prior, &z, cfg.seed)?;
    // rank-15 toy with a non-uniform covariance, n = 200
    let toy = random_toy(200, 15, 0, 3);
    let vars: Vec<f64> = (0..200).map(|i| 0.2 + (i % 7) as f64 * 0.3).collect();
    let toy_prior = DiagonalPrior::new(toy.mean.clone(), vars)?;
    let b = eig_oracle(&toy, &toy_prior, &[], cfg.seed)?;
    let eig = a.eig_error.max(b.eig_error);
    let orth = a.orth_error.max(b.orth_error);
    let tail = a.tail_excess.max(b.tail_excess);
    let pass = eig <= EIG_TOL && orth <= EIG_TOL && tail <= TAIL_SLACK;
    Ok(verdict(
        2,
        "eigensolver oracle (elliptic n=30, toy n=200; k=20, p=10)",
        pass,
        format!(
            "eigenvalue rel. error {eig:.2e} <= {EIG_TOL:.0e} over {}+{} values, C^-1-orthonormality {orth:.2e} <= {EIG_TOL:.0e}, max over N of (T2 error - tail) {tail:.2e} <= {TAIL_SLACK:.0e}",
            a.compared, b.compared
        ),
    ))
}

pub fn quadratic_oracle() -> CliResult<Verdict> {
    let toy: QuadraticToy = random_toy(40, 8, 3, 11);
    let prior = DiagonalPrior::new(toy.mean.clone(), vec![0.5; 40])?;
    let z = [0.3, -0.2, 0.5];
    let (e_ref, v_ref) = toy.exact_moments(&prior, &z);
    let ledger = SolveLedger::new();
    let lp = linearize(&toy, prior.mean(), &z, &ledger)?;
    let eigs: EigPairs = hessian_eigs(&lp, &prior, 8, 10, 5, &ledger)?;
    let (e, v) = taylor_quad_moments(&lp, &prior, &eigs, 8)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let closed = rel(e, e_ref).max(rel(v, v_ref));
    let mut remainder = 0.0f64;
    let mut mc = 0.0f64;
    for seed in 1..=5u64 {
        for m in [2usize, 10, 100] {
            let batch = SampleBatch::evaluate(&toy, &prior, &z, m, seed, Some(&lp), TaylorTerms::Quadratic, &ledger)?;
            for r in batch.integrand_rows() {
                remainder = remainder.max((r[0] - r[2]).abs() / r[0].abs().max(1.0));
            }
            let rep = mc_corrected_quad(&lp, &prior, &eigs, 8, &batch, None)?;
            mc = mc.max(rel(rep.mean, e_ref)).max(rel(rep.variance, v_ref));
        }
    }
    let pass = closed <= MOMENT_TOL && remainder <= REMAINDER_TOL && mc <= MOMENT_TOL;
    Ok(verdict(
        3,
        "closed-form quadratic oracle (toy n=40, rank 8)",
        pass,
        format!(
            "Taylor moments {closed:.2e} <= {MOMENT_TOL:.0e}, Q - Q_quad {remainder:.2e} <= {REMAINDER_TOL:.0e}, MC-corrected over 5 seeds x M in {{2,10,100}} {mc:.2e} <= {MOMENT_TOL:.0e}"
        ),
    ))
}

pub fn table_one() -> CliResult<Verdict> {
    let (cfg, model, prior) = elliptic(&[])?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let t = Instant::now();
    let vr = pool.install(|| -> CliResult<_> {
        let (z, _) = setup::control(&cfg, model.control_dim())?;
        let ledger = SolveLedger::new();
        let lp = linearize(&model, prior.mean(), &z, &ledger)?;
        let batch = SampleBatch::evaluate(&model, &prior, &z, 100, cfg.seed, Some(&lp), TaylorTerms::Quadratic, &ledger)?;
        Ok(variance_reduction(&batch)?)
    })?;
    let secs = t.elapsed().as_secs_f64();
    let factor = (vr.mean_q / TABLE_MEAN).max(TABLE_MEAN / vr.mean_q);
    let (rl, rq) = (vr.mse_q_lin / vr.mse_q, vr.mse_q_quad / vr.mse_q);
    let pass = factor <= TABLE_FACTOR && rl <= LIN_RATIO && rq <= QUAD_RATIO && secs <= TABLE_SECONDS;
    Ok(verdict(
        4,
        "variance reduction at z0 (64x32, M=100)",
        pass,
        format!(
            "E[Q] {:.3e} (factor {factor:.2} <= {TABLE_FACTOR} from {TABLE_MEAN:.2e}), MSE ratios lin {rl:.2e} <= {LIN_RATIO:.0e}, quad {rq:.2e} <= {QUAD_RATIO:.0e}, {secs:.1} s single-threaded <= {TABLE_SECONDS} s",
            vr.mean_q
        ),
    ))
}

/// The lin → quad → quad-mc chain on the 64×32 problem.
pub struct DeskChain {
    pub cfg: RunConfig,
    pub model: EllipticModel,
    pub prior: MaternPrior,
    pub stages: Vec<Stage>,
}

pub fn desk_chain() -> CliResult<DeskChain> {
    let (cfg, model, prior) = elliptic(&[("method.name", "quad-mc"), ("method.chain", "true")])?;
    let stages = run_stages(&cfg, &model, &prior, Instant::now())?;
    Ok(DeskChain {
        cfg,
        model,
        prior,
        stages,
    })
}

pub fn trace_comparison(chain: &DeskChain) -> CliResult<Verdict> {
    let quad = chain
        .stages
        .iter()
        .find(|s| s.method == Method::Quad)
        .ok_or_else(|| CliError::Optimizer("the chain stopped before the quad stage".into()))?;
    let (cfg, model, prior) = (&chain.cfg, &chain.model, &chain.prior);
    setup::check_eig_sizes(cfg, model.param_dim(), cfg.k_ref)?;
    let ledger = SolveLedger::new();
    let lp = linearize(model, prior.mean(), &quad.trace.z, &ledger)?;
    let eigs = hessian_eigs(&lp, prior, cfg.k_ref, cfg.oversampling, cfg.seed, &ledger)?;
    let t_ref: f64 = eigs.values.iter().sum();
    let n = cfg.n_eig;
    let t2: f64 = eigs.values[..n].iter().sum();
    let h = |x: &[f64]| lp.hess_apply(x, &ledger);
    let t1 = gaussian_trace_samples(&h, prior, n, cfg.seed)?.estimate(n).tr;
    let (e1, e2) = ((t1 - t_ref).abs(), (t2 - t_ref).abs());
    let decay = (eigs.values[n - 1] / eigs.values[0]).abs();
    let pass = TRACE_GAIN * e2 <= e1 && decay <= DECAY_RATIO;
    Ok(verdict(
        5,
        "trace estimators at the quad optimum (N=100)",
        pass,
        format!(
            "T2 error {e2:.2e}, T1 error {e1:.2e}, gain {:.0} >= {TRACE_GAIN}, |l100/l1| {decay:.2e} <= {DECAY_RATIO:.0e}",
            e1 / e2
        ),
    ))
}

pub fn optimization_outcome(chain: &DeskChain) -> CliResult<Verdict> {
    let total: usize = chain.stages.iter().map(Stage::iterations).sum();
    let converged = chain.stages.len() == 3 && chain.stages.iter().all(Stage::converged);
    let monotone = chain.stages.iter().all(|s| s.trace.rows.windows(2).all(|w| w[1].j <= w[0].j));
    let z = &chain.stages.last().expect("one stage").trace.z;
    let ledger = SolveLedger::new();
    // fresh samples, independent of those frozen in the cost functional
    let batch = SampleBatch::evaluate(&chain.model, &chain.prior, z, 100, chain.cfg.seed + 1, None, TaylorTerms::None, &ledger)?;
    let rep = saa(&batch)?;
    let pass = converged && total <= MAX_TOTAL_ITERATIONS && monotone && rep.mean <= OPT_MEAN && rep.variance <= OPT_VARIANCE;
    let iters: Vec<String> = chain.stages.iter().map(|s| format!("{} {}", s.method, s.iterations())).collect();
    Ok(verdict(
        6,
        "optimization chain lin -> quad -> quad-mc",
        pass,
        format!(
            "converged {converged}, iterations [{}] total {total} <= {MAX_TOTAL_ITERATIONS}, monotone {monotone}, E_MC[Q] {:.3e} <= {OPT_MEAN}, V_Q {:.3e} <= {OPT_VARIANCE}",
            iters.join(", "),
            rep.mean,
            rep.variance
        ),
    ))
}

fn count_mismatches<M: Model>(cfg: &RunConfig, model: &M, prior: &dyn GaussianPrior, z: &[f64]) -> CliResult<(usize, usize)> {
    let mut bad = 0;
    let mut checked = 0;
    for method in Method::ALL {
        let cost = CostFunctional::new(model, prior, cost_config(cfg, method))?;
        let e = cost.evaluate(z, true, &SolveLedger::new())?;
        let (c, g) = method.expected_counts(e.n_used, cfg.oversampling, cost.perturbations.len());
        checked += 2;
        bad += usize::from(e.cost_counts != c) + usize::from(e.grad_counts != g);
    }
    Ok((bad, checked))
}

pub fn cost_ledgers() -> CliResult<Verdict> {
    let (cfg, model, prior) = elliptic(&[
        ("mesh.nx", "16"),
        ("mesh.ny", "8"),
        ("method.N", "20"),
        ("method.M", "6"),
    ])?;
    let (z, _) = setup::control(&cfg, model.control_dim())?;
    let (b1, c1) = count_mismatches(&cfg, &model, &prior, &z)?;
    let mut toy_cfg = RunConfig::defaults();
    for (k, v) in [("model", "toy"), ("method.N", "8"), ("method.p", "5"), ("method.M", "7")] {
        toy_cfg.set(k, v)?;
    }
    let (b2, c2) = match setup::build(&toy_cfg)? {
        Problem::Toy { model, prior } => count_mismatches(&toy_cfg, &model, &prior, &vec![1.0; model.control_dim()])?,
        Problem::Elliptic { .. } => unreachable!("toy config builds a toy"),
    };
    Ok(verdict(
        7,
        "solve-count ledgers (5 methods, elliptic N=20 p=10 M=6, toy N=8 p=5 M=7)",
        b1 + b2 == 0,
        format!("{} of {} cost/gradient counts match the formulas", c1 + c2 - b1 - b2, c1 + c2),
    ))
}

/// Eigenvalue counts for one mesh at control `z`.
#[derive(Debug, Clone, Copy)]
pub struct RankReport {
    pub nx: usize,
    /// Smallest `N` with `|T̂₂(N) − T_ref| ≤ tol·|λ₁|`.
    pub first: usize,
    /// Smallest `N` from which the bound holds for every larger `N`.
    pub stable: usize,
    /// Eigenvalues with `|λ| ≥ tol·|λ₁|`.
    pub effective: usize,
}

pub fn rank_report(nx: usize, z: &[f64]) -> CliResult<RankReport> {
    let (cfg, model, prior) = elliptic_mesh(nx)?;
    let ledger = SolveLedger::new();
    let lp = linearize(&model, prior.mean(), z, &ledger)?;
    let k = cfg.k_ref.min(model.param_dim() - cfg.oversampling);
    let eigs = hessian_eigs(&lp, &prior, k, cfg.oversampling, cfg.seed, &ledger)?;
    let v = &eigs.values;
    let t_ref: f64 = v.iter().sum();
    let tol = RANK_TOL * v[0].abs();
    let ok: Vec<bool> = (0..=v.len()).map(|n| (v[..n].iter().sum::<f64>() - t_ref).abs() <= tol).collect();
    let first = ok.iter().position(|&b| b).unwrap_or(v.len());
    let stable = (0..=v.len()).find(|&n| ok[n..].iter().all(|&b| b)).unwrap_or(v.len());
    let effective = v.iter().filter(|x| x.abs() >= tol).count();
    Ok(RankReport {
        nx,
        first,
        stable,
        effective,
    })
}

pub fn mesh_refinement(chain: &DeskChain) -> CliResult<Verdict> {
    let stage = chain.stages.iter().find(|s| s.method == Method::Quad).unwrap_or(&chain.stages[0]);
    let z = &stage.trace.z;
    let reports = [16, 32, 64].iter().map(|&nx| rank_report(nx, z)).collect::<CliResult<Vec<_>>>()?;
    let spread = |f: fn(&RankReport) -> usize| {
        let v: Vec<usize> = reports.iter().map(f).collect();
        v.iter().max().unwrap() - v.iter().min().unwrap()
    };
    let first = spread(|r| r.first);
    let pass = first <= 2 * RANK_SPREAD;
    let per: Vec<String> = reports
        .iter()
        .map(|r| format!("{}x{}: N {} (stable {}, effective rank {})", r.nx, r.nx / 2, r.first, r.stable, r.effective))
        .collect();
    Ok(verdict(
        8,
        "mesh-independent eigenvalue count (T2 error <= 1e-3 |l1|)",
        pass,
        format!("{}; max - min {first} <= {} (+-{RANK_SPREAD})", per.join("; "), 2 * RANK_SPREAD),
    ))
}

/// Runs every criterion in order; errors become failures.
pub fn run_all(mut report: impl FnMut(&Verdict)) -> Vec<Verdict> {
    let mut out = Vec::new();
    let mut push = |v: CliResult<Verdict>, id: usize, name: &'static str| {
        let v = v.unwrap_or_else(|e| verdict(id, name, false, format!("error: {e}")));
        report(&v);
        out.push(v);
    };
    push(derivatives(), 1, "derivative correctness");
    push(eigensolver_oracle(), 2, "eigensolver oracle");
    push(quadratic_oracle(), 3, "closed-form quadratic oracle");
    push(table_one(), 4, "variance reduction at z0");
    match desk_chain() {
        Ok(chain) => {
            push(trace_comparison(&chain), 5, "trace estimators");
            push(optimization_outcome(&chain), 6, "optimization chain");
            push(cost_ledgers(), 7, "solve-count ledgers");
            push(mesh_refinement(&chain), 8, "mesh-independent eigenvalue count");
        }
        Err(e) => {
            let msg = format!("error: {e}");
            push(Err(CliError::Optimizer(msg.clone())), 5, "trace estimators");
            push(Err(CliError::Optimizer(msg.clone())), 6, "optimization chain");
            push(cost_ledgers(), 7, "solve-count ledgers");
            push(Err(CliError::Optimizer(msg)), 8, "mesh-independent eigenvalue count");
        }
    }
    out
}
