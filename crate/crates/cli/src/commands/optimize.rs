//! `optimize`: projected L-BFGS on the selected cost functional, warm-started
//! through the cheaper approximations, followed by estimates at the optimum.

use std::collections::BTreeSet;
use std::time::Instant;

use ouu_core::model::Model;
use ouu_core::optctrl::{lbfgs_b, CostFunctional, LbfgsConfig, Method, Monitor, OptTrace, Termination};
use ouu_core::prior::GaussianPrior;
use ouu_core::SolveLedger;

use super::{cost_config, estimate::estimate_at, Ctx};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::Cell;
use crate::setup::{self, Problem};
use crate::with_problem;

pub fn run(ctx: &mut Ctx, problem: &Problem) -> CliResult<()> {
    with_problem!(problem, |model, prior| optimize(ctx, model, prior))
}

/// Methods run in sequence, each starting from the previous optimum.
pub fn stages(method: Method, chain: bool) -> Vec<Method> {
    if !chain {
        return vec![method];
    }
    match method {
        Method::Saa | Method::Lin => vec![method],
        Method::Quad => vec![Method::Lin, Method::Quad],
        Method::LinMc => vec![Method::Lin, Method::LinMc],
        Method::QuadMc => vec![Method::Lin, Method::Quad, Method::QuadMc],
    }
}

/// Outcome of one optimization stage.
pub struct Stage {
    pub method: Method,
    pub trace: OptTrace,
    /// Approximate mean and variance of `Q` at the stage optimum.
    pub mean: f64,
    pub variance: f64,
    pub seconds: f64,
}

impl Stage {
    pub fn iterations(&self) -> usize {
        self.trace.rows.last().map(|r| r.iter).unwrap_or(0)
    }

    pub fn converged(&self) -> bool {
        self.trace.termination == Termination::Converged
    }
}

/// Runs the configured stages from the configured control. Stops after the
/// first stage that does not converge.
pub fn run_stages<M: Model>(cfg: &RunConfig, model: &M, prior: &dyn GaussianPrior, start: Instant) -> CliResult<Vec<Stage>> {
    let dim = model.control_dim();
    let bounds = setup::bounds(cfg, dim)?;
    let (mut z, _) = setup::control(cfg, dim)?;
    let opt = LbfgsConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        memory: cfg.memory,
        ..LbfgsConfig::default()
    };
    let timings = cfg.timings;
    let clock = move || if timings { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut out = Vec::new();
    for method in stages(cfg.method, cfg.chain) {
        if method.uses_eigs() {
            setup::check_eig_sizes(cfg, model.param_dim(), cfg.n_eig)?;
        }
        let mut cost = CostFunctional::new(model, prior, cost_config(cfg, method))?;
        if cfg.sample_at_mean {
            cost.perturbations.iter_mut().for_each(|p| p.iter_mut().for_each(|x| *x = 0.0));
        }
        let ledger = SolveLedger::new();
        let warned = std::cell::RefCell::new(BTreeSet::new());
        let f = |z: &[f64]| {
            let e = cost.evaluate(z, true, &ledger)?;
            for w in e.warnings {
                if warned.borrow_mut().insert(w.clone()) {
                    log::warn!("{method}: {w}");
                }
            }
            Ok((e.j, e.grad.unwrap_or_default()))
        };
        let t0 = clock();
        let monitor = Monitor {
            ledger: Some(&ledger),
            clock: Some(&clock),
        };
        let trace = lbfgs_b(f, &z, &bounds, &opt, monitor)?;
        let last = cost.evaluate(&trace.z, false, &SolveLedger::new())?;
        let stage = Stage {
            method,
            mean: last.mean,
            variance: last.variance,
            seconds: clock() - t0,
            trace,
        };
        log::info!(
            "{method}: {} after {} iterations, J = {:e}",
            stage.trace.termination.name(),
            stage.iterations(),
            stage.trace.j
        );
        z = stage.trace.z.clone();
        let done = !stage.converged();
        out.push(stage);
        if done {
            break;
        }
    }
    Ok(out)
}

fn optimize<M: Model>(ctx: &mut Ctx, model: &M, prior: &dyn GaussianPrior) -> CliResult<()> {
    let cfg = ctx.cfg.clone();
    let done = run_stages(&cfg, model, prior, ctx.start)?;
    let mut summary = Vec::new();
    for s in &done {
        let rows = s
            .trace
            .rows
            .iter()
            .map(|r| {
                vec![
                    Cell::U(r.iter),
                    Cell::F(r.j),
                    Cell::F(r.pg_norm),
                    Cell::U(r.state_solves),
                    Cell::U(r.linear_solves),
                    Cell::F(r.seconds),
                ]
            })
            .collect();
        let name = s.method.name();
        ctx.out.write_csv(
            &format!("trace_{name}.csv"),
            &["iter", "J", "pg_norm", "state_solves", "linear_solves", "seconds"],
            rows,
        )?;
        ctx.out.write_control(&format!("control_{name}.csv"), &s.trace.z)?;
        summary.push(vec![
            Cell::from(name),
            Cell::U(s.iterations()),
            Cell::U(s.trace.evaluations),
            Cell::from(s.trace.termination.name()),
            Cell::F(s.trace.j),
            Cell::F(s.mean),
            Cell::F(s.variance),
            Cell::F(s.trace.rows.last().map(|r| r.pg_norm).unwrap_or(0.0)),
            Cell::F(s.seconds),
        ]);
    }
    ctx.out.write_csv(
        "optimize_summary.csv",
        &["method", "iterations", "evaluations", "termination", "J", "mean", "variance", "pg_norm", "seconds"],
        summary,
    )?;
    let last = done.last().expect("at least one stage runs");
    ctx.out.write_control("control.csv", &last.trace.z)?;
    if !last.converged() {
        return Err(CliError::Optimizer(format!("{}: {}", last.method, last.trace.termination.name())));
    }
    let z = last.trace.z.clone();
    estimate_at(ctx, model, prior, &z, "opt")
}
