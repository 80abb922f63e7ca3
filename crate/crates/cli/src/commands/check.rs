//! `check-derivatives`: finite-difference sweeps of the parameter gradient,
//! the Hessian action, and all five control gradients, plus solve-count
//! reconciliation.

use ouu_core::fem::NormalStream;
use ouu_core::hessact::{central_difference_table, default_steps, linearize, FdTable};
use ouu_core::linalg::dot;
use ouu_core::model::Model;
use ouu_core::optctrl::{CostFunctional, EigenSource, Method};
use ouu_core::prior::GaussianPrior;
use ouu_core::SolveLedger;

use super::{cost_config, hessian_eigs, Ctx};
use crate::config::ModelKind;
use crate::error::{CliError, CliResult};
use crate::io::Cell;
use crate::setup::{self, Problem};
use crate::with_problem;

/// Stream id of the random check directions.
const CHECK_STREAM: u64 = 0x6664;

pub const GRADIENT_TOL: f64 = 1e-5;
pub const HESSIAN_TOL: f64 = 1e-4;
pub const TOY_HESSIAN_TOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const CONTROL_GRADIENT_TOL: f64 = 1e-4;

pub fn run(ctx: &mut Ctx, problem: &Problem) -> CliResult<()> {
    with_problem!(problem, |model, prior| check(ctx, model, prior))
}

fn write_table(ctx: &mut Ctx, name: &str, t: &FdTable) -> CliResult<()> {
    let rows = t
        .rows
        .iter()
        .map(|r| vec![Cell::F(r.step), Cell::F(r.fd), Cell::F(r.analytic), Cell::F(r.rel_error)])
        .collect();
    ctx.out.write_csv(name, &["step", "fd", "analytic", "rel_error"], rows)
}

fn perturbed(x: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + h * b).collect()
}

fn check<M: Model>(ctx: &mut Ctx, model: &M, prior: &dyn GaussianPrior) -> CliResult<()> {
    let cfg = ctx.cfg.clone();
    let corrupt = 1.0 + cfg.corrupt_gradient;
    let n = model.param_dim();
    let (z, _) = setup::control(&cfg, model.control_dim())?;
    let mbar = prior.mean().to_vec();
    let mut rng = NormalStream::derive(cfg.seed, CHECK_STREAM, 0);
    let m_hat = prior.apply_sqrt_c(&rng.normal_vec(n));
    let m_hat2 = prior.apply_sqrt_c(&rng.normal_vec(n));
    let z_dir = rng.normal_vec(model.control_dim());
    let steps = default_steps();
    let ledger = SolveLedger::new();
    let mut checks: Vec<(String, f64, f64)> = Vec::new();

    let lp = linearize(model, &mbar, &z, &ledger)?;
    let g = [dot(&m_hat, &lp.grad) * corrupt];
    let t = central_difference_table(&g, &steps, |h| {
        let sol = model.solve_state(&perturbed(&mbar, &m_hat, h), &z, &ledger)?;
        Ok(vec![model.objective(&sol.u)])
    })?;
    write_table(ctx, "fd_gradient.csv", &t)?;
    checks.push(("gradient".into(), t.min_error(), GRADIENT_TOL));

    let hm: Vec<f64> = lp.hess_apply(&m_hat, &ledger)?.iter().map(|x| x * corrupt).collect();
    let t = central_difference_table(&hm, &steps, |h| Ok(linearize(model, &perturbed(&mbar, &m_hat, h), &z, &ledger)?.grad))?;
    write_table(ctx, "fd_hessian.csv", &t)?;
    let htol = if cfg.model == ModelKind::Toy { TOY_HESSIAN_TOL } else { HESSIAN_TOL };
    checks.push(("hessian".into(), t.min_error(), htol));

    let hm2 = lp.hess_apply(&m_hat2, &ledger)?;
    let (a, b) = (dot(&m_hat2, &hm), dot(&m_hat, &hm2));
    checks.push(("hessian_symmetry".into(), (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE), SYMMETRY_TOL));

    let mut ledger_rows = Vec::new();
    let mut ledger_failures = 0;
    for method in Method::ALL {
        let cost = CostFunctional::new(model, prior, cost_config(&cfg, method))?;
        let frozen = if method.uses_eigs() {
            setup::check_eig_sizes(&cfg, n, cfg.n_eig)?;
            Some(hessian_eigs(&lp, prior, cfg.n_eig, cfg.oversampling, cfg.seed, &SolveLedger::new())?)
        } else {
            None
        };
        let src = frozen.as_ref().map(EigenSource::Frozen).unwrap_or(EigenSource::Randomized);
        let eval = cost.evaluate_with(&z, true, src, &SolveLedger::new())?;
        let grad: Vec<f64> = eval.grad.unwrap_or_default().iter().map(|x| x * corrupt).collect();
        let t = central_difference_table(&[dot(&grad, &z_dir)], &steps, |h| {
            Ok(vec![cost.evaluate_with(&perturbed(&z, &z_dir, h), false, src, &ledger)?.j])
        })?;
        write_table(ctx, &format!("fd_control_{}.csv", method.name()), &t)?;
        checks.push((format!("control_gradient_{}", method.name()), t.min_error(), CONTROL_GRADIENT_TOL));

        // counts with randomized eigenpairs, as used by the optimizer
        let eval = cost.evaluate(&z, true, &SolveLedger::new())?;
        let (ec, eg) = method.expected_counts(eval.n_used, cfg.oversampling, cost.perturbations.len());
        for (stage, got, want) in [("cost", eval.cost_counts, ec), ("gradient", eval.grad_counts, eg)] {
            let ok = got == want;
            ledger_failures += usize::from(!ok);
            ledger_rows.push(vec![
                Cell::from(method.name()),
                Cell::from(stage),
                Cell::U(got.state),
                Cell::U(got.linear),
                Cell::U(want.state),
                Cell::U(want.linear),
                Cell::from(if ok { "true" } else { "false" }),
            ]);
        }
    }
    ctx.out.write_csv(
        "solve_counts.csv",
        &["method", "stage", "state_solves", "linear_solves", "expected_state", "expected_linear", "match"],
        ledger_rows,
    )?;

    let mut failures = ledger_failures;
    let rows = checks
        .iter()
        .map(|(name, value, tol)| {
            let pass = *value <= *tol;
            if !pass {
                failures += 1;
                log::error!("{name}: {value:e} exceeds {tol:e}");
            }
            vec![Cell::from(name.as_str()), Cell::F(*value), Cell::F(*tol), Cell::from(if pass { "true" } else { "false" })]
        })
        .collect();
    ctx.out.write_csv("checks.csv", &["check", "value", "threshold", "pass"], rows)?;
    if failures > 0 {
        return Err(CliError::CheckFailed(failures));
    }
    Ok(())
}
