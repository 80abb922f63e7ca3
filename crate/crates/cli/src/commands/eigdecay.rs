//! `eigdecay`: generalized eigenvalue spectrum at a control and the errors
//! of both trace estimators against a high-rank reference.

use ouu_core::hessact::linearize;
use ouu_core::model::Model;
use ouu_core::prior::GaussianPrior;
use ouu_core::randeig::{gaussian_trace_samples, trace_error_sweep};
use ouu_core::SolveLedger;

use super::{hessian_eigs, Ctx};
use crate::error::CliResult;
use crate::io::Cell;
use crate::setup::{self, Problem};
use crate::with_problem;

pub fn run(ctx: &mut Ctx, problem: &Problem) -> CliResult<()> {
    with_problem!(problem, |model, prior| eigdecay(ctx, model, prior))
}

fn eigdecay<M: Model>(ctx: &mut Ctx, model: &M, prior: &dyn GaussianPrior) -> CliResult<()> {
    let cfg = ctx.cfg.clone();
    let n = model.param_dim();
    let k = cfg.n_eig;
    setup::check_eig_sizes(&cfg, n, k.max(cfg.k_ref))?;
    let (z, label) = setup::control(&cfg, model.control_dim())?;
    let ledger = SolveLedger::new();
    let lp = linearize(model, prior.mean(), &z, &ledger)?;
    let eigs = hessian_eigs(&lp, prior, k, cfg.oversampling, cfg.seed, &ledger)?;
    let reference = if cfg.k_ref == k {
        eigs.clone()
    } else {
        hessian_eigs(&lp, prior, cfg.k_ref, cfg.oversampling, cfg.seed, &ledger)?
    };
    let t_ref: f64 = reference.values.iter().sum();

    let spectrum = |vals: &[f64]| -> Vec<Vec<Cell>> {
        vals.iter()
            .enumerate()
            .map(|(j, l)| vec![Cell::U(j + 1), Cell::F(*l), Cell::I(if *l < 0.0 { -1 } else { 1 })])
            .collect()
    };
    ctx.out.write_csv("spectrum.csv", &["j", "lambda", "sign"], spectrum(&eigs.values))?;
    if cfg.k_ref != k {
        ctx.out.write_csv("spectrum_ref.csv", &["j", "lambda", "sign"], spectrum(&reference.values))?;
    }

    let h = |x: &[f64]| lp.hess_apply(x, &ledger);
    let gauss = gaussian_trace_samples(&h, prior, k, cfg.seed)?;
    let ns: Vec<usize> = (1..=eigs.len()).collect();
    let sweep = trace_error_sweep(&eigs, &gauss, &ns, t_ref)?;
    let rows = sweep
        .iter()
        .map(|r| vec![Cell::U(r.n), Cell::F(r.error1), Cell::F(r.error2)])
        .collect();
    ctx.out.write_csv("trace_error.csv", &["N", "error1", "error2"], rows)?;

    let l1 = eigs.values.first().copied().unwrap_or(0.0);
    let lk = eigs.values.last().copied().unwrap_or(0.0);
    let counts = ledger.counts();
    let summary = vec![
        vec![Cell::from("control"), Cell::S(label)],
        vec![Cell::from("lambda_1"), Cell::F(l1)],
        vec![Cell::from("lambda_k"), Cell::F(lk)],
        vec![Cell::from("ratio_k_1"), Cell::F((lk / l1).abs())],
        vec![Cell::from("trace_reference"), Cell::F(t_ref)],
        vec![Cell::from("k_ref"), Cell::U(reference.len())],
        vec![Cell::from("state_solves"), Cell::U(counts.state)],
        vec![Cell::from("linear_solves"), Cell::U(counts.linear)],
    ];
    ctx.out.write_csv("eigdecay_summary.csv", &["key", "value"], summary)
}
