//! `estimate`: moment estimates and variance-reduction tables at a control.

use ouu_core::estimators::{
    mc_corrected_lin, mc_corrected_quad, saa, taylor_lin_moments, taylor_quad_moments, variance_reduction, MomentReport,
    SampleBatch, TaylorTerms,
};
use ouu_core::hessact::linearize;
use ouu_core::model::Model;
use ouu_core::prior::GaussianPrior;
use ouu_core::SolveLedger;

use super::{hessian_eigs, Ctx};
use crate::error::CliResult;
use crate::io::Cell;
use crate::setup::{self, Problem};
use crate::with_problem;

pub fn run(ctx: &mut Ctx, problem: &Problem) -> CliResult<()> {
    with_problem!(problem, |model, prior| {
        let (z, label) = setup::control(&ctx.cfg, model.control_dim())?;
        estimate_at(ctx, model, prior, &z, &label)
    })
}

fn moment_row(label: &str, m: usize, r: &MomentReport) -> Vec<Cell> {
    vec![
        Cell::from(label),
        Cell::U(m),
        Cell::from(r.estimator.name()),
        Cell::F(r.mean),
        Cell::F(r.variance),
        Cell::F(r.mse_mean),
        Cell::F(r.mse_variance),
        Cell::U(r.counts.state),
        Cell::U(r.counts.linear),
    ]
}

/// Writes the estimate tables for control `z` labelled `label`.
pub fn estimate_at<M: Model>(ctx: &mut Ctx, model: &M, prior: &dyn GaussianPrior, z: &[f64], label: &str) -> CliResult<()> {
    let cfg = ctx.cfg.clone();
    setup::check_eig_sizes(&cfg, model.param_dim(), cfg.n_eig)?;
    let ledger = SolveLedger::new();
    let lp = linearize(model, prior.mean(), z, &ledger)?;
    let eigs = hessian_eigs(&lp, prior, cfg.n_eig, cfg.oversampling, cfg.seed, &ledger)?;
    let n = eigs.len();

    let mut report = Vec::new();
    let mut variance = Vec::new();
    let mut moments = Vec::new();
    let (lin_mean, lin_var) = taylor_lin_moments(&lp, prior);
    let (quad_mean, quad_var) = taylor_quad_moments(&lp, prior, &eigs, n)?;
    for (name, mean, var) in [("lin", lin_mean, lin_var), ("quad", quad_mean, quad_var)] {
        moments.push(vec![
            Cell::from(label),
            Cell::U(0),
            Cell::from(name),
            Cell::F(mean),
            Cell::F(var),
            Cell::F(0.0),
            Cell::F(0.0),
            Cell::U(0),
            Cell::U(0),
        ]);
    }
    for &m in &cfg.estimate_samples {
        let batch = SampleBatch::evaluate(model, prior, z, m, cfg.seed, Some(&lp), TaylorTerms::Quadratic, &ledger)?;
        let vr = variance_reduction(&batch)?;
        let plain = saa(&batch)?;
        report.push(vec![
            Cell::from(label),
            Cell::U(m),
            Cell::F(vr.mean_q),
            Cell::F(vr.mse_q),
            Cell::F(vr.mse_q_lin),
            Cell::F(vr.mse_q_quad),
        ]);
        variance.push(vec![
            Cell::from(label),
            Cell::U(m),
            Cell::F(plain.variance),
            Cell::F(vr.mse_qq),
            Cell::F(vr.mse_qq_lin),
            Cell::F(vr.mse_qq_quad),
        ]);
        moments.push(moment_row(label, m, &plain));
        moments.push(moment_row(label, m, &mc_corrected_lin(&lp, prior, &batch, None)?));
        moments.push(moment_row(label, m, &mc_corrected_quad(&lp, prior, &eigs, n, &batch, None)?));

        let rows = batch.integrand_rows();
        let integrands = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = vec![Cell::U(i)];
                row.extend(r.iter().map(|x| Cell::F(*x)));
                row
            })
            .collect();
        ctx.out.write_csv(
            &format!("integrands_{label}_M{m}.csv"),
            &["i", "Q", "Qlin", "Qquad", "q", "qlin", "qquad"],
            integrands,
        )?;
        let errors = rows
            .iter()
            .enumerate()
            .map(|(i, r)| vec![Cell::U(i), Cell::F(((r[0] - r[1]) / r[0]).abs()), Cell::F(((r[0] - r[2]) / r[0]).abs())])
            .collect();
        ctx.out
            .write_csv(&format!("taylor_errors_{label}_M{m}.csv"), &["i", "rel_error_lin", "rel_error_quad"], errors)?;
    }
    ctx.out.write_csv(
        &format!("estimate_{label}.csv"),
        &["control_id", "M", "Ehat", "MSE_Q", "MSE_Q_lin", "MSE_Q_quad"],
        report,
    )?;
    ctx.out.write_csv(
        &format!("estimate_variance_{label}.csv"),
        &["control_id", "M", "Vhat", "MSE_q", "MSE_q_lin", "MSE_q_quad"],
        variance,
    )?;
    ctx.out.write_csv(
        &format!("moments_{label}.csv"),
        &[
            "control_id",
            "M",
            "estimator",
            "mean",
            "variance",
            "mse_mean",
            "mse_variance",
            "state_solves",
            "linear_solves",
        ],
        moments,
    )
}
