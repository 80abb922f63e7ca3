//! Runs the lin → quad → quad-mc chain on the reference configuration and
//! prints per-stage summaries.
//!
//! Usage: `cargo run --release --example chain -p ouu-core -- [nx] [mean]`

use std::time::Instant;

use ouu_core::estimators::{mean, mse, SampleBatch, TaylorTerms};
use ouu_core::fem::{Mesh2D, Tensor2};
use ouu_core::model::{BoundaryData, ControlBounds, EllipticModel, WellConfig};
use ouu_core::optctrl::{lbfgs_b, CostConfig, CostFunctional, LbfgsConfig, Method, Monitor};
use ouu_core::prior::{GaussianPrior, MaternPrior};
use ouu_core::SolveLedger;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let nx: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(64);
    let c: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3.25);
    let mesh = Mesh2D::new(nx, nx / 2, 2.0, 1.0).unwrap();
    let model = EllipticModel::new(&mesh, WellConfig::reference(), BoundaryData::REFERENCE).unwrap();
    let prior = MaternPrior::new(&mesh, vec![c; mesh.num_nodes()], 0.1, 20.0, Tensor2::IDENTITY).unwrap();
    let bounds = ControlBounds::uniform(20, 0.0, 32.0).unwrap();
    let t0 = Instant::now();
    let clock = || t0.elapsed().as_secs_f64();
    let mut z = vec![16.0; 20];
    let mut total = 0;
    for method in [Method::Lin, Method::Quad, Method::QuadMc] {
        let mut cfg = CostConfig::new(method, 1.0);
        cfg.sample_seed = 1;
        let cost = CostFunctional::new(&model, &prior, cfg).unwrap();
        let ledger = SolveLedger::new();
        let f = |z: &[f64]| {
            let e = cost.evaluate(z, true, &ledger)?;
            Ok((e.j, e.grad.unwrap()))
        };
        let trace = lbfgs_b(
            f,
            &z,
            &bounds,
            &LbfgsConfig::default(),
            Monitor {
                ledger: Some(&ledger),
                clock: Some(&clock),
            },
        )
        .unwrap();
        let iters = trace.rows.len() - 1;
        total += iters;
        let e = cost.evaluate(&trace.z, false, &ledger).unwrap();
        println!(
            "{method}: iters {iters} evals {} {:?} J {:.6e} mean {:.6e} var {:.6e} pg {:.3e} t {:.1}s",
            trace.evaluations,
            trace.termination,
            trace.j,
            e.mean,
            e.variance,
            trace.rows.last().unwrap().pg_norm,
            clock()
        );
        let mono = trace.rows.windows(2).all(|w| w[1].j <= w[0].j);
        println!("  monotone {mono}  z {:?}", trace.z.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>());
        z = trace.z;
    }
    let ledger = SolveLedger::new();
    let lp = ouu_core::hessact::linearize(&model, prior.mean(), &z, &ledger).unwrap();
    let b = SampleBatch::evaluate(&model, &prior, &z, 100, 77, Some(&lp), TaylorTerms::Quadratic, &ledger).unwrap();
    let var = ouu_core::estimators::population_variance(&b.q);
    println!("total iters {total}; MC at final z: E[Q] {:.4e} Var {:.4e} MSE {:.3e}", mean(&b.q), var, mse(&b.q));
    let vr = ouu_core::estimators::variance_reduction(&b).unwrap();
    println!("  ratios lin {:.3e} quad {:.3e}", vr.mse_q_lin / vr.mse_q, vr.mse_q_quad / vr.mse_q);
}
