pub mod check;
pub mod eigdecay;
pub mod estimate;
pub mod field;
pub mod optimize;

use std::time::Instant;

use ouu_core::hessact::LinearizationPoint;
use ouu_core::model::Model;
use ouu_core::optctrl::{CostConfig, Method};
use ouu_core::prior::GaussianPrior;
use ouu_core::randeig::{double_pass_gevp, EigPairs};
use ouu_core::SolveLedger;

use crate::config::RunConfig;
use crate::io::OutDir;

/// State shared by a command run.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: OutDir,
    pub start: Instant,
}

impl Ctx {
    pub fn seconds(&self) -> f64 {
        if self.cfg.timings {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

pub fn cost_config(cfg: &RunConfig, method: Method) -> CostConfig {
    CostConfig {
        method,
        beta: cfg.beta,
        beta_p: cfg.beta_p,
        n_eig: cfg.n_eig,
        oversampling: cfg.oversampling,
        samples: cfg.samples,
        eig_seed: cfg.seed,
        sample_seed: cfg.seed,
    }
}

/// `k` prior-preconditioned Hessian eigenpairs at `lp`.
pub fn hessian_eigs<M: Model>(
    lp: &LinearizationPoint<'_, M>,
    prior: &dyn GaussianPrior,
    k: usize,
    p: usize,
    seed: u64,
    ledger: &SolveLedger,
) -> ouu_core::Result<EigPairs> {
    let h = |x: &[f64]| lp.hess_apply(x, ledger);
    let c = |x: &[f64]| Ok(prior.apply_c(x));
    let ci = |x: &[f64]| Ok(prior.apply_cinv(x));
    double_pass_gevp(&h, &c, &ci, prior.dim(), k, p, seed)
}
