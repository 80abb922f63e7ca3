//! `sample-field`: prior draws, the prior mean and the states they induce.

use ouu_core::estimators::SAMPLE_STREAM;
use ouu_core::fem::{Mesh2D, NormalStream};
use ouu_core::model::{EllipticModel, Model};
use ouu_core::prior::{GaussianPrior, MaternPrior};
use ouu_core::SolveLedger;

use super::Ctx;
use crate::error::{CliError, CliResult};
use crate::io::Cell;
use crate::setup::{self, Problem};

pub fn run(ctx: &mut Ctx, problem: &Problem) -> CliResult<()> {
    match problem {
        Problem::Elliptic { model, prior } => sample_fields(ctx, model, prior),
        Problem::Toy { .. } => Err(CliError::Config("sample-field needs model = elliptic".into())),
    }
}

fn nodal_rows(mesh: &Mesh2D, v: &[f64]) -> Vec<Vec<Cell>> {
    mesh.coords.iter().zip(v).map(|(p, x)| vec![Cell::F(p[0]), Cell::F(p[1]), Cell::F(*x)]).collect()
}

fn sample_fields(ctx: &mut Ctx, model: &EllipticModel, prior: &MaternPrior) -> CliResult<()> {
    let cfg = ctx.cfg.clone();
    let mesh = model.mesh();
    let (z, _) = setup::control(&cfg, model.control_dim())?;
    let ledger = SolveLedger::new();
    let header = ["x", "y", "value"];

    ctx.out.write_csv("mean_field.csv", &header, nodal_rows(mesh, prior.mean()))?;
    let u = model.solve_state(prior.mean(), &z, &ledger)?.u;
    ctx.out.write_csv("mean_state.csv", &header, nodal_rows(mesh, &u))?;
    for i in 0..cfg.field_count {
        let mut rng = NormalStream::derive(cfg.seed, SAMPLE_STREAM, i as u64);
        let m = prior.sample(&mut rng);
        ctx.out.write_csv(&format!("field_{i}.csv"), &header, nodal_rows(mesh, &m))?;
        let u = model.solve_state(&m, &z, &ledger)?.u;
        ctx.out.write_csv(&format!("state_{i}.csv"), &header, nodal_rows(mesh, &u))?;
    }
    if cfg.export_operators {
        ctx.out.write_triplets("prior_k.csv", &prior.k)?;
        ctx.out.write_triplets("mass.csv", &prior.mass)?;
        ctx.out.write_vector("lumped_mass.csv", &prior.lumped)?;
    }
    Ok(())
}
