//! Builds the model and prior described by a [`RunConfig`].

use ouu_core::fem::{CgConfig, Mesh2D, Tensor2};
use ouu_core::model::{random_toy, BoundaryData, ControlBounds, EllipticModel, Model, QuadraticToy, SolverKind, WellConfig};
use ouu_core::prior::{DiagonalPrior, MaternPrior};

use crate::config::{ControlSpec, MeanSpec, ModelKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{read_control, read_vector};

// built once per run, so the size difference is irrelevant
#[allow(clippy::large_enum_variant)]
pub enum Problem {
    Elliptic { model: EllipticModel, prior: MaternPrior },
    Toy { model: QuadraticToy, prior: DiagonalPrior },
}

/// Runs `$body` with `$model: &impl Model` and `$prior: &dyn GaussianPrior`
/// bound to the concrete problem.
#[macro_export]
macro_rules! with_problem {
    ($problem:expr, |$model:ident, $prior:ident| $body:expr) => {
        match $problem {
            $crate::setup::Problem::Elliptic { model: $model, prior: p } => {
                let $prior: &dyn ouu_core::prior::GaussianPrior = p;
                $body
            }
            $crate::setup::Problem::Toy { model: $model, prior: p } => {
                let $prior: &dyn ouu_core::prior::GaussianPrior = p;
                $body
            }
        }
    };
}

pub fn build(cfg: &RunConfig) -> CliResult<Problem> {
    match cfg.model {
        ModelKind::Elliptic => {
            let mesh = Mesh2D::new(cfg.nx, cfg.ny, cfg.lx, cfg.ly)?;
            let wells = WellConfig {
                injection: cfg.injection.clone(),
                production: cfg.production.clone(),
                sigma: cfg.sigma,
                targets: None,
            };
            let mut model = EllipticModel::new(&mesh, wells, BoundaryData::REFERENCE).map_err(config_error)?;
            if cfg.cg {
                model = model.with_solver(SolverKind::Cg(CgConfig::default()));
            }
            let n = mesh.num_nodes();
            let mean = match &cfg.mean {
                MeanSpec::Const(c) => vec![*c; n],
                MeanSpec::File(p) => read_vector(p)?,
            };
            if mean.len() != n {
                return Err(CliError::Config(format!(
                    "prior mean has {} values but the mesh has {n} nodes",
                    mean.len()
                )));
            }
            let theta = Tensor2::new(cfg.theta[0], cfg.theta[1], cfg.theta[2]);
            let prior = MaternPrior::new(&mesh, mean, cfg.alpha1, cfg.alpha2, theta).map_err(config_error)?;
            Ok(Problem::Elliptic { model, prior })
        }
        ModelKind::Toy => {
            let t = &cfg.toy;
            let model = random_toy(t.n, t.rank, t.controls, t.seed);
            let prior = DiagonalPrior::new(model.mean.clone(), vec![t.variance; t.n]).map_err(config_error)?;
            Ok(Problem::Toy { model, prior })
        }
    }
}

/// Invalid-argument errors raised while building from a config are config
/// errors, not solver failures.
fn config_error(e: ouu_core::Error) -> CliError {
    match e {
        ouu_core::Error::InvalidArgument(m) | ouu_core::Error::InvalidMesh(m) => CliError::Config(m),
        other => CliError::Solver(other),
    }
}

impl Problem {
    pub fn control_dim(&self) -> usize {
        with_problem!(self, |model, _prior| model.control_dim())
    }

    pub fn param_dim(&self) -> usize {
        with_problem!(self, |model, prior| {
            debug_assert_eq!(model.param_dim(), prior.dim());
            model.param_dim()
        })
    }
}

pub fn bounds(cfg: &RunConfig, dim: usize) -> CliResult<ControlBounds> {
    ControlBounds::uniform(dim, cfg.lower, cfg.upper).map_err(config_error)
}

/// The configured control and a short label for it.
pub fn control(cfg: &RunConfig, dim: usize) -> CliResult<(Vec<f64>, String)> {
    match &cfg.control {
        ControlSpec::Uniform => Ok((vec![cfg.z0; dim], "z0".into())),
        ControlSpec::File(p) => {
            let z = read_control(p)?;
            if z.len() != dim {
                return Err(CliError::Config(format!(
                    "{} has {} controls, expected {dim}",
                    p.display(),
                    z.len()
                )));
            }
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "file".into());
            Ok((z, label))
        }
    }
}

/// Checks the eigensolver sizes against the parameter dimension.
pub fn check_eig_sizes(cfg: &RunConfig, n: usize, k: usize) -> CliResult<()> {
    if k + cfg.oversampling > n {
        return Err(CliError::Config(format!(
            "{k} eigenpairs plus oversampling {} exceed the parameter dimension {n}",
            cfg.oversampling
        )));
    }
    Ok(())
}
