//! Spectrum and trace diagnostics at the lin optimum for one mesh.
//!
//! Usage: `cargo run --release --example spectrum -p ouu-core -- [nx] [exact]`
//! Set `ZFILE` to a control CSV to skip the optimization.

use ouu_core::fem::{Mesh2D, Tensor2};
use ouu_core::hessact::linearize;
use ouu_core::linalg::dot;
use ouu_core::model::{BoundaryData, ControlBounds, EllipticModel, Model, WellConfig};
use ouu_core::optctrl::{lbfgs_b, CostConfig, CostFunctional, LbfgsConfig, Method, Monitor};
use ouu_core::prior::{GaussianPrior, MaternPrior};
use ouu_core::randeig::{double_pass_gevp, gaussian_trace_samples};
use ouu_core::SolveLedger;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let nx: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(64);
    let exact = args.get(2).is_some();
    let mesh = Mesh2D::new(nx, nx / 2, 2.0, 1.0).unwrap();
    let model = EllipticModel::new(&mesh, WellConfig::reference(), BoundaryData::REFERENCE).unwrap();
    let prior = MaternPrior::new(&mesh, vec![3.25; mesh.num_nodes()], 0.1, 20.0, Tensor2::IDENTITY).unwrap();
    let bounds = ControlBounds::uniform(20, 0.0, 32.0).unwrap();
    let ledger = SolveLedger::new();
    let cost = CostFunctional::new(&model, &prior, CostConfig::new(Method::Lin, 1.0)).unwrap();
    let f = |z: &[f64]| {
        let e = cost.evaluate(z, true, &ledger)?;
        Ok((e.j, e.grad.unwrap()))
    };
    let z = match std::env::var("ZFILE") {
        Ok(p) => std::fs::read_to_string(p).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect(),
        Err(_) => lbfgs_b(f, &[16.0; 20], &bounds, &LbfgsConfig::default(), Monitor::default()).unwrap().z,
    };
    for (label, zz) in [("z0", vec![16.0; 20]), ("zlin", z)] {
        let lp = linearize(&model, prior.mean(), &zz, &ledger).unwrap();
        let n = model.param_dim();
        let h = |x: &[f64]| lp.hess_apply(x, &ledger);
        let c = |x: &[f64]| Ok(prior.apply_c(x));
        let ci = |x: &[f64]| Ok(prior.apply_cinv(x));
        let kref = 140.min(n - 10);
        let e = double_pass_gevp(&h, &c, &ci, n, kref, 10, 0).unwrap();
        let l1 = e.values[0].abs();
        let tref: f64 = e.values.iter().sum();
        print!("{nx} {label}: n {n} l1 {:.4e}", e.values[0]);
        for j in [10, 20, 50, 99, kref - 1] {
            print!(" l{}/l1 {:.2e}", j + 1, e.values[j].abs() / l1);
        }
        println!();
        let need = (0..=kref).find(|&k| (tref - e.values[..k].iter().sum::<f64>()).abs() <= 1e-3 * l1).unwrap();
        let err = |k: usize| (tref - e.values[..k].iter().sum::<f64>()).abs();
        let stable = (0..=kref).find(|&k| (k..=kref).all(|kk| err(kk) <= 1e-3 * l1)).unwrap();
        let tail = (0..=kref).find(|&k| e.values[k..].iter().map(|x| x.abs()).sum::<f64>() <= 1e-3 * l1).unwrap();
        let neg = e.values.iter().filter(|x| **x < 0.0).count();
        println!("  stable {stable} tail {tail} negatives {neg}");
        let t2_100: f64 = e.values[..100].iter().sum();
        let g = gaussian_trace_samples(&h, &prior, 100, 0).unwrap().estimate(100);
        println!("  need {need}  Tref {tref:.6e} T2(100) err {:.3e} T1(100) err {:.3e}", (t2_100 - tref).abs(), (g.tr - tref).abs());
        if exact {
            let mut tr = 0.0;
            for i in 0..n {
                let mut ei = vec![0.0; n];
                ei[i] = 1.0;
                let col = prior.apply_sqrt_c(&ei);
                tr += dot(&col, &h(&col).unwrap());
            }
            println!("  exact tr {tr:.8e}  kref err {:.3e}", (tr - tref).abs());
        }
    }
}
