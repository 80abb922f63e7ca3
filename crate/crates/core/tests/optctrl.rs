use ouu_core::fem::NormalStream;
use ouu_core::hessact::linearize;
use ouu_core::model::{random_toy, ControlBounds, QuadraticToy};
use ouu_core::optctrl::{fd_check_cost_gradient, lbfgs_b, CostConfig, CostFunctional, EigenSource, LbfgsConfig, Method, Monitor, Termination};
use ouu_core::prior::{DiagonalPrior, GaussianPrior};
use ouu_core::randeig::{double_pass_gevp, EigPairs};
use ouu_core::SolveLedger;
use proptest::prelude::*;

fn setup(rank: usize) -> (QuadraticToy, DiagonalPrior) {
    let toy = random_toy(16, rank, 3, 21);
    let vars = (0..16).map(|i| 0.4 + (i % 3) as f64 * 0.2).collect();
    let prior = DiagonalPrior::new(toy.mean.clone(), vars).unwrap();
    (toy, prior)
}

fn config(method: Method, n_eig: usize, samples: usize, seed: u64) -> CostConfig {
    CostConfig {
        n_eig,
        oversampling: 4,
        samples,
        eig_seed: 3,
        sample_seed: seed,
        beta_p: 1e-2,
        ..CostConfig::new(method, 0.8)
    }
}

fn frozen(toy: &QuadraticToy, prior: &DiagonalPrior, z: &[f64], k: usize) -> EigPairs {
    let ledger = SolveLedger::new();
    let lp = linearize(toy, prior.mean(), z, &ledger).unwrap();
    let h = |x: &[f64]| lp.hess_apply(x, &ledger);
    let c = |x: &[f64]| Ok(prior.apply_c(x));
    let ci = |x: &[f64]| Ok(prior.apply_cinv(x));
    double_pass_gevp(&h, &c, &ci, 16, k, 4, 3).unwrap()
}

#[test]
fn cost_gradients_pass_differences_at_random_interior_points() {
    let (toy, prior) = setup(5);
    let mut rng = NormalStream::new(8, 0x6f70);
    for _ in 0..3 {
        let z: Vec<f64> = (0..3).map(|_| rng.uniform() * 2.0 - 1.0).collect();
        let dir = rng.normal_vec(3);
        for method in Method::ALL {
            let cost = CostFunctional::new(&toy, &prior, config(method, 5, 6, 2)).unwrap();
            let pairs = frozen(&toy, &prior, &z, 5);
            let src = if method.uses_eigs() { EigenSource::Frozen(&pairs) } else { EigenSource::Randomized };
            let t = fd_check_cost_gradient(&cost, &z, &dir, &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6], src).unwrap();
            assert!(t.min_error() <= 1e-4, "{method} at {z:?}: {:?}", t.rows);
        }
    }
}

fn grad(cost: &CostFunctional<'_, QuadraticToy>, z: &[f64]) -> (f64, Vec<f64>) {
    let e = cost.evaluate(z, true, &SolveLedger::new()).unwrap();
    (e.j, e.grad.unwrap())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn quad_mc_equals_quad_for_quadratic_q(z0 in -1.0f64..1.0, z1 in -1.0f64..1.0, z2 in -1.0f64..1.0, seed in 0u64..100) {
        let (toy, prior) = setup(5);
        let z = [z0, z1, z2];
        let quad = CostFunctional::new(&toy, &prior, config(Method::Quad, 5, 8, seed)).unwrap();
        let qmc = CostFunctional::new(&toy, &prior, config(Method::QuadMc, 5, 8, seed)).unwrap();
        let (ja, ga) = grad(&quad, &z);
        let (jb, gb) = grad(&qmc, &z);
        prop_assert!((ja - jb).abs() <= 1e-10 * ja.abs().max(1.0));
        prop_assert!(close(&gb, &ga, 1e-10), "{ga:?} vs {gb:?}");
    }

    #[test]
    fn lin_mc_equals_lin_for_linear_q(z0 in -1.0f64..1.0, z1 in -1.0f64..1.0, seed in 0u64..100) {
        let (toy, prior) = setup(0);
        let z = [z0, z1, 0.3];
        let lin = CostFunctional::new(&toy, &prior, config(Method::Lin, 1, 8, seed)).unwrap();
        let lmc = CostFunctional::new(&toy, &prior, config(Method::LinMc, 1, 8, seed)).unwrap();
        let (ja, ga) = grad(&lin, &z);
        let (jb, gb) = grad(&lmc, &z);
        prop_assert!((ja - jb).abs() <= 1e-10 * ja.abs().max(1.0));
        prop_assert!(close(&gb, &ga, 1e-10));
    }

    #[test]
    fn accepted_iterates_never_increase_the_cost(
        a in proptest::collection::vec(-3.0f64..3.0, 4),
        w in proptest::collection::vec(0.1f64..10.0, 4),
    ) {
        let bounds = ControlBounds::uniform(4, -1.0, 1.0).unwrap();
        let f = |z: &[f64]| {
            let j = z.iter().zip(&a).zip(&w).map(|((z, a), w)| w * (z - a).powi(2) + 0.1 * z.powi(4)).sum();
            let g = z.iter().zip(&a).zip(&w).map(|((z, a), w)| 2.0 * w * (z - a) + 0.4 * z.powi(3)).collect();
            Ok((j, g))
        };
        let t = lbfgs_b(f, &[0.0; 4], &bounds, &LbfgsConfig::default(), Monitor::default()).unwrap();
        prop_assert_eq!(t.termination, Termination::Converged);
        prop_assert!(t.rows.windows(2).all(|r| r[1].j <= r[0].j));
        prop_assert!(bounds.contains(&t.z));
    }
}

fn optimum(toy: &QuadraticToy, prior: &DiagonalPrior, method: Method, samples: usize, seed: u64) -> Vec<f64> {
    let bounds = ControlBounds::uniform(3, -2.0, 2.0).unwrap();
    let cost = CostFunctional::new(toy, prior, config(method, 5, samples, seed)).unwrap();
    let f = |z: &[f64]| {
        let e = cost.evaluate(z, true, &SolveLedger::new())?;
        Ok((e.j, e.grad.unwrap()))
    };
    let cfg = LbfgsConfig {
        tol: 1e-8,
        ..LbfgsConfig::default()
    };
    let t = lbfgs_b(f, &[0.0; 3], &bounds, &cfg, Monitor::default()).unwrap();
    assert_eq!(t.termination, Termination::Converged, "{method}");
    t.z
}

#[test]
fn optima_agree_across_methods_on_the_toy() {
    let (toy, prior) = setup(5);
    let quad = optimum(&toy, &prior, Method::Quad, 1, 0);
    let qmc = optimum(&toy, &prior, Method::QuadMc, 20, 4);
    assert!(close(&qmc, &quad, 1e-6), "{qmc:?} vs {quad:?}");
    // sampled methods: spread over independent sample sets
    for (method, m) in [(Method::LinMc, 50), (Method::Saa, 400)] {
        let runs: Vec<Vec<f64>> = (1..=8u64).map(|s| optimum(&toy, &prior, method, m, s)).collect();
        for i in 0..3 {
            let xs: Vec<f64> = runs.iter().map(|z| z[i]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
            let se = sd / (xs.len() as f64).sqrt();
            assert!((mean - quad[i]).abs() <= 3.0 * se + 1e-6, "{method} z[{i}]: {mean} vs {} (se {se})", quad[i]);
        }
    }
}
