use ouu_core::estimators::{
    mc_corrected_lin, mc_corrected_quad, saa, taylor_lin_moments, taylor_quad_moments, SampleBatch, TaylorTerms,
};
use ouu_core::hessact::linearize;
use ouu_core::model::{random_toy, QuadraticToy};
use ouu_core::prior::{DiagonalPrior, GaussianPrior};
use ouu_core::randeig::{double_pass_gevp, EigPairs};
use ouu_core::SolveLedger;
use proptest::prelude::*;

fn setup(rank: usize, seed: u64) -> (QuadraticToy, DiagonalPrior) {
    let toy = random_toy(30, rank, 3, seed);
    let vars = (0..30).map(|i| 0.3 + (i % 5) as f64 * 0.1).collect();
    let prior = DiagonalPrior::new(toy.mean.clone(), vars).unwrap();
    (toy, prior)
}

fn eigs(toy: &QuadraticToy, prior: &DiagonalPrior, z: &[f64], k: usize) -> EigPairs {
    let ledger = SolveLedger::new();
    let lp = linearize(toy, prior.mean(), z, &ledger).unwrap();
    let h = |x: &[f64]| lp.hess_apply(x, &ledger);
    let c = |x: &[f64]| Ok(prior.apply_c(x));
    let ci = |x: &[f64]| Ok(prior.apply_cinv(x));
    double_pass_gevp(&h, &c, &ci, 30, k, 8, 1).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadratic_moments_are_exact(rank in 1usize..=8, seed in 0u64..1000, z0 in -1.0f64..1.0, z1 in -1.0f64..1.0) {
        let (toy, prior) = setup(rank, seed);
        let z = [z0, z1, 0.25];
        let (e, v) = toy.exact_moments(&prior, &z);
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, prior.mean(), &z, &ledger).unwrap();
        let pairs = eigs(&toy, &prior, &z, rank);
        let (eq, vq) = taylor_quad_moments(&lp, &prior, &pairs, rank).unwrap();
        prop_assert!(rel(eq, e) <= 1e-8 && rel(vq, v) <= 1e-8);
        let batch = SampleBatch::evaluate(&toy, &prior, &z, 5, seed, Some(&lp), TaylorTerms::Quadratic, &ledger).unwrap();
        let r = mc_corrected_quad(&lp, &prior, &pairs, rank, &batch, None).unwrap();
        prop_assert!(rel(r.mean, e) <= 1e-8 && rel(r.variance, v) <= 1e-8);
        for row in batch.integrand_rows() {
            prop_assert!((row[0] - row[2]).abs() <= 1e-12 * row[0].abs().max(1.0));
        }
    }

    #[test]
    fn linear_corrections_vanish_for_linear_q(seed in 0u64..1000, m in 2usize..20) {
        let (toy, prior) = setup(0, seed);
        let z = [0.5, -0.5, 0.1];
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, prior.mean(), &z, &ledger).unwrap();
        let (e, v) = taylor_lin_moments(&lp, &prior);
        let (ee, ve) = toy.exact_moments(&prior, &z);
        prop_assert!(rel(e, ee) <= 1e-12 && rel(v, ve) <= 1e-12);
        let batch = SampleBatch::evaluate(&toy, &prior, &z, m, seed, Some(&lp), TaylorTerms::Linear, &ledger).unwrap();
        let r = mc_corrected_lin(&lp, &prior, &batch, None).unwrap();
        prop_assert!(rel(r.mean, e) <= 1e-12 && rel(r.variance, v) <= 1e-12);
    }
}

#[test]
fn sample_average_is_unbiased_over_seeds() {
    let (toy, prior) = setup(6, 3);
    let z = [0.2, 0.1, -0.3];
    let (e, v) = toy.exact_moments(&prior, &z);
    let m = 10;
    let ledger = SolveLedger::new();
    let means: Vec<f64> = (0..200u64)
        .map(|s| saa(&SampleBatch::evaluate(&toy, &prior, &z, m, s, None, TaylorTerms::None, &ledger).unwrap()).unwrap().mean)
        .collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    // standard error of the grand mean of 2000 independent draws
    let se = (v / (m * means.len()) as f64).sqrt();
    assert!((grand - e).abs() <= 4.0 * se, "{grand} vs {e}, se {se}");
}

#[test]
fn corrected_linear_estimator_is_unbiased_over_seeds() {
    let (toy, prior) = setup(6, 5);
    let z = [0.2, 0.1, -0.3];
    let (e, v) = toy.exact_moments(&prior, &z);
    let ledger = SolveLedger::new();
    let lp = linearize(&toy, prior.mean(), &z, &ledger).unwrap();
    let m = 10;
    let means: Vec<f64> = (0..200u64)
        .map(|s| {
            let b = SampleBatch::evaluate(&toy, &prior, &z, m, s, Some(&lp), TaylorTerms::Linear, &ledger).unwrap();
            mc_corrected_lin(&lp, &prior, &b, None).unwrap().mean
        })
        .collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let se = (v / (m * means.len()) as f64).sqrt();
    assert!((grand - e).abs() <= 4.0 * se, "{grand} vs {e}, se {se}");
}
