use ouu_core::fem::dense_sym_eig;
use ouu_core::hessact::{dense_precond_hessian, linearize, PrecondHessOp, PrecondMode};
use ouu_core::linalg::dot;
use ouu_core::model::{random_toy, QuadraticToy};
use ouu_core::prior::{DiagonalPrior, GaussianPrior};
use ouu_core::randeig::{double_pass_gevp, trace_from_eigs, EigPairs};
use ouu_core::SolveLedger;
use proptest::prelude::*;

fn setup(n: usize, rank: usize, seed: u64) -> (QuadraticToy, DiagonalPrior) {
    let toy = random_toy(n, rank, 0, seed);
    let vars = (0..n).map(|i| 0.1 + ((i * 7 + seed as usize) % 11) as f64 * 0.2).collect();
    let prior = DiagonalPrior::new(toy.mean.clone(), vars).unwrap();
    (toy, prior)
}

fn solve(toy: &QuadraticToy, prior: &DiagonalPrior, k: usize, p: usize, seed: u64) -> (EigPairs, Vec<f64>) {
    let ledger = SolveLedger::new();
    let lp = linearize(toy, prior.mean(), &[], &ledger).unwrap();
    let h = |x: &[f64]| lp.hess_apply(x, &ledger);
    let c = |x: &[f64]| Ok(prior.apply_c(x));
    let ci = |x: &[f64]| Ok(prior.apply_cinv(x));
    let eigs = double_pass_gevp(&h, &c, &ci, toy.dim(), k, p, seed).unwrap();
    let op = PrecondHessOp {
        hess: lp.hess_op(&ledger),
        prior,
        mode: PrecondMode::Symmetric,
    };
    let dense = dense_sym_eig(&dense_precond_hessian(&op).unwrap()).unwrap();
    (eigs, dense.values)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn low_rank_spectra_match_the_dense_oracle(n in 40usize..=200, rank in 1usize..=20, seed in 0u64..500) {
        let (toy, prior) = setup(n, rank, seed);
        let (eigs, dense) = solve(&toy, &prior, 20, 10, seed + 1);
        let l1 = dense[0].abs();
        for (j, lam) in dense.iter().enumerate().take(eigs.len()) {
            if lam.abs() >= 1e-8 * l1 {
                prop_assert!((eigs.values[j] - lam).abs() <= 1e-8 * lam.abs(), "j {j}: {} vs {lam}", eigs.values[j]);
            }
        }
        // C⁻¹-orthonormal vectors
        for (i, v) in eigs.vectors.iter().enumerate() {
            let w = prior.apply_cinv(v);
            for (j, u) in eigs.vectors.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(u, &w) - target).abs() <= 1e-8);
            }
        }
        // T̂₂ error bounded by the tail
        let trace: f64 = dense.iter().sum();
        for nn in 1..=eigs.len() {
            let t2 = trace_from_eigs(&eigs, nn).unwrap().tr;
            let tail: f64 = dense[nn..].iter().map(|x| x.abs()).sum();
            prop_assert!((t2 - trace).abs() <= tail + 1e-10);
        }
    }
}

#[test]
fn full_rank_leading_values_are_accurate() {
    // n = 30 = k + p: the sketch spans the whole space
    let (toy, prior) = setup(30, 30, 4);
    let (eigs, dense) = solve(&toy, &prior, 20, 10, 9);
    for j in 0..20 {
        assert!((eigs.values[j] - dense[j]).abs() <= 1e-10 * dense[0].abs());
    }
}

#[test]
fn same_seed_is_bitwise_identical() {
    let (toy, prior) = setup(60, 25, 2);
    let (a, _) = solve(&toy, &prior, 10, 5, 3);
    let (b, _) = solve(&toy, &prior, 10, 5, 3);
    assert_eq!(a.values, b.values);
    assert_eq!(a.vectors, b.vectors);
}
