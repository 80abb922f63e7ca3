//! Moment estimators of `Q`: sample averages, Taylor moments, and the
//! Taylor-as-control-variate corrections, with MSE bookkeeping.
//!
//! Per-sample notation: `d = Q(m) − Q̄`, `l = ⟨m − m̄, ḡ⟩`,
//! `h = ⟨m − m̄, Q_mm (m − m̄)⟩`, so `Q_lin = Q̄ + l` and
//! `Q_quad = Q̄ + l + h/2`.

use alloc::vec::Vec;

use crate::fem::NormalStream;
use crate::hessact::LinearizationPoint;
use crate::ledger::SolveCounts;
use crate::linalg::dot;
use crate::model::Model;
use crate::prior::GaussianPrior;
use crate::randeig::{trace_from_eigs, EigPairs};
use crate::{float, par, Error, Result, SolveLedger};

/// Parameter samples use this stream family of the run seed.
pub const SAMPLE_STREAM: u64 = 0x5a4d;

/// `M` draws `m_i − m̄ = L ξ_i`, each from its own derived stream so the set
/// does not depend on evaluation order.
pub fn draw_perturbations(prior: &dyn GaussianPrior, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = NormalStream::derive(seed, SAMPLE_STREAM, i as u64);
            prior.apply_sqrt_c(&rng.normal_vec(prior.dim()))
        })
        .collect()
}

/// Evaluated samples of `Q` and, optionally, of its Taylor terms.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub seed: u64,
    /// `m_i − m̄`
    pub perturbations: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    /// `Q(m̄)`, present when Taylor terms were evaluated.
    pub q_bar: Option<f64>,
    /// `l_i`
    pub lin: Option<Vec<f64>>,
    /// `h_i`
    pub quad: Option<Vec<f64>>,
    pub counts: SolveCounts,
}

/// Which Taylor terms to evaluate alongside `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaylorTerms {
    None,
    Linear,
    Quadratic,
}

impl SampleBatch {
    /// Draws `count` samples and evaluates `Q` (one state solve each) and
    /// the requested Taylor terms (one Hessian action each for quadratic).
    pub fn evaluate<M: Model>(
        model: &M,
        prior: &dyn GaussianPrior,
        z: &[f64],
        count: usize,
        seed: u64,
        lp: Option<&LinearizationPoint<'_, M>>,
        terms: TaylorTerms,
        ledger: &SolveLedger,
    ) -> Result<Self> {
        let perturbations = draw_perturbations(prior, count, seed);
        Self::from_perturbations(model, prior, z, perturbations, seed, lp, terms, ledger)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_perturbations<M: Model>(
        model: &M,
        prior: &dyn GaussianPrior,
        z: &[f64],
        perturbations: Vec<Vec<f64>>,
        seed: u64,
        lp: Option<&LinearizationPoint<'_, M>>,
        terms: TaylorTerms,
        ledger: &SolveLedger,
    ) -> Result<Self> {
        if terms != TaylorTerms::None && lp.is_none() {
            return Err(Error::InvalidArgument("Taylor terms need a linearization point".into()));
        }
        let before = ledger.counts();
        let mean = prior.mean();
        let q = par::try_map_indexed(perturbations.len(), |i| {
            let m: Vec<f64> = mean.iter().zip(&perturbations[i]).map(|(a, b)| a + b).collect();
            let sol = model.solve_state(&m, z, ledger).map_err(|e| e.in_sample(i))?;
            Ok::<_, Error>(model.objective(&sol.u))
        })?;
        let lin = match (terms, lp) {
            (TaylorTerms::None, _) | (_, None) => None,
            (_, Some(lp)) => Some(perturbations.iter().map(|dm| dot(dm, &lp.grad)).collect()),
        };
        let quad = match (terms, lp) {
            (TaylorTerms::Quadratic, Some(lp)) => Some(par::try_map_indexed(perturbations.len(), |i| {
                let hm = lp.hess_apply(&perturbations[i], ledger).map_err(|e| e.in_sample(i))?;
                Ok::<_, Error>(dot(&perturbations[i], &hm))
            })?),
            _ => None,
        };
        Ok(Self {
            seed,
            perturbations,
            q,
            q_bar: lp.map(|lp| lp.q),
            lin,
            quad,
            counts: ledger.counts() - before,
        })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    fn require(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            return Err(Error::TooFewSamples { needed, got: self.len() });
        }
        Ok(())
    }

    fn taylor(&self) -> Result<(f64, &[f64])> {
        match (self.q_bar, &self.lin) {
            (Some(qb), Some(l)) => Ok((qb, l)),
            _ => Err(Error::InvalidArgument("batch lacks linear Taylor terms".into())),
        }
    }

    fn taylor_quad(&self) -> Result<(f64, &[f64], &[f64])> {
        let (qb, l) = self.taylor()?;
        match &self.quad {
            Some(h) => Ok((qb, l, h)),
            None => Err(Error::InvalidArgument("batch lacks quadratic Taylor terms".into())),
        }
    }

    /// Per-sample rows `(Q, Q_lin, Q_quad, q, q_lin, q_quad)` with
    /// `q = (Q − Q̄)²`; missing terms are `NaN`.
    pub fn integrand_rows(&self) -> Vec<[f64; 6]> {
        let qb = self.q_bar.unwrap_or(f64::NAN);
        (0..self.len())
            .map(|i| {
                let l = self.lin.as_ref().map_or(f64::NAN, |v| v[i]);
                let h = self.quad.as_ref().map_or(f64::NAN, |v| v[i]);
                let d = self.q[i] - qb;
                let dq = l + 0.5 * h;
                [self.q[i], qb + l, qb + dq, d * d, l * l, dq * dq]
            })
            .collect()
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population (1/M) variance.
pub fn population_variance(x: &[f64]) -> f64 {
    let mu = mean(x);
    mean(&x.iter().map(|v| (v - mu) * (v - mu)).collect::<Vec<_>>())
}

/// Sample (1/(M−1)) variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    population_variance(x) * n as f64 / (n - 1) as f64
}

/// `Var_p / M`.
pub fn mse(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    population_variance(x) / x.len() as f64
}

/// Sample correlation; `None` when either side has zero variance.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / float::sqrt(sxx * syy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorId {
    Saa,
    Lin,
    Quad,
    LinMc,
    QuadMc,
}

impl EstimatorId {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::Saa => "saa",
            EstimatorId::Lin => "lin",
            EstimatorId::Quad => "quad",
            EstimatorId::LinMc => "lin-mc",
            EstimatorId::QuadMc => "quad-mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub estimator: EstimatorId,
    /// Samples used (0 for pure Taylor moments).
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    /// MSE of the sampled part of the mean estimate.
    pub mse_mean: f64,
    /// MSE of the sampled part of the variance estimate.
    pub mse_variance: f64,
    pub counts: SolveCounts,
    pub seed: Option<u64>,
}

/// Plain Monte Carlo mean and variance `mean(Q²) − mean(Q)²`, evaluated in
/// the centred two-pass form.
pub fn saa(batch: &SampleBatch) -> Result<MomentReport> {
    batch.require(2)?;
    let mu = mean(&batch.q);
    let centre = batch.q_bar.unwrap_or(mu);
    let qq: Vec<f64> = batch.q.iter().map(|q| (q - centre) * (q - centre)).collect();
    Ok(MomentReport {
        estimator: EstimatorId::Saa,
        samples: batch.len(),
        mean: mu,
        variance: population_variance(&batch.q),
        mse_mean: mse(&batch.q),
        mse_variance: mse(&qq),
        counts: batch.counts,
        seed: Some(batch.seed),
    })
}

/// `E = Q̄`, `Var = ⟨ḡ, C ḡ⟩`.
pub fn taylor_lin_moments<M: Model>(lp: &LinearizationPoint<'_, M>, prior: &dyn GaussianPrior) -> (f64, f64) {
    (lp.q, dot(&lp.grad, &prior.apply_c(&lp.grad)))
}

/// `E = Q̄ + ½ T̂₂(ℋ)`, `Var = ⟨ḡ, C ḡ⟩ + ½ T̂₂(ℋ²)` using `n` eigenpairs.
pub fn taylor_quad_moments<M: Model>(lp: &LinearizationPoint<'_, M>, prior: &dyn GaussianPrior, eigs: &EigPairs, n: usize) -> Result<(f64, f64)> {
    let t = trace_from_eigs(eigs, n)?;
    let (e, v) = taylor_lin_moments(lp, prior);
    Ok((e + 0.5 * t.tr, v + 0.5 * t.tr_sq))
}

/// `Q̄ + ⟨m − m̄, ḡ⟩`.
pub fn eval_q_lin<M: Model>(lp: &LinearizationPoint<'_, M>, m: &[f64]) -> f64 {
    let dm: Vec<f64> = m.iter().zip(&lp.m).map(|(a, b)| a - b).collect();
    lp.q + dot(&dm, &lp.grad)
}

/// `Q_lin + ½⟨m − m̄, Q_mm (m − m̄)⟩`; one Hessian action.
pub fn eval_q_quad<M: Model>(lp: &LinearizationPoint<'_, M>, m: &[f64], ledger: &SolveLedger) -> Result<f64> {
    let dm: Vec<f64> = m.iter().zip(&lp.m).map(|(a, b)| a - b).collect();
    let hm = lp.hess_apply(&dm, ledger)?;
    Ok(lp.q + dot(&dm, &lp.grad) + 0.5 * dot(&dm, &hm))
}

/// Linear Taylor moments corrected by Monte Carlo on the remainder.
///
/// `Q̂_lin = Q̄ + mean(d − l)` and
/// `V̂ = ⟨Cḡ, ḡ⟩ + mean(d² − l²) − (mean(d − l))²`. `var_batch` defaults to
/// the mean batch (shared samples).
pub fn mc_corrected_lin<M: Model>(lp: &LinearizationPoint<'_, M>, prior: &dyn GaussianPrior, batch: &SampleBatch, var_batch: Option<&SampleBatch>) -> Result<MomentReport> {
    let vb = var_batch.unwrap_or(batch);
    batch.require(2)?;
    vb.require(2)?;
    let (qb, l) = batch.taylor()?;
    let r1: Vec<f64> = batch.q.iter().zip(l).map(|(q, l)| q - qb - l).collect();
    let (qb2, l2) = vb.taylor()?;
    let r2: Vec<f64> = vb.q.iter().zip(l2).map(|(q, l)| q - qb2 - l).collect();
    let s2: Vec<f64> = vb
        .q
        .iter()
        .zip(l2)
        .map(|(q, l)| (q - qb2) * (q - qb2) - l * l)
        .collect();
    let (_, gcg) = taylor_lin_moments(lp, prior);
    let mr2 = mean(&r2);
    Ok(MomentReport {
        estimator: EstimatorId::LinMc,
        samples: batch.len(),
        mean: qb + mean(&r1),
        variance: gcg + mean(&s2) - mr2 * mr2,
        mse_mean: mse(&r1),
        mse_variance: mse(&s2),
        counts: if var_batch.is_some() { batch.counts + vb.counts } else { batch.counts },
        seed: Some(batch.seed),
    })
}

/// Quadratic Taylor moments corrected by Monte Carlo on the remainder.
///
/// With `T = T̂₂(ℋ)`, `T₂ = T̂₂(ℋ²)` and `r = d − l − h/2`:
/// `Q̂_quad = Q̄ + T/2 + mean(r)` and
/// `V̂ = ⟨Cḡ, ḡ⟩ + T²/4 + T₂/2 + mean(d² − (l + h/2)²) − (T/2 + mean(r))²`.
pub fn mc_corrected_quad<M: Model>(
    lp: &LinearizationPoint<'_, M>,
    prior: &dyn GaussianPrior,
    eigs: &EigPairs,
    n: usize,
    batch: &SampleBatch,
    var_batch: Option<&SampleBatch>,
) -> Result<MomentReport> {
    let t = trace_from_eigs(eigs, n)?;
    mc_corrected_quad_with_traces(lp, prior, t.tr, t.tr_sq, batch, var_batch)
}

pub fn mc_corrected_quad_with_traces<M: Model>(
    lp: &LinearizationPoint<'_, M>,
    prior: &dyn GaussianPrior,
    tr: f64,
    tr_sq: f64,
    batch: &SampleBatch,
    var_batch: Option<&SampleBatch>,
) -> Result<MomentReport> {
    let vb = var_batch.unwrap_or(batch);
    batch.require(2)?;
    vb.require(2)?;
    let (qb, l, h) = batch.taylor_quad()?;
    let r1: Vec<f64> = (0..batch.len()).map(|i| batch.q[i] - qb - l[i] - 0.5 * h[i]).collect();
    let (qb2, l2, h2) = vb.taylor_quad()?;
    let r2: Vec<f64> = (0..vb.len()).map(|i| vb.q[i] - qb2 - l2[i] - 0.5 * h2[i]).collect();
    let s2: Vec<f64> = (0..vb.len())
        .map(|i| {
            let d = vb.q[i] - qb2;
            let a = l2[i] + 0.5 * h2[i];
            d * d - a * a
        })
        .collect();
    let (_, gcg) = taylor_lin_moments(lp, prior);
    let shift = 0.5 * tr + mean(&r2);
    Ok(MomentReport {
        estimator: EstimatorId::QuadMc,
        samples: batch.len(),
        mean: qb + 0.5 * tr + mean(&r1),
        variance: gcg + 0.25 * tr * tr + 0.5 * tr_sq + mean(&s2) - shift * shift,
        mse_mean: mse(&r1),
        mse_variance: mse(&s2),
        counts: if var_batch.is_some() { batch.counts + vb.counts } else { batch.counts },
        seed: Some(batch.seed),
    })
}

/// Correlations of `Q` and of `q = (Q − Q̄)²` with their Taylor surrogates;
/// `None` marks an undefined (zero-variance) correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationReport {
    pub q_lin: Option<f64>,
    pub q_quad: Option<f64>,
    pub var_lin: Option<f64>,
    pub var_quad: Option<f64>,
}

pub fn correlation_report(batch: &SampleBatch) -> Result<CorrelationReport> {
    batch.require(2)?;
    if population_variance(&batch.q) == 0.0 {
        return Err(Error::Degenerate("Q has zero sample variance".into()));
    }
    let rows = batch.integrand_rows();
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let (q, qq) = (col(0), col(3));
    let lin = batch.lin.is_some() && batch.q_bar.is_some();
    let quad = lin && batch.quad.is_some();
    Ok(CorrelationReport {
        q_lin: if lin { correlation(&q, &col(1)) } else { None },
        q_quad: if quad { correlation(&q, &col(2)) } else { None },
        var_lin: if lin { correlation(&qq, &col(4)) } else { None },
        var_quad: if quad { correlation(&qq, &col(5)) } else { None },
    })
}

/// One row of the variance-reduction tables: MSE of the plain integrand and
/// of its Taylor remainders, for the mean (`Q`) and the variance
/// (`q = (Q − Q̄)²`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReduction {
    pub samples: usize,
    pub mean_q: f64,
    pub mse_q: f64,
    pub mse_q_lin: f64,
    pub mse_q_quad: f64,
    pub mean_qq: f64,
    pub mse_qq: f64,
    pub mse_qq_lin: f64,
    pub mse_qq_quad: f64,
}

pub fn variance_reduction(batch: &SampleBatch) -> Result<VarianceReduction> {
    batch.require(2)?;
    batch.taylor_quad()?;
    let rows = batch.integrand_rows();
    let diff = |a: usize, b: usize| rows.iter().map(|r| r[a] - r[b]).collect::<Vec<f64>>();
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    Ok(VarianceReduction {
        samples: batch.len(),
        mean_q: mean(&col(0)),
        mse_q: mse(&col(0)),
        mse_q_lin: mse(&diff(0, 1)),
        mse_q_quad: mse(&diff(0, 2)),
        mean_qq: mean(&col(3)),
        mse_qq: mse(&col(3)),
        mse_qq_lin: mse(&diff(3, 4)),
        mse_qq_quad: mse(&diff(3, 5)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessact::linearize;
    use crate::model::{random_toy, QuadraticToy};
    use crate::prior::DiagonalPrior;
    use crate::randeig::double_pass_gevp;
    use alloc::vec;

    fn batch_of(q: Vec<f64>) -> SampleBatch {
        SampleBatch {
            seed: 0,
            perturbations: vec![],
            q,
            q_bar: None,
            lin: None,
            quad: None,
            counts: SolveCounts::default(),
        }
    }

    #[test]
    fn constant_q() {
        let r = saa(&batch_of(vec![3.0; 7])).unwrap();
        assert_eq!((r.mean, r.variance, r.mse_mean), (3.0, 0.0, 0.0));
        assert!(saa(&batch_of(vec![1.0])).is_err());
    }

    #[test]
    fn population_and_sample_variance() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(population_variance(&x), 1.25);
        assert!((sample_variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(mse(&x), 1.25 / 4.0);
    }

    #[test]
    fn correlation_degenerate() {
        assert_eq!(correlation(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), None);
        let c = correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
    }

    fn toy_setup(seed: u64) -> (QuadraticToy, DiagonalPrior) {
        let toy = random_toy(15, 4, 0, seed);
        let prior = DiagonalPrior::new(toy.mean.clone(), (0..15).map(|i| 0.5 + 0.1 * i as f64).collect()).unwrap();
        (toy, prior)
    }

    #[test]
    fn toy_quadratic_corrections_cancel() {
        let (toy, prior) = toy_setup(3);
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, &toy.mean, &[], &ledger).unwrap();
        let h = |x: &[f64]| lp.hess_apply(x, &ledger);
        let c = |x: &[f64]| Ok(prior.apply_c(x));
        let ci = |x: &[f64]| Ok(prior.apply_cinv(x));
        let eigs = double_pass_gevp(&h, &c, &ci, 15, 6, 4, 1).unwrap();
        let (e, v) = toy.exact_moments(&prior, &[]);
        let (eq, vq) = taylor_quad_moments(&lp, &prior, &eigs, 4).unwrap();
        assert!((eq - e).abs() < 1e-8 * e.abs().max(1.0));
        assert!((vq - v).abs() < 1e-8 * v.abs().max(1.0));
        for seed in [1, 2, 3] {
            let batch = SampleBatch::evaluate(&toy, &prior, &[], 20, seed, Some(&lp), TaylorTerms::Quadratic, &ledger).unwrap();
            for row in batch.integrand_rows() {
                assert!((row[0] - row[2]).abs() < 1e-12 * row[0].abs().max(1.0));
            }
            let r = mc_corrected_quad(&lp, &prior, &eigs, 4, &batch, None).unwrap();
            assert!((r.mean - e).abs() < 1e-8 * e.abs().max(1.0));
            assert!((r.variance - v).abs() < 1e-8 * v.abs().max(1.0));
            let corr = correlation_report(&batch).unwrap();
            assert!((corr.q_quad.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_toy_corrections_vanish() {
        let n = 10;
        let g: Vec<f64> = (0..n).map(|i| 1.0 - 0.1 * i as f64).collect();
        let toy = QuadraticToy::uncontrolled(2.0, g.clone(), vec![0.0; n], vec![], crate::linalg::DenseMat::zeros(0, 0)).unwrap();
        let prior = DiagonalPrior::standard(n);
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, &toy.mean, &[], &ledger).unwrap();
        let batch = SampleBatch::evaluate(&toy, &prior, &[], 10, 4, Some(&lp), TaylorTerms::Linear, &ledger).unwrap();
        let r = mc_corrected_lin(&lp, &prior, &batch, None).unwrap();
        assert!((r.mean - 2.0).abs() < 1e-13);
        assert!((r.variance - dot(&g, &g)).abs() < 1e-12);
        assert!(r.mse_mean < 1e-28);
    }

    #[test]
    fn variance_estimators_are_translation_invariant() {
        let (toy, prior) = toy_setup(5);
        let ledger = SolveLedger::new();
        let lp = linearize(&toy, &toy.mean, &[], &ledger).unwrap();
        let batch = SampleBatch::evaluate(&toy, &prior, &[], 12, 9, Some(&lp), TaylorTerms::Quadratic, &ledger).unwrap();
        let mut shifted_toy = toy.clone();
        shifted_toy.q0 += 123.0;
        let lp2 = linearize(&shifted_toy, &toy.mean, &[], &ledger).unwrap();
        let b2 = SampleBatch::evaluate(&shifted_toy, &prior, &[], 12, 9, Some(&lp2), TaylorTerms::Quadratic, &ledger).unwrap();
        let v1 = [saa(&batch).unwrap().variance, mc_corrected_lin(&lp, &prior, &batch, None).unwrap().variance, mc_corrected_quad_with_traces(&lp, &prior, 0.7, 0.2, &batch, None).unwrap().variance];
        let v2 = [saa(&b2).unwrap().variance, mc_corrected_lin(&lp2, &prior, &b2, None).unwrap().variance, mc_corrected_quad_with_traces(&lp2, &prior, 0.7, 0.2, &b2, None).unwrap().variance];
        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}
