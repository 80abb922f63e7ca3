//! Gaussian priors for the uncertain parameter.
//!
//! Parameter vectors (primal) and gradient-like vectors (dual) share the
//! nodal layout; `C` maps dual to primal, `C⁻¹` primal to dual, and every
//! pairing is the plain coefficient dot product.

use alloc::format;
use alloc::vec::Vec;

use crate::fem::{assemble_mass, assemble_stiffness, CsrMatrix, EnvelopeCholesky, Mesh2D, NormalStream, Tensor2};
use crate::{float, Error, Result};

/// Covariance operator actions needed by the estimators.
pub trait GaussianPrior: Sync {
    fn dim(&self) -> usize;
    fn mean(&self) -> &[f64];
    /// `C g` for a dual vector `g`.
    fn apply_c(&self, g: &[f64]) -> Vec<f64>;
    /// `C⁻¹ p` for a primal vector `p`.
    fn apply_cinv(&self, p: &[f64]) -> Vec<f64>;
    /// `L ξ` for a factor with `L Lᵀ = C`.
    fn apply_sqrt_c(&self, xi: &[f64]) -> Vec<f64>;
    /// `Lᵀ g`.
    fn apply_sqrt_c_transpose(&self, g: &[f64]) -> Vec<f64>;

    /// `m̄ + L ξ` with `ξ ~ N(0, I)` drawn from `rng`.
    fn sample(&self, rng: &mut NormalStream) -> Vec<f64> {
        let xi = rng.normal_vec(self.dim());
        self.sample_from_noise(&xi)
    }

    fn sample_from_noise(&self, xi: &[f64]) -> Vec<f64> {
        let mut m = self.apply_sqrt_c(xi);
        for (mi, mb) in m.iter_mut().zip(self.mean()) {
            *mi += mb;
        }
        m
    }
}

/// Matérn-type field with `α = 2`: `C = K⁻¹ M_L K⁻¹`, `K = α₁ A_Θ + α₂ M`.
#[derive(Debug, Clone)]
pub struct MaternPrior {
    pub mesh: Mesh2D,
    pub mean: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub theta: Tensor2,
    pub k: CsrMatrix,
    pub mass: CsrMatrix,
    pub lumped: Vec<f64>,
    sqrt_lumped: Vec<f64>,
    k_factor: EnvelopeCholesky,
}

impl MaternPrior {
    pub fn new(mesh: &Mesh2D, mean: Vec<f64>, alpha1: f64, alpha2: f64, theta: Tensor2) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha1 and alpha2 must be positive, got {alpha1} and {alpha2}"
            )));
        }
        if mean.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_nodes(),
                got: mean.len(),
            });
        }
        let stiff = assemble_stiffness(mesh, theta, None)?;
        let mass = assemble_mass(mesh);
        let k = stiff.linear_combination(alpha1, &mass, alpha2);
        let lumped = mass.row_sums();
        let sqrt_lumped = lumped.iter().map(|v| float::sqrt(*v)).collect();
        let k_factor = EnvelopeCholesky::factor(&k)?;
        Ok(Self {
            mesh: mesh.clone(),
            mean,
            alpha1,
            alpha2,
            theta,
            k,
            mass,
            lumped,
            sqrt_lumped,
            k_factor,
        })
    }
}

impl GaussianPrior for MaternPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn apply_c(&self, g: &[f64]) -> Vec<f64> {
        let mut y = self.k_factor.solve(g);
        for (yi, l) in y.iter_mut().zip(&self.lumped) {
            *yi *= l;
        }
        self.k_factor.solve(&y)
    }

    fn apply_cinv(&self, p: &[f64]) -> Vec<f64> {
        let mut y = self.k.matvec(p);
        for (yi, l) in y.iter_mut().zip(&self.lumped) {
            *yi /= l;
        }
        self.k.matvec(&y)
    }

    fn apply_sqrt_c(&self, xi: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = xi.iter().zip(&self.sqrt_lumped).map(|(x, s)| x * s).collect();
        self.k_factor.solve(&y)
    }

    fn apply_sqrt_c_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut y = self.k_factor.solve(g);
        for (yi, s) in y.iter_mut().zip(&self.sqrt_lumped) {
            *yi *= s;
        }
        y
    }
}

/// Independent components: `C = diag(variances)`.
#[derive(Debug, Clone)]
pub struct DiagonalPrior {
    pub mean: Vec<f64>,
    pub variances: Vec<f64>,
}

impl DiagonalPrior {
    pub fn new(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: variances.len(),
            });
        }
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("variances must be positive".into()));
        }
        Ok(Self { mean, variances })
    }

    /// Standard normal: zero mean, identity covariance.
    pub fn standard(n: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; n],
            variances: alloc::vec![1.0; n],
        }
    }
}

impl GaussianPrior for DiagonalPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn apply_c(&self, g: &[f64]) -> Vec<f64> {
        g.iter().zip(&self.variances).map(|(x, v)| x * v).collect()
    }

    fn apply_cinv(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.variances).map(|(x, v)| x / v).collect()
    }

    fn apply_sqrt_c(&self, xi: &[f64]) -> Vec<f64> {
        xi.iter().zip(&self.variances).map(|(x, v)| x * float::sqrt(*v)).collect()
    }

    fn apply_sqrt_c_transpose(&self, g: &[f64]) -> Vec<f64> {
        self.apply_sqrt_c(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm_inf, sub};
    use alloc::vec;

    fn coarse() -> MaternPrior {
        let mesh = Mesh2D::new(6, 4, 2.0, 1.0).unwrap();
        let n = mesh.num_nodes();
        MaternPrior::new(&mesh, vec![0.5; n], 0.1, 20.0, Tensor2::IDENTITY).unwrap()
    }

    fn probe(n: usize, seed: u64) -> Vec<f64> {
        NormalStream::new(seed, 9).normal_vec(n)
    }

    #[test]
    fn rejects_nonpositive_alphas() {
        let mesh = Mesh2D::new(4, 4, 1.0, 1.0).unwrap();
        let n = mesh.num_nodes();
        assert!(MaternPrior::new(&mesh, vec![0.0; n], 0.0, 20.0, Tensor2::IDENTITY).is_err());
        assert!(MaternPrior::new(&mesh, vec![0.0; n], 0.1, -1.0, Tensor2::IDENTITY).is_err());
        assert!(MaternPrior::new(&mesh, vec![0.0; n], 0.1, 1.0, Tensor2::new(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn paper_configuration_builds() {
        let mesh = Mesh2D::new(64, 32, 2.0, 1.0).unwrap();
        let n = mesh.num_nodes();
        let p = MaternPrior::new(&mesh, vec![0.0; n], 0.1, 20.0, Tensor2::IDENTITY).unwrap();
        assert_eq!(p.dim(), 2145);
    }

    #[test]
    fn c_and_cinv_are_inverse() {
        let p = coarse();
        let g = probe(p.dim(), 1);
        let back = p.apply_cinv(&p.apply_c(&g));
        assert!(norm_inf(&sub(&back, &g)) <= 1e-8 * norm_inf(&g));
        let zero = p.apply_c(&vec![0.0; p.dim()]);
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn self_adjoint_and_positive() {
        let p = coarse();
        let g1 = probe(p.dim(), 2);
        let g2 = probe(p.dim(), 3);
        let a = dot(&g1, &p.apply_c(&g2));
        let b = dot(&g2, &p.apply_c(&g1));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        assert!(dot(&g1, &p.apply_c(&g1)) > 0.0);
    }

    #[test]
    fn doubling_alpha2_shrinks_variance() {
        let p = coarse();
        let q = MaternPrior::new(&p.mesh, p.mean.clone(), p.alpha1, 2.0 * p.alpha2, p.theta).unwrap();
        for seed in 0..5 {
            let g = probe(p.dim(), 100 + seed);
            assert!(dot(&g, &q.apply_c(&g)) < dot(&g, &p.apply_c(&g)));
        }
    }

    #[test]
    fn zero_noise_gives_mean() {
        let p = coarse();
        assert_eq!(p.sample_from_noise(&vec![0.0; p.dim()]), p.mean);
        let mut r1 = NormalStream::new(5, 0);
        let mut r2 = NormalStream::new(5, 0);
        assert_eq!(p.sample(&mut r1), p.sample(&mut r2));
    }
}
