use alloc::format;

use super::{CsrMatrix, Mesh2D, TripletBuilder};
use crate::{float, Error, Result};

/// Symmetric 2×2 tensor `[[a11, a12], [a12, a22]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Tensor2 {
    pub const IDENTITY: Tensor2 = Tensor2 {
        a11: 1.0,
        a12: 0.0,
        a22: 1.0,
    };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn is_spd(&self) -> bool {
        self.a11 > 0.0 && self.a11 * self.a22 - self.a12 * self.a12 > 0.0
    }

    pub fn check_spd(&self) -> Result<()> {
        if self.is_spd() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "tensor [{}, {}; {}, {}] is not positive definite",
                self.a11, self.a12, self.a12, self.a22
            )))
        }
    }

    /// `gᵀ Θ h`
    #[inline]
    pub fn inner(&self, g: [f64; 2], h: [f64; 2]) -> f64 {
        g[0] * (self.a11 * h[0] + self.a12 * h[1]) + g[1] * (self.a12 * h[0] + self.a22 * h[1])
    }
}

/// Area and constant gradients of the three P1 basis functions on triangle `t`.
pub fn element_gradients(mesh: &Mesh2D, t: usize) -> (f64, [[f64; 2]; 3]) {
    let [a, b, c] = mesh.triangles[t];
    let (pa, pb, pc) = (mesh.coords[a], mesh.coords[b], mesh.coords[c]);
    let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    let area = 0.5 * det;
    let grads = [
        [(pb[1] - pc[1]) / det, (pc[0] - pb[0]) / det],
        [(pc[1] - pa[1]) / det, (pa[0] - pc[0]) / det],
        [(pa[1] - pb[1]) / det, (pb[0] - pa[0]) / det],
    ];
    (area, grads)
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh2D) -> CsrMatrix {
    let n = mesh.num_nodes();
    let mut b = TripletBuilder::new(n, n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        for i in 0..3 {
            for j in 0..3 {
                let w = if i == j { 2.0 } else { 1.0 };
                b.push(tri[i], tri[j], area * w / 12.0);
            }
        }
    }
    b.build(true)
}

/// P1 stiffness matrix of `-∇·(κ Θ ∇·)`.
///
/// With `coeff = Some(m)` the element coefficient is `κ = exp(m_c)`, where
/// `m_c` is the P1 interpolant of `m` at the element centroid; otherwise
/// `κ = 1`.
pub fn assemble_stiffness(mesh: &Mesh2D, theta: Tensor2, coeff: Option<&[f64]>) -> Result<CsrMatrix> {
    theta.check_spd()?;
    let n = mesh.num_nodes();
    if let Some(m) = coeff {
        if m.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.len(),
            });
        }
    }
    let mut b = TripletBuilder::new(n, n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (area, g) = element_gradients(mesh, t);
        let kappa = match coeff {
            Some(m) => float::exp((m[tri[0]] + m[tri[1]] + m[tri[2]]) / 3.0),
            None => 1.0,
        };
        for i in 0..3 {
            for j in 0..3 {
                b.push(tri[i], tri[j], kappa * area * theta.inner(g[i], g[j]));
            }
        }
    }
    Ok(b.build(true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn mass_integrates_one() {
        let m = assemble_mass(&Mesh2D::new(2, 2, 1.0, 1.0).unwrap());
        assert!((m.total_sum() - 1.0).abs() < 1e-14);
        let m = assemble_mass(&Mesh2D::new(64, 32, 2.0, 1.0).unwrap());
        assert!((m.total_sum() - 2.0).abs() < 1e-12);
        let lumped = m.row_sums();
        assert!((lumped.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(m.asymmetry() < 1e-14);
    }

    #[test]
    fn stiffness_kills_constants() {
        let mesh = Mesh2D::new(7, 5, 2.0, 1.0).unwrap();
        let coeff: Vec<f64> = mesh.coords.iter().map(|p| p[0] * p[1]).collect();
        let a = assemble_stiffness(&mesh, Tensor2::new(2.0, 0.3, 1.0), Some(&coeff)).unwrap();
        let y = a.matvec(&vec![1.0; mesh.num_nodes()]);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        assert!(a.asymmetry() < 1e-14);
    }

    #[test]
    fn zero_coefficient_is_plain_laplacian() {
        let mesh = Mesh2D::new(4, 4, 1.0, 1.0).unwrap();
        let zero = vec![0.0; mesh.num_nodes()];
        let a0 = assemble_stiffness(&mesh, Tensor2::IDENTITY, Some(&zero)).unwrap();
        let a1 = assemble_stiffness(&mesh, Tensor2::IDENTITY, None).unwrap();
        assert_eq!(a0, a1);
    }

    #[test]
    fn rejects_indefinite_tensor() {
        let mesh = Mesh2D::new(2, 2, 1.0, 1.0).unwrap();
        assert!(assemble_stiffness(&mesh, Tensor2::new(1.0, 2.0, 1.0), None).is_err());
        assert!(assemble_stiffness(&mesh, Tensor2::new(-1.0, 0.0, 1.0), None).is_err());
    }
}
