use ouu_core::fem::{assemble_mass, assemble_stiffness, CsrMatrix, Mesh2D, Tensor2};
use proptest::prelude::*;

/// Dense reference assembly with the edge-midpoint rule (exact for
/// quadratics) and basis gradients from finite differences of the
/// barycentric coordinates.
fn reference(mesh: &Mesh2D, theta: Tensor2, coeff: Option<&[f64]>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = mesh.num_nodes();
    let mut m = vec![vec![0.0; n]; n];
    let mut k = vec![vec![0.0; n]; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p: Vec<[f64; 2]> = tri.iter().map(|&i| mesh.coords[i]).collect();
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
        let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        let h = 1e-6;
        let grads: Vec<[f64; 2]> = (0..3)
            .map(|i| {
                let f = |q: [f64; 2]| mesh.barycentric(t, q)[i];
                [
                    (f([c[0] + h, c[1]]) - f([c[0] - h, c[1]])) / (2.0 * h),
                    (f([c[0], c[1] + h]) - f([c[0], c[1] - h])) / (2.0 * h),
                ]
            })
            .collect();
        let kappa = coeff.map_or(1.0, |m| ((m[tri[0]] + m[tri[1]] + m[tri[2]]) / 3.0).exp());
        let mids = [
            [(p[0][0] + p[1][0]) / 2.0, (p[0][1] + p[1][1]) / 2.0],
            [(p[1][0] + p[2][0]) / 2.0, (p[1][1] + p[2][1]) / 2.0],
            [(p[2][0] + p[0][0]) / 2.0, (p[2][1] + p[0][1]) / 2.0],
        ];
        for a in 0..3 {
            for b in 0..3 {
                let mass: f64 = mids.iter().map(|&q| mesh.barycentric(t, q)[a] * mesh.barycentric(t, q)[b]).sum::<f64>() * area / 3.0;
                m[tri[a]][tri[b]] += mass;
                k[tri[a]][tri[b]] += kappa * area * theta.inner(grads[a], grads[b]);
            }
        }
    }
    (m, k)
}

fn max_diff(a: &CsrMatrix, b: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d = d.max((a.get(i, j) - v).abs());
        }
    }
    d
}

#[test]
fn four_by_four_assembly_matches_quadrature() {
    let mesh = Mesh2D::new(4, 4, 2.0, 1.0).unwrap();
    let theta = Tensor2::new(2.0, 0.3, 0.5);
    let coeff: Vec<f64> = mesh.coords.iter().map(|p| (3.0 * p[0]).sin() + p[1]).collect();
    let (m_ref, k_ref) = reference(&mesh, theta, Some(&coeff));
    assert!(max_diff(&assemble_mass(&mesh), &m_ref) < 1e-14);
    // the reference gradients carry finite-difference error
    assert!(max_diff(&assemble_stiffness(&mesh, theta, Some(&coeff)).unwrap(), &k_ref) < 1e-7);
    let (_, k1) = reference(&mesh, Tensor2::IDENTITY, None);
    assert!(max_diff(&assemble_stiffness(&mesh, Tensor2::IDENTITY, None).unwrap(), &k1) < 1e-7);
}

fn quad_form(a: &CsrMatrix, u: &[f64]) -> f64 {
    a.matvec(u).iter().zip(u).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn linear_functions_are_integrated_exactly(
        nx in 2usize..9, ny in 2usize..9, lx in 0.5f64..3.0, ly in 0.5f64..3.0,
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
        t11 in 0.5f64..3.0, t12 in -0.4f64..0.4, t22 in 0.5f64..3.0,
    ) {
        let mesh = Mesh2D::new(nx, ny, lx, ly).unwrap();
        let u: Vec<f64> = mesh.coords.iter().map(|p| a + b * p[0] + c * p[1]).collect();
        // ∫(a + bx + cy)² over the rectangle
        let exact = lx * ly * (a * a + a * b * lx + a * c * ly + b * b * lx * lx / 3.0 + c * c * ly * ly / 3.0 + b * c * lx * ly / 2.0);
        let mass = quad_form(&assemble_mass(&mesh), &u);
        prop_assert!((mass - exact).abs() <= 1e-11 * exact.abs().max(1.0));
        let theta = Tensor2::new(t11, t12, t22);
        let energy = quad_form(&assemble_stiffness(&mesh, theta, None).unwrap(), &u);
        let exact = lx * ly * theta.inner([b, c], [b, c]);
        prop_assert!((energy - exact).abs() <= 1e-11 * exact.abs().max(1.0));
    }

    #[test]
    fn stiffness_annihilates_constants(nx in 2usize..9, ny in 2usize..9, shift in -3.0f64..3.0) {
        let mesh = Mesh2D::new(nx, ny, 2.0, 1.0).unwrap();
        let coeff: Vec<f64> = mesh.coords.iter().map(|p| shift + p[0] * p[1]).collect();
        let k = assemble_stiffness(&mesh, Tensor2::IDENTITY, Some(&coeff)).unwrap();
        let r = k.matvec(&vec![1.0; mesh.num_nodes()]);
        prop_assert!(r.iter().all(|x| x.abs() < 1e-11));
    }
}
