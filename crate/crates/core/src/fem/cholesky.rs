use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::CsrMatrix;
use crate::{float, linalg, Error, Result};

/// Reverse Cuthill–McKee ordering of a structurally symmetric matrix.
/// Returns `perm` with `perm[new] = old`.
fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows;
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // start each component from an unvisited node of minimum degree
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            let mut nbrs: Vec<usize> = a.row(i).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factor `P A Pᵀ = L Lᵀ` under an RCM ordering.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    /// first stored column of each row of `L`
    first: Vec<usize>,
    /// start of row `i` inside `values`; row `i` holds columns `first[i]..=i`
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch {
                expected: a.nrows,
                got: a.ncols,
            });
        }
        let n = a.nrows;
        let perm = rcm_ordering(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                let jn = inv[j];
                if jn < first[new] {
                    first[new] = jn;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            offset.push(total);
            total += i - first[i] + 1;
        }
        offset.push(total);
        let mut values = vec![0.0; total];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let jn = inv[j];
                if jn <= new {
                    values[offset[new] + jn - first[new]] += v;
                }
            }
        }

        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(float::abs(*v)));
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = values[offset[i] + j - fi];
                let ri = &values[offset[i] + k0 - fi..offset[i] + j - fi];
                let rj = &values[offset[j] + k0 - fj..offset[j] + j - fj];
                s -= linalg::dot(ri, rj);
                let ljj = values[offset[j + 1] - 1];
                values[offset[i] + j - fi] = s / ljj;
            }
            let row = &values[offset[i]..offset[i + 1] - 1];
            let d = values[offset[i + 1] - 1] - linalg::dot(row, row);
            if d <= 1e-14 * scale {
                // a relative-zero pivot is singularity, anything clearly negative is indefiniteness
                if d >= -1e-14 * scale {
                    return Err(Error::Singular { pivot: perm[i] });
                }
                return Err(Error::Indefinite {
                    pivot: perm[i],
                    value: d,
                });
            }
            values[offset[i + 1] - 1] = float::sqrt(d);
        }
        Ok(Self {
            n,
            perm,
            first,
            offset,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = Pb
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1] - 1];
            let s = y[i] - linalg::dot(row, &y[fi..i]);
            y[i] = s / self.values[self.offset[i + 1] - 1];
        }
        // Lᵀ x = y, column sweep
        for i in (0..n).rev() {
            y[i] /= self.values[self.offset[i + 1] - 1];
            let xi = y[i];
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1] - 1];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Conjugate-gradient settings for the iterative fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// A reusable solver for one SPD matrix.
#[derive(Debug, Clone)]
pub enum SolverHandle {
    Direct(EnvelopeCholesky),
    Cg { matrix: CsrMatrix, config: CgConfig },
}

/// Sparse direct factorization of an SPD matrix.
pub fn factorize(a: &CsrMatrix) -> Result<SolverHandle> {
    EnvelopeCholesky::factor(a).map(SolverHandle::Direct)
}

impl SolverHandle {
    pub fn cg(matrix: CsrMatrix, config: CgConfig) -> Self {
        SolverHandle::Cg { matrix, config }
    }

    pub fn dim(&self) -> usize {
        match self {
            SolverHandle::Direct(f) => f.dim(),
            SolverHandle::Cg { matrix, .. } => matrix.nrows,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SolverHandle::Direct(f) => Ok(f.solve(b)),
            SolverHandle::Cg { matrix, config } => pcg(matrix, b, *config),
        }
    }
}

/// Jacobi-preconditioned conjugate gradients.
fn pcg(a: &CsrMatrix, b: &[f64], cfg: CgConfig) -> Result<Vec<f64>> {
    let n = a.nrows;
    let diag = a.diagonal();
    let bnorm = linalg::norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = linalg::dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..cfg.max_iter {
        a.matvec_into(&p, &mut ap);
        let alpha = rz / linalg::dot(&p, &ap);
        linalg::axpy(alpha, &p, &mut x);
        linalg::axpy(-alpha, &ap, &mut r);
        let rn = linalg::norm2(&r);
        if rn <= cfg.rel_tol * bnorm {
            return Ok(x);
        }
        if it + 1 == cfg.max_iter {
            return Err(Error::CgNotConverged {
                iterations: cfg.max_iter,
                residual: rn / bnorm,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = linalg::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgNotConverged {
        iterations: cfg.max_iter,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, Mesh2D, Tensor2, TripletBuilder};

    fn spd_system() -> CsrMatrix {
        let mesh = Mesh2D::new(9, 6, 2.0, 1.0).unwrap();
        let k = assemble_stiffness(&mesh, Tensor2::IDENTITY, None).unwrap();
        let m = assemble_mass(&mesh);
        k.linear_combination(0.1, &m, 20.0)
    }

    fn rel_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let r = linalg::sub(&a.matvec(x), b);
        linalg::norm_inf(&r) / linalg::norm_inf(b)
    }

    #[test]
    fn identity_solve() {
        let f = factorize(&CsrMatrix::identity(5)).unwrap();
        let b = [1.0, -2.0, 3.0, 0.5, 0.0];
        assert_eq!(f.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn direct_and_cg_agree() {
        let a = spd_system();
        let b: Vec<f64> = (0..a.nrows).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x = factorize(&a).unwrap().solve(&b).unwrap();
        assert!(rel_residual(&a, &x, &b) < 1e-12);
        let y = SolverHandle::cg(a.clone(), CgConfig::default()).solve(&b).unwrap();
        assert!(rel_residual(&a, &y, &b) < 1e-10);
        assert!(linalg::norm_inf(&linalg::sub(&x, &y)) < 1e-8 * linalg::norm_inf(&x));
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let a = spd_system();
        let f = factorize(&a).unwrap();
        let b: Vec<f64> = (0..a.nrows).map(|i| (i as f64).sin()).collect();
        assert_eq!(f.solve(&b).unwrap(), f.solve(&b).unwrap());
    }

    #[test]
    fn indefinite_and_singular_are_distinguished() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 0, 2.0);
        t.push(1, 1, 1.0);
        assert!(matches!(factorize(&t.build(true)), Err(Error::Indefinite { .. })));
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 1.0);
        assert!(matches!(factorize(&t.build(true)), Err(Error::Singular { .. })));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = spd_system();
        let mut p = rcm_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..a.nrows).collect::<Vec<_>>());
    }
}
