use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::DenseMat;
use crate::{float, Error, Result};

/// Eigendecomposition of a dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Sorted by decreasing magnitude.
    pub values: Vec<f64>,
    /// Column `j` pairs with `values[j]`; orthonormal.
    pub vectors: DenseMat,
}

/// Symmetric eigensolver: Householder tridiagonalization followed by the
/// implicit QL iteration. Eigenvalues come back sorted by `|λ|` descending.
pub fn dense_sym_eig(a: &DenseMat) -> Result<SymEig> {
    if a.nrows != a.ncols {
        return Err(Error::DimensionMismatch {
            expected: a.nrows,
            got: a.ncols,
        });
    }
    let n = a.nrows;
    if n == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: DenseMat::zeros(0, 0),
        });
    }
    let mut z = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut z, &mut d, &mut e)?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        float::abs(d[j])
            .partial_cmp(&float::abs(d[i]))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(d[j].partial_cmp(&d[i]).unwrap_or(core::cmp::Ordering::Equal))
    });
    let values = idx.iter().map(|&i| d[i]).collect();
    let mut vectors = DenseMat::zeros(n, n);
    for (newj, &oldj) in idx.iter().enumerate() {
        for i in 0..n {
            vectors[(i, newj)] = z[(i, oldj)];
        }
    }
    Ok(SymEig { values, vectors })
}

// Householder reduction to tridiagonal form (EISPACK tred2), accumulating the
// orthogonal transform in `v`.
fn tred2(v: &mut DenseMat, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += float::abs(d[k]);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = float::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e) (EISPACK tql2).
fn tql2(v: &mut DenseMat, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    const MAX_ITER: usize = 60;
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(float::abs(d[l]) + float::abs(e[l]));
        let mut m = l;
        while m < n {
            if float::abs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_ITER {
                    return Err(Error::EigNotConverged { iterations: MAX_ITER });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = float::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = float::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if float::abs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Dense LU solve with partial pivoting, used by oracles and tiny systems.
pub fn dense_solve(a: &DenseMat, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows;
    if a.ncols != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if float::abs(m[(i, k)]) > float::abs(m[(piv, k)]) {
                piv = i;
            }
        }
        if m[(piv, k)] == 0.0 {
            return Err(Error::Singular { pivot: k });
        }
        if piv != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                let mkj = m[(k, j)];
                m[(i, j)] -= f * mkj;
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_sorted_by_magnitude() {
        let mut a = DenseMat::zeros(3, 3);
        a[(0, 0)] = 3.0;
        a[(1, 1)] = 1.0;
        a[(2, 2)] = 2.0;
        let e = dense_sym_eig(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn negative_eigenvalues_rank_by_magnitude() {
        let mut a = DenseMat::zeros(3, 3);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = -5.0;
        a[(2, 2)] = 2.0;
        let e = dense_sym_eig(&a).unwrap();
        assert_eq!(e.values, vec![-5.0, 2.0, 1.0]);
    }

    #[test]
    fn rank_one() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let mut a = DenseMat::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] = v[i] * v[j];
            }
        }
        let e = dense_sym_eig(&a).unwrap();
        let nv2: f64 = v.iter().map(|x| x * x).sum();
        assert!((e.values[0] - nv2).abs() < 1e-12);
        for &l in &e.values[1..] {
            assert!(l.abs() < 1e-12);
        }
    }

    #[test]
    fn one_by_one_and_empty() {
        let mut a = DenseMat::zeros(1, 1);
        a[(0, 0)] = -4.0;
        let e = dense_sym_eig(&a).unwrap();
        assert_eq!(e.values, vec![-4.0]);
        assert_eq!(e.vectors[(0, 0)].abs(), 1.0);
        assert!(dense_sym_eig(&DenseMat::zeros(0, 0)).unwrap().values.is_empty());
    }

    #[test]
    fn lu_solve() {
        let mut a = DenseMat::zeros(3, 3);
        let vals = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = vals[i][j];
            }
        }
        let x = dense_solve(&a, &[5.0, 3.0, 6.0]).unwrap();
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip([5.0, 3.0, 6.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }
}
