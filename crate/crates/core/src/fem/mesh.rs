use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Boundary classification of a node on the rectangle `(0,Lx)×(0,Ly)`.
///
/// Left/right edges (corners included) are Dirichlet, top/bottom are Neumann.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    DirichletLeft,
    DirichletRight,
    NeumannBottom,
    NeumannTop,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, BoundaryTag::DirichletLeft | BoundaryTag::DirichletRight)
    }
}

/// Structured triangulation of a rectangle; every cell is cut along its
/// lower-left to upper-right diagonal. Nodes are numbered with `x` fastest.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub coords: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<BoundaryTag>,
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 cells per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidMesh(format!("domain lengths must be positive, got {lx}x{ly}")));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut tags = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([i as f64 * hx, j as f64 * hy]);
                let tag = if i == 0 {
                    BoundaryTag::DirichletLeft
                } else if i == nx {
                    BoundaryTag::DirichletRight
                } else if j == 0 {
                    BoundaryTag::NeumannBottom
                } else if j == ny {
                    BoundaryTag::NeumannTop
                } else {
                    BoundaryTag::Interior
                };
                tags.push(tag);
            }
        }
        let node = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            coords,
            triangles,
            tags,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of triangle `t` (positive for counter-clockwise vertices).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.coords[a], self.coords[b], self.coords[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.tags[node].is_dirichlet()
    }

    pub fn dirichlet_mask(&self) -> Vec<bool> {
        self.tags.iter().map(|t| t.is_dirichlet()).collect()
    }

    /// Locates the triangle containing `p` and the barycentric weights of `p`
    /// with respect to its vertices.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        let eps = 1e-12;
        if p[0] < -eps || p[0] > self.lx + eps || p[1] < -eps || p[1] > self.ly + eps {
            return Err(Error::InvalidArgument(format!(
                "point ({}, {}) lies outside the domain",
                p[0], p[1]
            )));
        }
        let hx = self.lx / self.nx as f64;
        let hy = self.ly / self.ny as f64;
        let i = ((p[0] / hx) as usize).min(self.nx - 1);
        let j = ((p[1] / hy) as usize).min(self.ny - 1);
        let cell = j * self.nx + i;
        for t in [2 * cell, 2 * cell + 1] {
            let w = self.barycentric(t, p);
            if w.iter().all(|&x| x >= -1e-12) {
                return Ok((t, w));
            }
        }
        Err(Error::InvalidArgument(format!(
            "failed to locate point ({}, {})",
            p[0], p[1]
        )))
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.coords[a], self.coords[b], self.coords[c]);
        let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        let l1 = ((p[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (p[1] - pa[1])) / det;
        let l2 = ((pb[0] - pa[0]) * (p[1] - pa[1]) - (p[0] - pa[0]) * (pb[1] - pa[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Piecewise-linear interpolation of a nodal field at `p`.
    pub fn interpolate(&self, field: &[f64], p: [f64; 2]) -> Result<f64> {
        let (t, w) = self.locate(p)?;
        let tri = self.triangles[t];
        Ok((0..3).map(|k| w[k] * field[tri[k]]).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_resolution_counts() {
        let m = Mesh2D::new(64, 32, 2.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 2145);
        assert_eq!(m.num_triangles(), 4096);
    }

    #[test]
    fn smallest_mesh() {
        let m = Mesh2D::new(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 9);
        assert_eq!(m.num_triangles(), 8);
        assert!(Mesh2D::new(1, 4, 1.0, 1.0).is_err());
        assert!(Mesh2D::new(4, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn areas_positive_and_sum_to_domain() {
        let m = Mesh2D::new(16, 8, 2.0, 1.0).unwrap();
        let mut total = 0.0;
        for t in 0..m.num_triangles() {
            let a = m.signed_area(t);
            assert!(a > 0.0);
            total += a;
        }
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn refinement_quadruples_triangles() {
        let coarse = Mesh2D::new(8, 4, 2.0, 1.0).unwrap();
        let fine = Mesh2D::new(16, 8, 2.0, 1.0).unwrap();
        assert_eq!(fine.num_triangles(), 4 * coarse.num_triangles());
    }

    #[test]
    fn boundary_tags() {
        let m = Mesh2D::new(4, 3, 2.0, 1.0).unwrap();
        // corners are Dirichlet, top/bottom interior edges Neumann
        assert_eq!(m.tags[0], BoundaryTag::DirichletLeft);
        assert_eq!(m.tags[4], BoundaryTag::DirichletRight);
        assert_eq!(m.tags[2], BoundaryTag::NeumannBottom);
        assert_eq!(m.tags[m.num_nodes() - 3], BoundaryTag::NeumannTop);
        assert_eq!(m.tags[6], BoundaryTag::Interior);
        let n_dir = m.tags.iter().filter(|t| t.is_dirichlet()).count();
        assert_eq!(n_dir, 2 * 4);
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let m = Mesh2D::new(5, 4, 2.0, 1.0).unwrap();
        let f: Vec<f64> = m.coords.iter().map(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1]).collect();
        for p in [[0.31, 0.77], [1.99, 0.01], [0.0, 0.0], [2.0, 1.0], [1.234, 0.5]] {
            let v = m.interpolate(&f, p).unwrap();
            assert!((v - (1.0 + 2.0 * p[0] - 3.0 * p[1])).abs() < 1e-12);
        }
        assert!(m.locate([2.5, 0.5]).is_err());
    }
}
