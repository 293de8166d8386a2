//! Lowest-order tensor-product elements on one axis-aligned hexahedron.
//!
//! Reference coordinates are `xi in [0,1]^3`; every basis function is
//! aligned with a coordinate axis, so the cell-local orientation always
//! agrees with the global one and no sign flips are needed.

use super::quadrature::tensor_rule;
use crate::mesh::{local_curl_incidence, local_edge, local_face, transverse};
use crate::scalar::{dot3, Real, Vec3};

#[inline]
fn lin<T: Real>(d: usize, t: T) -> T {
    if d == 0 {
        T::one() - t
    } else {
        t
    }
}

/// Vertex offsets in the VTK hexahedron order used by
/// [`crate::mesh::StructuredHexMesh::cell_vertices`].
pub const VERTEX_OFFSETS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

/// Trilinear nodal basis.
pub fn vertex_basis<T: Real>(xi: [T; 3]) -> [T; 8] {
    VERTEX_OFFSETS.map(|o| lin(o[0], xi[0]) * lin(o[1], xi[1]) * lin(o[2], xi[2]))
}

/// Edge basis scaled so that each tangential line integral is one.
pub fn edge_basis<T: Real>(xi: [T; 3], h: [T; 3]) -> [Vec3<T>; 12] {
    let mut out = [[T::zero(); 3]; 12];
    for a in 0..3 {
        let (p, q) = transverse(a);
        for dq in 0..2 {
            for dp in 0..2 {
                let mut pos = [0; 3];
                pos[p] = dp;
                pos[q] = dq;
                out[local_edge(a, pos)][a] = lin(dp, xi[p]) * lin(dq, xi[q]) / h[a];
            }
        }
    }
    out
}

/// Face basis scaled so that each normal flux is one.
pub fn face_basis<T: Real>(xi: [T; 3], h: [T; 3]) -> [Vec3<T>; 6] {
    let mut out = [[T::zero(); 3]; 6];
    for a in 0..3 {
        let (p, q) = transverse(a);
        let area = h[p] * h[q];
        for side in 0..2 {
            out[local_face(a, side)][a] = lin(side, xi[a]) / area;
        }
    }
    out
}

/// Basis values at the points of a tensor Gauss rule on one cell.
#[derive(Debug, Clone)]
pub struct BasisTable<T> {
    /// Quadrature weights including the cell volume.
    pub weights: Vec<T>,
    pub points: Vec<[T; 3]>,
    pub vertex: Vec<[T; 8]>,
    pub edge: Vec<[Vec3<T>; 12]>,
    pub face: Vec<[Vec3<T>; 6]>,
}

impl<T: Real> BasisTable<T> {
    pub fn new(points_per_axis: usize, h: [T; 3]) -> Self {
        let vol = h[0] * h[1] * h[2];
        let rule = tensor_rule::<T>(points_per_axis);
        Self {
            weights: rule.iter().map(|&(_, w)| w * vol).collect(),
            points: rule.iter().map(|&(x, _)| x).collect(),
            vertex: rule.iter().map(|&(x, _)| vertex_basis(x)).collect(),
            edge: rule.iter().map(|&(x, _)| edge_basis(x, h)).collect(),
            face: rule.iter().map(|&(x, _)| face_basis(x, h)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Element matrices of a single cell. All cells of a uniform mesh share
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrices<T> {
    pub m1: [[T; 8]; 8],
    pub mc: [[T; 12]; 12],
    pub md: [[T; 6]; 6],
    /// Rows: edge test functions, columns: face trial functions.
    pub mcd: [[T; 6]; 12],
    /// Face-to-edge incidence as reals (6 x 12).
    pub curl: [[T; 12]; 6],
    pub volume: T,
}

impl<T: Real> LocalMatrices<T> {
    /// Integrate with `points_per_axis` Gauss points; two already give
    /// exact values for every product of lowest-order basis functions.
    pub fn new(h: [T; 3], points_per_axis: usize) -> Self {
        let tab = BasisTable::new(points_per_axis, h);
        let mut m = Self {
            m1: [[T::zero(); 8]; 8],
            mc: [[T::zero(); 12]; 12],
            md: [[T::zero(); 6]; 6],
            mcd: [[T::zero(); 6]; 12],
            curl: local_curl_incidence().map(|row| row.map(|v| T::lit(f64::from(v)))),
            volume: h[0] * h[1] * h[2],
        };
        for q in 0..tab.len() {
            let w = tab.weights[q];
            let (nv, ne, nf) = (&tab.vertex[q], &tab.edge[q], &tab.face[q]);
            for i in 0..8 {
                for j in 0..8 {
                    m.m1[i][j] += w * nv[i] * nv[j];
                }
            }
            for i in 0..12 {
                for j in 0..12 {
                    m.mc[i][j] += w * dot3(&ne[i], &ne[j]);
                }
                for j in 0..6 {
                    m.mcd[i][j] += w * dot3(&ne[i], &nf[j]);
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    m.md[i][j] += w * dot3(&nf[i], &nf[j]);
                }
            }
        }
        m
    }

    /// `curl^T * md * b` for local face values `b`.
    pub fn curl_t_md(&self, b: &[T; 6]) -> [T; 12] {
        let mut mb = [T::zero(); 6];
        for i in 0..6 {
            for j in 0..6 {
                mb[i] += self.md[i][j] * b[j];
            }
        }
        let mut out = [T::zero(); 12];
        for f in 0..6 {
            if mb[f] != T::zero() {
                for e in 0..12 {
                    out[e] += self.curl[f][e] * mb[f];
                }
            }
        }
        out
    }

    /// `curl * e` for local edge values.
    pub fn curl_apply(&self, e: &[T]) -> [T; 6] {
        let mut out = [T::zero(); 6];
        for f in 0..6 {
            for k in 0..12 {
                out[f] += self.curl[f][k] * e[k];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_curl(xi: [f64; 3], h: [f64; 3], slot: usize) -> Vec3<f64> {
        // finite-difference curl in physical coordinates
        let eps = 1e-6;
        let f = |x: [f64; 3]| edge_basis(x, h)[slot];
        let d = |comp: usize, axis: usize| {
            let mut p = xi;
            let mut m = xi;
            p[axis] += eps;
            m[axis] -= eps;
            (f(p)[comp] - f(m)[comp]) / (2.0 * eps * h[axis])
        };
        [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
    }

    #[test]
    fn curl_of_edge_basis_is_incidence_combination() {
        let h = [0.7, 1.3, 2.0];
        let inc = local_curl_incidence();
        for &xi in &[[0.3, 0.6, 0.2], [0.9, 0.1, 0.5]] {
            let fb = face_basis(xi, h);
            for e in 0..12 {
                let c = fd_curl(xi, h, e);
                let mut expect = [0.0; 3];
                for f in 0..6 {
                    for k in 0..3 {
                        expect[k] += f64::from(inc[f][e]) * fb[f][k];
                    }
                }
                for k in 0..3 {
                    assert!((c[k] - expect[k]).abs() < 1e-7, "edge {e} comp {k}: {} vs {}", c[k], expect[k]);
                }
            }
        }
    }

    #[test]
    fn unit_dofs() {
        let h = [0.5, 2.0, 3.0];
        // line integral along edge slot with transverse positions = basis corner
        for a in 0..3 {
            let (p, q) = transverse(a);
            for (dp, dq) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let mut xi = [0.5; 3];
                xi[p] = dp as f64;
                xi[q] = dq as f64;
                let mut pos = [0; 3];
                pos[p] = dp;
                pos[q] = dq;
                let v = edge_basis(xi, h)[local_edge(a, pos)][a];
                assert!((v * h[a] - 1.0).abs() < 1e-15);
            }
        }
        let fb = face_basis([1.0, 0.5, 0.5], h);
        assert!((fb[local_face(0, 1)][0] * h[1] * h[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_rule_matches_five_point() {
        let h = [0.3, 1.7, 2.2];
        let a = LocalMatrices::<f64>::new(h, 2);
        let b = LocalMatrices::<f64>::new(h, 5);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-13 * y.abs().max(1e-300);
        for i in 0..12 {
            for j in 0..12 {
                assert!(close(a.mc[i][j], b.mc[i][j]) || b.mc[i][j].abs() < 1e-15);
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!(close(a.md[i][j], b.md[i][j]) || b.md[i][j].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mixed_mass_entries() {
        // (phi_e, psi_f) = 1/8 for aligned pairs on any cell
        let m = LocalMatrices::<f64>::new([0.4, 1.0, 2.5], 2);
        for e in 0..12 {
            for f in 0..6 {
                let expect = if e / 4 == f / 2 { 0.125 } else { 0.0 };
                assert!((m.mcd[e][f] - expect).abs() < 1e-15);
            }
        }
    }
}
