use std::sync::OnceLock;

use super::element::{BasisTable, LocalMatrices};
use super::space::{FieldCoefficients, Space, SpaceKind};
use super::FeecError;
use crate::linalg::{CsrMatrix, DirectSolver};
use crate::mesh::{EntityRef, StructuredHexMesh};
use crate::scalar::Real;

/// Gauss points per direction for the mass matrices.
pub const MASS_POINTS: usize = 2;
/// Gauss points per direction for cubic and quintic nonlinear integrands.
pub const NONLINEAR_POINTS: usize = 3;

/// Incidence and mass matrices of the discrete sequence on one mesh,
/// together with the cell-level data needed by the nonlinear kernels.
///
/// Restricted matrices act on unknowns (boundary entities eliminated);
/// the `*_full` variants keep every entity.
#[derive(Debug)]
pub struct OperatorSet<T: Real> {
    mesh: StructuredHexMesh<T>,
    pub h1: Space,
    pub hcurl: Space,
    pub hdiv: Space,
    pub l2: Space,
    pub grad_full: CsrMatrix<i32>,
    pub curl_full: CsrMatrix<i32>,
    pub div_full: CsrMatrix<i32>,
    pub grad: CsrMatrix<i32>,
    pub curl: CsrMatrix<i32>,
    pub div: CsrMatrix<i32>,
    pub m1_full: CsrMatrix<T>,
    pub mc_full: CsrMatrix<T>,
    pub md_full: CsrMatrix<T>,
    pub m0_full: CsrMatrix<T>,
    pub mcd_full: CsrMatrix<T>,
    pub m1: CsrMatrix<T>,
    pub mc: CsrMatrix<T>,
    pub md: CsrMatrix<T>,
    pub m0: CsrMatrix<T>,
    /// Edge-test, face-trial mixed mass.
    pub mcd: CsrMatrix<T>,
    curl_real: CsrMatrix<T>,
    grad_real: CsrMatrix<T>,
    pub local: LocalMatrices<T>,
    /// Basis values at the nonlinear quadrature points of a cell.
    pub nonlinear: BasisTable<T>,
    cell_edges: Vec<[usize; 12]>,
    cell_faces: Vec<[usize; 6]>,
    mc_solver: OnceLock<DirectSolver<T>>,
}

fn incidence_matrix<T: Real>(mesh: &StructuredHexMesh<T>, dim: usize) -> CsrMatrix<i32> {
    let rows = mesh.n_entities(dim).expect("valid dimension");
    let cols = mesh.n_entities(dim - 1).expect("valid dimension");
    let mut trip = Vec::with_capacity(rows * 2 * dim);
    for r in 0..rows {
        for b in mesh.incidence(EntityRef::new(dim, r)).expect("index in range") {
            trip.push((r, b.index, i32::from(b.sign)));
        }
    }
    CsrMatrix::from_triplets(rows, cols, trip)
}

fn assemble_cells<T: Real, const R: usize, const C: usize>(
    n_cells: usize,
    nrows: usize,
    ncols: usize,
    rows: impl Fn(usize) -> [usize; R],
    cols: impl Fn(usize) -> [usize; C],
    local: &[[T; C]; R],
) -> CsrMatrix<T> {
    let mut trip = Vec::with_capacity(n_cells * R * C);
    for c in 0..n_cells {
        let (r, k) = (rows(c), cols(c));
        for i in 0..R {
            for j in 0..C {
                if local[i][j] != T::zero() {
                    trip.push((r[i], k[j], local[i][j]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(nrows, ncols, trip)
}

impl<T: Real> OperatorSet<T> {
    pub fn new(mesh: StructuredHexMesh<T>) -> Self {
        Self::with_mass_quadrature(mesh, MASS_POINTS)
    }

    /// Assemble with a chosen number of Gauss points per direction for the
    /// mass matrices (anything from two up gives identical matrices).
    pub fn with_mass_quadrature(mesh: StructuredHexMesh<T>, points: usize) -> Self {
        let flags = mesh.boundary_flags();
        let h1 = Space::new(&mesh, SpaceKind::H1, &flags);
        let hcurl = Space::new(&mesh, SpaceKind::Hcurl, &flags);
        let hdiv = Space::new(&mesh, SpaceKind::Hdiv, &flags);
        let l2 = Space::new(&mesh, SpaceKind::L2, &flags);

        let grad_full = incidence_matrix(&mesh, 1);
        let curl_full = incidence_matrix(&mesh, 2);
        let div_full = incidence_matrix(&mesh, 3);
        let grad = grad_full.restrict(hcurl.free(), h1.free());
        let curl = curl_full.restrict(hdiv.free(), hcurl.free());
        let div = div_full.restrict(l2.free(), hdiv.free());

        let h = mesh.spacing();
        let local = LocalMatrices::new(h, points);
        let nc = mesh.n_cells();
        let cell_edges: Vec<[usize; 12]> = (0..nc).map(|c| mesh.cell_edges(c)).collect();
        let cell_faces: Vec<[usize; 6]> = (0..nc).map(|c| mesh.cell_faces(c)).collect();
        let cell_verts: Vec<[usize; 8]> = (0..nc).map(|c| mesh.cell_vertices(c)).collect();

        let (nv, ne, nf) = (mesh.n_vertices(), mesh.n_edges(), mesh.n_faces());
        let m1_full = assemble_cells(nc, nv, nv, |c| cell_verts[c], |c| cell_verts[c], &local.m1);
        let mc_full = assemble_cells(nc, ne, ne, |c| cell_edges[c], |c| cell_edges[c], &local.mc);
        let md_full = assemble_cells(nc, nf, nf, |c| cell_faces[c], |c| cell_faces[c], &local.md);
        let mcd_full = assemble_cells(nc, ne, nf, |c| cell_edges[c], |c| cell_faces[c], &local.mcd);
        let m0_full = CsrMatrix::from_triplets(nc, nc, (0..nc).map(|c| (c, c, local.volume)).collect());

        let m1 = m1_full.restrict(h1.free(), h1.free());
        let mc = mc_full.restrict(hcurl.free(), hcurl.free());
        let md = md_full.restrict(hdiv.free(), hdiv.free());
        let m0 = m0_full.restrict(l2.free(), l2.free());
        let mcd = mcd_full.restrict(hcurl.free(), hdiv.free());
        let to_real = |v: i32| T::lit(f64::from(v));
        let curl_real = curl.map(to_real);
        let grad_real = grad.map(to_real);

        Self {
            nonlinear: BasisTable::new(NONLINEAR_POINTS, h),
            mesh,
            h1,
            hcurl,
            hdiv,
            l2,
            grad_full,
            curl_full,
            div_full,
            grad,
            curl,
            div,
            m1_full,
            mc_full,
            md_full,
            m0_full,
            mcd_full,
            m1,
            mc,
            md,
            m0,
            mcd,
            curl_real,
            grad_real,
            local,
            cell_edges,
            cell_faces,
            mc_solver: OnceLock::new(),
        }
    }

    pub fn mesh(&self) -> &StructuredHexMesh<T> {
        &self.mesh
    }

    pub fn space(&self, kind: SpaceKind) -> &Space {
        match kind {
            SpaceKind::H1 => &self.h1,
            SpaceKind::Hcurl => &self.hcurl,
            SpaceKind::Hdiv => &self.hdiv,
            SpaceKind::L2 => &self.l2,
        }
    }

    pub fn cell_edges(&self, c: usize) -> &[usize; 12] {
        &self.cell_edges[c]
    }

    pub fn cell_faces(&self, c: usize) -> &[usize; 6] {
        &self.cell_faces[c]
    }

    /// Restricted curl incidence with real entries.
    pub fn curl_matrix(&self) -> &CsrMatrix<T> {
        &self.curl_real
    }

    /// Restricted gradient incidence with real entries.
    pub fn grad_matrix(&self) -> &CsrMatrix<T> {
        &self.grad_real
    }

    /// Face values of the curl of edge unknowns.
    pub fn apply_curl(&self, e: &[T]) -> Vec<T> {
        self.curl_real.matvec(e)
    }

    /// `curl^T` applied to face values.
    pub fn apply_curl_t(&self, f: &[T]) -> Vec<T> {
        self.curl_real.matvec_transpose(f)
    }

    pub fn apply_grad(&self, v: &[T]) -> Vec<T> {
        self.grad_real.matvec(v)
    }

    /// Cell integrals of the divergence of face unknowns.
    pub fn apply_div(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.div.nrows()];
        for (r, o) in out.iter_mut().enumerate() {
            for (c, s) in self.div.row(r) {
                *o += T::lit(f64::from(s)) * f[c];
            }
        }
        out
    }

    /// Factorised restricted H(curl) mass matrix.
    pub fn mc_solver(&self) -> Result<&DirectSolver<T>, FeecError> {
        if let Some(s) = self.mc_solver.get() {
            return Ok(s);
        }
        let s = DirectSolver::new(self.mc.clone(), None, T::lit(1e-12))?;
        Ok(self.mc_solver.get_or_init(|| s))
    }

    /// Gather local edge values of a cell from unknowns (zero on the
    /// boundary).
    pub fn gather_edges(&self, c: usize, values: &[T]) -> [T; 12] {
        self.cell_edges[c].map(|g| {
            let k = self.hcurl.index_of(g);
            if k == Space::CONSTRAINED {
                T::zero()
            } else {
                values[k]
            }
        })
    }

    pub fn gather_faces(&self, c: usize, values: &[T]) -> [T; 6] {
        self.cell_faces[c].map(|g| {
            let k = self.hdiv.index_of(g);
            if k == Space::CONSTRAINED {
                T::zero()
            } else {
                values[k]
            }
        })
    }

    /// The L2 projection `H` of a face field onto H(curl):
    /// `(H, D) = (B, D)` for every edge test function `D`.
    pub fn l2_project_div_to_curl(&self, b: &FieldCoefficients<T>) -> Result<FieldCoefficients<T>, FeecError> {
        let bv = b.expect(SpaceKind::Hdiv)?;
        let rhs = self.mcd.matvec(bv);
        let h = self.mc_solver()?.solve(&rhs)?;
        FieldCoefficients::new(&self.hcurl, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::CuboidDomain;
    use crate::scalar::norm2;

    fn ops(n: [usize; 3], dom: CuboidDomain<f64>) -> OperatorSet<f64> {
        OperatorSet::new(StructuredHexMesh::new(dom, n[0], n[1], n[2]).unwrap())
    }

    fn rank(mut a: Vec<Vec<f64>>) -> usize {
        // Gaussian elimination with full pivot search per column
        let (m, n) = (a.len(), a.first().map_or(0, Vec::len));
        let mut r = 0;
        for c in 0..n {
            let Some(p) = (r..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())) else { break };
            if a[p][c].abs() < 1e-9 {
                continue;
            }
            a.swap(r, p);
            for i in 0..m {
                if i != r {
                    let f = a[i][c] / a[r][c];
                    if f != 0.0 {
                        for k in c..n {
                            a[i][k] -= f * a[r][k];
                        }
                    }
                }
            }
            r += 1;
            if r == m {
                break;
            }
        }
        r
    }

    fn as_f64(m: &CsrMatrix<i32>) -> Vec<Vec<f64>> {
        m.map(f64::from).to_dense()
    }

    #[test]
    fn complex_property_full_and_restricted() {
        for n in [[1, 1, 1], [2, 3, 1], [3, 3, 3], [4, 4, 10]] {
            let o = ops(n, CuboidDomain::unit());
            assert!(o.curl_full.matmul(&o.grad_full).is_zero());
            assert!(o.div_full.matmul(&o.curl_full).is_zero());
            assert!(o.curl.matmul(&o.grad).is_zero());
            assert!(o.div.matmul(&o.curl).is_zero());
        }
    }

    #[test]
    fn exactness_by_rank() {
        for n in [[1, 1, 1], [2, 2, 2], [2, 3, 2], [3, 3, 3]] {
            let o = ops(n, CuboidDomain::unit());
            let rg = rank(as_f64(&o.grad));
            let rc = rank(as_f64(&o.curl));
            let rd = rank(as_f64(&o.div));
            // restricted sequence 0 -> H1_0 -> H0(curl) -> H0(div) -> L2 -> R -> 0
            assert_eq!(rg, o.h1.dim(), "grad injective on {n:?}");
            assert_eq!(o.hcurl.dim() - rc, rg, "ker curl = range grad on {n:?}");
            assert_eq!(o.hdiv.dim() - rd, rc, "ker div = range curl on {n:?}");
            assert_eq!(rd, o.l2.dim() - 1, "div onto zero-mean cells on {n:?}");
        }
    }

    #[test]
    fn l2_mass_sums_to_volume() {
        let o = ops([4, 4, 10], CuboidDomain::centered(4.0, 10.0).unwrap());
        let s: f64 = o.m0.values().iter().sum();
        assert!((s - 1280.0).abs() < 1e-10);
        let u = ops([1, 1, 1], CuboidDomain::unit());
        assert_eq!(u.m0.to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn mass_matrices_symmetric_positive_definite() {
        let o = ops([2, 3, 2], CuboidDomain::new(0.0, 1.0, -1.0, 2.0, 0.0, 0.5).unwrap());
        for m in [&o.m1, &o.mc, &o.md, &o.m0, &o.m1_full, &o.mc_full, &o.md_full] {
            assert!(m.asymmetry() <= 1e-15 * m.max_abs());
            let d = m.to_dense();
            let na = nalgebra::DMatrix::from_fn(d.len(), d.len(), |i, j| d[i][j]);
            assert!(na.cholesky().is_some());
        }
    }

    #[test]
    fn mass_quadrature_oracle() {
        let dom = CuboidDomain::centered(4.0, 10.0).unwrap();
        let mesh = StructuredHexMesh::new(dom, 4, 4, 10).unwrap();
        let a = OperatorSet::with_mass_quadrature(mesh.clone(), 2);
        let b = OperatorSet::<f64>::with_mass_quadrature(mesh, 5);
        for (x, y) in
            [(&a.mc_full, &b.mc_full), (&a.md_full, &b.md_full), (&a.mcd_full, &b.mcd_full), (&a.m1_full, &b.m1_full)]
        {
            let scale = y.max_abs();
            for (r, c, v) in y.triplets() {
                assert!((x.get(r, c) - v).abs() <= 1e-13 * scale, "entry ({r}, {c})");
            }
            assert_eq!(x.nnz(), y.nnz());
        }
    }

    #[test]
    fn projection_galerkin_orthogonality() {
        let o = ops([3, 2, 3], CuboidDomain::new(-1.0, 1.0, 0.0, 1.0, 0.0, 2.0).unwrap());
        let b: Vec<f64> = (0..o.hdiv.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let bf = FieldCoefficients::new(&o.hdiv, b.clone()).unwrap();
        let h = o.l2_project_div_to_curl(&bf).unwrap();
        let lhs = o.mc.matvec(&h.values);
        let rhs = o.mcd.matvec(&b);
        let r: Vec<f64> = lhs.iter().zip(&rhs).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&rhs));
        let zero = FieldCoefficients::zeros(&o.hdiv);
        assert!(o.l2_project_div_to_curl(&zero).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generic_over_f32() {
        let mesh = StructuredHexMesh::<f32>::new(CuboidDomain::unit(), 2, 2, 2).unwrap();
        let o = OperatorSet::new(mesh);
        assert!(o.div.matmul(&o.curl).is_zero());
        let s: f32 = o.m0_full.values().iter().sum::<f32>();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
