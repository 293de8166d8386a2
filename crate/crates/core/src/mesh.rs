//! Structured, axis-aligned hexahedral meshes of a cuboid.
//!
//! Entities of every dimension are numbered lexicographically with the
//! x index running fastest. Edges and faces are grouped by axis (all
//! x-directed edges first, then y, then z; faces by normal direction in the
//! same order). Orientations follow the coordinate axes: an edge points along
//! increasing coordinate, a face normal points along increasing coordinate.
//! With this convention every incidence coefficient is an integer in
//! `{-1, 0, 1}` and identical whether it is computed globally or cell-locally.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("cell counts must be positive, got ({0}, {1}, {2})")]
    CellCount(usize, usize, usize),
    #[error("degenerate domain along axis {axis}: min {min} >= max {max}")]
    Degenerate { axis: usize, min: f64, max: f64 },
    #[error("non-finite domain bound")]
    NonFinite,
    #[error("entity dimension {0} out of range 0..=3")]
    Dimension(usize),
    #[error("entity index {index} out of range for dimension {dim} (count {count})")]
    Index { dim: usize, index: usize, count: usize },
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuboidDomain<T> {
    pub lo: [T; 3],
    pub hi: [T; 3],
}

impl<T: Real> CuboidDomain<T> {
    pub fn new(x_min: T, x_max: T, y_min: T, y_max: T, z_min: T, z_max: T) -> Result<Self, MeshError> {
        let d = Self { lo: [x_min, y_min, z_min], hi: [x_max, y_max, z_max] };
        d.validate()?;
        Ok(d)
    }

    /// The box `(-half_xy, half_xy)^2 x (-half_z, half_z)`.
    pub fn centered(half_xy: T, half_z: T) -> Result<Self, MeshError> {
        Self::new(-half_xy, half_xy, -half_xy, half_xy, -half_z, half_z)
    }

    pub fn unit() -> Self {
        Self { lo: [T::zero(); 3], hi: [T::one(); 3] }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        for axis in 0..3 {
            let (lo, hi) = (self.lo[axis], self.hi[axis]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(MeshError::NonFinite);
            }
            if lo >= hi {
                return Err(MeshError::Degenerate { axis, min: lo.to_f64_lossy(), max: hi.to_f64_lossy() });
            }
        }
        Ok(())
    }

    pub fn extent(&self, axis: usize) -> T {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> T {
        self.extent(0) * self.extent(1) * self.extent(2)
    }
}

/// Reference to a mesh entity, with a relative orientation when it appears
/// in an incidence list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntityRef {
    pub dim: usize,
    pub index: usize,
    pub sign: i8,
}

impl EntityRef {
    pub fn new(dim: usize, index: usize) -> Self {
        Self { dim, index, sign: 1 }
    }

    fn signed(dim: usize, index: usize, sign: i8) -> Self {
        Self { dim, index, sign }
    }
}

/// Per-entity boundary masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryFlags {
    pub vertices: Vec<bool>,
    pub edges: Vec<bool>,
    pub faces: Vec<bool>,
}

impl BoundaryFlags {
    pub fn count(mask: &[bool]) -> usize {
        mask.iter().filter(|&&b| b).count()
    }
}

/// Structured hexahedral tessellation of a [`CuboidDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredHexMesh<T> {
    domain: CuboidDomain<T>,
    n: [usize; 3],
    h: [T; 3],
    edge_offset: [usize; 4],
    face_offset: [usize; 4],
}

/// Local edge slot of the edge along `axis` whose two transverse positions
/// inside the cell are taken from `pos` (each 0 or 1).
#[inline]
pub fn local_edge(axis: usize, pos: [usize; 3]) -> usize {
    let (p, q) = transverse(axis);
    4 * axis + pos[p] + 2 * pos[q]
}

/// Local face slot of the face with normal `axis` on side `side` (0 = low).
#[inline]
pub fn local_face(axis: usize, side: usize) -> usize {
    2 * axis + side
}

/// The two axes orthogonal to `axis`, in increasing order.
#[inline]
pub fn transverse(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Signed local face-to-edge incidence of one hexahedron (6 x 12).
pub fn local_curl_incidence() -> [[i8; 12]; 6] {
    let mut c = [[0i8; 12]; 6];
    for a in 0..3 {
        let b = (a + 1) % 3;
        let cc = (a + 2) % 3;
        for side in 0..2 {
            let f = local_face(a, side);
            let mut pos = [0usize; 3];
            pos[a] = side;
            // edges along b at c-position 0 (+) and 1 (-)
            pos[cc] = 0;
            c[f][local_edge(b, pos)] = 1;
            pos[cc] = 1;
            c[f][local_edge(b, pos)] = -1;
            pos[cc] = 0;
            // edges along c at b-position 1 (+) and 0 (-)
            pos[b] = 1;
            c[f][local_edge(cc, pos)] = 1;
            pos[b] = 0;
            c[f][local_edge(cc, pos)] = -1;
        }
    }
    c
}

impl<T: Real> StructuredHexMesh<T> {
    pub fn new(domain: CuboidDomain<T>, nx: usize, ny: usize, nz: usize) -> Result<Self, MeshError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(MeshError::CellCount(nx, ny, nz));
        }
        domain.validate()?;
        let n = [nx, ny, nz];
        let h = [0, 1, 2].map(|a| domain.extent(a) / T::from_usize_lossy(n[a]));
        let mut edge_offset = [0; 4];
        let mut face_offset = [0; 4];
        for a in 0..3 {
            edge_offset[a + 1] = edge_offset[a] + Self::grid_len(Self::edge_dims(n, a));
            face_offset[a + 1] = face_offset[a] + Self::grid_len(Self::face_dims(n, a));
        }
        Ok(Self { domain, n, h, edge_offset, face_offset })
    }

    fn grid_len(d: [usize; 3]) -> usize {
        d[0] * d[1] * d[2]
    }

    fn edge_dims(n: [usize; 3], axis: usize) -> [usize; 3] {
        let mut d = [n[0] + 1, n[1] + 1, n[2] + 1];
        d[axis] = n[axis];
        d
    }

    fn face_dims(n: [usize; 3], axis: usize) -> [usize; 3] {
        let mut d = n;
        d[axis] = n[axis] + 1;
        d
    }

    #[inline]
    fn linear(p: [usize; 3], d: [usize; 3]) -> usize {
        p[0] + d[0] * (p[1] + d[1] * p[2])
    }

    #[inline]
    fn unlinear(mut idx: usize, d: [usize; 3]) -> [usize; 3] {
        let i = idx % d[0];
        idx /= d[0];
        let j = idx % d[1];
        [i, j, idx / d[1]]
    }

    pub fn domain(&self) -> &CuboidDomain<T> {
        &self.domain
    }

    /// Cells per axis.
    pub fn cells_per_axis(&self) -> [usize; 3] {
        self.n
    }

    /// Cell widths per axis.
    pub fn spacing(&self) -> [T; 3] {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1) * (self.n[2] + 1)
    }

    pub fn n_edges(&self) -> usize {
        self.edge_offset[3]
    }

    pub fn n_faces(&self) -> usize {
        self.face_offset[3]
    }

    pub fn n_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn n_entities(&self, dim: usize) -> Result<usize, MeshError> {
        match dim {
            0 => Ok(self.n_vertices()),
            1 => Ok(self.n_edges()),
            2 => Ok(self.n_faces()),
            3 => Ok(self.n_cells()),
            d => Err(MeshError::Dimension(d)),
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64 - self.n_cells() as i64
    }

    // ---- index maps -------------------------------------------------------

    pub fn vertex_index(&self, p: [usize; 3]) -> usize {
        Self::linear(p, self.n.map(|x| x + 1))
    }

    pub fn vertex_position(&self, v: usize) -> [usize; 3] {
        Self::unlinear(v, self.n.map(|x| x + 1))
    }

    pub fn edge_index(&self, axis: usize, p: [usize; 3]) -> usize {
        self.edge_offset[axis] + Self::linear(p, Self::edge_dims(self.n, axis))
    }

    /// Axis and grid position of an edge (position of its tail vertex).
    pub fn edge_position(&self, e: usize) -> (usize, [usize; 3]) {
        let axis = (0..3).find(|&a| e < self.edge_offset[a + 1]).expect("edge index in range");
        (axis, Self::unlinear(e - self.edge_offset[axis], Self::edge_dims(self.n, axis)))
    }

    pub fn face_index(&self, axis: usize, p: [usize; 3]) -> usize {
        self.face_offset[axis] + Self::linear(p, Self::face_dims(self.n, axis))
    }

    /// Normal axis and grid position of a face (its lowest corner).
    pub fn face_position(&self, f: usize) -> (usize, [usize; 3]) {
        let axis = (0..3).find(|&a| f < self.face_offset[a + 1]).expect("face index in range");
        (axis, Self::unlinear(f - self.face_offset[axis], Self::face_dims(self.n, axis)))
    }

    pub fn cell_index(&self, p: [usize; 3]) -> usize {
        Self::linear(p, self.n)
    }

    pub fn cell_position(&self, c: usize) -> [usize; 3] {
        Self::unlinear(c, self.n)
    }

    // ---- geometry ---------------------------------------------------------

    pub fn point(&self, p: [usize; 3]) -> [T; 3] {
        [0, 1, 2].map(|a| self.domain.lo[a] + T::from_usize_lossy(p[a]) * self.h[a])
    }

    pub fn vertex_coords(&self, v: usize) -> [T; 3] {
        self.point(self.vertex_position(v))
    }

    /// Lowest corner of a cell.
    pub fn cell_origin(&self, c: usize) -> [T; 3] {
        self.point(self.cell_position(c))
    }

    pub fn cell_volume(&self) -> T {
        self.h[0] * self.h[1] * self.h[2]
    }

    // ---- cell-local connectivity ------------------------------------------

    /// Global indices of the 12 edges of a cell in local slot order.
    pub fn cell_edges(&self, c: usize) -> [usize; 12] {
        let p = self.cell_position(c);
        let mut out = [0; 12];
        for axis in 0..3 {
            let (s, t) = transverse(axis);
            for ds in 0..2 {
                for dt in 0..2 {
                    let mut q = p;
                    q[s] += ds;
                    q[t] += dt;
                    let mut local = [0; 3];
                    local[s] = ds;
                    local[t] = dt;
                    out[local_edge(axis, local)] = self.edge_index(axis, q);
                }
            }
        }
        out
    }

    /// Global indices of the 6 faces of a cell in local slot order.
    pub fn cell_faces(&self, c: usize) -> [usize; 6] {
        let p = self.cell_position(c);
        let mut out = [0; 6];
        for axis in 0..3 {
            for side in 0..2 {
                let mut q = p;
                q[axis] += side;
                out[local_face(axis, side)] = self.face_index(axis, q);
            }
        }
        out
    }

    /// Global indices of the 8 vertices of a cell, ordered as in the VTK
    /// hexahedron convention.
    pub fn cell_vertices(&self, c: usize) -> [usize; 8] {
        let p = self.cell_position(c);
        let off = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
        off.map(|o| self.vertex_index([p[0] + o[0], p[1] + o[1], p[2] + o[2]]))
    }

    // ---- incidence --------------------------------------------------------

    fn check(&self, e: &EntityRef) -> Result<(), MeshError> {
        let count = self.n_entities(e.dim)?;
        if e.index >= count {
            return Err(MeshError::Index { dim: e.dim, index: e.index, count });
        }
        Ok(())
    }

    /// Signed boundary of an entity: 2 vertices of an edge, 4 edges of a
    /// face, 6 faces of a cell. Vertices have an empty boundary.
    pub fn incidence(&self, entity: EntityRef) -> Result<Vec<EntityRef>, MeshError> {
        self.check(&entity)?;
        Ok(match entity.dim {
            0 => Vec::new(),
            1 => {
                let (axis, p) = self.edge_position(entity.index);
                let mut q = p;
                q[axis] += 1;
                vec![EntityRef::signed(0, self.vertex_index(p), -1), EntityRef::signed(0, self.vertex_index(q), 1)]
            }
            2 => {
                let (a, p) = self.face_position(entity.index);
                let b = (a + 1) % 3;
                let c = (a + 2) % 3;
                let mut out = Vec::with_capacity(4);
                let mut q = p;
                out.push(EntityRef::signed(1, self.edge_index(b, q), 1));
                q[c] += 1;
                out.push(EntityRef::signed(1, self.edge_index(b, q), -1));
                let mut q = p;
                q[b] += 1;
                out.push(EntityRef::signed(1, self.edge_index(c, q), 1));
                out.push(EntityRef::signed(1, self.edge_index(c, p), -1));
                out
            }
            _ => {
                let faces = self.cell_faces(entity.index);
                (0..6).map(|l| EntityRef::signed(2, faces[l], if l % 2 == 0 { -1 } else { 1 })).collect()
            }
        })
    }

    /// Boundary masks: a face is on the boundary iff it lies in one of the
    /// six bounding planes; an edge or vertex iff it is contained in such a
    /// face.
    pub fn boundary_flags(&self) -> BoundaryFlags {
        let n = self.n;
        let on = |p: [usize; 3], a: usize| p[a] == 0 || p[a] == n[a];
        let vertices = (0..self.n_vertices())
            .map(|v| {
                let p = self.vertex_position(v);
                (0..3).any(|a| on(p, a))
            })
            .collect();
        let edges = (0..self.n_edges())
            .map(|e| {
                let (axis, p) = self.edge_position(e);
                let (s, t) = transverse(axis);
                on(p, s) || on(p, t)
            })
            .collect();
        let faces = (0..self.n_faces())
            .map(|f| {
                let (axis, p) = self.face_position(f);
                on(p, axis)
            })
            .collect();
        BoundaryFlags { vertices, edges, faces }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn mesh(nx: usize, ny: usize, nz: usize) -> StructuredHexMesh<f64> {
        StructuredHexMesh::new(CuboidDomain::unit(), nx, ny, nz).unwrap()
    }

    fn closed_form(n: [usize; 3]) -> [usize; 4] {
        let [nx, ny, nz] = n;
        [
            (nx + 1) * (ny + 1) * (nz + 1),
            nx * (ny + 1) * (nz + 1) + (nx + 1) * ny * (nz + 1) + (nx + 1) * (ny + 1) * nz,
            (nx + 1) * ny * nz + nx * (ny + 1) * nz + nx * ny * (nz + 1),
            nx * ny * nz,
        ]
    }

    #[test]
    fn hopf_mesh_counts() {
        let d = CuboidDomain::centered(4.0, 10.0).unwrap();
        let m = StructuredHexMesh::new(d, 4, 4, 10).unwrap();
        assert_eq!([m.n_vertices(), m.n_edges(), m.n_faces(), m.n_cells()], [275, 690, 576, 160]);
        assert_eq!(m.euler_characteristic(), 1);
        let flags = m.boundary_flags();
        assert_eq!(BoundaryFlags::count(&flags.faces), 192);
        assert_eq!(m.n_faces() - BoundaryFlags::count(&flags.faces), 384);
    }

    #[test]
    fn single_cell() {
        let m = mesh(1, 1, 1);
        assert_eq!([m.n_vertices(), m.n_edges(), m.n_faces(), m.n_cells()], [8, 12, 6, 1]);
        let f = m.boundary_flags();
        assert!(f.vertices.iter().all(|&b| b));
        assert!(f.edges.iter().all(|&b| b));
        assert!(f.faces.iter().all(|&b| b));
    }

    #[test]
    fn braid_mesh_cells() {
        let d = CuboidDomain::centered(4.0, 24.0).unwrap();
        let m = StructuredHexMesh::new(d, 4, 4, 24).unwrap();
        assert_eq!(m.n_cells(), 384);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            StructuredHexMesh::new(CuboidDomain::<f64>::unit(), 0, 1, 1).unwrap_err(),
            MeshError::CellCount(0, 1, 1)
        );
        assert!(CuboidDomain::new(1.0, 1.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(CuboidDomain::new(0.0, f64::NAN, 0.0, 1.0, 0.0, 1.0).is_err());
        let m = mesh(1, 1, 1);
        assert!(matches!(m.incidence(EntityRef::new(1, 12)), Err(MeshError::Index { .. })));
        assert!(matches!(m.incidence(EntityRef::new(4, 0)), Err(MeshError::Dimension(4))));
    }

    #[test]
    fn edge_boundary_is_tail_head() {
        let m = mesh(2, 1, 1);
        let e = m.edge_index(0, [1, 0, 0]);
        let b = m.incidence(EntityRef::new(1, e)).unwrap();
        assert_eq!(b[0], EntityRef::signed(0, m.vertex_index([1, 0, 0]), -1));
        assert_eq!(b[1], EntityRef::signed(0, m.vertex_index([2, 0, 0]), 1));
    }

    fn boundary_of_boundary_vanishes(m: &StructuredHexMesh<f64>, dim: usize) {
        for idx in 0..m.n_entities(dim).unwrap() {
            let mut acc: HashMap<usize, i32> = HashMap::new();
            for b in m.incidence(EntityRef::new(dim, idx)).unwrap() {
                for bb in m.incidence(b).unwrap() {
                    *acc.entry(bb.index).or_default() += (b.sign * bb.sign) as i32;
                }
            }
            assert!(acc.values().all(|&v| v == 0), "dim {dim} entity {idx}: {acc:?}");
        }
    }

    #[test]
    fn boundary_of_boundary_small_meshes() {
        for n in [[1, 1, 1], [2, 3, 1], [3, 2, 2]] {
            let m = mesh(n[0], n[1], n[2]);
            boundary_of_boundary_vanishes(&m, 2);
            boundary_of_boundary_vanishes(&m, 3);
        }
    }

    #[test]
    fn local_incidence_matches_global() {
        let m = mesh(2, 2, 2);
        let loc = local_curl_incidence();
        for c in 0..m.n_cells() {
            let faces = m.cell_faces(c);
            let edges = m.cell_edges(c);
            for (lf, &f) in faces.iter().enumerate() {
                let global = m.incidence(EntityRef::new(2, f)).unwrap();
                for (le, &e) in edges.iter().enumerate() {
                    let g = global.iter().find(|r| r.index == e).map_or(0, |r| r.sign);
                    assert_eq!(g, loc[lf][le], "cell {c} face {lf} edge {le}");
                }
            }
        }
    }

    #[test]
    fn interior_faces_shared_by_two_cells() {
        let m = mesh(3, 2, 4);
        let mut count = vec![0; m.n_faces()];
        for c in 0..m.n_cells() {
            for f in m.cell_faces(c) {
                count[f] += 1;
            }
        }
        let flags = m.boundary_flags();
        for f in 0..m.n_faces() {
            assert_eq!(count[f], if flags.faces[f] { 1 } else { 2 });
        }
    }

    #[test]
    fn boundary_edges_lie_in_boundary_faces() {
        let m = mesh(3, 2, 2);
        let flags = m.boundary_flags();
        let mut in_bface = vec![false; m.n_edges()];
        let mut v_in_bface = vec![false; m.n_vertices()];
        for f in (0..m.n_faces()).filter(|&f| flags.faces[f]) {
            for e in m.incidence(EntityRef::new(2, f)).unwrap() {
                in_bface[e.index] = true;
                for v in m.incidence(e).unwrap() {
                    v_in_bface[v.index] = true;
                }
            }
        }
        assert_eq!(in_bface, flags.edges);
        assert_eq!(v_in_bface, flags.vertices);
    }

    #[test]
    fn index_roundtrip() {
        let m = mesh(3, 4, 2);
        for e in 0..m.n_edges() {
            let (a, p) = m.edge_position(e);
            assert_eq!(m.edge_index(a, p), e);
        }
        for f in 0..m.n_faces() {
            let (a, p) = m.face_position(f);
            assert_eq!(m.face_index(a, p), f);
        }
    }

    #[test]
    fn single_precision_mesh() {
        let d = CuboidDomain::<f32>::centered(4.0, 10.0).unwrap();
        let m = StructuredHexMesh::new(d, 4, 4, 10).unwrap();
        assert_eq!(m.spacing(), [2.0f32, 2.0, 2.0]);
    }

    proptest::proptest! {
        #[test]
        fn counts_match_closed_form(nx in 1usize..=5, ny in 1usize..=5, nz in 1usize..=5) {
            let m = mesh(nx, ny, nz);
            let cf = closed_form([nx, ny, nz]);
            proptest::prop_assert_eq!([m.n_vertices(), m.n_edges(), m.n_faces(), m.n_cells()], cf);
            proptest::prop_assert_eq!(m.euler_characteristic(), 1);
            let flags = m.boundary_flags();
            let bf = 2 * (nx * ny + ny * nz + nx * nz);
            proptest::prop_assert_eq!(BoundaryFlags::count(&flags.faces), bf);
            proptest::prop_assert_eq!(m.clone(), mesh(nx, ny, nz));
        }
    }
}
