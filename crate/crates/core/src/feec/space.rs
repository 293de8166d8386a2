use super::FeecError;
use crate::mesh::{BoundaryFlags, StructuredHexMesh};
use crate::scalar::Real;

/// Which member of the discrete de Rham sequence a field lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    H1,
    Hcurl,
    Hdiv,
    L2,
}

impl SpaceKind {
    /// Dimension of the mesh entities carrying the degrees of freedom.
    pub fn entity_dim(self) -> usize {
        match self {
            SpaceKind::H1 => 0,
            SpaceKind::Hcurl => 1,
            SpaceKind::Hdiv => 2,
            SpaceKind::L2 => 3,
        }
    }
}

impl std::fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpaceKind::H1 => "H1",
            SpaceKind::Hcurl => "H(curl)",
            SpaceKind::Hdiv => "H(div)",
            SpaceKind::L2 => "L2",
        })
    }
}

/// A finite element space with homogeneous boundary conditions imposed by
/// eliminating boundary degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    pub kind: SpaceKind,
    n_total: usize,
    free: Vec<usize>,
    index_of: Vec<usize>,
}

impl Space {
    pub const CONSTRAINED: usize = usize::MAX;

    pub fn new<T: Real>(mesh: &StructuredHexMesh<T>, kind: SpaceKind, flags: &BoundaryFlags) -> Self {
        let mask: Vec<bool> = match kind {
            SpaceKind::H1 => flags.vertices.clone(),
            SpaceKind::Hcurl => flags.edges.clone(),
            SpaceKind::Hdiv => flags.faces.clone(),
            SpaceKind::L2 => vec![false; mesh.n_cells()],
        };
        let free: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        let mut index_of = vec![Self::CONSTRAINED; mask.len()];
        for (k, &g) in free.iter().enumerate() {
            index_of[g] = k;
        }
        Self { kind, n_total: mask.len(), free, index_of }
    }

    /// Entity count, boundary included.
    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// Number of unknowns after boundary elimination.
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Global entity index of each unknown.
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// Unknown index of a global entity, or [`Space::CONSTRAINED`].
    pub fn index_of(&self, global: usize) -> usize {
        self.index_of[global]
    }

    pub fn is_free(&self, global: usize) -> bool {
        self.index_of[global] != Self::CONSTRAINED
    }

    /// Keep only the unconstrained entries of a full entity vector.
    pub fn restrict<T: Copy>(&self, full: &[T]) -> Vec<T> {
        self.free.iter().map(|&g| full[g]).collect()
    }

    /// Embed unknowns into a full entity vector with zero boundary values.
    pub fn extend<T: Real>(&self, values: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_total];
        for (&g, &v) in self.free.iter().zip(values) {
            out[g] = v;
        }
        out
    }
}

/// Coefficient vector of a discrete field over the unknowns of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCoefficients<T> {
    kind: SpaceKind,
    pub values: Vec<T>,
}

impl<T: Real> FieldCoefficients<T> {
    pub fn new(space: &Space, values: Vec<T>) -> Result<Self, FeecError> {
        if values.len() != space.dim() {
            return Err(FeecError::Length { kind: space.kind, expected: space.dim(), got: values.len() });
        }
        Ok(Self { kind: space.kind, values })
    }

    pub fn zeros(space: &Space) -> Self {
        Self { kind: space.kind, values: vec![T::zero(); space.dim()] }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn expect(&self, kind: SpaceKind) -> Result<&[T], FeecError> {
        if self.kind != kind {
            return Err(FeecError::SpaceMismatch { expected: kind, got: self.kind });
        }
        Ok(&self.values)
    }
}
