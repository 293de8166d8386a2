use crate::feec::{OperatorSet, Space};
use crate::linalg::{reverse_cuthill_mckee, CsrMatrix};
use crate::scalar::Real;

const NONE: usize = usize::MAX;

/// Kind of a block of unknowns in a cell-local layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Block {
    Edge,
    Face,
}

impl Block {
    fn local_len(self) -> usize {
        match self {
            Block::Edge => 12,
            Block::Face => 6,
        }
    }
}

/// Per-cell output buffers of a kernel.
pub(crate) struct Local<T> {
    pub r: Vec<T>,
    /// Row-major `nloc x nloc`, `jac[i * nloc + j] = dr_i / dx_j`; empty
    /// when only the residual is requested.
    pub jac: Vec<T>,
    /// Extra global vectors in the same layout as the unknowns.
    pub vecs: Vec<Vec<T>>,
    pub scalars: Vec<T>,
}

impl<T: Real> Local<T> {
    fn reset(&mut self) {
        for v in self.r.iter_mut().chain(self.jac.iter_mut()).chain(self.scalars.iter_mut()) {
            *v = T::zero();
        }
        for v in self.vecs.iter_mut().flatten() {
            *v = T::zero();
        }
    }
}

pub(crate) struct Assembled<T> {
    pub r: Vec<T>,
    pub jac: Option<CsrMatrix<T>>,
    pub vecs: Vec<Vec<T>>,
    pub scalars: Vec<T>,
}

/// Scatter of cell-local residuals and dense local Jacobians into a global
/// vector and a CSR matrix with a precomputed pattern.
pub(crate) struct CellAssembler<T> {
    nloc: usize,
    n: usize,
    n_cells: usize,
    dofs: Vec<usize>,
    pattern: CsrMatrix<T>,
    pos: Vec<usize>,
    ordering: Vec<usize>,
}

impl<T: Real> CellAssembler<T> {
    pub fn new(ops: &OperatorSet<T>, blocks: &[Block]) -> Self {
        let n_cells = ops.mesh().n_cells();
        let nloc: usize = blocks.iter().map(|b| b.local_len()).sum();
        let mut n = 0;
        let mut dofs = Vec::with_capacity(n_cells * nloc);
        let offsets: Vec<usize> = blocks
            .iter()
            .map(|b| {
                let o = n;
                n += match b {
                    Block::Edge => ops.hcurl.dim(),
                    Block::Face => ops.hdiv.dim(),
                };
                o
            })
            .collect();
        for c in 0..n_cells {
            for (b, &off) in blocks.iter().zip(&offsets) {
                let (ids, space): (&[usize], &Space) = match b {
                    Block::Edge => (ops.cell_edges(c), &ops.hcurl),
                    Block::Face => (ops.cell_faces(c), &ops.hdiv),
                };
                dofs.extend(ids.iter().map(|&g| match space.index_of(g) {
                    Space::CONSTRAINED => NONE,
                    k => off + k,
                }));
            }
        }
        let mut trip = Vec::new();
        for c in 0..n_cells {
            let d = &dofs[c * nloc..(c + 1) * nloc];
            for &i in d.iter().filter(|&&i| i != NONE) {
                for &j in d.iter().filter(|&&j| j != NONE) {
                    trip.push((i, j, T::zero()));
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(n, n, trip);
        let mut pos = vec![NONE; n_cells * nloc * nloc];
        for c in 0..n_cells {
            let d = &dofs[c * nloc..(c + 1) * nloc];
            for (i, &gi) in d.iter().enumerate() {
                for (j, &gj) in d.iter().enumerate() {
                    if gi != NONE && gj != NONE {
                        pos[(c * nloc + i) * nloc + j] = pattern.position(gi, gj).expect("pattern entry");
                    }
                }
            }
        }
        let ordering = reverse_cuthill_mckee(&pattern);
        Self { nloc, n, n_cells, dofs, pattern, pos, ordering }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Bandwidth-reducing ordering of the Jacobian pattern.
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    /// Run `kernel` on every cell and scatter its output. `n_vecs` extra
    /// global vectors and `n_scalars` summed scalars are collected.
    pub fn assemble<F>(&self, x: &[T], jacobian: bool, n_vecs: usize, n_scalars: usize, mut kernel: F) -> Assembled<T>
    where
        F: FnMut(usize, &[T], &mut Local<T>),
    {
        let nloc = self.nloc;
        let mut local = Local {
            r: vec![T::zero(); nloc],
            jac: if jacobian { vec![T::zero(); nloc * nloc] } else { Vec::new() },
            vecs: vec![vec![T::zero(); nloc]; n_vecs],
            scalars: vec![T::zero(); n_scalars],
        };
        let mut out = Assembled {
            r: vec![T::zero(); self.n],
            jac: jacobian.then(|| self.pattern.clone()),
            vecs: vec![vec![T::zero(); self.n]; n_vecs],
            scalars: vec![T::zero(); n_scalars],
        };
        let mut xloc = vec![T::zero(); nloc];
        for c in 0..self.n_cells {
            let d = &self.dofs[c * nloc..(c + 1) * nloc];
            for (v, &g) in xloc.iter_mut().zip(d) {
                *v = if g == NONE { T::zero() } else { x[g] };
            }
            local.reset();
            kernel(c, &xloc, &mut local);
            for (i, &g) in d.iter().enumerate() {
                if g == NONE {
                    continue;
                }
                out.r[g] += local.r[i];
                for (gv, lv) in out.vecs.iter_mut().zip(&local.vecs) {
                    gv[g] += lv[i];
                }
            }
            for (s, &l) in out.scalars.iter_mut().zip(&local.scalars) {
                *s += l;
            }
            if let Some(j) = out.jac.as_mut() {
                let vals = j.values_mut();
                let p = &self.pos[c * nloc * nloc..(c + 1) * nloc * nloc];
                for (&k, &v) in p.iter().zip(&local.jac) {
                    if k != NONE {
                        vals[k] += v;
                    }
                }
            }
        }
        out
    }
}
