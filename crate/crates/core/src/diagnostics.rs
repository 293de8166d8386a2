//! Energy, helicity and force-balance monitors, discrete vector-potential
//! recovery and the discrete Poincare constant.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::feec::{FeecError, FieldCoefficients, OperatorSet, SpaceKind};
use crate::linalg::{CsrMatrix, DirectSolver, LinalgError};
use crate::scalar::{cross, dot, dot3, norm2, norm_inf, Real, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("field is not solenoidal: |div B| = {divergence:e} exceeds {bound:e}")]
    NotSolenoidal { divergence: f64, bound: f64 },
    #[error("inverse iteration stagnated after {iterations} iterations (relative change {change:e})")]
    Stagnation { iterations: usize, change: f64 },
    #[error(transparent)]
    Feec(#[from] FeecError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One time sample of the monitored quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord<T> {
    pub t: T,
    pub energy: T,
    pub helicity: T,
    pub lorentz: T,
    pub div_norm: T,
    pub lambda_e: T,
    pub lambda_h: T,
    /// Least-squares force-free factor; absent when `B = 0`.
    pub alpha0: Option<T>,
    pub newton_iters: usize,
}

impl<T: Real> DiagnosticsRecord<T> {
    /// `|H| / E`, absent when the energy vanishes.
    pub fn arnold_ratio(&self) -> Option<T> {
        (self.energy > T::zero()).then(|| self.helicity.abs() / self.energy)
    }
}

/// `E = B^T Md B`.
pub fn energy<T: Real>(ops: &OperatorSet<T>, b: &FieldCoefficients<T>) -> Result<T, DiagnosticsError> {
    let bv = b.expect(SpaceKind::Hdiv)?;
    Ok(ops.md.bilinear(bv, bv))
}

/// L2 pairing `(A, B)` of an edge field and a face field.
pub fn helicity<T: Real>(
    ops: &OperatorSet<T>,
    a: &FieldCoefficients<T>,
    b: &FieldCoefficients<T>,
) -> Result<T, DiagnosticsError> {
    Ok(ops.mcd.bilinear(a.expect(SpaceKind::Hcurl)?, b.expect(SpaceKind::Hdiv)?))
}

/// `max |D_div B|` over cells.
pub fn div_norm<T: Real>(ops: &OperatorSet<T>, b: &[T]) -> T {
    norm_inf(&ops.apply_div(b))
}

/// Weak curl `j` of a face field: `Mc j = curl^T Md B`.
pub fn current<T: Real>(
    ops: &OperatorSet<T>,
    b: &FieldCoefficients<T>,
) -> Result<FieldCoefficients<T>, DiagnosticsError> {
    let bv = b.expect(SpaceKind::Hdiv)?;
    let rhs = ops.apply_curl_t(&ops.md.matvec(bv));
    let j = ops.mc_solver()?.solve(&rhs)?;
    Ok(FieldCoefficients::new(&ops.hcurl, j)?)
}

/// Values of an edge field and a face field at the nonlinear quadrature
/// points of cell `c`.
pub(crate) fn point_values<T: Real>(
    ops: &OperatorSet<T>,
    c: usize,
    e: &[T; 12],
    f: &[T; 6],
    q: usize,
) -> (Vec3<T>, Vec3<T>) {
    let tab = &ops.nonlinear;
    let (mut ve, mut vf) = ([T::zero(); 3], [T::zero(); 3]);
    let _ = c;
    for k in 0..12 {
        let a = k / 4;
        ve[a] += e[k] * tab.edge[q][k][a];
    }
    for k in 0..6 {
        let a = k / 2;
        vf[a] += f[k] * tab.face[q][k][a];
    }
    (ve, vf)
}

/// `||j x B||_{L2}` with the nonlinear quadrature and the least-squares
/// factor `alpha0 = (j, B) / (B, B)`.
pub fn lorentz_and_alpha<T: Real>(
    ops: &OperatorSet<T>,
    b: &FieldCoefficients<T>,
    j: &FieldCoefficients<T>,
) -> Result<(T, Option<T>), DiagnosticsError> {
    let bv = b.expect(SpaceKind::Hdiv)?;
    let jv = j.expect(SpaceKind::Hcurl)?;
    let mut s = T::zero();
    for c in 0..ops.mesh().n_cells() {
        let je = ops.gather_edges(c, jv);
        let bf = ops.gather_faces(c, bv);
        for q in 0..ops.nonlinear.len() {
            let (jq, bq) = point_values(ops, c, &je, &bf, q);
            let x = cross(&jq, &bq);
            s += ops.nonlinear.weights[q] * dot3(&x, &x);
        }
    }
    let bb = ops.md.bilinear(bv, bv);
    let alpha = (bb > T::zero()).then(|| ops.mcd.bilinear(jv, bv) / bb);
    Ok((s.sqrt(), alpha))
}

/// Lazily factorised solvers shared by the helicity diagnostics.
pub struct Diagnostics<'a, T: Real> {
    ops: &'a OperatorSet<T>,
    potential: OnceLock<DirectSolver<T>>,
}

impl<'a, T: Real> Diagnostics<'a, T> {
    pub fn new(ops: &'a OperatorSet<T>) -> Self {
        Self { ops, potential: OnceLock::new() }
    }

    pub fn ops(&self) -> &'a OperatorSet<T> {
        self.ops
    }

    /// Gauge-fixed curl-curl saddle system
    ///
    /// ```text
    /// [C^T Md C   Mc G] [A]   [C^T Md B]
    /// [G^T Mc      0  ] [p] = [   0    ]
    /// ```
    fn potential_solver(&self) -> Result<&DirectSolver<T>, DiagnosticsError> {
        if let Some(s) = self.potential.get() {
            return Ok(s);
        }
        let ops = self.ops;
        let c = ops.curl_matrix();
        let k = c.transpose().matmul(&ops.md.matmul(c));
        let mg = ops.mc.matmul(ops.grad_matrix());
        let (ne, nv) = (ops.hcurl.dim(), ops.h1.dim());
        let mut trip = k.triplets();
        for (r, col, v) in mg.triplets() {
            trip.push((r, ne + col, v));
            trip.push((ne + col, r, v));
        }
        let sys = CsrMatrix::from_triplets(ne + nv, ne + nv, trip);
        let s = DirectSolver::new(sys, None, T::lit(1e-12))?;
        Ok(self.potential.get_or_init(|| s))
    }

    fn solve_saddle(&self, rhs_edges: &[T]) -> Result<Vec<T>, DiagnosticsError> {
        let ne = self.ops.hcurl.dim();
        if ne == 0 {
            return Ok(Vec::new());
        }
        let mut rhs = rhs_edges.to_vec();
        rhs.resize(ne + self.ops.h1.dim(), T::zero());
        let mut x = self.potential_solver()?.solve(&rhs)?;
        x.truncate(ne);
        Ok(x)
    }

    /// Vector potential `A` in H0(curl) with `curl A = B`, orthogonal to
    /// discrete gradients.
    pub fn recover_potential(&self, b: &FieldCoefficients<T>) -> Result<FieldCoefficients<T>, DiagnosticsError> {
        let bv = b.expect(SpaceKind::Hdiv)?;
        let div = div_norm(self.ops, bv);
        let bound = T::lit(1e-11) * norm2(bv).max(T::one());
        if div > bound {
            return Err(DiagnosticsError::NotSolenoidal {
                divergence: div.to_f64_lossy(),
                bound: bound.to_f64_lossy(),
            });
        }
        let rhs = self.ops.apply_curl_t(&self.ops.md.matvec(bv));
        let a = self.solve_saddle(&rhs)?;
        Ok(FieldCoefficients::new(&self.ops.hcurl, a)?)
    }

    /// Helicity of a solenoidal face field via a recovered potential.
    pub fn helicity_of(&self, b: &FieldCoefficients<T>) -> Result<T, DiagnosticsError> {
        let a = self.recover_potential(b)?;
        helicity(self.ops, &a, b)
    }

    /// `C_P = lambda_min^{-1/2}` for the smallest eigenvalue of
    /// `C^T Md C x = lambda Mc x` on the Mc-orthogonal complement of the
    /// discrete gradients, by inverse iteration.
    pub fn poincare_constant(&self) -> Result<T, DiagnosticsError> {
        let ops = self.ops;
        let n = ops.hcurl.dim();
        if n == 0 {
            return Ok(T::zero());
        }
        let c = ops.curl_matrix();
        let rayleigh = |x: &[T]| {
            let cx = c.matvec(x);
            ops.md.bilinear(&cx, &cx) / ops.mc.bilinear(x, x)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut x: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        x = self.solve_saddle(&ops.mc.matvec(&x))?;
        let mut lambda = T::infinity();
        let max_iter = 20_000;
        let mut change = T::infinity();
        for _ in 0..max_iter {
            let nx = ops.mc.bilinear(&x, &x).sqrt();
            for v in x.iter_mut() {
                *v /= nx;
            }
            let next = self.solve_saddle(&ops.mc.matvec(&x))?;
            let l = rayleigh(&next);
            change = ((l - lambda) / l).abs();
            lambda = l;
            x = next;
            if change <= T::lit(1e-15) {
                return Ok(lambda.sqrt().recip());
            }
        }
        // Rayleigh quotients converge twice as fast as vectors; accept a
        // stalled but tiny change
        if change <= T::lit(1e-12) {
            return Ok(lambda.sqrt().recip());
        }
        Err(DiagnosticsError::Stagnation { iterations: max_iter, change: change.to_f64_lossy() })
    }

    /// Full record at time `t`. `potential` is used for the helicity when
    /// given, otherwise one is recovered from `B`.
    pub fn record(
        &self,
        t: T,
        b: &FieldCoefficients<T>,
        potential: Option<&FieldCoefficients<T>>,
        lambdas: (T, T),
        newton_iters: usize,
    ) -> Result<DiagnosticsRecord<T>, DiagnosticsError> {
        let ops = self.ops;
        let hel = match potential {
            Some(a) => helicity(ops, a, b)?,
            None => self.helicity_of(b)?,
        };
        let j = current(ops, b)?;
        let (lorentz, alpha0) = lorentz_and_alpha(ops, b, &j)?;
        Ok(DiagnosticsRecord {
            t,
            energy: energy(ops, b)?,
            helicity: hel,
            lorentz,
            div_norm: div_norm(ops, &b.values),
            lambda_e: lambdas.0,
            lambda_h: lambdas.1,
            alpha0,
            newton_iters,
        })
    }
}

/// Central-difference check of the first variations of
/// `E(A) = (curl A, curl A)` and `H(A) = (A, curl A)` against `2 (j, d)`
/// and `2 (B, d)`. Returns the two absolute residuals.
pub fn variational_check<T: Real>(
    ops: &OperatorSet<T>,
    a: &FieldCoefficients<T>,
    direction: &FieldCoefficients<T>,
    eps: T,
) -> Result<(T, T), DiagnosticsError> {
    let av = a.expect(SpaceKind::Hcurl)?;
    let dv = direction.expect(SpaceKind::Hcurl)?;
    let e_of = |x: &[T]| {
        let b = ops.apply_curl(x);
        ops.md.bilinear(&b, &b)
    };
    let h_of = |x: &[T]| ops.mcd.bilinear(x, &ops.apply_curl(x));
    let shifted = |s: T| av.iter().zip(dv).map(|(&x, &d)| x + s * d).collect::<Vec<T>>();
    let (ap, am) = (shifted(eps), shifted(-eps));
    let two_eps = T::lit(2.0) * eps;
    let de = (e_of(&ap) - e_of(&am)) / two_eps;
    let dh = (h_of(&ap) - h_of(&am)) / two_eps;

    let b = FieldCoefficients::new(&ops.hdiv, ops.apply_curl(av))?;
    let j = current(ops, &b)?;
    let two = T::lit(2.0);
    let je = two * ops.mc.bilinear(dv, &j.values);
    let bh = two * dot(dv, &ops.mcd.matvec(&b.values));
    Ok(((de - je).abs(), (dh - bh).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{CuboidDomain, StructuredHexMesh};

    fn ops(n: [usize; 3]) -> OperatorSet<f64> {
        OperatorSet::new(StructuredHexMesh::new(CuboidDomain::unit(), n[0], n[1], n[2]).unwrap())
    }

    fn seeded(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn recovery_is_right_inverse_and_gauge_fixed() {
        let o = ops([3, 3, 2]);
        let d = Diagnostics::new(&o);
        let a0 = seeded(o.hcurl.dim(), 1);
        let b = FieldCoefficients::new(&o.hdiv, o.apply_curl(&a0)).unwrap();
        let a = d.recover_potential(&b).unwrap();
        let ca = o.apply_curl(&a.values);
        for (x, y) in ca.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12);
        }
        let gauge = o.grad_matrix().matvec_transpose(&o.mc.matvec(&a.values));
        assert!(norm_inf(&gauge) <= 1e-12);
        let zero = FieldCoefficients::zeros(&o.hdiv);
        assert!(d.recover_potential(&zero).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn helicity_is_gauge_invariant() {
        let o = ops([3, 2, 3]);
        let a0 = seeded(o.hcurl.dim(), 2);
        let b = FieldCoefficients::new(&o.hdiv, o.apply_curl(&a0)).unwrap();
        let phi = seeded(o.h1.dim(), 3);
        let g = o.apply_grad(&phi);
        let a1: Vec<f64> = a0.iter().zip(&g).map(|(x, y)| x + y).collect();
        let h0 = helicity(&o, &FieldCoefficients::new(&o.hcurl, a0).unwrap(), &b).unwrap();
        let h1 = helicity(&o, &FieldCoefficients::new(&o.hcurl, a1).unwrap(), &b).unwrap();
        let scale = norm2(&b.values) * norm2(&g);
        assert!((h0 - h1).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn non_solenoidal_rejected() {
        let o = ops([2, 2, 2]);
        let d = Diagnostics::new(&o);
        let mut b = vec![0.0; o.hdiv.dim()];
        b[0] = 1.0;
        let r = d.recover_potential(&FieldCoefficients::new(&o.hdiv, b).unwrap());
        assert!(matches!(r, Err(DiagnosticsError::NotSolenoidal { .. })));
    }

    fn dense_poincare(o: &OperatorSet<f64>) -> f64 {
        use nalgebra::{DMatrix, SymmetricEigen};
        let n = o.hcurl.dim();
        let c = o.curl_matrix();
        let k = c.transpose().matmul(&o.md.matmul(c)).to_dense();
        let m = o.mc.to_dense();
        let km = DMatrix::from_fn(n, n, |i, j| k[i][j]);
        let mm = DMatrix::from_fn(n, n, |i, j| m[i][j]);
        let l = mm.cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let s = &li * km * li.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        // the kernel is the range of the gradient
        let kernel = o.h1.dim();
        assert!(ev[kernel - 1].abs() < 1e-10 * ev[n - 1]);
        1.0 / ev[kernel].sqrt()
    }

    #[test]
    fn poincare_matches_dense_oracle() {
        for n in [[2, 2, 2], [3, 3, 3]] {
            let o = ops(n);
            let cp = Diagnostics::new(&o).poincare_constant().unwrap();
            let oracle = dense_poincare(&o);
            assert!((cp - oracle).abs() <= 1e-8 * oracle, "{n:?}: {cp} vs {oracle}");
        }
    }

    #[test]
    fn lorentz_and_alpha_cases() {
        let o = ops([2, 2, 3]);
        let a0 = seeded(o.hcurl.dim(), 4);
        let b = FieldCoefficients::new(&o.hdiv, o.apply_curl(&a0)).unwrap();
        let zero_j = FieldCoefficients::zeros(&o.hcurl);
        let (l, alpha) = lorentz_and_alpha(&o, &b, &zero_j).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(alpha, Some(0.0));
        // (Q B, B) = (Q B, Q B), so j = 2 Q(B) gives alpha = 2 |QB|^2 / |B|^2
        let h = o.l2_project_div_to_curl(&b).unwrap();
        let j2 = FieldCoefficients::new(&o.hcurl, h.values.iter().map(|v| 2.0 * v).collect()).unwrap();
        let (_, alpha) = lorentz_and_alpha(&o, &b, &j2).unwrap();
        let alpha = alpha.unwrap();
        let expect = 2.0 * o.mc.bilinear(&h.values, &h.values) / o.md.bilinear(&b.values, &b.values);
        assert!((alpha - expect).abs() <= 1e-12 * expect.abs().max(1.0), "alpha {alpha} vs {expect}");
        assert!((0.0..=2.0 + 1e-12).contains(&alpha));
        let (_, none) = lorentz_and_alpha(&o, &FieldCoefficients::zeros(&o.hdiv), &j2).unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn alpha_minimises_misfit() {
        let o = ops([2, 3, 2]);
        let b = FieldCoefficients::new(&o.hdiv, o.apply_curl(&seeded(o.hcurl.dim(), 5))).unwrap();
        let j = current(&o, &b).unwrap();
        let (_, alpha) = lorentz_and_alpha(&o, &b, &j).unwrap();
        let alpha = alpha.unwrap();
        // ||j - a B||^2 = j.Mc.j - 2a j.Mcd.B + a^2 B.Md.B
        let misfit = |a: f64| {
            o.mc.bilinear(&j.values, &j.values) - 2.0 * a * o.mcd.bilinear(&j.values, &b.values)
                + a * a * o.md.bilinear(&b.values, &b.values)
        };
        assert!(misfit(alpha + 1e-3) > misfit(alpha));
        assert!(misfit(alpha - 1e-3) > misfit(alpha));
    }

    #[test]
    fn variational_residuals() {
        let o = ops([2, 2, 2]);
        let zero = FieldCoefficients::zeros(&o.hcurl);
        let d = FieldCoefficients::new(&o.hcurl, seeded(o.hcurl.dim(), 6)).unwrap();
        let (re, rh) = variational_check(&o, &zero, &d, 1e-3).unwrap();
        assert!(re <= 1e-12 && rh <= 1e-12);
        for seed in 0..5 {
            let a = FieldCoefficients::new(&o.hcurl, seeded(o.hcurl.dim(), 100 + seed)).unwrap();
            let d = FieldCoefficients::new(&o.hcurl, seeded(o.hcurl.dim(), 200 + seed)).unwrap();
            let s = (1.0 + norm2(&a.values)).powi(2);
            let (re, rh) = variational_check(&o, &a, &d, 1e-3).unwrap();
            assert!(re <= 1e-10 * s && rh <= 1e-10 * s, "{re} {rh}");
            let (re2, rh2) = variational_check(&o, &a, &d, 1e-4).unwrap();
            assert!(re2 <= 1e-10 * s && rh2 <= 1e-10 * s);
        }
    }

    #[test]
    fn quadratic_scaling() {
        let o = ops([2, 2, 2]);
        let a = seeded(o.hcurl.dim(), 7);
        let b = FieldCoefficients::new(&o.hdiv, o.apply_curl(&a)).unwrap();
        let b3 = FieldCoefficients::new(&o.hdiv, b.values.iter().map(|v| 3.0 * v).collect()).unwrap();
        let e1 = energy(&o, &b).unwrap();
        let e3 = energy(&o, &b3).unwrap();
        assert!((e3 - 9.0 * e1).abs() <= 1e-13 * e3);
    }
}
