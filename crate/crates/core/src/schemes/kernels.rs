//! Cell kernels: local residuals and hand-derived local Jacobians of the
//! three schemes. Layout offsets are in units of local unknowns.

use super::assembler::Local;
use crate::feec::OperatorSet;
use crate::scalar::{cross, dot3, Real, Vec3};

/// Quantities shared by every cell of a uniform mesh.
pub(crate) struct LocalConsts<T> {
    /// `curl^T Md curl`.
    ctmdc: [[T; 12]; 12],
    /// `Mcd curl` (edge rows).
    mcdc: [[T; 12]; 12],
    /// Curl of each edge basis function at the nonlinear points.
    beta: Vec<[Vec3<T>; 12]>,
}

impl<T: Real> LocalConsts<T> {
    pub fn new(ops: &OperatorSet<T>) -> Self {
        let l = &ops.local;
        let mut ctmdc = [[T::zero(); 12]; 12];
        let mut mcdc = [[T::zero(); 12]; 12];
        for i in 0..12 {
            for m in 0..12 {
                for f in 0..6 {
                    mcdc[i][m] += l.mcd[i][f] * l.curl[f][m];
                    for g in 0..6 {
                        ctmdc[i][m] += l.curl[f][i] * l.md[f][g] * l.curl[g][m];
                    }
                }
            }
        }
        let tab = &ops.nonlinear;
        let beta = (0..tab.len())
            .map(|q| {
                let mut b = [[T::zero(); 3]; 12];
                for (m, bm) in b.iter_mut().enumerate() {
                    for f in 0..6 {
                        let s = l.curl[f][m];
                        if s != T::zero() {
                            bm[f / 2] += s * tab.face[q][f][f / 2];
                        }
                    }
                }
                b
            })
            .collect();
        Self { ctmdc, mcdc, beta }
    }
}

fn edge_value<T: Real>(phi: &[Vec3<T>; 12], c: &[T]) -> Vec3<T> {
    let mut v = [T::zero(); 3];
    for k in 0..12 {
        v[k / 4] += c[k] * phi[k][k / 4];
    }
    v
}

fn face_value<T: Real>(psi: &[Vec3<T>; 6], c: &[T]) -> Vec3<T> {
    let mut v = [T::zero(); 3];
    for k in 0..6 {
        v[k / 2] += c[k] * psi[k][k / 2];
    }
    v
}

fn scale<T: Real>(s: T, v: Vec3<T>) -> Vec3<T> {
    v.map(|x| s * x)
}

/// Single-component test function: `t . v`.
#[inline]
fn edge_test<T: Real>(phi: &[Vec3<T>; 12], i: usize, v: &Vec3<T>) -> T {
    phi[i][i / 4] * v[i / 4]
}

#[inline]
fn face_test<T: Real>(psi: &[Vec3<T>; 6], i: usize, v: &Vec3<T>) -> T {
    psi[i][i / 2] * v[i / 2]
}

struct Jac<'a, T> {
    data: &'a mut [T],
    n: usize,
}

impl<T: Real> Jac<'_, T> {
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
    }
}

fn add_block<T: Real, const R: usize, const C: usize>(
    jac: &mut Option<Jac<'_, T>>,
    r0: usize,
    c0: usize,
    s: T,
    m: &[[T; C]; R],
) {
    if let Some(j) = jac.as_mut() {
        for (i, row) in m.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                j.add(r0 + i, c0 + k, s * v);
            }
        }
    }
}

fn matvec<T: Real, const R: usize, const C: usize>(m: &[[T; C]; R], x: &[T]) -> [T; R] {
    let mut y = [T::zero(); R];
    for (yi, row) in y.iter_mut().zip(m) {
        for (&a, &b) in row.iter().zip(x) {
            *yi += a * b;
        }
    }
    y
}

fn jac_of<T: Real>(data: &mut [T], n: usize) -> Option<Jac<'_, T>> {
    (!data.is_empty()).then_some(Jac { data, n })
}

/// Parameters of a single step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepParams<T> {
    pub dt: T,
    pub tau: T,
}

pub(crate) mod layout {
    pub const NC_E: usize = 0;
    pub const NC_J: usize = 12;
    pub const NC_LEN: usize = 24;

    pub const PR_U: usize = 0;
    pub const PR_E: usize = 6;
    pub const PR_J: usize = 18;
    pub const PR_H: usize = 30;
    pub const PR_LEN: usize = 42;

    pub const LM_U: usize = 0;
    pub const LM_A: usize = 6;
    pub const LM_E: usize = 18;
    pub const LM_J: usize = 30;
    pub const LM_LEN: usize = 42;
}
use layout::*;

/// `B^{n+1/2} = B^n - dt/2 curl E` on one cell.
fn midpoint_field<T: Real>(ops: &OperatorSet<T>, bn: &[T; 6], e: &[T], dt: T) -> [T; 6] {
    let ce = ops.local.curl_apply(e);
    let half = dt * T::lit(0.5);
    let mut b = *bn;
    for (bi, c) in b.iter_mut().zip(ce) {
        *bi -= half * c;
    }
    b
}

/// Shared Crank-Nicolson rows: `Mc j - curl^T Md B^{n+1/2}`.
fn current_rows<T: Real>(
    ops: &OperatorSet<T>,
    k: &LocalConsts<T>,
    x_j: &[T],
    bh: &[T; 6],
    dt: T,
    (rj, re): (usize, usize),
    r: &mut [T],
    jac: &mut Option<Jac<'_, T>>,
) {
    let l = &ops.local;
    let mcj = matvec(&l.mc, x_j);
    let ctb = l.curl_t_md(bh);
    for i in 0..12 {
        r[rj + i] += mcj[i] - ctb[i];
    }
    add_block(jac, rj, rj, T::one(), &l.mc);
    add_block(jac, rj, re, dt * T::lit(0.5), &k.ctmdc);
}

/// Crank-Nicolson scheme without helicity structure; unknowns `(E, j)`.
pub(crate) fn nonconservative<T: Real>(
    ops: &OperatorSet<T>,
    k: &LocalConsts<T>,
    bn: &[T; 6],
    p: StepParams<T>,
    x: &[T],
    out: &mut Local<T>,
) {
    let l = &ops.local;
    let tab = &ops.nonlinear;
    let (e, j) = (&x[NC_E..NC_E + 12], &x[NC_J..NC_J + 12]);
    let bh = midpoint_field(ops, bn, e, p.dt);
    let mut jac = jac_of(&mut out.jac, NC_LEN);
    let r = &mut out.r;

    let mce = matvec(&l.mc, e);
    for i in 0..12 {
        r[NC_E + i] += mce[i];
    }
    add_block(&mut jac, NC_E, NC_E, T::one(), &l.mc);
    current_rows(ops, k, j, &bh, p.dt, (NC_J, NC_E), r, &mut jac);

    let minus_half_dt = -p.dt * T::lit(0.5);
    for q in 0..tab.len() {
        let (phi, psi) = (&tab.edge[q], &tab.face[q]);
        let w = tab.weights[q] * p.tau;
        let bq = face_value(psi, &bh);
        let jq = edge_value(phi, j);
        let jb = cross(&jq, &bq);
        let f = cross(&jb, &bq);
        for i in 0..12 {
            r[NC_E + i] += w * edge_test(phi, i, &f);
        }
        if let Some(jm) = jac.as_mut() {
            for kk in 0..12 {
                let dj = cross(&cross(&phi[kk], &bq), &bq);
                let db = scale(minus_half_dt, k.beta[q][kk]);
                let de = {
                    let a = cross(&cross(&jq, &db), &bq);
                    let b = cross(&jb, &db);
                    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
                };
                for i in 0..12 {
                    jm.add(NC_E + i, NC_J + kk, w * edge_test(phi, i, &dj));
                    jm.add(NC_E + i, NC_E + kk, w * edge_test(phi, i, &de));
                }
            }
        }
    }
}

/// Projection scheme; unknowns `(u, E, j, H)`.
pub(crate) fn projection<T: Real>(
    ops: &OperatorSet<T>,
    k: &LocalConsts<T>,
    bn: &[T; 6],
    p: StepParams<T>,
    x: &[T],
    out: &mut Local<T>,
) {
    let l = &ops.local;
    let tab = &ops.nonlinear;
    let u = &x[PR_U..PR_U + 6];
    let e = &x[PR_E..PR_E + 12];
    let j = &x[PR_J..PR_J + 12];
    let h = &x[PR_H..PR_H + 12];
    let bh = midpoint_field(ops, bn, e, p.dt);
    let mut jac = jac_of(&mut out.jac, PR_LEN);
    let r = &mut out.r;

    let mdu = matvec(&l.md, u);
    let mce = matvec(&l.mc, e);
    let mch = matvec(&l.mc, h);
    let mcdb = matvec(&l.mcd, &bh);
    for i in 0..6 {
        r[PR_U + i] += mdu[i];
    }
    for i in 0..12 {
        r[PR_E + i] += mce[i];
        r[PR_H + i] += mch[i] - mcdb[i];
    }
    add_block(&mut jac, PR_U, PR_U, T::one(), &l.md);
    add_block(&mut jac, PR_E, PR_E, T::one(), &l.mc);
    add_block(&mut jac, PR_H, PR_H, T::one(), &l.mc);
    add_block(&mut jac, PR_H, PR_E, p.dt * T::lit(0.5), &k.mcdc);
    current_rows(ops, k, j, &bh, p.dt, (PR_J, PR_E), r, &mut jac);

    for q in 0..tab.len() {
        let (phi, psi) = (&tab.edge[q], &tab.face[q]);
        let w = tab.weights[q];
        let wt = w * p.tau;
        let uq = face_value(psi, u);
        let jq = edge_value(phi, j);
        let hq = edge_value(phi, h);
        let jh = cross(&jq, &hq);
        let uh = cross(&uq, &hq);
        for i in 0..6 {
            r[PR_U + i] -= wt * face_test(psi, i, &jh);
        }
        for i in 0..12 {
            r[PR_E + i] += w * edge_test(phi, i, &uh);
        }
        if let Some(jm) = jac.as_mut() {
            for kk in 0..12 {
                let d_j = cross(&phi[kk], &hq);
                let d_h = cross(&jq, &phi[kk]);
                let e_h = cross(&uq, &phi[kk]);
                for i in 0..6 {
                    jm.add(PR_U + i, PR_J + kk, -wt * face_test(psi, i, &d_j));
                    jm.add(PR_U + i, PR_H + kk, -wt * face_test(psi, i, &d_h));
                }
                for i in 0..12 {
                    jm.add(PR_E + i, PR_H + kk, w * edge_test(phi, i, &e_h));
                }
            }
            for f in 0..6 {
                let e_u = cross(&psi[f], &hq);
                for i in 0..12 {
                    jm.add(PR_E + i, PR_U + f, w * edge_test(phi, i, &e_u));
                }
            }
        }
    }
}

/// Multipliers and references of one implicit Euler step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LagrangeParams<T> {
    pub step: StepParams<T>,
    pub lambda_e: T,
    pub lambda_h: T,
}

/// Indices of the extra outputs of [`lagrange`].
pub(crate) mod lm_out {
    /// `d R / d lambda_E` (field rows).
    pub const COL_E: usize = 0;
    /// `d R / d lambda_H`.
    pub const COL_H: usize = 1;
    /// Gradient of the energy-law row.
    pub const ROW_E: usize = 2;
    /// Gradient of the helicity row.
    pub const ROW_H: usize = 3;
    pub const N_VECS: usize = 4;

    /// `B^T Md B`.
    pub const ENERGY: usize = 0;
    /// `|B x j|^2` integrated.
    pub const DISSIPATION: usize = 1;
    /// `A^T Mcd B`.
    pub const HELICITY: usize = 2;
    pub const N_SCALARS: usize = 3;
}

/// Lagrange multiplier scheme field rows; unknowns `(u, A, E, j)`. The
/// multiplier couplings and the scalar constraint rows are returned through
/// `out.vecs` and `out.scalars`.
pub(crate) fn lagrange<T: Real>(
    ops: &OperatorSet<T>,
    k: &LocalConsts<T>,
    an: &[T; 12],
    p: LagrangeParams<T>,
    x: &[T],
    out: &mut Local<T>,
) {
    let l = &ops.local;
    let tab = &ops.nonlinear;
    let (dt, tau) = (p.step.dt, p.step.tau);
    let u = &x[LM_U..LM_U + 6];
    let a = &x[LM_A..LM_A + 12];
    let e = &x[LM_E..LM_E + 12];
    let j = &x[LM_J..LM_J + 12];
    let b = l.curl_apply(a);
    let inv_dt = dt.recip();

    let mcj = matvec(&l.mc, j);
    let mcdb = matvec(&l.mcd, &b);
    let mdb = matvec(&l.md, &b);
    {
        let mut jac = jac_of(&mut out.jac, LM_LEN);
        let r = &mut out.r;
        let da: Vec<T> = a.iter().zip(an).map(|(&x, &y)| x - y).collect();
        let mcda = matvec(&l.mc, &da);
        let mce = matvec(&l.mc, e);
        let mdu = matvec(&l.md, u);
        let ctb = l.curl_t_md(&b);
        for i in 0..12 {
            r[LM_A + i] += mcda[i] * inv_dt + mce[i] + p.lambda_h * mcdb[i] + p.lambda_e * mcj[i];
            r[LM_E + i] += mce[i];
            r[LM_J + i] += mcj[i] - ctb[i];
        }
        for i in 0..6 {
            r[LM_U + i] += mdu[i];
        }
        add_block(&mut jac, LM_A, LM_A, inv_dt, &l.mc);
        add_block(&mut jac, LM_A, LM_A, p.lambda_h, &k.mcdc);
        add_block(&mut jac, LM_A, LM_E, T::one(), &l.mc);
        add_block(&mut jac, LM_A, LM_J, p.lambda_e, &l.mc);
        add_block(&mut jac, LM_U, LM_U, T::one(), &l.md);
        add_block(&mut jac, LM_E, LM_E, T::one(), &l.mc);
        add_block(&mut jac, LM_J, LM_J, T::one(), &l.mc);
        add_block(&mut jac, LM_J, LM_A, -T::one(), &k.ctmdc);

        for q in 0..tab.len() {
            let (phi, psi) = (&tab.edge[q], &tab.face[q]);
            let w = tab.weights[q];
            let wt = w * tau;
            let uq = face_value(psi, u);
            let jq = edge_value(phi, j);
            let bq = face_value(psi, &b);
            let jb = cross(&jq, &bq);
            let ub = cross(&uq, &bq);
            for i in 0..6 {
                r[LM_U + i] -= wt * face_test(psi, i, &jb);
            }
            for i in 0..12 {
                r[LM_E + i] += w * edge_test(phi, i, &ub);
            }
            if let Some(jm) = jac.as_mut() {
                for kk in 0..12 {
                    let beta = &k.beta[q][kk];
                    let u_j = cross(&phi[kk], &bq);
                    let u_a = cross(&jq, beta);
                    let e_a = cross(&uq, beta);
                    for i in 0..6 {
                        jm.add(LM_U + i, LM_J + kk, -wt * face_test(psi, i, &u_j));
                        jm.add(LM_U + i, LM_A + kk, -wt * face_test(psi, i, &u_a));
                    }
                    for i in 0..12 {
                        jm.add(LM_E + i, LM_A + kk, w * edge_test(phi, i, &e_a));
                    }
                }
                for f in 0..6 {
                    let e_u = cross(&psi[f], &bq);
                    for i in 0..12 {
                        jm.add(LM_E + i, LM_U + f, w * edge_test(phi, i, &e_u));
                    }
                }
            }
        }
    }

    // multiplier columns and constraint rows
    let mut dissipation = T::zero();
    let two = T::lit(2.0);
    let mut row_e = [T::zero(); LM_LEN];
    for q in 0..tab.len() {
        let (phi, psi) = (&tab.edge[q], &tab.face[q]);
        let w = tab.weights[q];
        let jq = edge_value(phi, j);
        let bq = face_value(psi, &b);
        let bj = cross(&bq, &jq);
        dissipation += w * dot3(&bj, &bj);
        // d|B x j|^2 = 2 (B x j) . (dB x j + B x dj)
        let c = T::lit(4.0) * tau * w;
        for kk in 0..12 {
            row_e[LM_A + kk] += c * dot3(&bj, &cross(&k.beta[q][kk], &jq));
            row_e[LM_J + kk] += c * dot3(&bj, &cross(&bq, &phi[kk]));
        }
    }
    let ctmdb = l.curl_t_md(&b);
    let mcda_t = {
        // Mcd^T A, face-indexed
        let mut v = [T::zero(); 6];
        for (f, vf) in v.iter_mut().enumerate() {
            for i in 0..12 {
                *vf += l.mcd[i][f] * a[i];
            }
        }
        v
    };
    for m in 0..12 {
        row_e[LM_A + m] += two * inv_dt * ctmdb[m];
        let mut ch = T::zero();
        for f in 0..6 {
            ch += l.curl[f][m] * mcda_t[f];
        }
        out.vecs[lm_out::ROW_H][LM_A + m] = mcdb[m] + ch;
        out.vecs[lm_out::COL_E][LM_A + m] = mcj[m];
        out.vecs[lm_out::COL_H][LM_A + m] = mcdb[m];
    }
    out.vecs[lm_out::ROW_E].copy_from_slice(&row_e);
    out.scalars[lm_out::ENERGY] = b.iter().zip(&mdb).fold(T::zero(), |s, (&x, &y)| s + x * y);
    out.scalars[lm_out::DISSIPATION] = dissipation;
    out.scalars[lm_out::HELICITY] = a.iter().zip(&mcdb).fold(T::zero(), |s, (&x, &y)| s + x * y);
}
