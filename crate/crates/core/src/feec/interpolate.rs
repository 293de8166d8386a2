use super::quadrature::gauss_legendre;
use super::space::{FieldCoefficients, SpaceKind};
use super::{FeecError, OperatorSet};
use crate::mesh::{transverse, StructuredHexMesh};
use crate::scalar::{Real, Vec3};

/// Default Gauss points per direction for degree-of-freedom functionals.
pub const DEFAULT_INTERPOLATION_POINTS: usize = 5;

fn checked<T: Real>(v: Vec3<T>, x: Vec3<T>) -> Result<Vec3<T>, FeecError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(FeecError::NonFinite { point: x.map(Real::to_f64_lossy) })
    }
}

/// Tangential line integrals over every edge of the mesh, boundary included.
pub fn edge_integrals<T: Real, F>(mesh: &StructuredHexMesh<T>, f: F, q: usize) -> Result<Vec<T>, FeecError>
where
    F: Fn(Vec3<T>) -> Vec3<T>,
{
    let (nodes, weights) = gauss_legendre::<T>(q);
    let h = mesh.spacing();
    (0..mesh.n_edges())
        .map(|e| {
            let (axis, p) = mesh.edge_position(e);
            let x0 = mesh.point(p);
            let mut s = T::zero();
            for (&t, &w) in nodes.iter().zip(&weights) {
                let mut x = x0;
                x[axis] += t * h[axis];
                s += w * checked(f(x), x)?[axis];
            }
            Ok(s * h[axis])
        })
        .collect()
}

/// Normal fluxes through every face of the mesh, boundary included.
pub fn face_fluxes<T: Real, F>(mesh: &StructuredHexMesh<T>, f: F, q: usize) -> Result<Vec<T>, FeecError>
where
    F: Fn(Vec3<T>) -> Vec3<T>,
{
    let (nodes, weights) = gauss_legendre::<T>(q);
    let h = mesh.spacing();
    (0..mesh.n_faces())
        .map(|fi| {
            let (axis, p) = mesh.face_position(fi);
            let (s_ax, t_ax) = transverse(axis);
            let x0 = mesh.point(p);
            let mut s = T::zero();
            for (&ts, &ws) in nodes.iter().zip(&weights) {
                for (&tt, &wt) in nodes.iter().zip(&weights) {
                    let mut x = x0;
                    x[s_ax] += ts * h[s_ax];
                    x[t_ax] += tt * h[t_ax];
                    s += ws * wt * checked(f(x), x)?[axis];
                }
            }
            Ok(s * h[s_ax] * h[t_ax])
        })
        .collect()
}

/// Canonical interpolant of an analytic field into H0(curl) or H0(div):
/// exact edge or face integrals by `q`-point Gauss quadrature, boundary
/// degrees of freedom dropped.
pub fn interpolate<T: Real, F>(
    ops: &OperatorSet<T>,
    f: F,
    kind: SpaceKind,
    q: usize,
) -> Result<FieldCoefficients<T>, FeecError>
where
    F: Fn(Vec3<T>) -> Vec3<T>,
{
    let full = match kind {
        SpaceKind::Hcurl => edge_integrals(ops.mesh(), f, q)?,
        SpaceKind::Hdiv => face_fluxes(ops.mesh(), f, q)?,
        other => return Err(FeecError::Unsupported { kind: other }),
    };
    let space = ops.space(kind);
    FieldCoefficients::new(space, space.restrict(&full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::CuboidDomain;
    use crate::scalar::norm_inf;

    fn hopf_ops() -> OperatorSet<f64> {
        OperatorSet::new(StructuredHexMesh::new(CuboidDomain::centered(4.0, 10.0).unwrap(), 4, 4, 10).unwrap())
    }

    #[test]
    fn constant_field_fluxes() {
        let o = hopf_ops();
        let m = o.mesh();
        let fl = face_fluxes(m, |_| [0.0, 0.0, 1.0], 5).unwrap();
        let area = 2.0 * 2.0;
        for (f, v) in fl.iter().enumerate() {
            let (axis, _) = m.face_position(f);
            let expect = if axis == 2 { area } else { 0.0 };
            assert!((v - expect).abs() < 1e-14);
        }
        // energy of the unmasked interpolant is the domain volume
        let e = o.md_full.bilinear(&fl, &fl);
        assert!((e - 1280.0).abs() < 1e-10);
    }

    #[test]
    fn gradient_has_zero_curl() {
        let o = hopf_ops();
        let g = edge_integrals(o.mesh(), |x| [x[1] * x[2], x[0] * x[2], x[0] * x[1]], 5).unwrap();
        let c = o.curl_full.map(f64::from).matvec(&g);
        assert!(norm_inf(&c) < 1e-12);
    }

    #[test]
    fn commuting_diagram_improves_with_quadrature() {
        let o = hopf_ops();
        // curl of (0, 0, exp(-r^2)) , divergence-free
        let f = |x: [f64; 3]| {
            let g = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 4.0).exp();
            [-x[1] / 2.0 * g, x[0] / 2.0 * g, 0.0]
        };
        let div = o.div_full.map(f64::from);
        let d2 = norm_inf(&div.matvec(&face_fluxes(o.mesh(), f, 2).unwrap()));
        let d8 = norm_inf(&div.matvec(&face_fluxes(o.mesh(), f, 8).unwrap()));
        assert!(d8 < 1e-12, "q=8 divergence {d8}");
        assert!(d2 > 100.0 * d8, "q=2 {d2} vs q=8 {d8}");
    }

    #[test]
    fn non_finite_rejected() {
        let o = hopf_ops();
        let r = interpolate(&o, |_| [f64::NAN, 0.0, 0.0], SpaceKind::Hdiv, 2);
        assert!(matches!(r, Err(FeecError::NonFinite { .. })));
    }
}
