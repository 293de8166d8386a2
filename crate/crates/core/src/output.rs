//! Time series CSV and legacy VTK snapshots.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;
use crate::feec::{FieldCoefficients, OperatorSet, SpaceKind};
use crate::mesh::transverse;
use crate::scalar::{Real, Vec3};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("nothing to write: {0}")]
    Empty(&'static str),
    #[error("snapshot field lives in {got:?}, expected H(div)")]
    WrongSpace { got: SpaceKind },
}

pub const CSV_HEADER: &str = "t,energy,helicity,lorentz,div_norm,lambda_E,lambda_H,alpha0,newton_iters";

fn num<T: Real>(out: &mut String, x: T) {
    // 17 significant digits
    let _ = write!(out, "{:.16e}", x.to_f64_lossy());
}

/// CSV text for `records`, header first.
pub fn timeseries_csv<T: Real>(records: &[DiagnosticsRecord<T>]) -> String {
    let mut s = String::with_capacity(200 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        for x in [r.t, r.energy, r.helicity, r.lorentz, r.div_norm, r.lambda_e, r.lambda_h] {
            num(&mut s, x);
            s.push(',');
        }
        num(&mut s, r.alpha0.unwrap_or_else(T::nan));
        let _ = writeln!(s, ",{}", r.newton_iters);
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })
}

pub fn write_timeseries<T: Real>(path: &Path, records: &[DiagnosticsRecord<T>]) -> Result<(), OutputError> {
    if records.is_empty() {
        return Err(OutputError::Empty("no diagnostics records"));
    }
    write_file(path, &timeseries_csv(records))
}

/// Cell averages of an H(div) field: the mean of the two opposite face
/// fluxes of each axis divided by the face area, plus `background`.
pub fn cell_averages<T: Real>(ops: &OperatorSet<T>, b: &FieldCoefficients<T>, background: Vec3<T>) -> Vec<Vec3<T>> {
    let h = ops.mesh().spacing();
    let half = T::lit(0.5);
    (0..ops.mesh().n_cells())
        .map(|c| {
            let f = ops.gather_faces(c, &b.values);
            let mut v = background;
            for (a, va) in v.iter_mut().enumerate() {
                let (p, q) = transverse(a);
                *va += half * (f[2 * a] + f[2 * a + 1]) / (h[p] * h[q]);
            }
            v
        })
        .collect()
}

/// Legacy ASCII VTK unstructured grid of hexahedra with cell vectors `B`.
pub fn vtk_string<T: Real>(ops: &OperatorSet<T>, b: &FieldCoefficients<T>, background: Vec3<T>, title: &str) -> String {
    let mesh = ops.mesh();
    let [nx, ny, nz] = mesh.cells_per_axis();
    let nv = mesh.n_vertices();
    let nc = mesh.n_cells();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID", title.replace('\n', " "));
    let _ = writeln!(s, "POINTS {nv} double");
    for v in 0..nv {
        let p = mesh.vertex_coords(v);
        let _ = writeln!(s, "{:e} {:e} {:e}", p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy());
    }
    let _ = writeln!(s, "CELLS {nc} {}", 9 * nc);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let id = |di, dj, dk| mesh.vertex_index([i + di, j + dj, k + dk]);
                let _ = writeln!(
                    s,
                    "8 {} {} {} {} {} {} {} {}",
                    id(0, 0, 0),
                    id(1, 0, 0),
                    id(1, 1, 0),
                    id(0, 1, 0),
                    id(0, 0, 1),
                    id(1, 0, 1),
                    id(1, 1, 1),
                    id(0, 1, 1)
                );
            }
        }
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        s.push_str("12\n");
    }
    let _ = writeln!(s, "CELL_DATA {nc}\nVECTORS B double");
    for v in cell_averages(ops, b, background) {
        let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", v[0].to_f64_lossy(), v[1].to_f64_lossy(), v[2].to_f64_lossy());
    }
    s
}

/// `field_<t>.vtk` with `t` zero padded so names sort by time.
pub fn snapshot_name<T: Real>(t: T) -> String {
    format!("field_{:013.6}.vtk", t.to_f64_lossy())
}

pub fn write_vtk<T: Real>(
    path: &Path,
    ops: &OperatorSet<T>,
    b: &FieldCoefficients<T>,
    background: Vec3<T>,
    title: &str,
) -> Result<(), OutputError> {
    if b.kind() != SpaceKind::Hdiv {
        return Err(OutputError::WrongSpace { got: b.kind() });
    }
    write_file(path, &vtk_string(ops, b, background, title))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{CuboidDomain, StructuredHexMesh};

    fn rec(t: f64, alpha0: Option<f64>) -> DiagnosticsRecord<f64> {
        DiagnosticsRecord {
            t,
            energy: 0.5,
            helicity: -1.0 / 3.0,
            lorentz: 0.0,
            div_norm: 0.0,
            lambda_e: 0.0,
            lambda_h: 1e-300,
            alpha0,
            newton_iters: 3,
        }
    }

    #[test]
    fn csv_layout() {
        let s = timeseries_csv(&[rec(0.0, None)]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        let cols: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cols.len(), 9);
        assert_eq!(cols[2], "-3.3333333333333331e-1");
        assert_eq!(cols[7], "NaN");
        assert_eq!(cols[8], "3");
        for c in &cols[..7] {
            let v: f64 = c.parse().unwrap();
            assert!(v.is_finite());
        }
        let s = timeseries_csv(&[rec(0.0, Some(2.0)), rec(1.0, Some(0.1))]);
        assert_eq!(s.lines().nth(2).unwrap().split(',').nth(7).unwrap().parse::<f64>().unwrap(), 0.1);
        assert!(matches!(write_timeseries::<f64>(Path::new("unused.csv"), &[]), Err(OutputError::Empty(_))));
    }

    #[test]
    fn uniform_flux_cell_average() {
        let ops = OperatorSet::new(StructuredHexMesh::new(CuboidDomain::centered(1.0, 2.0).unwrap(), 2, 2, 2).unwrap());
        // z-directed unit field: flux through an interior z-face is its area
        let h = ops.mesh().spacing();
        let full: Vec<f64> = (0..ops.mesh().n_faces())
            .map(|f| if ops.mesh().face_position(f).0 == 2 { h[0] * h[1] } else { 0.0 })
            .collect();
        let b = FieldCoefficients::new(&ops.hdiv, ops.hdiv.restrict(&full)).unwrap();
        // boundary faces are constrained, so each cell sees one of its two
        // z-faces
        for v in cell_averages(&ops, &b, [0.0, 0.0, 1.0]) {
            assert_eq!(v, [0.0, 0.0, 1.5]);
        }
        let s = vtk_string(&ops, &b, [0.0; 3], "t=0");
        assert!(s.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(s.contains("CELLS 8 72\n") && s.contains("POINTS 27 double\n") && s.contains("CELL_DATA 8\n"));
        assert_eq!(s.lines().filter(|l| *l == "12").count(), 8);
    }

    #[test]
    fn snapshot_names_sort_by_time() {
        let a = snapshot_name(2.0000000000000004f64);
        let b = snapshot_name(10000.0f64);
        assert_eq!(a, "field_000002.000000.vtk");
        assert!(a < b);
    }
}
