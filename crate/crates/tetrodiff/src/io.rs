//! Mesh and field persistence: the TETMESH v1 text format, VTK legacy ASCII
//! export, and the CSV reports (histograms, annealing trace, field
//! snapshots, per-element flux).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{FeatureId, Mesh, Node, NodeClass, Point3, TetElement, Vec3};
use crate::metropolis::TraceRow;

/// Coordinates are printed with 17 significant digits so that write/read
/// round trips are bit-exact.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_mesh_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str("TETMESH v1\n");
    let _ = writeln!(out, "{}", mesh.nodes.len());
    for (i, node) in mesh.nodes.iter().enumerate() {
        let (class, feature) = match node.class {
            NodeClass::Inner => ("inner", "-".to_string()),
            NodeClass::Outer(FeatureId(f)) => ("outer", f.to_string()),
        };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            i,
            fmt_f64(node.position.x),
            fmt_f64(node.position.y),
            fmt_f64(node.position.z),
            class,
            feature
        );
    }
    let _ = writeln!(out, "{}", mesh.elements.len());
    for (i, e) in mesh.elements.iter().enumerate() {
        let _ = writeln!(out, "{} {} {} {} {}", i, e.nodes[0], e.nodes[1], e.nodes[2], e.nodes[3]);
    }
    out
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    fs::write(path, write_mesh_string(mesh))?;
    Ok(())
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::Parse { line: self.line_no, msg: "unexpected end of file".into() })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line_no, msg: msg.into() }
    }
}

pub fn read_mesh_string(text: &str) -> Result<Mesh> {
    let mut r = LineReader { lines: text.lines(), line_no: 0 };
    let header = r.next()?;
    if header.trim() != "TETMESH v1" {
        return Err(r.err(format!("bad header {header:?}, expected \"TETMESH v1\"")));
    }
    let n_nodes: usize =
        r.next()?.trim().parse().map_err(|e| r.err(format!("bad node count: {e}")))?;
    let mut mesh = Mesh::default();
    for expect in 0..n_nodes {
        let line = r.next()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(r.err(format!("expected 6 node fields, got {}", fields.len())));
        }
        let id: usize = fields[0].parse().map_err(|e| r.err(format!("bad node id: {e}")))?;
        if id != expect {
            return Err(r.err(format!("node id {id} out of order, expected {expect}")));
        }
        let mut coord = [0.0f64; 3];
        for (k, c) in coord.iter_mut().enumerate() {
            *c = fields[1 + k]
                .parse()
                .map_err(|e| r.err(format!("bad coordinate {:?}: {e}", fields[1 + k])))?;
        }
        let class = match (fields[4], fields[5]) {
            ("inner", "-") => NodeClass::Inner,
            ("outer", f) => NodeClass::Outer(FeatureId(
                f.parse().map_err(|e| r.err(format!("bad feature id {f:?}: {e}")))?,
            )),
            (c, f) => return Err(r.err(format!("bad class/feature pair {c:?} {f:?}"))),
        };
        mesh.add_node(Node { position: Point3::new(coord[0], coord[1], coord[2]), class });
    }
    let n_elems: usize =
        r.next()?.trim().parse().map_err(|e| r.err(format!("bad element count: {e}")))?;
    for expect in 0..n_elems {
        let line = r.next()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(r.err(format!("expected 5 element fields, got {}", fields.len())));
        }
        let id: usize = fields[0].parse().map_err(|e| r.err(format!("bad element id: {e}")))?;
        if id != expect {
            return Err(r.err(format!("element id {id} out of order, expected {expect}")));
        }
        let mut nodes = [0usize; 4];
        for (k, n) in nodes.iter_mut().enumerate() {
            *n = fields[1 + k]
                .parse()
                .map_err(|e| r.err(format!("bad node index {:?}: {e}", fields[1 + k])))?;
            if *n >= mesh.nodes.len() {
                return Err(r.err(format!("node index {n} out of range")));
            }
        }
        mesh.add_element(TetElement::new(nodes, &mesh.nodes));
    }
    Ok(mesh)
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    read_mesh_string(&fs::read_to_string(path)?)
}

/// Legacy ASCII unstructured grid, tetrahedra as cell type 10. Optional
/// named per-node scalar fields are appended as POINT_DATA.
pub fn write_vtk_string(mesh: &Mesh, title: &str, point_data: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{title}");
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.nodes.len());
    for n in &mesh.nodes {
        let _ = writeln!(
            out,
            "{} {} {}",
            fmt_f64(n.position.x),
            fmt_f64(n.position.y),
            fmt_f64(n.position.z)
        );
    }
    let ne = mesh.elements.len();
    let _ = writeln!(out, "CELLS {ne} {}", 5 * ne);
    for e in &mesh.elements {
        let _ = writeln!(out, "4 {} {} {} {}", e.nodes[0], e.nodes[1], e.nodes[2], e.nodes[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        out.push_str("10\n");
    }
    if !point_data.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", mesh.nodes.len());
        for (name, values) in point_data {
            let _ = writeln!(out, "SCALARS {name} double 1");
            out.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                let _ = writeln!(out, "{}", fmt_f64(*v));
            }
        }
    }
    out
}

pub fn write_vtk(mesh: &Mesh, title: &str, point_data: &[(&str, &[f64])], path: &Path) -> Result<()> {
    fs::write(path, write_vtk_string(mesh, title, point_data))?;
    Ok(())
}

/// Fixed-bin histogram; counts outside the range land in the nearest edge
/// bin so the total always equals the sample count.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
    let mut counts = vec![0usize; bins];
    let w = (hi - lo) / bins as f64;
    for &s in samples {
        let idx = ((s - lo) / w).floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram { lo, hi, counts }
}

/// Edge lengths normalized by the target edge length h0.
pub fn edge_length_samples(mesh: &Mesh, h0: f64) -> Vec<f64> {
    mesh.edges().map(|e| mesh.edge_length(e) / h0).collect()
}

/// Element volumes normalized by the target volume v0.
pub fn volume_samples(mesh: &Mesh, v0: f64) -> Vec<f64> {
    mesh.elements.iter().map(|e| e.volume / v0).collect()
}

pub fn write_histogram_csv(h: &Histogram, label: &str, seed: u64, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# seed = {seed}");
    let _ = writeln!(out, "bin_lo,bin_hi,count");
    let w = (h.hi - h.lo) / h.counts.len() as f64;
    let _ = label;
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{c}", h.lo + i as f64 * w, h.lo + (i + 1) as f64 * w);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_energy_trace_csv(trace: &[TraceRow], seed: u64, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# seed = {seed}");
    let _ = writeln!(out, "step,temperature,energy,accept_rate");
    for row in trace {
        let _ = writeln!(out, "{},{},{},{}", row.step, row.temperature, row.energy, row.accept_rate);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Field snapshot: node id, coordinates and the three coupled fields (any
/// missing field written as 0).
pub fn write_field_csv(
    mesh: &Mesh,
    n_plus: Option<&[f64]>,
    n_minus: Option<&[f64]>,
    phi: Option<&[f64]>,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# seed = {seed}");
    let _ = writeln!(out, "node,x,y,z,n_plus,n_minus,phi");
    let get = |v: Option<&[f64]>, i: usize| v.map(|s| s[i]).unwrap_or(0.0);
    for (i, n) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            fmt_f64(n.position.x),
            fmt_f64(n.position.y),
            fmt_f64(n.position.z),
            get(n_plus, i),
            get(n_minus, i),
            get(phi, i)
        );
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_flux_csv(mesh: &Mesh, flux: &[Vec3], seed: u64, path: &Path) -> Result<()> {
    if flux.len() != mesh.elements.len() {
        return Err(Error::LengthMismatch { expected: mesh.elements.len(), got: flux.len() });
    }
    let mut out = String::new();
    let _ = writeln!(out, "# seed = {seed}");
    let _ = writeln!(out, "element,cx,cy,cz,jx,jy,jz");
    for (i, (e, j)) in mesh.elements.iter().zip(flux).enumerate() {
        let mut c = Vec3::zeros();
        for &n in &e.nodes {
            c += mesh.nodes[n].position.coords / 4.0;
        }
        let _ = writeln!(out, "{i},{},{},{},{},{},{}", c.x, c.y, c.z, j.x, j.y, j.z);
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::build_initial_mesh;
    use crate::domain::{DomainSpec, Shape};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sample_mesh() -> Mesh {
        let spec = DomainSpec::new(
            Shape::Cube { x: (0.0, PI), y: (0.0, PI), z: (0.0, PI) },
            3,
            3,
        );
        build_initial_mesh(&spec).unwrap()
    }

    fn meshes_identical(a: &Mesh, b: &Mesh) -> bool {
        a.nodes.len() == b.nodes.len()
            && a.elements.len() == b.elements.len()
            && a.nodes.iter().zip(&b.nodes).all(|(x, y)| {
                x.position == y.position && x.class == y.class
            })
            && a.elements.iter().zip(&b.elements).all(|(x, y)| x.nodes == y.nodes)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mesh = sample_mesh();
        let text = write_mesh_string(&mesh);
        let back = read_mesh_string(&text).unwrap();
        assert!(meshes_identical(&mesh, &back));
        // a second trip reproduces the same bytes
        assert_eq!(write_mesh_string(&back), text);
    }

    #[test]
    fn truncated_file_reports_line() {
        let mesh = sample_mesh();
        let text = write_mesh_string(&mesh);
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        match read_mesh_string(&cut) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            read_mesh_string("TETMESH v2\n0\n0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn bad_node_index_rejected() {
        let text = "TETMESH v1\n1\n0 0.0 0.0 0.0 inner -\n1\n0 0 0 0 9\n";
        assert!(matches!(read_mesh_string(text), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn vtk_single_tet_layout() {
        let mut m = Mesh::default();
        m.add_node(Node::inner(Point3::new(0.0, 0.0, 0.0)));
        m.add_node(Node::inner(Point3::new(1.0, 0.0, 0.0)));
        m.add_node(Node::inner(Point3::new(0.0, 1.0, 0.0)));
        m.add_node(Node::inner(Point3::new(0.0, 0.0, 1.0)));
        let e = TetElement::new([0, 1, 2, 3], &m.nodes);
        m.add_element(e);
        let text = write_vtk_string(&m, "unit tet", &[]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(lines[4], "POINTS 4 double");
        assert!(text.contains("CELLS 1 5"));
        assert!(text.contains("CELL_TYPES 1\n10\n"));
    }

    #[test]
    fn vtk_point_data_appended() {
        let m = sample_mesh();
        let field: Vec<f64> = (0..m.nodes.len()).map(|i| i as f64).collect();
        let text = write_vtk_string(&m, "t", &[("phi", &field)]);
        assert!(text.contains(&format!("POINT_DATA {}", m.nodes.len())));
        assert!(text.contains("SCALARS phi double 1"));
    }

    #[test]
    fn histogram_counts_sum_to_sample_count() {
        let samples: Vec<f64> = (0..777).map(|i| (i as f64) * 0.005 - 0.3).collect();
        let h = histogram(&samples, 0.0, 3.0, 50);
        assert_eq!(h.counts.iter().sum::<usize>(), samples.len());
        assert_eq!(h.counts.len(), 50);
    }

    #[test]
    fn mesh_samples_are_positive() {
        let m = sample_mesh();
        for s in edge_length_samples(&m, 0.5) {
            assert!(s > 0.0);
        }
        for s in volume_samples(&m, 0.01) {
            assert!(s > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn random_coordinates_round_trip(
            coords in proptest::collection::vec(-1e3f64..1e3, 12),
            feature in 0u32..50,
        ) {
            let mut m = Mesh::default();
            m.add_node(Node::outer(Point3::new(coords[0], coords[1], coords[2]), FeatureId(feature)));
            for i in 1..4 {
                m.add_node(Node::inner(Point3::new(
                    coords[3 * i],
                    coords[3 * i + 1],
                    coords[3 * i + 2],
                )));
            }
            let e = TetElement::new([0, 1, 2, 3], &m.nodes);
            if e.volume > 1e-9 {
                m.add_element(e);
            }
            let back = read_mesh_string(&write_mesh_string(&m)).unwrap();
            prop_assert!(meshes_identical(&m, &back));
        }
    }
}
