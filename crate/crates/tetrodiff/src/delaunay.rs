//! Topological clean-up: 3->2 and 4->4 edge flips driven by the empty
//! circumsphere criterion, plus destruction of small boundary slivers.

use crate::geometry::{tet_volume, EdgeKey, Mesh, NodeClass, Point3};

#[derive(Debug, Clone, Copy)]
pub struct ImproveConfig {
    /// Elements below this volume are sliver-removal candidates.
    pub min_volume: f64,
    pub max_passes: usize,
}

impl Default for ImproveConfig {
    fn default() -> Self {
        ImproveConfig { min_volume: 0.0, max_passes: 20 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FlipReport {
    pub flips_3to2: usize,
    pub flips_4to4: usize,
    pub slivers_removed: usize,
    pub passes: usize,
    pub volume_before: f64,
    pub volume_after: f64,
}

/// Circumcenter and radius of a tetrahedron; None when the vertices are
/// (near-)coplanar.
pub fn circumsphere(p: [Point3; 4]) -> Option<(Point3, f64)> {
    let mut m = nalgebra::Matrix3::zeros();
    let mut rhs = nalgebra::Vector3::zeros();
    for i in 0..3 {
        let d = p[i + 1] - p[0];
        m.set_row(i, &(2.0 * d).transpose());
        rhs[i] = p[i + 1].coords.norm_squared() - p[0].coords.norm_squared();
    }
    let center = m.lu().solve(&rhs)?;
    let center = Point3::from(center);
    let radius = (p[0] - center).norm();
    if !radius.is_finite() {
        return None;
    }
    Some((center, radius))
}

/// Relative penetration of the worst offending mesh node into the element's
/// circumsphere: 0 when empty, positive when violated, infinity when the
/// circumsphere is degenerate.
fn worst_violation(points: [Point3; 4], exclude: &[usize], mesh: &Mesh) -> f64 {
    let Some((center, radius)) = circumsphere(points) else {
        return f64::INFINITY;
    };
    let mut worst = 0.0f64;
    for (i, n) in mesh.nodes.iter().enumerate() {
        if exclude.contains(&i) {
            continue;
        }
        let pen = (radius - (n.position - center).norm()) / radius;
        worst = worst.max(pen);
    }
    worst
}

/// True iff some mesh node other than the element's own lies strictly inside
/// the circumsphere (relative tolerance 1e-12; nodes on the sphere do not
/// count). Near-degenerate circumspheres report violated.
pub fn delaunay_violated(element: usize, mesh: &Mesh) -> bool {
    let elem = &mesh.elements[element];
    worst_violation(mesh.element_points(elem), &elem.nodes, mesh) > 1e-12
}

/// The ring vertices of the elements around an edge, in cyclic order.
/// Returns None if the sharers do not close into a ring.
fn edge_ring(mesh: &Mesh, edge: EdgeKey) -> Option<Vec<usize>> {
    let sharers = mesh.edge_elements(edge);
    let pairs: Vec<(usize, usize)> =
        sharers.iter().map(|&ei| mesh.elements[ei].opposite_edge(edge)).collect();
    let mut ring = vec![pairs[0].0, pairs[0].1];
    let mut used = vec![false; pairs.len()];
    used[0] = true;
    while ring.len() < pairs.len() {
        let tail = *ring.last().unwrap();
        let next = pairs.iter().enumerate().find(|(i, &(a, b))| {
            !used[*i] && (a == tail || b == tail)
        })?;
        let (i, &(a, b)) = next;
        used[i] = true;
        ring.push(if a == tail { b } else { a });
    }
    // the one remaining pair must close the ring back to the first vertex
    let first = ring[0];
    let last = *ring.last().unwrap();
    let closes = pairs
        .iter()
        .enumerate()
        .any(|(i, &(a, b))| !used[i] && ((a == first && b == last) || (a == last && b == first)));
    closes.then_some(ring)
}

fn positive_volume(mesh: &Mesh, nodes: [usize; 4]) -> Option<f64> {
    let v = tet_volume(
        mesh.nodes[nodes[0]].position,
        mesh.nodes[nodes[1]].position,
        mesh.nodes[nodes[2]].position,
        mesh.nodes[nodes[3]].position,
    )
    .abs();
    (v > mesh.degenerate_tol()).then_some(v)
}

/// Replace the three elements around `edge` by two sharing the ring triangle.
/// Refuses (returning false, mesh unchanged) unless exactly 3 elements share
/// the edge, at least one violates Delaunay, and the two replacements are
/// non-degenerate and volume-conserving.
pub fn flip_3to2(edge: EdgeKey, mesh: &mut Mesh) -> bool {
    let sharers: Vec<usize> = mesh.edge_elements(edge).to_vec();
    if sharers.len() != 3 || !sharers.iter().any(|&ei| delaunay_violated(ei, mesh)) {
        return false;
    }
    let Some(ring) = edge_ring(mesh, edge) else { return false };
    let (a, b, c) = (ring[0], ring[1], ring[2]);
    let old_volume: f64 = sharers.iter().map(|&ei| mesh.elements[ei].volume).sum();
    let t1 = [edge.0, a, b, c];
    let t2 = [edge.1, a, b, c];
    let (Some(v1), Some(v2)) = (positive_volume(mesh, t1), positive_volume(mesh, t2)) else {
        return false;
    };
    // non-convex ring: the two tets would not repartition the same hull
    if ((v1 + v2) - old_volume).abs() > 1e-9 * old_volume {
        return false;
    }
    let mut sorted = sharers;
    sorted.sort_unstable();
    mesh.replace_element(sorted[0], crate::geometry::TetElement::new(t1, &mesh.nodes));
    mesh.replace_element(sorted[1], crate::geometry::TetElement::new(t2, &mesh.nodes));
    mesh.swap_remove_element(sorted[2]);
    true
}

/// Re-triangulate the four elements around `edge` using the better of the two
/// ring diagonals (lower maximum circumsphere violation among the children).
pub fn flip_4to4(edge: EdgeKey, mesh: &mut Mesh) -> bool {
    let sharers: Vec<usize> = mesh.edge_elements(edge).to_vec();
    if sharers.len() != 4 || !sharers.iter().any(|&ei| delaunay_violated(ei, mesh)) {
        return false;
    }
    let Some(ring) = edge_ring(mesh, edge) else { return false };
    let (a, b, c, d) = (ring[0], ring[1], ring[2], ring[3]);
    let old_volume: f64 = sharers.iter().map(|&ei| mesh.elements[ei].volume).sum();
    let (u, v) = (edge.0, edge.1);
    let candidates = [
        [[u, a, b, c], [u, a, c, d], [v, a, b, c], [v, a, c, d]],
        [[u, b, c, d], [u, b, d, a], [v, b, c, d], [v, b, d, a]],
    ];
    let mut best: Option<(f64, usize)> = None;
    for (ci, cand) in candidates.iter().enumerate() {
        let mut total = 0.0;
        let mut ok = true;
        let mut violation = 0.0f64;
        for t in cand {
            match positive_volume(mesh, *t) {
                Some(vv) => total += vv,
                None => {
                    ok = false;
                    break;
                }
            }
            let pts = [
                mesh.nodes[t[0]].position,
                mesh.nodes[t[1]].position,
                mesh.nodes[t[2]].position,
                mesh.nodes[t[3]].position,
            ];
            violation = violation.max(worst_violation(pts, t, mesh));
        }
        if !ok || (total - old_volume).abs() > 1e-9 * old_volume {
            continue;
        }
        if best.map_or(true, |(bv, _)| violation < bv) {
            best = Some((violation, ci));
        }
    }
    let Some((_, ci)) = best else { return false };
    let mut sorted = sharers;
    sorted.sort_unstable();
    for (slot, t) in sorted.iter().zip(&candidates[ci]) {
        mesh.replace_element(*slot, crate::geometry::TetElement::new(*t, &mesh.nodes));
    }
    true
}

/// Destroy a small boundary element by projecting its single inner node onto
/// the centroid of the opposite boundary face. Rolls back if any incident
/// element would degenerate.
pub fn remove_boundary_sliver(element: usize, mesh: &mut Mesh, min_volume: f64) -> bool {
    let elem = mesh.elements[element];
    if elem.volume >= min_volume {
        return false;
    }
    let inner: Vec<usize> = elem
        .nodes
        .iter()
        .copied()
        .filter(|&n| mesh.nodes[n].class == NodeClass::Inner)
        .collect();
    if inner.len() != 1 {
        return false;
    }
    let node = inner[0];
    let face: Vec<usize> = elem.nodes.iter().copied().filter(|&n| n != node).collect();
    // the opposite face must be on the mesh boundary (owned by this element only)
    let owners: Vec<usize> = mesh
        .node_elements(face[0])
        .iter()
        .copied()
        .filter(|&ei| {
            let e = &mesh.elements[ei];
            face.iter().all(|&n| e.contains_node(n))
        })
        .collect();
    if owners != [element] {
        return false;
    }
    let centroid = Point3::from(
        (mesh.nodes[face[0]].position.coords
            + mesh.nodes[face[1]].position.coords
            + mesh.nodes[face[2]].position.coords)
            / 3.0,
    );
    let tol = mesh.degenerate_tol();
    // trial: all other incident elements must stay valid
    for &ei in mesh.node_elements(node) {
        if ei == element {
            continue;
        }
        let e = &mesh.elements[ei];
        let mut pts = mesh.element_points(e);
        for (k, &n) in e.nodes.iter().enumerate() {
            if n == node {
                pts[k] = centroid;
            }
        }
        if tet_volume(pts[0], pts[1], pts[2], pts[3]).abs() <= tol {
            return false;
        }
    }
    mesh.move_node(node, centroid);
    mesh.swap_remove_element(element);
    true
}

/// Flip until fixpoint (or pass cap), then one sliver-removal pass.
pub fn improve_pass(mesh: &mut Mesh, cfg: &ImproveConfig) -> FlipReport {
    let mut report = FlipReport {
        volume_before: mesh.total_volume(),
        ..Default::default()
    };
    loop {
        report.passes += 1;
        let mut fired = 0;
        let mut edges: Vec<EdgeKey> = mesh.edges().collect();
        edges.sort_unstable();
        for edge in edges {
            match mesh.edge_elements(edge).len() {
                3 => {
                    if flip_3to2(edge, mesh) {
                        report.flips_3to2 += 1;
                        fired += 1;
                    }
                }
                4 => {
                    if flip_4to4(edge, mesh) {
                        report.flips_4to4 += 1;
                        fired += 1;
                    }
                }
                _ => {}
            }
        }
        if fired == 0 || report.passes >= cfg.max_passes {
            break;
        }
    }
    if cfg.min_volume > 0.0 {
        let mut ei = 0;
        while ei < mesh.element_count() {
            if remove_boundary_sliver(ei, mesh, cfg.min_volume) {
                report.slivers_removed += 1;
                // the swap_remove moved another element into slot ei
            } else {
                ei += 1;
            }
        }
    }
    report.volume_after = mesh.total_volume();
    report
}
