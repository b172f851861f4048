//! Guarded longest-edge bisection.
//!
//! Each division bisects the globally longest eligible edge. An edge is
//! eligible when every element sharing it would split into children of volume
//! at least the critical volume, and no child would be degenerate after the
//! midpoint is projected onto the boundary. Once an edge becomes ineligible it
//! stays so (sharer volumes only shrink), so rejected edges are dropped
//! permanently and refinement terminates on an empty queue ("saturated").

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::DomainSpec;
use crate::error::Result;
use crate::geometry::{tet_volume, EdgeKey, Mesh, TetElement};

#[derive(Debug, Clone, Copy)]
pub struct RefineConfig {
    /// Target edge length h0.
    pub target_edge: f64,
    /// Target element volume V0 = h0^3 sqrt(2)/12.
    pub target_volume: f64,
    /// Minimum volume any child of a division may have.
    pub critical_volume: f64,
    pub max_divisions: usize,
}

impl RefineConfig {
    /// V0 and V_crit derived from h0; V_crit defaults to V0/4.
    pub fn from_edge_length(h0: f64, max_divisions: usize) -> Self {
        let v0 = target_volume_for_edge(h0);
        RefineConfig {
            target_edge: h0,
            target_volume: v0,
            critical_volume: v0 / 4.0,
            max_divisions,
        }
    }
}

/// V0 = h0^3 sqrt(2)/12, the volume of a regular tetrahedron of edge h0.
pub fn target_volume_for_edge(h0: f64) -> f64 {
    h0.powi(3) * 2.0_f64.sqrt() / 12.0
}

#[derive(Debug, Clone, Default)]
pub struct RefineReport {
    pub divisions: usize,
    pub saturated: bool,
    /// Net volume change caused by projecting midpoints onto curved
    /// boundaries (interior bisections conserve volume exactly).
    pub projection_volume_change: f64,
}

struct QueuedEdge {
    length: f64,
    edge: EdgeKey,
}

impl PartialEq for QueuedEdge {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueuedEdge {}
impl PartialOrd for QueuedEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        // longest first; ties broken toward the smallest node pair
        self.length
            .total_cmp(&other.length)
            .then_with(|| other.edge.cmp(&self.edge))
    }
}

pub struct Refiner {
    queue: BinaryHeap<QueuedEdge>,
}

impl Refiner {
    pub fn new(mesh: &Mesh) -> Self {
        let mut queue = BinaryHeap::new();
        for edge in mesh.edges() {
            queue.push(QueuedEdge { length: mesh.edge_length(edge), edge });
        }
        Refiner { queue }
    }

    /// Perform the next division. Returns the signed volume change from the
    /// boundary projection, or None when saturated.
    pub fn divide_next(&mut self, mesh: &mut Mesh, cfg: &RefineConfig, spec: &DomainSpec) -> Option<f64> {
        while let Some(QueuedEdge { edge, .. }) = self.queue.pop() {
            // stale entry: the edge was consumed by an earlier division
            if mesh.edge_elements(edge).is_empty() {
                continue;
            }
            if let Some(change) = try_bisect(mesh, edge, cfg, spec, &mut self.queue) {
                return Some(change);
            }
        }
        None
    }
}

/// Bisect `edge` if eligible; push the edges created by the split. Returns the
/// volume change due to boundary projection of the midpoint.
fn try_bisect(
    mesh: &mut Mesh,
    edge: EdgeKey,
    cfg: &RefineConfig,
    spec: &DomainSpec,
    queue: &mut BinaryHeap<QueuedEdge>,
) -> Option<f64> {
    let (u, v) = (edge.0, edge.1);
    let pu = mesh.nodes[u].position;
    let pv = mesh.nodes[v].position;
    let midpoint = pu + (pv - pu) / 2.0;
    let new_node = spec.classify_new_node(midpoint, &mesh.nodes[u], &mesh.nodes[v]);
    let pm = new_node.position;

    let sharers: Vec<usize> = mesh.edge_elements(edge).to_vec();
    let degenerate_tol = mesh.degenerate_tol();
    let mut volume_before = 0.0;
    let mut volume_after = 0.0;
    // eligibility: every child at least V_crit and positively oriented
    for &ei in &sharers {
        let elem = mesh.elements[ei];
        volume_before += elem.volume;
        let (a, b) = elem.opposite_edge(edge);
        let pa = mesh.nodes[a].position;
        let pb = mesh.nodes[b].position;
        for child_apex in [pu, pv] {
            let cv = tet_volume(child_apex, pa, pb, pm).abs();
            if cv < cfg.critical_volume || cv <= degenerate_tol {
                return None;
            }
            volume_after += cv;
        }
    }

    let m = mesh.add_node(new_node);
    for &ei in &sharers {
        let elem = mesh.elements[ei];
        let mut child_u = elem.nodes;
        let mut child_v = elem.nodes;
        for k in 0..4 {
            if child_u[k] == v {
                child_u[k] = m;
            }
            if child_v[k] == u {
                child_v[k] = m;
            }
        }
        mesh.replace_element(ei, TetElement::new(child_u, &mesh.nodes));
        mesh.add_element(TetElement::new(child_v, &mesh.nodes));
    }

    // newly created edges: (u,m), (m,v) and m to each opposite vertex
    let mut push = |k: EdgeKey| {
        queue.push(QueuedEdge { length: mesh.edge_length(k), edge: k });
    };
    push(EdgeKey::new(u, m));
    push(EdgeKey::new(m, v));
    let mut seen = Vec::new();
    for &ei in &sharers {
        let elem = mesh.elements[ei];
        for &n in &elem.nodes {
            if n != u && n != v && n != m && !seen.contains(&n) {
                seen.push(n);
                push(EdgeKey::new(m, n));
            }
        }
    }

    Some(volume_after - volume_before)
}

/// One division step; returns the updated report (saturated when no edge is
/// eligible).
pub fn refine_once(mesh: &mut Mesh, cfg: &RefineConfig, spec: &DomainSpec) -> RefineReport {
    let mut refiner = Refiner::new(mesh);
    let mut report = RefineReport::default();
    match refiner.divide_next(mesh, cfg, spec) {
        Some(change) => {
            report.divisions = 1;
            report.projection_volume_change = change;
        }
        None => report.saturated = true,
    }
    report
}

/// Repeat divisions until saturated or `max_divisions` reached.
pub fn refine_to_target(mesh: &mut Mesh, cfg: &RefineConfig, spec: &DomainSpec) -> Result<RefineReport> {
    let mut refiner = Refiner::new(mesh);
    let mut report = RefineReport::default();
    while report.divisions < cfg.max_divisions {
        match refiner.divide_next(mesh, cfg, spec) {
            Some(change) => {
                report.divisions += 1;
                report.projection_volume_change += change;
            }
            None => {
                report.saturated = true;
                break;
            }
        }
    }
    Ok(report)
}

/// Divide until the mesh holds at least `min_elements` elements (or
/// saturation / max_divisions). Stopping by count rather than by saturation
/// keeps the mean element volume near domain_volume / min_elements, which
/// matters when the mesh is later equalized toward a prescribed V0.
pub fn refine_to_element_count(
    mesh: &mut Mesh,
    cfg: &RefineConfig,
    spec: &DomainSpec,
    min_elements: usize,
) -> Result<RefineReport> {
    let mut refiner = Refiner::new(mesh);
    let mut report = RefineReport::default();
    while mesh.element_count() < min_elements && report.divisions < cfg.max_divisions {
        match refiner.divide_next(mesh, cfg, spec) {
            Some(change) => {
                report.divisions += 1;
                report.projection_volume_change += change;
            }
            None => {
                report.saturated = true;
                break;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::build_initial_mesh;
    use crate::domain::{DomainSpec, Shape};
    use crate::geometry::{Node, Point3};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_tet_mesh() -> Mesh {
        let nodes = vec![
            Node::inner(Point3::new(0.0, 0.0, 0.0)),
            Node::inner(Point3::new(1.0, 0.0, 0.0)),
            Node::inner(Point3::new(0.0, 1.0, 0.0)),
            Node::inner(Point3::new(0.0, 0.0, 1.0)),
        ];
        let e = TetElement::new([0, 1, 2, 3], &nodes);
        Mesh::new(nodes, vec![e])
    }

    fn dummy_spec() -> DomainSpec {
        DomainSpec::new(Shape::Cube { x: (0.0, 1.0), y: (0.0, 1.0), z: (0.0, 1.0) }, 2, 3)
    }

    #[test]
    fn huge_critical_volume_saturates() {
        let mut mesh = unit_tet_mesh();
        let cfg = RefineConfig {
            target_edge: 1.0,
            target_volume: 1.0,
            critical_volume: 1.0,
            max_divisions: 10,
        };
        let report = refine_once(&mut mesh, &cfg, &dummy_spec());
        assert!(report.saturated);
        assert_eq!(mesh.element_count(), 1);
    }

    #[test]
    fn zero_critical_volume_bisects_longest_edge() {
        let mut mesh = unit_tet_mesh();
        let cfg = RefineConfig {
            target_edge: 1.0,
            target_volume: 1.0,
            critical_volume: 0.0,
            max_divisions: 1,
        };
        let report = refine_once(&mut mesh, &cfg, &dummy_spec());
        assert_eq!(report.divisions, 1);
        assert_eq!(mesh.element_count(), 2);
        assert_relative_eq!(mesh.total_volume(), 1.0 / 6.0, max_relative = 1e-12);
        // the longest edges are the three hypotenuse edges sqrt(2); the
        // smallest-key tie-break picks (1,2)
        assert_eq!(mesh.node_count(), 5);
        assert_relative_eq!(
            mesh.nodes[4].position,
            Point3::new(0.5, 0.5, 0.0),
            epsilon = 1e-15
        );
        mesh.check_consistency().unwrap();
    }

    #[test]
    fn shared_edge_split_divides_both_sharers() {
        // two tets sharing the long edge (0,1)
        let nodes = vec![
            Node::inner(Point3::new(0.0, 0.0, 0.0)),
            Node::inner(Point3::new(4.0, 0.0, 0.0)),
            Node::inner(Point3::new(2.0, 1.0, 0.0)),
            Node::inner(Point3::new(2.0, 0.0, 1.0)),
            Node::inner(Point3::new(2.0, -1.0, 0.1)),
        ];
        let e0 = TetElement::new([0, 1, 2, 3], &nodes);
        let e1 = TetElement::new([0, 1, 3, 4], &nodes);
        let mut mesh = Mesh::new(nodes, vec![e0, e1]);
        let before = mesh.total_volume();
        let cfg = RefineConfig {
            target_edge: 1.0,
            target_volume: 1.0,
            critical_volume: 0.0,
            max_divisions: 1,
        };
        let report = refine_once(&mut mesh, &cfg, &dummy_spec());
        assert_eq!(report.divisions, 1);
        assert_eq!(mesh.element_count(), 4);
        assert_relative_eq!(mesh.total_volume(), before, max_relative = 1e-12);
        mesh.check_consistency().unwrap();
    }

    #[test]
    fn max_divisions_zero_is_a_no_op() {
        let spec = dummy_spec();
        let mut mesh = build_initial_mesh(&spec).unwrap();
        let elements_before = mesh.element_count();
        let cfg = RefineConfig::from_edge_length(0.3, 0);
        let report = refine_to_target(&mut mesh, &cfg, &spec).unwrap();
        assert_eq!(report.divisions, 0);
        assert_eq!(mesh.element_count(), elements_before);
    }

    #[test]
    fn count_stop_lands_near_requested_element_count() {
        let spec = DomainSpec::new(
            Shape::Cube { x: (0.0, PI), y: (0.0, PI), z: (0.0, PI) },
            3,
            4,
        );
        let mut mesh = build_initial_mesh(&spec).unwrap();
        let cfg = RefineConfig::from_edge_length(0.3, 1_000_000);
        let report = refine_to_element_count(&mut mesh, &cfg, &spec, 5000).unwrap();
        assert!(!report.saturated);
        assert!(mesh.element_count() >= 5000);
        // each division splits the sharers of one edge, so the overshoot is
        // bounded by the largest edge star
        assert!(mesh.element_count() < 5000 + 64);
        mesh.check_consistency().unwrap();
    }

    #[test]
    fn cube_refinement_conserves_volume() {
        let spec = DomainSpec::new(
            Shape::Cube { x: (0.0, PI), y: (0.0, PI), z: (0.0, PI) },
            3,
            4,
        );
        let mut mesh = build_initial_mesh(&spec).unwrap();
        let cfg = RefineConfig::from_edge_length(0.8, 100_000);
        let report = refine_to_target(&mut mesh, &cfg, &spec).unwrap();
        assert!(report.saturated);
        assert!(report.divisions > 10);
        // cube boundary projections are volume-neutral (planar features)
        assert_relative_eq!(mesh.total_volume(), PI.powi(3), max_relative = 1e-9);
        assert!(report.projection_volume_change.abs() < 1e-9);
        mesh.check_consistency().unwrap();
    }

    #[test]
    fn sphere_refinement_grows_toward_exact_volume() {
        let spec = DomainSpec::new(
            Shape::Sphere { radius: 1.0, center: Point3::origin() },
            6,
            10,
        );
        let mut mesh = build_initial_mesh(&spec).unwrap();
        let v_initial = mesh.total_volume();
        let cfg = RefineConfig::from_edge_length(0.35, 100_000);
        let report = refine_to_target(&mut mesh, &cfg, &spec).unwrap();
        assert!(report.saturated);
        let v_final = mesh.total_volume();
        // boundary projection pushes midpoints outward onto the sphere
        assert!(v_final > v_initial);
        assert!(v_final < 4.0 * PI / 3.0);
        assert_relative_eq!(
            v_final,
            v_initial + report.projection_volume_change,
            max_relative = 1e-9
        );
        mesh.check_consistency().unwrap();
    }

    #[test]
    fn no_child_below_critical_volume() {
        let spec = DomainSpec::new(
            Shape::Cube { x: (0.0, PI), y: (0.0, PI), z: (0.0, PI) },
            3,
            4,
        );
        let mut mesh = build_initial_mesh(&spec).unwrap();
        let cfg = RefineConfig::from_edge_length(0.6, 100_000);
        refine_to_target(&mut mesh, &cfg, &spec).unwrap();
        for e in &mesh.elements {
            assert!(e.volume >= cfg.critical_volume * (1.0 - 1e-12));
        }
    }
}
