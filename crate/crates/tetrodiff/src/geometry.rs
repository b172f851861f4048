//! Points, tetrahedra, area (barycentric) coordinates and mesh topology.
//!
//! Everything downstream (refinement, annealing, flips, FEM assembly) goes
//! through the [`Mesh`] structure defined here. Adjacency is kept incrementally
//! up to date by the element add/remove/replace operations so that refinement
//! does not pay a full rebuild per division.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Identifier of the boundary feature (surface patch, boundary curve or
/// corner point) an outer node lies on. The meaning of the id is owned by the
/// `DomainSpec` that built the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Inner,
    Outer(FeatureId),
}

impl NodeClass {
    pub fn is_outer(&self) -> bool {
        matches!(self, NodeClass::Outer(_))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub position: Point3,
    pub class: NodeClass,
}

impl Node {
    pub fn inner(position: Point3) -> Self {
        Node { position, class: NodeClass::Inner }
    }

    pub fn outer(position: Point3, feature: FeatureId) -> Self {
        Node { position, class: NodeClass::Outer(feature) }
    }
}

/// Four node indices plus the cached (positive) volume V^e.
///
/// Orientation is normalized at construction: if the signed volume of the
/// given node order is negative, two nodes are swapped.
#[derive(Debug, Clone, Copy)]
pub struct TetElement {
    pub nodes: [usize; 4],
    pub volume: f64,
}

impl TetElement {
    pub fn new(mut nodes: [usize; 4], positions: &[Node]) -> Self {
        let signed = tet_volume(
            positions[nodes[0]].position,
            positions[nodes[1]].position,
            positions[nodes[2]].position,
            positions[nodes[3]].position,
        );
        if signed < 0.0 {
            nodes.swap(2, 3);
        }
        TetElement { nodes, volume: signed.abs() }
    }

    pub fn contains_node(&self, n: usize) -> bool {
        self.nodes.contains(&n)
    }

    pub fn contains_edge(&self, e: EdgeKey) -> bool {
        self.contains_node(e.0) && self.contains_node(e.1)
    }

    /// The six unordered edges of the element.
    pub fn edges(&self) -> [EdgeKey; 6] {
        let n = self.nodes;
        [
            EdgeKey::new(n[0], n[1]),
            EdgeKey::new(n[0], n[2]),
            EdgeKey::new(n[0], n[3]),
            EdgeKey::new(n[1], n[2]),
            EdgeKey::new(n[1], n[3]),
            EdgeKey::new(n[2], n[3]),
        ]
    }

    /// The two nodes of the element not on the given edge.
    pub fn opposite_edge(&self, e: EdgeKey) -> (usize, usize) {
        let mut rest = self.nodes.iter().copied().filter(|&n| n != e.0 && n != e.1);
        let a = rest.next().expect("edge not in element");
        let b = rest.next().expect("edge not in element");
        (a, b)
    }
}

/// Unordered node-index pair stored sorted, so adjacency lookup is
/// orientation-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey(pub usize, pub usize);

impl EdgeKey {
    pub fn new(a: usize, b: usize) -> Self {
        debug_assert_ne!(a, b);
        if a < b { EdgeKey(a, b) } else { EdgeKey(b, a) }
    }
}

/// Signed volume of the tetrahedron (p1, p2, p3, p4): one sixth of the triple
/// product of the edge vectors from p1. Zero signals degeneracy; callers take
/// the absolute value for V^e and use the sign for orientation.
pub fn tet_volume(p1: Point3, p2: Point3, p3: Point3, p4: Point3) -> f64 {
    let u = p2 - p1;
    let v = p3 - p1;
    let w = p4 - p1;
    u.cross(&v).dot(&w) / 6.0
}

/// Coefficients of the four area coordinates
/// L_i = (a_i + b_i x + c_i y + d_i z) / (6 V^e).
#[derive(Debug, Clone, Copy)]
pub struct ShapeCoeffs {
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub c: [f64; 4],
    pub d: [f64; 4],
    pub volume: f64,
}

impl ShapeCoeffs {
    /// L_i evaluated at p.
    pub fn eval(&self, i: usize, p: Point3) -> f64 {
        (self.a[i] + self.b[i] * p.x + self.c[i] * p.y + self.d[i] * p.z) / (6.0 * self.volume)
    }

    /// Constant gradient of L_i: (b_i, c_i, d_i) / 6V^e.
    pub fn grad(&self, i: usize) -> Vec3 {
        Vec3::new(self.b[i], self.c[i], self.d[i]) / (6.0 * self.volume)
    }
}

/// Area-coordinate coefficients from the four vertex positions.
///
/// Solves M q_i = e_i with M rows (1, x_j, y_j, z_j); column i of M^-1 gives
/// (a_i, b_i, c_i, d_i) / 6V^e.
pub fn shape_coeffs_from_points(
    p: [Point3; 4],
    degenerate_tol: f64,
) -> Result<ShapeCoeffs> {
    let vol = tet_volume(p[0], p[1], p[2], p[3]);
    if vol.abs() <= degenerate_tol {
        return Err(Error::DegenerateElement { volume: vol, tol: degenerate_tol });
    }
    let m = nalgebra::Matrix4::new(
        1.0, p[0].x, p[0].y, p[0].z,
        1.0, p[1].x, p[1].y, p[1].z,
        1.0, p[2].x, p[2].y, p[2].z,
        1.0, p[3].x, p[3].y, p[3].z,
    );
    let inv = m
        .try_inverse()
        .ok_or(Error::DegenerateElement { volume: vol, tol: degenerate_tol })?;
    // column i of M^-1 is (a_i, b_i, c_i, d_i) / 6V^e regardless of orientation
    let six_v = 6.0 * vol.abs();
    let mut coeffs = ShapeCoeffs {
        a: [0.0; 4],
        b: [0.0; 4],
        c: [0.0; 4],
        d: [0.0; 4],
        volume: vol.abs(),
    };
    for i in 0..4 {
        coeffs.a[i] = inv[(0, i)] * six_v;
        coeffs.b[i] = inv[(1, i)] * six_v;
        coeffs.c[i] = inv[(2, i)] * six_v;
        coeffs.d[i] = inv[(3, i)] * six_v;
    }
    Ok(coeffs)
}

#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub nodes: Vec<Node>,
    pub elements: Vec<TetElement>,
    edge_elems: HashMap<EdgeKey, Vec<usize>>,
    node_elems: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn new(nodes: Vec<Node>, elements: Vec<TetElement>) -> Self {
        let mut mesh = Mesh { nodes, elements, edge_elems: HashMap::new(), node_elems: Vec::new() };
        mesh.build_adjacency();
        mesh
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.elements.iter().map(|e| e.volume).sum()
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut lo = self.nodes[0].position;
        let mut hi = lo;
        for n in &self.nodes {
            for k in 0..3 {
                lo[k] = lo[k].min(n.position[k]);
                hi[k] = hi[k].max(n.position[k]);
            }
        }
        (hi - lo).norm()
    }

    /// Relative degeneracy tolerance: 1e-12 x (bounding-box diagonal)^3.
    pub fn degenerate_tol(&self) -> f64 {
        let d = self.bounding_box_diagonal();
        1e-12 * d * d * d
    }

    pub fn element_points(&self, e: &TetElement) -> [Point3; 4] {
        [
            self.nodes[e.nodes[0]].position,
            self.nodes[e.nodes[1]].position,
            self.nodes[e.nodes[2]].position,
            self.nodes[e.nodes[3]].position,
        ]
    }

    pub fn signed_volume(&self, e: &TetElement) -> f64 {
        let p = self.element_points(e);
        tet_volume(p[0], p[1], p[2], p[3])
    }

    pub fn shape_coeffs(&self, e: &TetElement) -> Result<ShapeCoeffs> {
        shape_coeffs_from_points(self.element_points(e), self.degenerate_tol())
    }

    pub fn edge_elements(&self, e: EdgeKey) -> &[usize] {
        self.edge_elems.get(&e).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn node_elements(&self, n: usize) -> &[usize] {
        &self.node_elems[n]
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edge_elems.keys().copied()
    }

    pub fn edge_length(&self, e: EdgeKey) -> f64 {
        (self.nodes[e.0].position - self.nodes[e.1].position).norm()
    }

    /// Nodes connected to `n` by a mesh edge.
    pub fn node_neighbors(&self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.node_elems[n]
            .iter()
            .flat_map(|&ei| self.elements[ei].nodes)
            .filter(|&m| m != n)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn build_adjacency(&mut self) {
        self.edge_elems.clear();
        self.node_elems = vec![Vec::new(); self.nodes.len()];
        for idx in 0..self.elements.len() {
            self.insert_adjacency(idx);
        }
    }

    fn insert_adjacency(&mut self, idx: usize) {
        let e = self.elements[idx];
        for edge in e.edges() {
            self.edge_elems.entry(edge).or_default().push(idx);
        }
        for &n in &e.nodes {
            self.node_elems[n].push(idx);
        }
    }

    fn remove_adjacency(&mut self, idx: usize) {
        let e = self.elements[idx];
        for edge in e.edges() {
            if let Some(v) = self.edge_elems.get_mut(&edge) {
                v.retain(|&i| i != idx);
                if v.is_empty() {
                    self.edge_elems.remove(&edge);
                }
            }
        }
        for &n in &e.nodes {
            self.node_elems[n].retain(|&i| i != idx);
        }
    }

    pub fn add_node(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.node_elems.push(Vec::new());
        self.nodes.len() - 1
    }

    pub fn add_element(&mut self, tet: TetElement) -> usize {
        self.elements.push(tet);
        let idx = self.elements.len() - 1;
        self.insert_adjacency(idx);
        idx
    }

    pub fn replace_element(&mut self, idx: usize, tet: TetElement) {
        self.remove_adjacency(idx);
        self.elements[idx] = tet;
        self.insert_adjacency(idx);
    }

    /// Remove an element, filling the hole with the last element (whose index
    /// changes accordingly in the adjacency maps).
    pub fn swap_remove_element(&mut self, idx: usize) {
        let last = self.elements.len() - 1;
        self.remove_adjacency(idx);
        if idx != last {
            self.remove_adjacency(last);
            self.elements.swap_remove(idx);
            self.insert_adjacency(idx);
        } else {
            self.elements.pop();
        }
    }

    /// Recompute the cached volume of one element after a node move.
    pub fn refresh_volume(&mut self, idx: usize) {
        let v = self.signed_volume(&self.elements[idx]);
        self.elements[idx].volume = v.abs();
    }

    /// Move a node and refresh the cached volumes of its star.
    pub fn move_node(&mut self, n: usize, p: Point3) {
        self.nodes[n].position = p;
        let star: Vec<usize> = self.node_elems[n].clone();
        for idx in star {
            self.refresh_volume(idx);
        }
    }

    /// Boundary faces: triangles belonging to exactly one element, keyed by
    /// sorted node triple.
    pub fn boundary_faces(&self) -> Vec<[usize; 3]> {
        let mut count: HashMap<[usize; 3], usize> = HashMap::new();
        for e in &self.elements {
            let n = e.nodes;
            for f in [[n[0], n[1], n[2]], [n[0], n[1], n[3]], [n[0], n[2], n[3]], [n[1], n[2], n[3]]] {
                let mut f = f;
                f.sort_unstable();
                *count.entry(f).or_insert(0) += 1;
            }
        }
        let mut faces: Vec<[usize; 3]> = count
            .into_iter()
            .filter_map(|(f, c)| (c == 1).then_some(f))
            .collect();
        faces.sort_unstable();
        faces
    }

    /// Full validity check used by tests and by the pipeline in debug builds:
    /// index bounds, positive volumes, cache consistency, adjacency
    /// consistency.
    pub fn check_consistency(&self) -> Result<()> {
        let tol = self.degenerate_tol();
        for (idx, e) in self.elements.iter().enumerate() {
            for &n in &e.nodes {
                if n >= self.nodes.len() {
                    return Err(Error::MeshBuild(format!("element {idx} references node {n}")));
                }
            }
            let mut sorted = e.nodes;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::MeshBuild(format!("element {idx} has repeated nodes")));
            }
            let sv = self.signed_volume(e);
            if sv <= tol {
                return Err(Error::MeshBuild(format!(
                    "element {idx} degenerate or inverted: signed volume {sv:e}"
                )));
            }
            if (sv.abs() - e.volume).abs() > 1e-12 * e.volume.max(1e-300) {
                return Err(Error::MeshBuild(format!(
                    "element {idx} cached volume {} vs recomputed {}",
                    e.volume, sv
                )));
            }
        }
        // adjacency matches elements
        let mut fresh = self.clone();
        fresh.build_adjacency();
        for (key, v) in &fresh.edge_elems {
            let mut a = v.clone();
            let mut b = self.edge_elems.get(key).cloned().unwrap_or_default();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(Error::MeshBuild(format!("edge {key:?} adjacency stale")));
            }
        }
        if fresh.edge_elems.len() != self.edge_elems.len() {
            return Err(Error::MeshBuild("edge adjacency has extra entries".into()));
        }
        for n in 0..self.nodes.len() {
            let mut a = fresh.node_elems[n].clone();
            let mut b = self.node_elems[n].clone();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(Error::MeshBuild(format!("node {n} adjacency stale")));
            }
        }
        Ok(())
    }
}
