//! Layered initial meshes for the four shapes.
//!
//! The domain is sliced into layers perpendicular to the z axis. Outer nodes
//! sit on each layer's boundary curve, an inner (or cap) node sits at each
//! layer center, and one inner node midway between consecutive layers. Each
//! slab between two layers is star-shaped with respect to that middle node, so
//! tetrahedra are formed by connecting it to a triangulation of the slab
//! boundary (bottom fan, top fan, lateral quads split in two).

use std::f64::consts::PI;

use crate::domain::{DomainSpec, FeatureKind, Shape};
use crate::error::{Error, Result};
use crate::geometry::{FeatureId, Mesh, Node, Point3, TetElement};

/// A layer: its boundary ring (possibly a single pole/apex node) and its
/// center node.
struct Layer {
    ring: Vec<usize>,
    center: usize,
}

pub fn build_initial_mesh(spec: &DomainSpec) -> Result<Mesh> {
    if spec.layer_count < 2 {
        return Err(Error::MeshBuild("layer_count must be at least 2".into()));
    }
    if spec.nodes_per_layer_edge < 3 {
        return Err(Error::MeshBuild("nodes_per_layer_edge must be at least 3".into()));
    }
    let (z_lo, z_hi) = spec.z_range();
    if !(z_hi > z_lo) {
        return Err(Error::MeshBuild("empty z extent".into()));
    }
    let nl = spec.layer_count;
    let mut nodes: Vec<Node> = Vec::new();
    let mut layers: Vec<Layer> = Vec::new();

    for i in 0..nl {
        let z = z_lo + (z_hi - z_lo) * i as f64 / (nl - 1) as f64;
        let layer = build_layer(spec, i, nl, z, &mut nodes)?;
        layers.push(layer);
    }

    let mut elements: Vec<TetElement> = Vec::new();
    for i in 0..nl - 1 {
        let bot = &layers[i];
        let top = &layers[i + 1];
        // middle inner node of the slab: average of the two layer centers
        let mid_pos = nodes[bot.center]
            .position
            .coords
            .lerp(&nodes[top.center].position.coords, 0.5);
        nodes.push(Node::inner(Point3::from(mid_pos)));
        let mid = nodes.len() - 1;

        let tri = |a: usize, b: usize, c: usize, elements: &mut Vec<TetElement>| {
            let v = crate::geometry::tet_volume(
                nodes[mid].position,
                nodes[a].position,
                nodes[b].position,
                nodes[c].position,
            );
            if v.abs() > 1e-14 {
                elements.push(TetElement::new([mid, a, b, c], &nodes));
            }
        };

        // bottom and top fans (skip when the layer degenerates to a point)
        for layer in [bot, top] {
            if layer.ring.len() > 1 {
                let n = layer.ring.len();
                for j in 0..n {
                    tri(layer.center, layer.ring[j], layer.ring[(j + 1) % n], &mut elements);
                }
            }
        }
        // lateral wall
        match (bot.ring.len(), top.ring.len()) {
            (1, 1) => {
                return Err(Error::MeshBuild("two consecutive degenerate layers".into()));
            }
            (1, n) => {
                let apex = bot.ring[0];
                for j in 0..n {
                    tri(apex, top.ring[j], top.ring[(j + 1) % n], &mut elements);
                }
            }
            (n, 1) => {
                let apex = top.ring[0];
                for j in 0..n {
                    tri(apex, bot.ring[j], bot.ring[(j + 1) % n], &mut elements);
                }
            }
            (n, m) => {
                if n != m {
                    return Err(Error::MeshBuild("mismatched ring sizes".into()));
                }
                for j in 0..n {
                    let a0 = bot.ring[j];
                    let a1 = bot.ring[(j + 1) % n];
                    let b0 = top.ring[j];
                    let b1 = top.ring[(j + 1) % n];
                    tri(a0, a1, b0, &mut elements);
                    tri(a1, b1, b0, &mut elements);
                }
            }
        }
    }

    if elements.is_empty() {
        return Err(Error::MeshBuild("no elements produced".into()));
    }
    let mesh = Mesh::new(nodes, elements);
    mesh.check_consistency()?;
    Ok(mesh)
}

/// Build one layer's nodes: the boundary ring plus the center node.
fn build_layer(
    spec: &DomainSpec,
    i: usize,
    nl: usize,
    z: f64,
    nodes: &mut Vec<Node>,
) -> Result<Layer> {
    let first = i == 0;
    let last = i == nl - 1;
    match spec.shape {
        Shape::Cube { x, y, z: zr } => {
            let n = spec.nodes_per_layer_edge;
            let mut ring = Vec::new();
            // perimeter of the rectangle, counter-clockwise, corners shared
            let mut perimeter: Vec<Point3> = Vec::new();
            for k in 0..n - 1 {
                let t = k as f64 / (n - 1) as f64;
                perimeter.push(Point3::new(x.0 + t * (x.1 - x.0), y.0, z));
            }
            for k in 0..n - 1 {
                let t = k as f64 / (n - 1) as f64;
                perimeter.push(Point3::new(x.1, y.0 + t * (y.1 - y.0), z));
            }
            for k in 0..n - 1 {
                let t = k as f64 / (n - 1) as f64;
                perimeter.push(Point3::new(x.1 - t * (x.1 - x.0), y.1, z));
            }
            for k in 0..n - 1 {
                let t = k as f64 / (n - 1) as f64;
                perimeter.push(Point3::new(x.0, y.1 - t * (y.1 - y.0), z));
            }
            for p in perimeter {
                let feat = cube_boundary_feature(spec, p, first || last, zr)?;
                nodes.push(Node::outer(p, feat));
                ring.push(nodes.len() - 1);
            }
            let center = Point3::new((x.0 + x.1) / 2.0, (y.0 + y.1) / 2.0, z);
            let cnode = if first || last {
                let cap = cap_feature(spec, z);
                Node::outer(center, cap)
            } else {
                Node::inner(center)
            };
            nodes.push(cnode);
            Ok(Layer { ring, center: nodes.len() - 1 })
        }
        Shape::Cylinder { radius, .. } => {
            ring_layer(spec, z, radius, first, last, false, nodes)
        }
        Shape::Sphere { radius, center } => {
            let r2 = radius * radius - (z - center.z).powi(2);
            let r = r2.max(0.0).sqrt();
            if r < 1e-9 * radius {
                // pole: single outer node, which is both ring and center
                let patch = FeatureId(0);
                nodes.push(Node::outer(Point3::new(center.x, center.y, z), patch));
                let id = nodes.len() - 1;
                return Ok(Layer { ring: vec![id], center: id });
            }
            let m = spec.nodes_per_layer_edge;
            let mut ring = Vec::new();
            for k in 0..m {
                let th = 2.0 * PI * k as f64 / m as f64;
                let p = Point3::new(center.x + r * th.cos(), center.y + r * th.sin(), z);
                nodes.push(Node::outer(p, FeatureId(0)));
                ring.push(nodes.len() - 1);
            }
            nodes.push(Node::inner(Point3::new(center.x, center.y, z)));
            Ok(Layer { ring, center: nodes.len() - 1 })
        }
        Shape::Cone { base_radius, z: zr } => {
            let r = base_radius * (zr.1 - z) / (zr.1 - zr.0);
            if r < 1e-9 * base_radius {
                if !last {
                    return Err(Error::MeshBuild(
                        "zero-radius layer at a non-apex position".into(),
                    ));
                }
                let apex = spec.find_feature(|f| f.kind == FeatureKind::Point);
                nodes.push(Node::outer(Point3::new(0.0, 0.0, z), apex));
                let id = nodes.len() - 1;
                return Ok(Layer { ring: vec![id], center: id });
            }
            ring_layer(spec, z, r, first, last, true, nodes)
        }
    }
}

/// Circular ring layer for cylinder and cone shapes.
fn ring_layer(
    spec: &DomainSpec,
    z: f64,
    radius: f64,
    first: bool,
    last: bool,
    cone: bool,
    nodes: &mut Vec<Node>,
) -> Result<Layer> {
    if radius <= 0.0 {
        return Err(Error::MeshBuild("zero radius at a non-apex layer".into()));
    }
    let m = spec.nodes_per_layer_edge;
    let side = FeatureId(0);
    let ring_feature = if first || (last && !cone) {
        // rim circle between the side wall and the cap
        spec.find_feature(|f| f.kind == FeatureKind::Curve && f.circle_z() == Some(z))
    } else {
        side
    };
    let mut ring = Vec::new();
    for k in 0..m {
        let th = 2.0 * PI * k as f64 / m as f64;
        let p = Point3::new(radius * th.cos(), radius * th.sin(), z);
        nodes.push(Node::outer(p, ring_feature));
        ring.push(nodes.len() - 1);
    }
    let center = Point3::new(0.0, 0.0, z);
    let cnode = if first || (last && !cone) {
        Node::outer(center, cap_feature(spec, z))
    } else {
        Node::inner(center)
    };
    nodes.push(cnode);
    Ok(Layer { ring, center: nodes.len() - 1 })
}

/// The planar cap patch at the given z (cube top/bottom face, cylinder caps,
/// cone base).
fn cap_feature(spec: &DomainSpec, z: f64) -> FeatureId {
    spec.find_feature(|f| f.kind == FeatureKind::Patch && f.plane_z() == Some(z))
}

fn cube_boundary_feature(
    spec: &DomainSpec,
    p: Point3,
    end_layer: bool,
    _zr: (f64, f64),
) -> Result<FeatureId> {
    // tolerance-free: layer construction places nodes exactly on the planes
    let Shape::Cube { x, y, .. } = spec.shape else { unreachable!() };
    let on_x = p.x == x.0 || p.x == x.1;
    let on_y = p.y == y.0 || p.y == y.1;
    let kind_wanted = match (on_x && on_y, end_layer) {
        (true, true) => FeatureKind::Point,
        (true, false) => FeatureKind::Curve, // vertical edge
        (false, true) => FeatureKind::Curve, // horizontal edge of the cap
        (false, false) => FeatureKind::Patch,
    };
    Ok(spec.find_feature(|f| f.kind == kind_wanted && f.contains_cube_point(p)))
}
