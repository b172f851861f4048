//! Domain shapes and their boundary features.
//!
//! The boundary of each shape is decomposed into surface patches, boundary
//! curves and corner points. Outer nodes carry the id of the feature they lie
//! on; midpoint classification walks the feature hierarchy (a curve knows the
//! patches containing it) so that e.g. the midpoint between an edge node and a
//! face node of a cube is recognized as lying on the face.

use crate::geometry::{FeatureId, Node, NodeClass, Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Cube { x: (f64, f64), y: (f64, f64), z: (f64, f64) },
    Cylinder { radius: f64, z: (f64, f64) },
    Sphere { radius: f64, center: Point3 },
    /// Base disk at z.0, apex on the axis at z.1.
    Cone { base_radius: f64, z: (f64, f64) },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeatureKind {
    Patch,
    Curve,
    Point,
}

#[derive(Debug, Clone)]
enum FeatureGeom {
    /// Coordinate plane: axis coordinate fixed to `value`.
    Plane { axis: usize, value: f64 },
    /// Straight line through `point` along unit `dir`.
    Line { point: Point3, dir: Vec3 },
    /// Circle of given radius in a z = const plane around the z axis.
    Circle { z: f64, radius: f64 },
    /// Lateral cylinder surface around the z axis.
    CylinderSide { radius: f64 },
    Sphere { center: Point3, radius: f64 },
    /// Lateral cone surface: radius R at base_z shrinking to 0 at apex_z.
    ConeSide { base_z: f64, apex_z: f64, base_radius: f64 },
    FixedPoint { point: Point3 },
}

#[derive(Debug, Clone)]
pub struct Feature {
    pub kind: FeatureKind,
    geom: FeatureGeom,
    /// Coarser features (patches) containing this curve or point.
    parents: Vec<FeatureId>,
}

impl Feature {
    /// z value of a horizontal plane patch, if this is one.
    pub(crate) fn plane_z(&self) -> Option<f64> {
        match self.geom {
            FeatureGeom::Plane { axis: 2, value } => Some(value),
            _ => None,
        }
    }

    /// z value of a rim circle, if this is one.
    pub(crate) fn circle_z(&self) -> Option<f64> {
        match self.geom {
            FeatureGeom::Circle { z, .. } => Some(z),
            _ => None,
        }
    }

    /// Whether a cube boundary point lies exactly on this planar feature.
    pub(crate) fn contains_cube_point(&self, p: Point3) -> bool {
        match &self.geom {
            FeatureGeom::Plane { axis, value } => p[*axis] == *value,
            FeatureGeom::Line { point, dir } => {
                let rel = p - point;
                (rel - dir * rel.dot(dir)).norm() < 1e-12
            }
            FeatureGeom::FixedPoint { point } => (p - point).norm() < 1e-12,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub shape: Shape,
    /// Number of layer planes perpendicular to the z axis, >= 2.
    pub layer_count: usize,
    /// Nodes per layer boundary edge (cube) or per layer ring (round shapes), >= 3.
    pub nodes_per_layer_edge: usize,
    features: Vec<Feature>,
}

impl DomainSpec {
    pub fn new(shape: Shape, layer_count: usize, nodes_per_layer_edge: usize) -> Self {
        let features = build_features(&shape);
        DomainSpec { shape, layer_count, nodes_per_layer_edge, features }
    }

    pub fn feature(&self, id: FeatureId) -> &Feature {
        &self.features[id.0 as usize]
    }

    pub fn feature_kind(&self, id: FeatureId) -> FeatureKind {
        self.feature(id).kind
    }

    /// Find the feature matching a predicate; panics if absent (construction
    /// guarantees presence for the shape's own feature set).
    pub(crate) fn find_feature(&self, pred: impl Fn(&Feature) -> bool) -> FeatureId {
        FeatureId(
            self.features.iter().position(pred).expect("feature missing") as u32,
        )
    }

    pub fn project(&self, id: FeatureId, p: Point3) -> Point3 {
        match &self.feature(id).geom {
            FeatureGeom::Plane { axis, value } => {
                let mut q = p;
                q[*axis] = *value;
                q
            }
            FeatureGeom::Line { point, dir } => point + dir * (p - point).dot(dir),
            FeatureGeom::Circle { z, radius } => {
                let r = (p.x * p.x + p.y * p.y).sqrt();
                if r == 0.0 {
                    Point3::new(*radius, 0.0, *z)
                } else {
                    Point3::new(p.x * radius / r, p.y * radius / r, *z)
                }
            }
            FeatureGeom::CylinderSide { radius } => {
                let r = (p.x * p.x + p.y * p.y).sqrt();
                if r == 0.0 {
                    Point3::new(*radius, 0.0, p.z)
                } else {
                    Point3::new(p.x * radius / r, p.y * radius / r, p.z)
                }
            }
            FeatureGeom::Sphere { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n == 0.0 {
                    center + Vec3::new(*radius, 0.0, 0.0)
                } else {
                    center + d * (*radius / n)
                }
            }
            FeatureGeom::ConeSide { base_z, apex_z, base_radius } => {
                // project in the (radial, z) half-plane onto the slant line
                let r = (p.x * p.x + p.y * p.y).sqrt();
                let slant = Vec3::new(-base_radius, 0.0, apex_z - base_z);
                let slant = slant / slant.norm();
                let rel = Vec3::new(r - base_radius, 0.0, p.z - base_z);
                let t = rel.dot(&slant).clamp(0.0, (apex_z - base_z).hypot(*base_radius));
                let rr = base_radius + t * slant.x;
                let zz = base_z + t * slant.z;
                if r == 0.0 {
                    Point3::new(rr, 0.0, zz)
                } else {
                    Point3::new(p.x * rr / r, p.y * rr / r, zz)
                }
            }
            FeatureGeom::FixedPoint { point } => *point,
        }
    }

    /// How far p is from the feature's surface equation.
    pub fn feature_distance(&self, id: FeatureId, p: Point3) -> f64 {
        (self.project(id, p) - p).norm()
    }

    /// The feature and all coarser features containing it.
    fn ancestors(&self, id: FeatureId) -> Vec<FeatureId> {
        let mut out = vec![id];
        out.extend(self.feature(id).parents.iter().copied());
        out
    }

    /// Label and place the midpoint of an edge: if the two parent nodes share
    /// a common boundary feature, the midpoint is projected onto the most
    /// specific shared feature and labeled outer; any other combination is
    /// inner.
    pub fn classify_new_node(&self, p: Point3, parent_a: &Node, parent_b: &Node) -> Node {
        let (NodeClass::Outer(fa), NodeClass::Outer(fb)) = (parent_a.class, parent_b.class)
        else {
            return Node::inner(p);
        };
        let anc_a = self.ancestors(fa);
        let anc_b = self.ancestors(fb);
        let shared = anc_a
            .iter()
            .copied()
            .filter(|f| anc_b.contains(f))
            .max_by_key(|&f| self.feature_kind(f));
        match shared {
            Some(f) => Node::outer(self.project(f, p), f),
            None => Node::inner(p),
        }
    }

    /// Classify an arbitrary point: outer on the most specific feature within
    /// `tol` of it, inner otherwise.
    pub fn classify_point(&self, p: Point3, tol: f64) -> Node {
        let best = (0..self.features.len())
            .map(|i| FeatureId(i as u32))
            .filter(|&id| self.feature_distance(id, p) <= tol)
            .max_by_key(|&id| self.feature_kind(id));
        match best {
            Some(id) => Node::outer(self.project(id, p), id),
            None => Node::inner(p),
        }
    }

    /// Domain extent along z, [z_lo, z_hi].
    pub fn z_range(&self) -> (f64, f64) {
        match self.shape {
            Shape::Cube { z, .. } => z,
            Shape::Cylinder { z, .. } => z,
            Shape::Sphere { radius, center } => (center.z - radius, center.z + radius),
            Shape::Cone { z, .. } => z,
        }
    }

    /// Exact volume of the continuous domain.
    pub fn exact_volume(&self) -> f64 {
        match self.shape {
            Shape::Cube { x, y, z } => (x.1 - x.0) * (y.1 - y.0) * (z.1 - z.0),
            Shape::Cylinder { radius, z } => std::f64::consts::PI * radius * radius * (z.1 - z.0),
            Shape::Sphere { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Shape::Cone { base_radius, z } => {
                std::f64::consts::PI * base_radius * base_radius * (z.1 - z.0) / 3.0
            }
        }
    }
}

/// Feature ids are assigned in construction order; lookups in the builder go
/// through `find_feature`, so the order here is not load-bearing.
fn build_features(shape: &Shape) -> Vec<Feature> {
    let mut f = Vec::new();
    match *shape {
        Shape::Cube { x, y, z } => {
            // 6 face patches
            let faces = [(0, x.0), (0, x.1), (1, y.0), (1, y.1), (2, z.0), (2, z.1)];
            for (axis, value) in faces {
                f.push(Feature {
                    kind: FeatureKind::Patch,
                    geom: FeatureGeom::Plane { axis, value },
                    parents: vec![],
                });
            }
            let face_id = |axis: usize, value: f64| {
                FeatureId(
                    faces.iter().position(|&(a, v)| a == axis && v == value).unwrap() as u32,
                )
            };
            // 12 edge curves: fix two coordinates, vary the third
            let xs = [x.0, x.1];
            let ys = [y.0, y.1];
            let zs = [z.0, z.1];
            let mut edges = Vec::new();
            for &yv in &ys {
                for &zv in &zs {
                    edges.push((Point3::new(x.0, yv, zv), Vec3::x(), vec![face_id(1, yv), face_id(2, zv)]));
                }
            }
            for &xv in &xs {
                for &zv in &zs {
                    edges.push((Point3::new(xv, y.0, zv), Vec3::y(), vec![face_id(0, xv), face_id(2, zv)]));
                }
            }
            for &xv in &xs {
                for &yv in &ys {
                    edges.push((Point3::new(xv, yv, z.0), Vec3::z(), vec![face_id(0, xv), face_id(1, yv)]));
                }
            }
            let edge_base = f.len();
            let edge_specs: Vec<(Point3, Vec3)> =
                edges.iter().map(|(p, d, _)| (*p, *d)).collect();
            for (point, dir, parents) in edges {
                f.push(Feature {
                    kind: FeatureKind::Curve,
                    geom: FeatureGeom::Line { point, dir },
                    parents,
                });
            }
            // 8 corner points; a corner lists its three incident edge curves
            // too, so a corner/edge-node midpoint resolves to the curve and
            // not to an arbitrary one of the shared faces
            for &xv in &xs {
                for &yv in &ys {
                    for &zv in &zs {
                        let point = Point3::new(xv, yv, zv);
                        let mut parents = Vec::new();
                        for (i, (ep, ed)) in edge_specs.iter().enumerate() {
                            let rel = point - ep;
                            if (rel - ed * rel.dot(ed)).norm() < 1e-12 {
                                parents.push(FeatureId((edge_base + i) as u32));
                            }
                        }
                        parents.extend([face_id(0, xv), face_id(1, yv), face_id(2, zv)]);
                        f.push(Feature {
                            kind: FeatureKind::Point,
                            geom: FeatureGeom::FixedPoint { point },
                            parents,
                        });
                    }
                }
            }
        }
        Shape::Cylinder { radius, z } => {
            f.push(Feature {
                kind: FeatureKind::Patch,
                geom: FeatureGeom::CylinderSide { radius },
                parents: vec![],
            });
            f.push(Feature {
                kind: FeatureKind::Patch,
                geom: FeatureGeom::Plane { axis: 2, value: z.0 },
                parents: vec![],
            });
            f.push(Feature {
                kind: FeatureKind::Patch,
                geom: FeatureGeom::Plane { axis: 2, value: z.1 },
                parents: vec![],
            });
            f.push(Feature {
                kind: FeatureKind::Curve,
                geom: FeatureGeom::Circle { z: z.0, radius },
                parents: vec![FeatureId(0), FeatureId(1)],
            });
            f.push(Feature {
                kind: FeatureKind::Curve,
                geom: FeatureGeom::Circle { z: z.1, radius },
                parents: vec![FeatureId(0), FeatureId(2)],
            });
        }
        Shape::Sphere { radius, center } => {
            f.push(Feature {
                kind: FeatureKind::Patch,
                geom: FeatureGeom::Sphere { center, radius },
                parents: vec![],
            });
        }
        Shape::Cone { base_radius, z } => {
            f.push(Feature {
                kind: FeatureKind::Patch,
                geom: FeatureGeom::ConeSide { base_z: z.0, apex_z: z.1, base_radius },
                parents: vec![],
            });
            f.push(Feature {
                kind: FeatureKind::Patch,
                geom: FeatureGeom::Plane { axis: 2, value: z.0 },
                parents: vec![],
            });
            f.push(Feature {
                kind: FeatureKind::Curve,
                geom: FeatureGeom::Circle { z: z.0, radius: base_radius },
                parents: vec![FeatureId(0), FeatureId(1)],
            });
            f.push(Feature {
                kind: FeatureKind::Point,
                geom: FeatureGeom::FixedPoint { point: Point3::new(0.0, 0.0, z.1) },
                parents: vec![FeatureId(0)],
            });
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cube_pi() -> DomainSpec {
        DomainSpec::new(
            Shape::Cube { x: (0.0, PI), y: (0.0, PI), z: (0.0, PI) },
            2,
            4,
        )
    }

    #[test]
    fn midpoint_of_inner_nodes_is_inner() {
        let spec = cube_pi();
        let a = Node::inner(Point3::new(1.0, 1.0, 1.0));
        let b = Node::inner(Point3::new(2.0, 1.0, 1.0));
        let m = spec.classify_new_node(Point3::new(1.5, 1.0, 1.0), &a, &b);
        assert_eq!(m.class, NodeClass::Inner);
    }

    #[test]
    fn midpoint_of_mixed_nodes_is_inner() {
        let spec = cube_pi();
        let face = spec.find_feature(|f| {
            matches!(f.geom, FeatureGeom::Plane { axis: 0, value } if value == PI)
        });
        let a = Node::outer(Point3::new(PI, 1.0, 1.0), face);
        let b = Node::inner(Point3::new(1.0, 1.0, 1.0));
        let mid = Point3::new((PI + 1.0) / 2.0, 1.0, 1.0);
        assert_eq!(spec.classify_new_node(mid, &a, &b).class, NodeClass::Inner);
    }

    #[test]
    fn midpoint_on_sphere_patch_is_projected() {
        let spec = DomainSpec::new(
            Shape::Sphere { radius: 1.0, center: Point3::origin() },
            4,
            8,
        );
        let patch = FeatureId(0);
        let a = Node::outer(Point3::new(1.0, 0.0, 0.0), patch);
        let b = Node::outer(Point3::new(0.0, 1.0, 0.0), patch);
        let mid = Point3::new(0.5, 0.5, 0.0);
        let m = spec.classify_new_node(mid, &a, &b);
        assert_eq!(m.class, NodeClass::Outer(patch));
        assert_relative_eq!(m.position.coords.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_and_face_nodes_share_the_face() {
        let spec = cube_pi();
        // node on the x=pi face, node on the (x=pi, y=0) vertical edge
        let face = spec.find_feature(|f| {
            matches!(f.geom, FeatureGeom::Plane { axis: 0, value } if value == PI)
        });
        let edge = spec.find_feature(|f| {
            matches!(f.geom, FeatureGeom::Line { point, dir }
                if dir == Vec3::z() && point.x == PI && point.y == 0.0)
        });
        let a = Node::outer(Point3::new(PI, 1.0, 1.0), face);
        let b = Node::outer(Point3::new(PI, 0.0, 1.0), edge);
        let mid = Point3::new(PI, 0.5, 1.0);
        let m = spec.classify_new_node(mid, &a, &b);
        assert_eq!(m.class, NodeClass::Outer(face));
        assert_relative_eq!(m.position.x, PI, epsilon = 1e-15);
    }

    #[test]
    fn corner_and_edge_nodes_share_the_edge_curve() {
        let spec = cube_pi();
        let corner = spec.find_feature(|f| {
            matches!(f.geom, FeatureGeom::FixedPoint { point }
                if point == Point3::new(0.0, 0.0, 0.0))
        });
        let edge = spec.find_feature(|f| {
            matches!(f.geom, FeatureGeom::Line { point, dir }
                if dir == Vec3::z() && point.x == 0.0 && point.y == 0.0)
        });
        let a = Node::outer(Point3::new(0.0, 0.0, 0.0), corner);
        let b = Node::outer(Point3::new(0.0, 0.0, 1.0), edge);
        // must land on the shared curve, not an arbitrary shared face: a face
        // label would later let the node drift off the edge and cascade into
        // boundary nodes marked inner
        let m = spec.classify_new_node(Point3::new(0.0, 0.0, 0.5), &a, &b);
        assert_eq!(m.class, NodeClass::Outer(edge));
    }

    #[test]
    fn cone_projection_stays_on_slant() {
        let spec = DomainSpec::new(Shape::Cone { base_radius: 1.0, z: (0.0, 2.0) }, 3, 8);
        let side = FeatureId(0);
        let p = spec.project(side, Point3::new(0.6, 0.0, 1.0));
        // slant surface: r = (2 - z)/2
        assert_relative_eq!(p.x, (2.0 - p.z) / 2.0, epsilon = 1e-12);
    }
}
