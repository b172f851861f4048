//! Linear tetrahedral element matrices, global assembly and forced
//! (Dirichlet) boundary conditions.

use crate::error::{Error, Result};
use crate::geometry::{shape_coeffs_from_points, Mesh, ShapeCoeffs};
use crate::linalg::{cg_solve, CsrMatrix};

/// Default relative residual contract for linear solves.
pub const SOLVER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Phi,
    NPlus,
    NMinus,
    Generic,
}

#[derive(Debug, Clone)]
pub struct FieldVector {
    pub values: Vec<f64>,
    pub role: FieldRole,
}

impl FieldVector {
    pub fn new(values: Vec<f64>, role: FieldRole) -> Self {
        FieldVector { values, role }
    }

    pub fn zeros(n: usize, role: FieldRole) -> Self {
        FieldVector { values: vec![0.0; n], role }
    }
}

/// Per-element 4x4 matrices. The convection tensor K^{b,e}_{ac} is
/// independent of a for linear elements (the L_a integral contributes V/4
/// regardless of a), so only the collapsed (b,c) matrix is stored; the
/// a-sum is deferred to assembly where it multiplies the nodal field.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub k_tilde: [[f64; 4]; 4],
    pub k_mass: [[f64; 4]; 4],
    pub k_conv: [[f64; 4]; 4],
    pub coeffs: ShapeCoeffs,
}

pub fn element_matrices(mesh: &Mesh, elem: usize) -> Result<ElementMatrices> {
    let e = &mesh.elements[elem];
    let pts = [
        mesh.nodes[e.nodes[0]].position,
        mesh.nodes[e.nodes[1]].position,
        mesh.nodes[e.nodes[2]].position,
        mesh.nodes[e.nodes[3]].position,
    ];
    let coeffs = shape_coeffs_from_points(pts, mesh.degenerate_tol())?;
    let v = coeffs.volume;
    let mut k_tilde = [[0.0; 4]; 4];
    let mut k_mass = [[0.0; 4]; 4];
    let mut k_conv = [[0.0; 4]; 4];
    for b in 0..4 {
        let gb = coeffs.grad(b);
        for a in 0..4 {
            let ga = coeffs.grad(a);
            let dot = gb.dot(&ga);
            k_tilde[b][a] = v * dot;
            k_conv[b][a] = v / 4.0 * dot;
            k_mass[b][a] = if a == b { v / 10.0 } else { v / 20.0 };
        }
    }
    Ok(ElementMatrices { k_tilde, k_mass, k_conv, coeffs })
}

/// Square sparse system with a pending set of forced nodal values.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub constrained: Vec<(usize, f64)>,
}

/// Scatter-add per-element 4x4 contributions into a global matrix. The
/// provider receives the element index and its matrices and returns the
/// local contribution to accumulate.
pub fn assemble<F>(mesh: &Mesh, mut contribution: F) -> Result<SparseSystem>
where
    F: FnMut(usize, &ElementMatrices) -> [[f64; 4]; 4],
{
    let n = mesh.nodes.len();
    let mut triplets = Vec::with_capacity(mesh.elements.len() * 16 + n);
    // guarantee a stored diagonal so constraints always find their pivot
    for i in 0..n {
        triplets.push((i, i, 0.0));
    }
    for (ei, elem) in mesh.elements.iter().enumerate() {
        let mats = element_matrices(mesh, ei)?;
        let local = contribution(ei, &mats);
        for b in 0..4 {
            for a in 0..4 {
                triplets.push((elem.nodes[b], elem.nodes[a], local[b][a]));
            }
        }
    }
    Ok(SparseSystem {
        matrix: CsrMatrix::from_triplets(n, &triplets),
        rhs: vec![0.0; n],
        constrained: Vec::new(),
    })
}

pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseSystem> {
    assemble(mesh, |_, m| m.k_tilde)
}

pub fn assemble_mass(mesh: &Mesh) -> Result<SparseSystem> {
    assemble(mesh, |_, m| m.k_mass)
}

/// Convection operator C(phi) acting on a nodal density n: per element the
/// term is V (grad L_b . grad phi_h) nbar with nbar the nodal average, so
/// each row b has four equal entries (V/4) grad L_b . grad phi_h.
pub fn assemble_convection(mesh: &Mesh, phi: &[f64]) -> Result<SparseSystem> {
    if phi.len() != mesh.nodes.len() {
        return Err(Error::LengthMismatch { expected: mesh.nodes.len(), got: phi.len() });
    }
    assemble(mesh, |ei, m| {
        let nodes = mesh.elements[ei].nodes;
        let mut out = [[0.0; 4]; 4];
        for b in 0..4 {
            // (V/4) grad L_b . grad phi_h = sum_c k_conv[b][c] phi_c
            let row: f64 = (0..4).map(|c| m.k_conv[b][c] * phi[nodes[c]]).sum();
            for a in 0..4 {
                out[b][a] = row;
            }
        }
        out
    })
}

/// Derivative of the convection term with respect to phi: W(n)_{bc} =
/// sum_e V nbar grad L_b . grad L_c.
pub fn assemble_convection_dphi(mesh: &Mesh, n: &[f64]) -> Result<SparseSystem> {
    if n.len() != mesh.nodes.len() {
        return Err(Error::LengthMismatch { expected: mesh.nodes.len(), got: n.len() });
    }
    assemble(mesh, |ei, m| {
        let nodes = mesh.elements[ei].nodes;
        let nbar = nodes.iter().map(|&i| n[i]).sum::<f64>() / 4.0;
        let mut out = [[0.0; 4]; 4];
        for b in 0..4 {
            for c in 0..4 {
                out[b][c] = 4.0 * m.k_conv[b][c] * nbar;
            }
        }
        out
    })
}

impl SparseSystem {
    /// Symmetric elimination of forced values: the constrained row becomes
    /// an identity row with the value on the rhs, and column contributions
    /// in other rows move to their rhs. Keeps SPD systems SPD.
    pub fn apply_forced_bc(&mut self, bc: &[(usize, f64)]) -> Result<()> {
        let n = self.matrix.n;
        let mut forced: Vec<Option<f64>> = vec![None; n];
        for &(node, value) in bc {
            match forced[node] {
                Some(prev) if prev != value => {
                    return Err(Error::ConflictingBc { node, a: prev, b: value });
                }
                _ => forced[node] = Some(value),
            }
        }
        for r in 0..n {
            if forced[r].is_some() {
                continue;
            }
            let mut moved = 0.0;
            let (cols, vals) = self.matrix.row_mut(r);
            for (k, &c) in cols.iter().enumerate() {
                if let Some(v) = forced[c] {
                    moved += vals[k] * v;
                    vals[k] = 0.0;
                }
            }
            self.rhs[r] -= moved;
        }
        for r in 0..n {
            let Some(v) = forced[r] else { continue };
            let (cols, vals) = self.matrix.row_mut(r);
            for (k, &c) in cols.iter().enumerate() {
                vals[k] = if c == r { 1.0 } else { 0.0 };
            }
            self.rhs[r] = v;
            self.constrained.push((r, v));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        self.solve_with_tol(SOLVER_TOL)
    }

    pub fn solve_with_tol(&self, tol: f64) -> Result<Vec<f64>> {
        let max_iters = 20 * self.matrix.n + 200;
        let x = cg_solve(&self.matrix, &self.rhs, tol, max_iters)?;
        // post-hoc residual check, independent of the solver's own exit test
        let ax = self.matrix.matvec(&x);
        let mut rr = 0.0f64;
        let mut bb = 0.0f64;
        for i in 0..x.len() {
            rr += (ax[i] - self.rhs[i]).powi(2);
            bb += self.rhs[i].powi(2);
        }
        let residual = if bb > 0.0 { (rr / bb).sqrt() } else { rr.sqrt() };
        if residual > tol * 10.0 {
            return Err(Error::SolverDiverged { residual, iters: max_iters });
        }
        Ok(x)
    }
}

pub fn linear_solve(system: &SparseSystem) -> Result<FieldVector> {
    Ok(FieldVector::new(system.solve()?, FieldRole::Generic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::build_initial_mesh;
    use crate::domain::{DomainSpec, Shape};
    use crate::geometry::{Mesh, Node, Point3, TetElement};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_tet() -> Mesh {
        let mut m = Mesh::default();
        m.add_node(Node::inner(Point3::new(0.0, 0.0, 0.0)));
        m.add_node(Node::inner(Point3::new(1.0, 0.0, 0.0)));
        m.add_node(Node::inner(Point3::new(0.0, 1.0, 0.0)));
        m.add_node(Node::inner(Point3::new(0.0, 0.0, 1.0)));
        let e = TetElement::new([0, 1, 2, 3], &m.nodes);
        m.add_element(e);
        m
    }

    fn small_cube_mesh() -> Mesh {
        let spec = DomainSpec::new(
            Shape::Cube {
                x: (0.0, std::f64::consts::PI),
                y: (0.0, std::f64::consts::PI),
                z: (0.0, std::f64::consts::PI),
            },
            3,
            3,
        );
        build_initial_mesh(&spec).unwrap()
    }

    #[test]
    fn unit_tet_stiffness_entries() {
        let m = unit_tet();
        let mats = element_matrices(&m, 0).unwrap();
        // node 0 has grad (-1,-1,-1), |grad|^2 V = 3/6
        assert_relative_eq!(mats.k_tilde[0][0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(mats.k_tilde[0][1], -1.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(mats.k_tilde[1][1], 1.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let m = small_cube_mesh();
        for ei in 0..m.elements.len() {
            let mats = element_matrices(&m, ei).unwrap();
            for b in 0..4 {
                let norm: f64 = mats.k_tilde[b].iter().map(|x| x.abs()).sum();
                let sum: f64 = mats.k_tilde[b].iter().sum();
                assert!(sum.abs() <= 1e-12 * norm.max(1e-30));
            }
        }
    }

    #[test]
    fn mass_entries_and_total() {
        let m = small_cube_mesh();
        for ei in 0..m.elements.len() {
            let mats = element_matrices(&m, ei).unwrap();
            let v = mats.coeffs.volume;
            let mut total = 0.0;
            for b in 0..4 {
                for a in 0..4 {
                    let expect = if a == b { v / 10.0 } else { v / 20.0 };
                    assert_relative_eq!(mats.k_mass[b][a], expect, epsilon = 1e-15);
                    total += mats.k_mass[b][a];
                }
            }
            assert_relative_eq!(total, v, max_relative = 1e-13);
        }
    }

    #[test]
    fn global_mass_sums_to_mesh_volume() {
        let m = small_cube_mesh();
        let sys = assemble_mass(&m).unwrap();
        let vol: f64 = m.elements.iter().map(|e| e.volume).sum();
        assert_relative_eq!(sys.matrix.sum_all(), vol, max_relative = 1e-10);
    }

    #[test]
    fn assembled_matrices_symmetric() {
        let m = small_cube_mesh();
        assert!(assemble_stiffness(&m).unwrap().matrix.symmetry_defect() <= 1e-14);
        assert!(assemble_mass(&m).unwrap().matrix.symmetry_defect() <= 1e-14);
    }

    #[test]
    fn single_element_assembly_matches_local() {
        let m = unit_tet();
        let sys = assemble_stiffness(&m).unwrap();
        let mats = element_matrices(&m, 0).unwrap();
        for b in 0..4 {
            for a in 0..4 {
                let (cols, vals) = sys.matrix.row(b);
                let got = cols
                    .iter()
                    .zip(vals)
                    .find(|(c, _)| **c == a)
                    .map(|(_, v)| *v)
                    .unwrap_or(0.0);
                assert_relative_eq!(got, mats.k_tilde[b][a], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn linear_field_in_stiffness_kernel() {
        let m = small_cube_mesh();
        let u: Vec<f64> = m
            .nodes
            .iter()
            .map(|n| 0.7 + 1.3 * n.position.x - 0.2 * n.position.y + 2.0 * n.position.z)
            .collect();
        let sys = assemble_stiffness(&m).unwrap();
        let ku = sys.matrix.matvec(&u);
        let k_norm: f64 = sys.matrix.data.iter().map(|x| x * x).sum::<f64>();
        let u_norm: f64 = u.iter().map(|x| x * x).sum::<f64>();
        let scale = (k_norm * u_norm).sqrt();
        // boundary rows carry the surface flux of the linear field; only
        // interior rows are in the kernel
        let mut interior = 0;
        for (i, n) in m.nodes.iter().enumerate() {
            if !n.class.is_outer() {
                interior += 1;
                assert!(ku[i].abs() <= 1e-9 * scale);
            }
        }
        assert!(interior > 0);
    }

    #[test]
    fn forced_bc_on_all_nodes_returns_values() {
        let m = unit_tet();
        let mut sys = assemble_stiffness(&m).unwrap();
        sys.apply_forced_bc(&[(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0)]).unwrap();
        let x = sys.solve().unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conflicting_bc_rejected() {
        let m = unit_tet();
        let mut sys = assemble_stiffness(&m).unwrap();
        let err = sys.apply_forced_bc(&[(0, 1.0), (0, 2.0)]);
        assert!(matches!(err, Err(Error::ConflictingBc { node: 0, .. })));
        // duplicate with the same value is fine
        sys.apply_forced_bc(&[(1, 5.0), (1, 5.0)]).unwrap();
    }

    #[test]
    fn empty_bc_leaves_system_unchanged() {
        let m = unit_tet();
        let mut sys = assemble_stiffness(&m).unwrap();
        let before = sys.matrix.data.clone();
        sys.apply_forced_bc(&[]).unwrap();
        assert_eq!(sys.matrix.data, before);
    }

    #[test]
    fn constant_bc_gives_constant_field() {
        let m = small_cube_mesh();
        let mut sys = assemble_stiffness(&m).unwrap();
        let bc: Vec<(usize, f64)> = m
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.class.is_outer())
            .map(|(i, _)| (i, 2.5))
            .collect();
        assert!(!bc.is_empty());
        sys.apply_forced_bc(&bc).unwrap();
        for v in sys.solve().unwrap() {
            assert_relative_eq!(v, 2.5, epsilon = 1e-8);
        }
    }

    #[test]
    fn discrete_maximum_principle_on_cube() {
        let m = small_cube_mesh();
        let mut sys = assemble_stiffness(&m).unwrap();
        let bc: Vec<(usize, f64)> = m
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.class.is_outer())
            .map(|(i, n)| {
                let v = if (n.position.x - std::f64::consts::PI).abs() < 1e-12 { 1.0 } else { 0.0 };
                (i, v)
            })
            .collect();
        sys.apply_forced_bc(&bc).unwrap();
        let x = sys.solve().unwrap();
        for (i, n) in m.nodes.iter().enumerate() {
            if !n.class.is_outer() {
                assert!(x[i] > -1e-9 && x[i] < 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn convection_vanishes_for_constant_phi() {
        let m = small_cube_mesh();
        let phi = vec![3.0; m.nodes.len()];
        let sys = assemble_convection(&m, &phi).unwrap();
        // grad of a constant potential is zero, so C(phi) is the zero matrix
        for v in &sys.matrix.data {
            assert!(v.abs() <= 1e-12);
        }
    }

    #[test]
    fn convection_matches_directional_derivative() {
        // phi = z: C(z) applied to n sums V * dL_b/dz * nbar per element
        let m = unit_tet();
        let phi: Vec<f64> = m.nodes.iter().map(|n| n.position.z).collect();
        let sys = assemble_convection(&m, &phi).unwrap();
        let n_field = vec![1.0; 4];
        let out = sys.matrix.matvec(&n_field);
        // grads of the unit tet: node 0 (-1,-1,-1), node 3 (0,0,1); V = 1/6
        assert_relative_eq!(out[0], -1.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(out[3], 1.0 / 6.0, epsilon = 1e-14);
        // W(n) row-applied to phi reproduces the same product
        let w = assemble_convection_dphi(&m, &n_field).unwrap();
        let out2 = w.matrix.matvec(&phi);
        for (a, b) in out.iter().zip(&out2) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    proptest! {
        #[test]
        fn random_tet_integrals_consistent(
            coords in proptest::collection::vec(-2.0f64..2.0, 12)
        ) {
            let mut m = Mesh::default();
            for i in 0..4 {
                m.add_node(Node::inner(Point3::new(
                    coords[3 * i],
                    coords[3 * i + 1],
                    coords[3 * i + 2],
                )));
            }
            let e = TetElement::new([0, 1, 2, 3], &m.nodes);
            if e.volume < 1e-6 {
                return Ok(());
            }
            let v = e.volume;
            m.add_element(e);
            let mats = element_matrices(&m, 0).unwrap();
            let mass_total: f64 = mats.k_mass.iter().flatten().sum();
            prop_assert!((mass_total - v).abs() <= 1e-12 * v.max(1.0));
            for b in 0..4 {
                let sum: f64 = mats.k_tilde[b].iter().sum();
                let norm: f64 = mats.k_tilde[b].iter().map(|x| x.abs()).sum();
                prop_assert!(sum.abs() <= 1e-11 * norm.max(1e-30));
                for a in 0..4 {
                    prop_assert!(
                        (mats.k_conv[b][a] - mats.k_tilde[b][a] / 4.0).abs() <= 1e-13 * v.max(1.0)
                    );
                }
            }
        }
    }
}
