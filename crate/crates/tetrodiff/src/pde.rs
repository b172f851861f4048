//! Problem drivers: steady Laplace, the beta-scheme diffusion stepper, and
//! the coupled nonlinear electrodiffusion system solved with Newton's
//! method, plus per-element flux post-processing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{
    assemble, assemble_convection, assemble_convection_dphi, assemble_mass, assemble_stiffness,
    FieldRole, FieldVector, SparseSystem,
};
use crate::geometry::{Mesh, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct PhysicalParams {
    pub d_plus: f64,
    pub d_minus: f64,
    /// Drift multipliers k_i = D_i z_i e / (k_B T), signed.
    pub k_plus: f64,
    pub k_minus: f64,
    /// Valence magnitude |z|.
    pub z: f64,
    pub e_charge: f64,
    /// Permittivity product eps0 * eps_r.
    pub eps: f64,
}

impl PhysicalParams {
    /// Symmetric dimensionless species with unit coupling constants.
    pub fn symmetric(d: f64, k: f64) -> Self {
        PhysicalParams {
            d_plus: d,
            d_minus: d,
            k_plus: k,
            k_minus: k,
            z: 1.0,
            e_charge: 1.0,
            eps: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TimeScheme {
    pub dt: f64,
    pub beta: f64,
    pub n_steps: usize,
}

impl TimeScheme {
    pub fn backward_euler(dt: f64, n_steps: usize) -> Self {
        TimeScheme { dt, beta: 1.0, n_steps }
    }
}

#[derive(Debug, Clone)]
pub struct FieldState {
    pub n_plus: Vec<f64>,
    pub n_minus: Vec<f64>,
    pub phi: Vec<f64>,
    pub step_index: usize,
    pub time: f64,
}

impl FieldState {
    pub fn uniform(n_nodes: usize, n0: f64) -> Self {
        FieldState {
            n_plus: vec![n0; n_nodes],
            n_minus: vec![n0; n_nodes],
            phi: vec![0.0; n_nodes],
            step_index: 0,
            time: 0.0,
        }
    }
}

/// Dirichlet data for the three coupled fields.
#[derive(Debug, Clone, Default)]
pub struct PnpBc {
    pub n_plus: Vec<(usize, f64)>,
    pub n_minus: Vec<(usize, f64)>,
    pub phi: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Use the Jacobian exactly as written in the source derivation
    /// (block-diagonal, doubled potential term) instead of the chain-rule
    /// form. Comparison runs only; the chain-rule form is the validated one.
    pub block_diagonal_jacobian: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-9, max_iters: 25, block_diagonal_jacobian: false }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonTrace {
    /// max-norm of the residual before each Newton update, ending with the
    /// converged value.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub values: Vec<f64>,
}

pub fn solve_laplace(mesh: &Mesh, bc: &[(usize, f64)]) -> Result<FieldVector> {
    let mut sys = assemble_stiffness(mesh)?;
    sys.apply_forced_bc(bc)?;
    Ok(FieldVector::new(sys.solve()?, FieldRole::Phi))
}

/// One step of (M/dt + beta D K) u_n = (M/dt - (1-beta) D K) u_prev.
pub fn step_diffusion(
    u_prev: &[f64],
    mesh: &Mesh,
    d: f64,
    scheme: &TimeScheme,
    bc: &[(usize, f64)],
) -> Result<Vec<f64>> {
    let n = mesh.nodes.len();
    if u_prev.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: u_prev.len() });
    }
    let dt = scheme.dt;
    let beta = scheme.beta;
    let mut lhs = assemble(mesh, |_, m| {
        let mut out = [[0.0; 4]; 4];
        for b in 0..4 {
            for a in 0..4 {
                out[b][a] = m.k_mass[b][a] / dt + beta * d * m.k_tilde[b][a];
            }
        }
        out
    })?;
    let rhs_op = assemble(mesh, |_, m| {
        let mut out = [[0.0; 4]; 4];
        for b in 0..4 {
            for a in 0..4 {
                out[b][a] = m.k_mass[b][a] / dt - (1.0 - beta) * d * m.k_tilde[b][a];
            }
        }
        out
    })?;
    lhs.rhs = rhs_op.matrix.matvec(u_prev);
    lhs.apply_forced_bc(bc)?;
    lhs.solve()
}

pub fn solve_diffusion(
    g: &[f64],
    mesh: &Mesh,
    d: f64,
    scheme: &TimeScheme,
    bc: &[(usize, f64)],
) -> Result<Vec<Snapshot>> {
    let mut u = g.to_vec();
    for &(node, value) in bc {
        u[node] = value;
    }
    let mut out = vec![Snapshot { step: 0, time: 0.0, values: u.clone() }];
    for step in 1..=scheme.n_steps {
        u = step_diffusion(&u, mesh, d, scheme, bc)?;
        out.push(Snapshot { step, time: step as f64 * scheme.dt, values: u.clone() });
    }
    Ok(out)
}

/// Assemble the constrained Poisson operator eps K and the source mass
/// matrix with constrained rows zeroed; both are reused by the potential
/// solve and the Jacobian.
fn poisson_parts(
    mesh: &Mesh,
    params: &PhysicalParams,
    bc_phi: &[(usize, f64)],
) -> Result<(SparseSystem, crate::linalg::CsrMatrix)> {
    let eps = params.eps;
    let mut a = assemble(mesh, |_, m| {
        let mut out = [[0.0; 4]; 4];
        for b in 0..4 {
            for c in 0..4 {
                out[b][c] = eps * m.k_tilde[b][c];
            }
        }
        out
    })?;
    // rhs stays zero here; callers set the source before eliminating
    let mut mass = assemble_mass(mesh)?.matrix;
    let mut constrained = vec![false; mesh.nodes.len()];
    for &(node, _) in bc_phi {
        constrained[node] = true;
    }
    for r in 0..mass.n {
        if constrained[r] {
            let (_, vals) = mass.row_mut(r);
            for v in vals {
                *v = 0.0;
            }
        }
    }
    a.apply_forced_bc(bc_phi)?;
    Ok((a, mass))
}

/// Potential from the discrete Poisson equation
/// eps K phi = |z| e M (n_plus - n_minus), as a sparse solve.
pub fn pnp_phi_solve(
    n_plus: &[f64],
    n_minus: &[f64],
    mesh: &Mesh,
    params: &PhysicalParams,
    bc_phi: &[(usize, f64)],
) -> Result<Vec<f64>> {
    let n = mesh.nodes.len();
    if n_plus.len() != n || n_minus.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: n_plus.len().min(n_minus.len()) });
    }
    let eps = params.eps;
    let mut sys = assemble(mesh, |_, m| {
        let mut out = [[0.0; 4]; 4];
        for b in 0..4 {
            for c in 0..4 {
                out[b][c] = eps * m.k_tilde[b][c];
            }
        }
        out
    })?;
    let mass = assemble_mass(mesh)?.matrix;
    let excess: Vec<f64> = n_plus.iter().zip(n_minus).map(|(p, m)| p - m).collect();
    let source = mass.matvec(&excess);
    for (r, s) in source.iter().enumerate() {
        sys.rhs[r] = params.z * params.e_charge * s;
    }
    sys.apply_forced_bc(bc_phi)?;
    sys.solve()
}

/// Residual F^i = {k_i C(phi) + D_i K + M/dt} n_i - (1/dt) M n_prev_i with
/// constrained rows replaced by (n_i - bc value).
pub fn pnp_residual(
    state: &FieldState,
    prev: &FieldState,
    mesh: &Mesh,
    params: &PhysicalParams,
    scheme: &TimeScheme,
    bc: &PnpBc,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = mesh.nodes.len();
    for v in [&state.n_plus, &state.n_minus, &state.phi, &prev.n_plus, &prev.n_minus] {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: v.len() });
        }
    }
    let conv = assemble_convection(mesh, &state.phi)?.matrix;
    let stiff = assemble_stiffness(mesh)?.matrix;
    let mass = assemble_mass(mesh)?.matrix;
    let dt = scheme.dt;

    let species = |ni: &[f64], ni_prev: &[f64], k: f64, d: f64, bc_i: &[(usize, f64)]| {
        let cv = conv.matvec(ni);
        let kv = stiff.matvec(ni);
        let mv = mass.matvec(ni);
        let mp = mass.matvec(ni_prev);
        let mut f: Vec<f64> = (0..n)
            .map(|i| k * cv[i] + d * kv[i] + (mv[i] - mp[i]) / dt)
            .collect();
        for &(node, value) in bc_i {
            f[node] = ni[node] - value;
        }
        f
    };
    let f_plus = species(&state.n_plus, &prev.n_plus, params.k_plus, params.d_plus, &bc.n_plus);
    let f_minus =
        species(&state.n_minus, &prev.n_minus, params.k_minus, params.d_minus, &bc.n_minus);
    Ok((f_plus, f_minus))
}

fn csr_to_dense(a: &crate::linalg::CsrMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.n, a.n);
    for r in 0..a.n {
        let (cols, vals) = a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            out[(r, *c)] += v;
        }
    }
    out
}

/// Dense 2M x 2M Newton Jacobian. The potential's dependence on the
/// densities is differentiated through the Poisson solve, giving the
/// coupling blocks k_i W(n_i) A^{-1} ze M'.
pub fn pnp_jacobian(
    state: &FieldState,
    mesh: &Mesh,
    params: &PhysicalParams,
    scheme: &TimeScheme,
    bc: &PnpBc,
    opts: &NewtonOptions,
) -> Result<DMatrix<f64>> {
    let m = mesh.nodes.len();
    let conv = csr_to_dense(&assemble_convection(mesh, &state.phi)?.matrix);
    let stiff = csr_to_dense(&assemble_stiffness(mesh)?.matrix);
    let mass = csr_to_dense(&assemble_mass(mesh)?.matrix);
    let dt = scheme.dt;

    let base = |k: f64, d: f64| -> DMatrix<f64> {
        &conv * k + &stiff * d + &mass / dt
    };

    // dphi/dn_plus = A^{-1} ze M', with A the bc-eliminated Poisson matrix
    // and M' the mass matrix with constrained phi rows zeroed
    let (a_sys, m_src) = poisson_parts(mesh, params, &bc.phi)?;
    let a_dense = csr_to_dense(&a_sys.matrix);
    let ze = params.z * params.e_charge;
    let lu = a_dense.lu();
    let dphi = lu
        .solve(&(csr_to_dense(&m_src) * ze))
        .ok_or(Error::MeshBuild("singular Poisson matrix in Jacobian".into()))?;

    let w_plus = csr_to_dense(&assemble_convection_dphi(mesh, &state.n_plus)?.matrix);
    let w_minus = csr_to_dense(&assemble_convection_dphi(mesh, &state.n_minus)?.matrix);
    let chain_plus = &w_plus * &dphi * params.k_plus;
    let chain_minus = &w_minus * &dphi * params.k_minus;

    let mut j = DMatrix::zeros(2 * m, 2 * m);
    let (jpp, jpm, jmp, jmm);
    if opts.block_diagonal_jacobian {
        jpp = base(params.k_plus, params.d_plus) + &chain_plus * 2.0;
        jpm = DMatrix::zeros(m, m);
        jmp = DMatrix::zeros(m, m);
        jmm = base(params.k_minus, params.d_minus) - &chain_minus * 2.0;
    } else {
        jpp = base(params.k_plus, params.d_plus) + &chain_plus;
        jpm = -&chain_plus;
        jmp = chain_minus.clone();
        jmm = base(params.k_minus, params.d_minus) - &chain_minus;
    }
    j.view_mut((0, 0), (m, m)).copy_from(&jpp);
    j.view_mut((0, m), (m, m)).copy_from(&jpm);
    j.view_mut((m, 0), (m, m)).copy_from(&jmp);
    j.view_mut((m, m), (m, m)).copy_from(&jmm);

    for &(node, _) in &bc.n_plus {
        for c in 0..2 * m {
            j[(node, c)] = 0.0;
        }
        j[(node, node)] = 1.0;
    }
    for &(node, _) in &bc.n_minus {
        for c in 0..2 * m {
            j[(m + node, c)] = 0.0;
        }
        j[(m + node, m + node)] = 1.0;
    }
    Ok(j)
}

/// Advance the coupled system by one time step with Newton iteration.
pub fn newton_pnp_step(
    prev: &FieldState,
    mesh: &Mesh,
    params: &PhysicalParams,
    scheme: &TimeScheme,
    bc: &PnpBc,
    opts: &NewtonOptions,
) -> Result<(FieldState, NewtonTrace)> {
    let m = mesh.nodes.len();
    let mut state = prev.clone();
    state.step_index = prev.step_index + 1;
    state.time = prev.time + scheme.dt;
    for &(node, value) in &bc.n_plus {
        state.n_plus[node] = value;
    }
    for &(node, value) in &bc.n_minus {
        state.n_minus[node] = value;
    }
    let mut residuals = Vec::new();
    for _ in 0..opts.max_iters {
        state.phi = pnp_phi_solve(&state.n_plus, &state.n_minus, mesh, params, &bc.phi)?;
        let (fp, fm) = pnp_residual(&state, prev, mesh, params, scheme, bc)?;
        let norm = fp.iter().chain(&fm).fold(0.0f64, |acc, v| acc.max(v.abs()));
        residuals.push(norm);
        if norm <= opts.tol {
            return Ok((state, NewtonTrace { residuals }));
        }
        let j = pnp_jacobian(&state, mesh, params, scheme, bc, opts)?;
        let mut f = DVector::zeros(2 * m);
        for i in 0..m {
            f[i] = fp[i];
            f[m + i] = fm[i];
        }
        let delta = j
            .lu()
            .solve(&f)
            .ok_or(Error::MeshBuild("singular Jacobian".into()))?;
        for i in 0..m {
            state.n_plus[i] -= delta[i];
            state.n_minus[i] -= delta[m + i];
        }
    }
    // one more residual evaluation to decide
    state.phi = pnp_phi_solve(&state.n_plus, &state.n_minus, mesh, params, &bc.phi)?;
    let (fp, fm) = pnp_residual(&state, prev, mesh, params, scheme, bc)?;
    let norm = fp.iter().chain(&fm).fold(0.0f64, |acc, v| acc.max(v.abs()));
    residuals.push(norm);
    if norm <= opts.tol {
        Ok((state, NewtonTrace { residuals }))
    } else {
        Err(Error::NewtonDiverged { residual: norm, iters: opts.max_iters })
    }
}

/// Time loop over newton_pnp_step, warm-starting each step from the last.
pub fn solve_electrodiffusion(
    initial: &FieldState,
    mesh: &Mesh,
    params: &PhysicalParams,
    scheme: &TimeScheme,
    bc: &PnpBc,
    opts: &NewtonOptions,
) -> Result<Vec<FieldState>> {
    let mut current = initial.clone();
    current.phi = pnp_phi_solve(&current.n_plus, &current.n_minus, mesh, params, &bc.phi)?;
    let mut out = vec![current.clone()];
    for _ in 0..scheme.n_steps {
        let (next, _) = newton_pnp_step(&current, mesh, params, scheme, bc, opts)?;
        out.push(next.clone());
        current = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Plus,
    Minus,
}

/// Per-element constant flux J = -D (grad n_h + (k/D) nbar grad phi_h).
pub fn compute_flux(
    state: &FieldState,
    mesh: &Mesh,
    params: &PhysicalParams,
    species: Species,
) -> Result<Vec<Vec3>> {
    let (ni, d, k) = match species {
        Species::Plus => (&state.n_plus, params.d_plus, params.k_plus),
        Species::Minus => (&state.n_minus, params.d_minus, params.k_minus),
    };
    let n = mesh.nodes.len();
    if ni.len() != n || state.phi.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: ni.len().min(state.phi.len()) });
    }
    let mut out = Vec::with_capacity(mesh.elements.len());
    for ei in 0..mesh.elements.len() {
        let mats = crate::fem::element_matrices(mesh, ei)?;
        let nodes = mesh.elements[ei].nodes;
        let mut grad_n = Vec3::zeros();
        let mut grad_phi = Vec3::zeros();
        let mut nbar = 0.0;
        for (local, &g) in nodes.iter().enumerate() {
            let gl = mats.coeffs.grad(local);
            grad_n += gl * ni[g];
            grad_phi += gl * state.phi[g];
            nbar += ni[g] / 4.0;
        }
        out.push(-(grad_n * d + grad_phi * (k * nbar)));
    }
    Ok(out)
}
