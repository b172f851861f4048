//! Minimal sparse linear algebra: CSR matrices assembled from triplets and a
//! Jacobi-preconditioned conjugate gradient solver. The solver contract is
//! the relative residual, checked post-hoc by callers.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_counts = vec![0usize; n];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if prev == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                row_counts[r] += 1;
                prev = Some((r, c));
            }
        }
        let mut indptr = vec![0usize; n + 1];
        for r in 0..n {
            indptr[r + 1] = indptr[r] + row_counts[r];
        }
        CsrMatrix { n, indptr, indices, data }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    pub fn row_mut(&mut self, r: usize) -> (&[usize], &mut [f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &mut self.data[span])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c == r {
                    d[r] += v;
                }
            }
        }
        d
    }

    pub fn sum_all(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Max |A_ij - A_ji| over stored entries (0 for structurally symmetric
    /// symmetric matrices).
    pub fn symmetry_defect(&self) -> f64 {
        use std::collections::HashMap;
        let mut map: HashMap<(usize, usize), f64> = HashMap::new();
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                map.insert((r, *c), *v);
            }
        }
        let mut worst = 0.0f64;
        for (&(r, c), &v) in &map {
            let vt = map.get(&(c, r)).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
        worst
    }

    /// Coordinate-format text dump (row col value per line).
    pub fn dump_coo(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                out.push_str(&format!("{r} {c} {v:.17e}\n"));
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradient for SPD systems.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag.iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iters {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap == 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = norm(&r) / b_norm;
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::SolverDiverged { residual, iters: max_iters })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn triplets_with_duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0), (0, 1, 0.5)],
        );
        let y = a.matvec(&[1.0, 1.0]);
        assert_eq!(y, vec![3.5, 1.0]);
    }

    #[test]
    fn empty_rows_are_handled() {
        let a = CsrMatrix::from_triplets(3, &[(2, 2, 4.0)]);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![0.0, 0.0, 4.0]);
    }

    #[test]
    fn cg_solves_spd_system() {
        // 1D Laplacian with Dirichlet-like diagonal shift
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = cg_solve(&a, &b, 1e-12, 1000).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(ax, bi)| ax - bi).collect();
        assert!(norm(&r) <= 1e-11 * norm(&b));
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let x = cg_solve(&a, &[1.0, -2.0, 3.0], 1e-12, 10).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(x[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetry_defect_detects_asymmetry() {
        let sym = CsrMatrix::from_triplets(2, &[(0, 1, 3.0), (1, 0, 3.0)]);
        assert_eq!(sym.symmetry_defect(), 0.0);
        let asym = CsrMatrix::from_triplets(2, &[(0, 1, 3.0), (1, 0, 2.0)]);
        assert_eq!(asym.symmetry_defect(), 1.0);
    }
}
