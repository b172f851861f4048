//! Truncated analytic series solutions used as ground truth: the cube
//! Laplace double series, the point-charge fundamental solution, the cube
//! diffusion triple-sine series, the cylinder Bessel series, and the
//! normalized difference metric for comparing numerical fields against them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy)]
pub struct SeriesConfig {
    /// Truncation per index (odd terms up to this value for the sine series).
    pub max_index: usize,
    pub tail_tol: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig { max_index: 101, tail_tol: 1e-10 }
    }
}

/// sinh(s x)/sinh(s pi) evaluated in log space so large s does not overflow.
fn sinh_ratio(s: f64, x: f64) -> f64 {
    (s * (x - PI)).exp() * (1.0 - (-2.0 * s * x).exp()) / (1.0 - (-2.0 * s * PI).exp())
}

/// Steady state in [0,pi]^3 with u = phi0 on the x = pi face and 0 elsewhere.
pub fn laplace_cube_oracle(p: Point3, phi0: f64, cfg: &SeriesConfig) -> f64 {
    let (x, y, z) = (p.x, p.y, p.z);
    let mut sum = 0.0;
    let mut n = 1;
    while n <= cfg.max_index {
        let mut m = 1;
        while m <= cfg.max_index {
            let s = ((n * n + m * m) as f64).sqrt();
            sum += sinh_ratio(s, x) * (n as f64 * y).sin() * (m as f64 * z).sin()
                / (n as f64 * m as f64);
            m += 2;
        }
        n += 2;
    }
    16.0 * phi0 / (PI * PI) * sum
}

/// Free-space potential of a unit charge: 1/(4 pi r).
pub fn point_charge_oracle(p: Point3, charge_pos: Point3) -> Result<f64> {
    let r = (p - charge_pos).norm();
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(1.0 / (4.0 * PI * r))
}

/// Heat kernel series on [0,pi]^3 with zero boundary values and constant
/// initial condition g0.
pub fn diffusion_cube_const_oracle(p: Point3, t: f64, g0: f64, d: f64, cfg: &SeriesConfig) -> f64 {
    triple_sine_sum(p, t, d, cfg, |k| {
        // sine coefficient of the constant function: 4/(pi k), odd k
        4.0 / (PI * k as f64)
    }) * g0
}

/// Same domain, polynomial initial condition x(pi-x) y(pi-y) z(pi-z).
pub fn diffusion_cube_poly_oracle(p: Point3, t: f64, d: f64, cfg: &SeriesConfig) -> f64 {
    triple_sine_sum(p, t, d, cfg, |k| {
        // sine coefficient of x(pi-x): 8/(pi k^3), odd k
        8.0 / (PI * (k as f64).powi(3))
    })
}

fn triple_sine_sum<F>(p: Point3, t: f64, d: f64, cfg: &SeriesConfig, coeff: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut sum = 0.0;
    let mut kx = 1;
    while kx <= cfg.max_index {
        let cx = coeff(kx) * (kx as f64 * p.x).sin();
        let mut ky = 1;
        while ky <= cfg.max_index {
            let cy = coeff(ky) * (ky as f64 * p.y).sin();
            let mut kz = 1;
            while kz <= cfg.max_index {
                let cz = coeff(kz) * (kz as f64 * p.z).sin();
                let lambda = (kx * kx + ky * ky + kz * kz) as f64;
                sum += cx * cy * cz * (-lambda * d * t).exp();
                kz += 2;
            }
            ky += 2;
        }
        kx += 2;
    }
    sum
}

/// J_n by the trapezoidal rule on the integral representation
/// (1/pi) int_0^pi cos(n theta - x sin theta) d theta, which the trapezoid
/// evaluates to near machine precision with a few hundred panels.
pub fn bessel_j(n: usize, x: f64) -> f64 {
    const PANELS: usize = 256;
    let h = PI / PANELS as f64;
    let f = |theta: f64| (n as f64 * theta - x * theta.sin()).cos();
    let mut sum = 0.5 * (f(0.0) + f(PI));
    for i in 1..PANELS {
        sum += f(i as f64 * h);
    }
    sum * h / PI
}

/// First `count` positive zeros of J_n, by bisection on brackets placed at
/// the asymptotic spacing of pi between consecutive zeros.
pub fn bessel_zeros(n: usize, count: usize) -> Vec<f64> {
    let mut zeros = Vec::with_capacity(count);
    // scan from just past the origin; J_n has no positive zero below ~n
    let mut a = if n == 0 { 0.5 } else { n as f64 };
    let step = 0.1;
    while zeros.len() < count {
        let b = a + step;
        if bessel_j(n, a) * bessel_j(n, b) < 0.0 {
            zeros.push(bisect(|x| bessel_j(n, x), a, b));
        }
        a = b;
    }
    zeros
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= 1e-13 {
            return m;
        }
        let fm = f(m);
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// One term of the cylinder series: amplitude for azimuthal order n, radial
/// zero k_nm = j_{n,m}, and axial wavenumber kz.
#[derive(Debug, Clone, Copy)]
pub struct CylinderMode {
    pub n: usize,
    pub k_nm: f64,
    pub kz: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct CylinderCoeffs {
    pub r0: f64,
    pub modes: Vec<CylinderMode>,
}

/// Expansion coefficients of an axisymmetric initial condition f(r, z) on
/// the cylinder r <= r0, 0 <= z <= pi with zero boundary values. Only the
/// n = 0 azimuthal order survives; the radial and axial projections are
/// computed by Simpson quadrature with `quad_points` panels per direction.
pub fn cylinder_coeffs_axisymmetric<F>(
    f: F,
    r0: f64,
    radial_modes: usize,
    axial_modes: usize,
    quad_points: usize,
) -> CylinderCoeffs
where
    F: Fn(f64, f64) -> f64,
{
    let zeros = bessel_zeros(0, radial_modes);
    let nq = if quad_points % 2 == 0 { quad_points } else { quad_points + 1 };
    let hr = r0 / nq as f64;
    let hz = PI / nq as f64;
    let simpson_w = |i: usize| -> f64 {
        if i == 0 || i == nq {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut modes = Vec::new();
    for (m, &k) in zeros.iter().enumerate() {
        let _ = m;
        // g(z) = int_0^r0 f(r,z) J0(k r/r0) r dr, then project onto sin(kz z)
        let j1k = bessel_j(1, k);
        let radial_norm = 0.5 * r0 * r0 * j1k * j1k;
        let bessel_at: Vec<f64> =
            (0..=nq).map(|i| bessel_j(0, k * (i as f64 * hr) / r0)).collect();
        let g: Vec<f64> = (0..=nq)
            .map(|iz| {
                let z = iz as f64 * hz;
                let mut acc = 0.0;
                for ir in 0..=nq {
                    let r = ir as f64 * hr;
                    acc += simpson_w(ir) * f(r, z) * bessel_at[ir] * r;
                }
                acc * hr / 3.0
            })
            .collect();
        for kz in 1..=axial_modes {
            let mut acc = 0.0;
            for iz in 0..=nq {
                let z = iz as f64 * hz;
                acc += simpson_w(iz) * g[iz] * (kz as f64 * z).sin();
            }
            let axial = acc * hz / 3.0 * 2.0 / PI;
            modes.push(CylinderMode { n: 0, k_nm: k, kz, a: axial / radial_norm, b: 0.0 });
        }
    }
    CylinderCoeffs { r0, modes }
}

/// Evaluate the cylinder heat series at (r, theta, z, t).
pub fn diffusion_cylinder_oracle(
    r: f64,
    theta: f64,
    z: f64,
    t: f64,
    coeffs: &CylinderCoeffs,
    d: f64,
) -> f64 {
    let mut sum = 0.0;
    for mode in &coeffs.modes {
        let radial = bessel_j(mode.n, mode.k_nm * r / coeffs.r0);
        let ang = mode.a * (mode.n as f64 * theta).cos() + mode.b * (mode.n as f64 * theta).sin();
        let lambda = (mode.k_nm / coeffs.r0).powi(2) + (mode.kz * mode.kz) as f64;
        sum += radial * ang * (mode.kz as f64 * z).sin() * (-lambda * d * t).exp();
    }
    sum
}

/// Per-node normalized differences (num - anal)/max(anal) with summary
/// statistics.
pub struct DifferenceReport {
    pub per_node: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn relative_difference(numerical: &[f64], analytical: &[f64]) -> Result<DifferenceReport> {
    if numerical.len() != analytical.len() {
        return Err(Error::LengthMismatch { expected: analytical.len(), got: numerical.len() });
    }
    let max = analytical.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == 0.0 || !max.is_finite() {
        return Err(Error::ZeroReference);
    }
    let per_node: Vec<f64> =
        numerical.iter().zip(analytical).map(|(n, a)| (n - a) / max).collect();
    let mean = per_node.iter().sum::<f64>() / per_node.len() as f64;
    let var =
        per_node.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / per_node.len() as f64;
    Ok(DifferenceReport { per_node, mean, std: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> SeriesConfig {
        SeriesConfig::default()
    }

    #[test]
    fn laplace_vanishes_at_x_zero() {
        let v = laplace_cube_oracle(Point3::new(0.0, 1.0, 2.0), 1.0, &cfg());
        assert_eq!(v, 0.0);
    }

    #[test]
    fn laplace_symmetric_in_y_z() {
        let a = laplace_cube_oracle(Point3::new(1.2, 0.7, 2.1), 1.0, &cfg());
        let b = laplace_cube_oracle(Point3::new(1.2, 2.1, 0.7), 1.0, &cfg());
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn laplace_approaches_bc_at_driven_face() {
        let v = laplace_cube_oracle(Point3::new(PI - 1e-9, PI / 2.0, PI / 2.0), 1.0, &cfg());
        assert!((v - 1.0).abs() < 0.05, "v = {v}");
    }

    #[test]
    fn laplace_matches_finite_difference_solve() {
        // brute-force second-order FD on a 64^3 grid, SOR iteration
        let n = 64;
        let h = PI / n as f64;
        let mut u = vec![0.0f64; (n + 1) * (n + 1) * (n + 1)];
        let idx = |i: usize, j: usize, k: usize| (i * (n + 1) + j) * (n + 1) + k;
        for j in 0..=n {
            for k in 0..=n {
                u[idx(n, j, k)] = if j > 0 && j < n && k > 0 && k < n { 1.0 } else { 0.0 };
            }
        }
        let omega = 2.0 / (1.0 + PI / n as f64);
        for _ in 0..400 {
            for i in 1..n {
                for j in 1..n {
                    for k in 1..n {
                        let avg = (u[idx(i - 1, j, k)]
                            + u[idx(i + 1, j, k)]
                            + u[idx(i, j - 1, k)]
                            + u[idx(i, j + 1, k)]
                            + u[idx(i, j, k - 1)]
                            + u[idx(i, j, k + 1)])
                            / 6.0;
                        u[idx(i, j, k)] += omega * (avg - u[idx(i, j, k)]);
                    }
                }
            }
        }
        let center = u[idx(n / 2, n / 2, n / 2)];
        let series =
            laplace_cube_oracle(Point3::new(PI / 2.0, PI / 2.0, PI / 2.0), 1.0, &cfg());
        assert!((center - series).abs() <= 1e-3, "fd {center} vs series {series}");
        let _ = h;
    }

    #[test]
    fn point_charge_values() {
        let origin = Point3::new(0.0, 0.0, 0.0);
        let v1 = point_charge_oracle(Point3::new(1.0, 0.0, 0.0), origin).unwrap();
        assert_relative_eq!(v1, 1.0 / (4.0 * PI), epsilon = 1e-15);
        let v2 = point_charge_oracle(Point3::new(2.0, 0.0, 0.0), origin).unwrap();
        assert_relative_eq!(v2, v1 / 2.0, epsilon = 1e-15);
        assert!(matches!(point_charge_oracle(origin, origin), Err(Error::SingularPoint)));
    }

    #[test]
    fn diffusion_const_recovers_initial_value() {
        let p = Point3::new(PI / 2.0, PI / 2.0, PI / 2.0);
        let cfg = SeriesConfig { max_index: 41, tail_tol: 1e-10 };
        // the square-wave partial sum overshoots by ~1.5% per axis at the
        // midpoint (Gibbs), so the triple product lands ~4.5% high
        let v = diffusion_cube_const_oracle(p, 0.0, 2.0, 1.0, &cfg);
        assert!((v - 2.0).abs() / 2.0 < 0.05, "v = {v}");
    }

    #[test]
    fn diffusion_decays_to_zero() {
        let p = Point3::new(1.0, 1.5, 2.0);
        let v = diffusion_cube_const_oracle(p, 20.0, 1.0, 1.0, &cfg());
        assert!(v.abs() < 1e-20);
    }

    #[test]
    fn diffusion_fundamental_mode_ratio() {
        let p = Point3::new(1.1, 1.3, 1.7);
        let d = 1.0;
        let tau = 0.05;
        let t = 2.0;
        let ratio = diffusion_cube_const_oracle(p, t, 1.0, d, &cfg())
            / diffusion_cube_const_oracle(p, t + tau, 1.0, d, &cfg());
        assert_relative_eq!(ratio, (3.0 * d * tau).exp(), max_relative = 1e-6);
    }

    #[test]
    fn diffusion_poly_matches_initial_polynomial() {
        let p = Point3::new(1.0, 2.0, 0.8);
        let exact = p.x * (PI - p.x) * p.y * (PI - p.y) * p.z * (PI - p.z);
        let v = diffusion_cube_poly_oracle(p, 0.0, 1.0, &cfg());
        assert_relative_eq!(v, exact, max_relative = 1e-6);
    }

    #[test]
    fn bessel_known_values() {
        assert_relative_eq!(bessel_j(0, 0.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(bessel_j(1, 0.0), 0.0, epsilon = 1e-13);
        assert_relative_eq!(bessel_j(0, 1.0), 0.765_197_686_557_966_6, epsilon = 1e-12);
        assert_relative_eq!(bessel_j(1, 1.0), 0.440_050_585_744_933_5, epsilon = 1e-12);
    }

    #[test]
    fn first_bessel_zeros() {
        let z0 = bessel_zeros(0, 3);
        assert_relative_eq!(z0[0], 2.404_825_557_695_773, epsilon = 1e-9);
        assert_relative_eq!(z0[1], 5.520_078_110_286_311, epsilon = 1e-9);
        assert_relative_eq!(z0[2], 8.653_727_912_911_013, epsilon = 1e-9);
        let z1 = bessel_zeros(1, 1);
        assert_relative_eq!(z1[0], 3.831_705_970_207_512, epsilon = 1e-9);
    }

    #[test]
    fn cylinder_series_vanishes_on_boundary() {
        let r0 = 1.0;
        let coeffs =
            cylinder_coeffs_axisymmetric(|r, z| (r0 - r) * z * (PI - z), r0, 6, 9, 120);
        let side = diffusion_cylinder_oracle(r0, 0.3, 1.0, 0.1, &coeffs, 1.0);
        let cap = diffusion_cylinder_oracle(0.5, 0.3, 0.0, 0.1, &coeffs, 1.0);
        assert!(side.abs() < 1e-10);
        assert!(cap.abs() < 1e-10);
    }

    #[test]
    fn cylinder_series_recovers_initial_condition() {
        let r0 = 1.0;
        let f = |r: f64, z: f64| (r0 - r) * z * (PI - z);
        let coeffs = cylinder_coeffs_axisymmetric(f, r0, 12, 25, 200);
        let (r, z) = (0.4, 1.3);
        let v = diffusion_cylinder_oracle(r, 0.0, z, 0.0, &coeffs, 1.0);
        assert!((v - f(r, z)).abs() < 0.01 * f(r, z), "series {v} vs ic {}", f(r, z));
    }

    #[test]
    fn cylinder_series_satisfies_heat_equation() {
        let r0 = 1.0;
        let coeffs =
            cylinder_coeffs_axisymmetric(|r, z| (r0 - r) * z * (PI - z), r0, 8, 9, 150);
        let d = 0.7;
        let (r, z, t) = (0.45, 1.2, 0.2);
        let h = 1e-4;
        let u = |r: f64, z: f64, t: f64| diffusion_cylinder_oracle(r, 0.0, z, t, &coeffs, d);
        let ut = (u(r, z, t + h) - u(r, z, t - h)) / (2.0 * h);
        let urr = (u(r + h, z, t) - 2.0 * u(r, z, t) + u(r - h, z, t)) / (h * h);
        let ur = (u(r + h, z, t) - u(r - h, z, t)) / (2.0 * h);
        let uzz = (u(r, z + h, t) - 2.0 * u(r, z, t) + u(r, z - h, t)) / (h * h);
        let lap = urr + ur / r + uzz;
        assert!((ut - d * lap).abs() < 1e-4, "ut {ut} vs D lap {}", d * lap);
    }

    #[test]
    fn relative_difference_statistics() {
        let anal = vec![1.0, 2.0, 4.0];
        let rep = relative_difference(&anal, &anal).unwrap();
        assert_eq!(rep.per_node, vec![0.0, 0.0, 0.0]);
        assert_eq!(rep.mean, 0.0);
        assert_eq!(rep.std, 0.0);

        let num: Vec<f64> = anal.iter().map(|a| a + 0.1 * 4.0).collect();
        let rep = relative_difference(&num, &anal).unwrap();
        for d in &rep.per_node {
            assert_relative_eq!(*d, 0.1, epsilon = 1e-12);
        }

        assert!(matches!(
            relative_difference(&[0.0, 0.0], &[0.0, 0.0]),
            Err(Error::ZeroReference)
        ));
        assert!(matches!(
            relative_difference(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn laplace_oracle_is_harmonic(
            x in 0.5f64..(PI - 0.5),
            y in 0.5f64..(PI - 0.5),
            z in 0.5f64..(PI - 0.5),
        ) {
            let h = 1e-3;
            let f = |x: f64, y: f64, z: f64| {
                laplace_cube_oracle(Point3::new(x, y, z), 1.0, &SeriesConfig::default())
            };
            let c = f(x, y, z);
            let lap = (f(x + h, y, z) + f(x - h, y, z) + f(x, y + h, z) + f(x, y - h, z)
                + f(x, y, z + h) + f(x, y, z - h) - 6.0 * c) / (h * h);
            prop_assert!(lap.abs() <= 1e-4, "lap = {lap}");
        }

        #[test]
        fn point_charge_is_harmonic(
            x in -1.0f64..1.0,
            y in -1.0f64..1.0,
            z in 0.0f64..2.0,
        ) {
            let charge = Point3::new(0.0, 0.0, 2.0 * PI);
            let h = 1e-3;
            let f = |x: f64, y: f64, z: f64| {
                point_charge_oracle(Point3::new(x, y, z), charge).unwrap()
            };
            let c = f(x, y, z);
            let lap = (f(x + h, y, z) + f(x - h, y, z) + f(x, y + h, z) + f(x, y - h, z)
                + f(x, y, z + h) + f(x, y, z - h) - 6.0 * c) / (h * h);
            prop_assert!(lap.abs() <= 1e-6 * c.abs().max(1e-3), "lap = {lap}");
        }

        #[test]
        fn diffusion_oracle_satisfies_heat_equation(
            x in 0.8f64..(PI - 0.8),
            y in 0.8f64..(PI - 0.8),
            z in 0.8f64..(PI - 0.8),
            t in 0.05f64..0.5,
        ) {
            let d = 1.0;
            let cfg = SeriesConfig { max_index: 41, tail_tol: 1e-12 };
            let h = 1e-3;
            let f = |x: f64, y: f64, z: f64, t: f64| {
                diffusion_cube_poly_oracle(Point3::new(x, y, z), t, d, &cfg)
            };
            let c = f(x, y, z, t);
            let lap = (f(x + h, y, z, t) + f(x - h, y, z, t) + f(x, y + h, z, t)
                + f(x, y - h, z, t) + f(x, y, z + h, t) + f(x, y, z - h, t) - 6.0 * c)
                / (h * h);
            let ut = (f(x, y, z, t + h) - f(x, y, z, t - h)) / (2.0 * h);
            prop_assert!((ut - d * lap).abs() <= 1e-4, "ut {ut} vs lap {}", d * lap);
        }
    }
}
