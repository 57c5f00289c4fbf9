//! Small dense kernels: scalar phi-functions, closed-form 2x2 exponentials,
//! phi-functions of 2x2 matrices, quadratic exponential-quadrature panels,
//! and a PSD-tolerant Cholesky factor.

use nalgebra::{Matrix2, Matrix4, Matrix5, Vector2};

/// `phi1(x) = (e^x - 1) / x`, with `phi1(0) = 1`.
pub fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// `phi2(x) = (e^x - 1 - x) / x^2`, with `phi2(0) = 1/2`.
pub fn phi2(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // sum_j x^j / (j + 2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for j in 1..30 {
            term *= x / (j as f64 + 2.0);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// `phi3(x) = (e^x - 1 - x - x^2/2) / x^3`, with `phi3(0) = 1/6`.
pub fn phi3(x: f64) -> f64 {
    if x.abs() < 1.0 {
        let mut term = 1.0 / 6.0;
        let mut sum = term;
        for j in 1..40 {
            term *= x / (j as f64 + 3.0);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x.exp_m1() - x - 0.5 * x * x) / (x * x * x)
    }
}

/// `exp(c t)` for a real 2x2 matrix, written as `e^{mt}(cosh I + sinh/s K)`
/// with `m = tr/2` and `K = c - m I` so that `K^2 = (m^2 - det) I`.
///
/// The dominant exponential is factored out, so stiff real spectra never
/// overflow and the critically damped case needs no special treatment.
pub fn expm2(c: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
    let m = 0.5 * c.trace();
    let k = c - Matrix2::identity() * m;
    let delta = m * m - c.determinant();
    let (even, odd) = if delta >= 0.0 {
        let s = delta.sqrt();
        let at = t.abs();
        let lead = (m * t + s * at).exp();
        let e2 = (-2.0 * s * at).exp();
        let sinh_over_s = if s * at < 1e-300 {
            at
        } else {
            -(-2.0 * s * at).exp_m1() / (2.0 * s)
        };
        (lead * 0.5 * (1.0 + e2), lead * t.signum() * sinh_over_s)
    } else {
        let w = (-delta).sqrt();
        let lead = (m * t).exp();
        (lead * (w * t).cos(), lead * (w * t).sin() / w)
    };
    Matrix2::identity() * even + k * odd
}

/// Returns `(phi1(a) b, phi2(a) b)` for a 2x2 matrix `a`.
///
/// Evaluated through the exponential of the augmented matrix
/// `[[a, b, 0], [0, 0, 1], [0, 0, 0]]`.
pub fn phi_vectors2(a: &Matrix2<f64>, b: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let mut w = Matrix4::zeros();
    w.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    w[(0, 2)] = b[0];
    w[(1, 2)] = b[1];
    w[(2, 3)] = 1.0;
    let e = w.exp();
    (
        Vector2::new(e[(0, 2)], e[(1, 2)]),
        Vector2::new(e[(0, 3)], e[(1, 3)]),
    )
}

/// Returns `(phi1(a) b, phi2(a) b, phi3(a) b)` for a 2x2 matrix `a`.
pub fn phi_vectors3(a: &Matrix2<f64>, b: &Vector2<f64>) -> [Vector2<f64>; 3] {
    let mut w = Matrix5::zeros();
    w.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    w[(0, 2)] = b[0];
    w[(1, 2)] = b[1];
    w[(2, 3)] = 1.0;
    w[(3, 4)] = 1.0;
    let e = w.exp();
    [2, 3, 4].map(|j| Vector2::new(e[(0, j)], e[(1, j)]))
}

/// Weights of `int_0^s e^{mu (s - tau)} g(tau) dtau` when `g` is the
/// quadratic through `g(0), g(d), g(2d)`, for `s = d` and `s = 2d`, given
/// the values `phi_j(mu s)` (times a forcing direction, for systems).
fn panel_weights<T>(d: f64, at_d: [T; 3], at_2d: [T; 3]) -> ([T; 3], [T; 3])
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let [p1, p2, p3] = at_d;
    let w1 = [p1 * d + p2 * (-1.5 * d) + p3 * d, p2 * (2.0 * d) + p3 * (-2.0 * d), p2 * (-0.5 * d) + p3 * d];
    let [p1, p2, p3] = at_2d;
    let w2 = [p1 * (2.0 * d) + p2 * (-6.0 * d) + p3 * (8.0 * d), p2 * (8.0 * d) + p3 * (-16.0 * d), p2 * (-2.0 * d) + p3 * (8.0 * d)];
    (w1, w2)
}

/// One exponential-quadrature panel of `y' = mu y + g` over the nodes
/// `0, d, 2d` (`d` may be negative), exact when `g` is quadratic:
///
/// ```text
/// y(d)  = e1 y(0) + w1 . (g0, g1, g2)
/// y(2d) = e2 y(0) + w2 . (g0, g1, g2)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub e1: f64,
    pub e2: f64,
    pub w1: [f64; 3],
    pub w2: [f64; 3],
}

impl Panel {
    pub fn new(mu: f64, d: f64) -> Self {
        let phis = |x: f64| [phi1(x), phi2(x), phi3(x)];
        let (w1, w2) = panel_weights(d, phis(mu * d), phis(2.0 * mu * d));
        Self { e1: (mu * d).exp(), e2: (2.0 * mu * d).exp(), w1, w2 }
    }
}

/// [`Panel`] for `y' = c y + b g` with a 2x2 matrix `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel2 {
    pub e1: Matrix2<f64>,
    pub e2: Matrix2<f64>,
    pub w1: [Vector2<f64>; 3],
    pub w2: [Vector2<f64>; 3],
}

impl Panel2 {
    pub fn new(c: &Matrix2<f64>, b: &Vector2<f64>, d: f64) -> Self {
        let (w1, w2) = panel_weights(d, phi_vectors3(&(c * d), b), phi_vectors3(&(c * (2.0 * d)), b));
        Self { e1: expm2(c, d), e2: expm2(c, 2.0 * d), w1, w2 }
    }
}

/// Lower-triangular `L` with `L L^T = a` for a symmetric positive
/// semi-definite `a`. Pivots that rounding drives below zero are clamped,
/// which zeroes the corresponding column.
pub fn cholesky_psd(a: &Matrix4<f64>) -> Matrix4<f64> {
    let n = 4;
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let floor = 1e-15 * scale;
    let mut l = Matrix4::zeros();
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if d <= floor {
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn phi3_matches_definition_on_both_branches() {
        for x in [-30.0f64, -2.0, -0.99, -1e-3, 0.0, 0.4, 1.5] {
            let series: f64 = (0..60).map(|j| x.powi(j) / (1..=(j + 3)).map(|i| i as f64).product::<f64>()).sum();
            let direct = if x == 0.0 { 1.0 / 6.0 } else { series };
            if x.abs() <= 2.0 {
                assert_relative_eq!(phi3(x), direct, max_relative = 1e-13);
            } else {
                let e = (x.exp_m1() - x - 0.5 * x * x) / (x * x * x);
                assert_relative_eq!(phi3(x), e, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn panel_reduces_to_simpson_without_decay() {
        let p = Panel::new(0.0, 0.3);
        let w: Vec<f64> = p.w2.iter().map(|w| w / 0.1).collect();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[2], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.w1[0], 0.3 * 5.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.w1[1], 0.3 * 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.w1[2], -0.3 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn panel_is_exact_for_quadratic_forcing() {
        // y' = mu y + t^2, y(0) = 1: y = C e^{mu t} - t^2/mu - 2t/mu^2 - 2/mu^3
        for (mu, d) in [(-4.0, 0.1), (-4.0, -0.1), (2.5, 0.2), (-300.0, 0.05)] {
            let p = Panel::new(mu, d);
            let exact = |t: f64| {
                let part = |t: f64| -t * t / mu - 2.0 * t / (mu * mu) - 2.0 / (mu * mu * mu);
                (1.0 - part(0.0)) * (mu * t).exp() + part(t)
            };
            let g = [0.0, d * d, 4.0 * d * d];
            let y1 = p.e1 + p.w1.iter().zip(&g).map(|(w, g)| w * g).sum::<f64>();
            let y2 = p.e2 + p.w2.iter().zip(&g).map(|(w, g)| w * g).sum::<f64>();
            assert_relative_eq!(y1, exact(d), max_relative = 1e-12);
            assert_relative_eq!(y2, exact(2.0 * d), max_relative = 1e-12);
        }
    }

    #[test]
    fn matrix_panel_agrees_with_scalar_on_diagonal() {
        let c = Matrix2::new(-3.0, 0.0, 0.0, -50.0);
        let p = Panel2::new(&c, &Vector2::new(1.0, 1.0), -0.02);
        for (mu, row) in [(-3.0, 0), (-50.0, 1)] {
            let s = Panel::new(mu, -0.02);
            assert_relative_eq!(p.e2[(row, row)], s.e2, max_relative = 1e-13);
            for j in 0..3 {
                assert_relative_eq!(p.w1[j][row], s.w1[j], max_relative = 1e-10);
                assert_relative_eq!(p.w2[j][row], s.w2[j], max_relative = 1e-10);
            }
        }
    }

    fn taylor_exp(c: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
        // scaling and squaring of a long Taylor series; test-only reference
        let mut s = 0;
        let mut a = c * t;
        while a.norm() > 0.1 {
            a /= 2.0;
            s += 1;
        }
        let mut term = Matrix2::identity();
        let mut sum = Matrix2::identity();
        for j in 1..30 {
            term = term * a / j as f64;
            sum += term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn phi_small_and_large() {
        for &x in &[-40.0, -3.0, -0.7, -0.3, -1e-4, 0.0, 1e-6, 0.2, 0.49, 0.51, 2.0] {
            let e1 = if x == 0.0 { 1.0 } else { (f64::exp(x) - 1.0) / x };
            assert_relative_eq!(phi1(x), e1, max_relative = 1e-9);
            if x.abs() > 0.1 {
                let e2 = (f64::exp(x) - 1.0 - x) / (x * x);
                assert_relative_eq!(phi2(x), e2, max_relative = 1e-12);
            }
        }
        assert_relative_eq!(phi2(0.0), 0.5);
        assert_relative_eq!(phi2(1e-3), 0.5 + 1e-3 / 6.0 + 1e-6 / 24.0 + 1e-9 / 120.0, max_relative = 1e-14);
    }

    #[test]
    fn expm2_matches_taylor_in_all_regimes() {
        // overdamped, critically damped and oscillatory damped oscillators
        for &(nu, k) in &[(0.01, 4.0), (0.01, 5.0), (0.01, 9.0), (0.1, 1.0)] {
            let b = Matrix2::new(0.0, 1.0, -k * k / nu, -1.0 / nu);
            for &t in &[0.0, 1e-3, 0.05, 0.3] {
                let a = expm2(&b, t);
                let r = taylor_exp(&b, t);
                assert!((a - r).norm() <= 1e-11 * r.norm().max(1.0), "nu={nu} k={k} t={t}");
            }
        }
    }

    #[test]
    fn expm2_group_property_backward() {
        let c = Matrix2::new(-0.5, 2.0, 1.0, -3.0);
        let p = expm2(&c, 0.7) * expm2(&c, -0.7);
        assert!((p - Matrix2::identity()).norm() < 1e-13);
    }

    #[test]
    fn phi_vectors_match_quadrature() {
        let a = Matrix2::new(-0.5, 1.0, -4.0, -0.5);
        let b = Vector2::new(0.0, 1.0);
        let (p1, p2) = phi_vectors2(&a, &b);
        // phi1(a) b = int_0^1 e^{a(1-s)} b ds, phi2(a) b = int_0^1 e^{a(1-s)} s b ds
        let n = 4000;
        let mut q1 = Vector2::zeros();
        let mut q2 = Vector2::zeros();
        for i in 0..n {
            for (w, x) in [(5.0 / 18.0, -0.774_596_669_241_483_4), (8.0 / 18.0, 0.0), (5.0 / 18.0, 0.774_596_669_241_483_4)] {
                let s = (i as f64 + 0.5 + 0.5 * x) / n as f64;
                let v = expm2(&a, 1.0 - s) * b;
                q1 += v * (w / n as f64);
                q2 += v * (s * w / n as f64);
            }
        }
        assert!((p1 - q1).norm() < 1e-12);
        assert!((p2 - q2).norm() < 1e-12);
    }

    #[test]
    fn cholesky_reproduces_matrix() {
        let g = Matrix4::new(
            4.0, 2.0, 0.4, 0.0, 2.0, 5.0, 1.0, 0.2, 0.4, 1.0, 3.0, 0.5, 0.0, 0.2, 0.5, 2.0,
        );
        let l = cholesky_psd(&g);
        assert!((l * l.transpose() - g).norm() < 1e-13);
        // rank-deficient input
        let v = nalgebra::Vector4::new(1.0, 2.0, 3.0, 4.0);
        let r = v * v.transpose();
        let l = cholesky_psd(&r);
        assert!((l * l.transpose() - r).norm() < 1e-12);
    }
}
