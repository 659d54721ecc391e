//! Orthonormal associated Legendre functions with the Condon-Shortley phase.
//!
//! `lambda(l, m, theta)` is the colatitude part of `Y_lm = lambda * e^{i m phi}`
//! for `m >= 0`. Negative orders follow from `lambda(l, -m) = (-1)^m lambda(l, m)`.

use std::f64::consts::PI;

/// Offset of `(l, m)` in a triangular `m >= 0` table.
#[inline]
pub fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

pub fn tri_len(l_excl: usize) -> usize {
    l_excl * (l_excl + 1) / 2
}

/// Fills `out[tri_index(l, m)]` with `lambda_lm(theta)` for `0 <= m <= l < l_excl`.
pub fn lambda_table_into(l_excl: usize, theta: f64, out: &mut [f64]) {
    debug_assert!(out.len() >= tri_len(l_excl));
    if l_excl == 0 {
        return;
    }
    let (st, x) = theta.sin_cos();
    let mut diag = (0.25 / PI).sqrt();
    for m in 0..l_excl {
        if m > 0 {
            let mf = m as f64;
            diag *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * st;
        }
        out[tri_index(m, m)] = diag;
        if m + 1 >= l_excl {
            break;
        }
        let mf = m as f64;
        let mut p2 = diag;
        let mut p1 = (2.0 * mf + 3.0).sqrt() * x * diag;
        out[tri_index(m + 1, m)] = p1;
        for l in m + 2..l_excl {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let p = a * (x * p1 - b * p2);
            out[tri_index(l, m)] = p;
            p2 = p1;
            p1 = p;
        }
    }
}

pub fn lambda_table(l_excl: usize, theta: f64) -> Vec<f64> {
    let mut out = vec![0.0; tri_len(l_excl)];
    lambda_table_into(l_excl, theta, &mut out);
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes in decreasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = x;
        ws[i] = w;
        xs[n - 1 - i] = -x;
        ws[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    (xs, ws)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_forms_low_degree() {
        let th = 0.83_f64;
        let (s, c) = th.sin_cos();
        let t = lambda_table(3, th);
        let k = |l: f64| ((2.0 * l + 1.0) / (4.0 * PI)).sqrt();
        assert_abs_diff_eq!(t[tri_index(0, 0)], k(0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(t[tri_index(1, 0)], k(1.0) * c, epsilon = 1e-15);
        // Y_11 = -sqrt(3/8pi) sin(theta) e^{i phi}
        assert_abs_diff_eq!(t[tri_index(1, 1)], -(3.0 / (8.0 * PI)).sqrt() * s, epsilon = 1e-15);
        assert_abs_diff_eq!(t[tri_index(2, 0)], k(2.0) * 0.5 * (3.0 * c * c - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(t[tri_index(2, 1)], -(15.0 / (8.0 * PI)).sqrt() * s * c, epsilon = 1e-15);
        assert_abs_diff_eq!(
            t[tri_index(2, 2)],
            0.25 * (15.0 / (2.0 * PI)).sqrt() * s * s,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in [1usize, 2, 7, 64, 256] {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n).min(40) {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let want = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!((s - want).abs() < 1e-13, "n={n} k={k}: {s}");
            }
        }
    }

    #[test]
    fn normalization_by_gauss_quadrature() {
        let l_excl = 40;
        let (x, w) = gauss_legendre(l_excl);
        let tables: Vec<Vec<f64>> = x.iter().map(|x| lambda_table(l_excl, x.acos())).collect();
        for l in [0usize, 5, 21, 39] {
            for m in [0usize, 1, l / 2, l] {
                for l2 in [l, (l + 2).min(l_excl - 1)] {
                    if m > l || m > l2 {
                        continue;
                    }
                    let s: f64 = (0..l_excl)
                        .map(|g| w[g] * tables[g][tri_index(l, m)] * tables[g][tri_index(l2, m)])
                        .sum::<f64>()
                        * 2.0
                        * PI;
                    let want = if l == l2 { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(s, want, epsilon = 1e-12);
                }
            }
        }
    }
}
