//! Real roots of univariate polynomials via companion-matrix eigenvalues.

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Evaluates a polynomial given highest-degree-first coefficients.
pub fn eval<T: Real>(coeffs: &[T], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + c)
}

fn eval_derivative<T: Real>(coeffs: &[T], x: T) -> T {
    let n = coeffs.len();
    let mut acc = T::zero();
    for (i, &c) in coeffs.iter().enumerate().take(n.saturating_sub(1)) {
        acc = acc * x + c * T::lit((n - 1 - i) as f64);
    }
    acc
}

/// Product of two polynomials (highest degree first).
pub fn mul<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Sum of two polynomials (highest degree first), aligned at the constant term.
pub fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len().max(b.len());
    let mut out = vec![T::zero(); n];
    for (k, &x) in a.iter().rev().enumerate() {
        out[n - 1 - k] += x;
    }
    for (k, &x) in b.iter().rev().enumerate() {
        out[n - 1 - k] += x;
    }
    out
}

pub fn scale<T: Real>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// All real roots, ascending. Coefficients are highest degree first.
///
/// Leading coefficients that are negligible relative to the largest one are
/// dropped. Eigenvalues with `|Im| < 1e-8 (1 + |Re|)` count as real and are
/// polished by a few Newton steps.
pub fn real_roots<T: Real>(coeffs: &[T]) -> Vec<T> {
    let scale_max = coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    if scale_max == T::zero() {
        return Vec::new();
    }
    let first = coeffs
        .iter()
        .position(|c| c.abs() > T::default_epsilon() * scale_max)
        .unwrap_or(coeffs.len());
    let c = &coeffs[first..];
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[0];
    let mut comp = DMatrix::<T>::zeros(deg, deg);
    for j in 0..deg {
        comp[(0, j)] = -c[j + 1] / lead;
    }
    for i in 1..deg {
        comp[(i, i - 1)] = T::one();
    }
    let tol = T::lit(1e-8);
    let mut roots: Vec<T> = comp
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < tol * (T::one() + z.re.abs()))
        .map(|z| polish(c, z.re))
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    roots
}

fn polish<T: Real>(c: &[T], mut x: T) -> T {
    let mut fx = eval(c, x);
    for _ in 0..3 {
        let d = eval_derivative(c, x);
        if d == T::zero() {
            break;
        }
        let cand = x - fx / d;
        let fc = eval(c, cand);
        if fc.abs() >= fx.abs() {
            break;
        }
        x = cand;
        fx = fc;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorable_cubic() {
        let r: Vec<f64> = real_roots(&[1.0, 0.0, -1.0, 0.0]);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-1.0f64, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_pair_is_dropped() {
        // (x − 2)(x² + 1)
        let r: Vec<f64> = real_roots(&[1.0, -2.0, 1.0, -2.0]);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negligible_leading_term_lowers_degree() {
        let r: Vec<f64> = real_roots(&[1e-30, 2.0, -4.0]);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn arithmetic_helpers() {
        assert_eq!(mul(&[1.0, 1.0], &[1.0, -1.0]), vec![1.0, 0.0, -1.0]);
        assert_eq!(add(&[1.0, 0.0, 0.0], &[2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(eval(&[1.0, 0.0, -1.0], 3.0), 8.0);
    }

    #[test]
    fn single_precision_roots() {
        let r = real_roots(&[1f32, -3., 2.]);
        assert_eq!(r.len(), 2);
        assert!((r[0] - 1.0).abs() < 1e-5 && (r[1] - 2.0).abs() < 1e-5);
    }
}
