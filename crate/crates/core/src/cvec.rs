//! Small helpers for complex channel/beam vectors.
//!
//! Channels are row vectors `h` and beams are column vectors `w`, both of
//! length `N_t`. The inner product convention is `<a, b> = a^H b`.

use num_complex::Complex64;

/// `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `h w` for a row vector `h` (no conjugation).
pub fn row_action(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    debug_assert_eq!(h.len(), w.len());
    h.iter().zip(w).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `|h w|^2`, the link power of beam `w` seen through channel `h`.
pub fn link_power(h: &[Complex64], w: &[Complex64]) -> f64 {
    row_action(h, w).norm_sqr()
}

pub fn scale(v: &[Complex64], s: f64) -> Vec<Complex64> {
    v.iter().map(|x| x * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inner_is_conjugate_linear() {
        let a = [c(1.0, 2.0), c(-0.5, 1.0)];
        let b = [c(0.3, -0.7), c(2.0, 0.1)];
        let ab = inner(&a, &b);
        let ba = inner(&b, &a);
        assert_relative_eq!(ab.re, ba.re, epsilon = 1e-15);
        assert_relative_eq!(ab.im, -ba.im, epsilon = 1e-15);
        assert_relative_eq!(inner(&a, &a).re, norm_sq(&a), epsilon = 1e-15);
        assert!(inner(&a, &a).im.abs() < 1e-15);
    }

    #[test]
    fn link_power_matches_manual_expansion() {
        let h = [c(1.0, -1.0), c(0.5, 2.0)];
        let w = [c(0.2, 0.3), c(-1.0, 0.4)];
        let hw = h[0] * w[0] + h[1] * w[1];
        assert_relative_eq!(link_power(&h, &w), hw.norm_sqr(), epsilon = 1e-15);
    }
}
