//! Gamma function via the Lanczos approximation (g = 7, 9 coefficients).

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;

const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for real x. Poles at non-positive integers return +∞.
pub fn gamma(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.5 {
        // reflection
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// Surface area of the unit sphere S^{d-1} in ℝ^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * PI.powf(half) / gamma(half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_and_half_integers() {
        for (n, fact) in [(1, 1.0), (2, 1.0), (3, 2.0), (5, 24.0), (8, 5040.0)] {
            let g = gamma(n as f64);
            assert!((g - fact).abs() / fact < 1e-13, "Γ({n}) = {g}");
        }
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(1.5) - 0.5 * PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn reflection_branch() {
        // Γ(-0.5) = -2√π
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
        assert!(gamma(0.0).is_infinite());
        assert!(gamma(-3.0).is_infinite());
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }
}
