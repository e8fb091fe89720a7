//! Closed-form test landscapes.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

/// `sin(10πx)/(2x) + (x − 1)⁴`, with the removable singularity at 0 filled
/// by its limit `5π`.
pub fn gramacy_lee(x: f64) -> f64 {
    let osc = if x == 0.0 {
        5.0 * PI
    } else {
        (10.0 * PI * x).sin() / (2.0 * x)
    };
    osc + (x - 1.0).powi(4)
}

pub fn gramacy_lee_derivative(x: f64) -> f64 {
    let quartic = 4.0 * (x - 1.0).powi(3);
    if x.abs() < 1e-6 {
        // Taylor: sin(ax)/(2x) = a/2 − a³x²/12 + ..., derivative −a³x/6
        let a = 10.0 * PI;
        return -a.powi(3) * x / 6.0 + quartic;
    }
    let arg = 10.0 * PI * x;
    5.0 * PI * arg.cos() / x - arg.sin() / (2.0 * x * x) + quartic
}

pub const GRAMACY_LEE_DOMAIN: (f64, f64) = (-1.0, 3.0);

/// Global minimizer and minimum of [`gramacy_lee`] on `[−1, 3]`.
///
/// Dense scan at spacing 1e-4, then Newton on the analytic derivative.
pub fn gramacy_lee_minimum() -> (f64, f64) {
    static MIN: OnceLock<(f64, f64)> = OnceLock::new();
    *MIN.get_or_init(|| {
        let (lo, hi) = GRAMACY_LEE_DOMAIN;
        let n = 40_000;
        let mut best = (lo, gramacy_lee(lo));
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let f = gramacy_lee(x);
            if f < best.1 {
                best = (x, f);
            }
        }
        let mut x = best.0;
        for _ in 0..50 {
            let h = 1e-6;
            let d2 = (gramacy_lee_derivative(x + h) - gramacy_lee_derivative(x - h)) / (2.0 * h);
            let step = gramacy_lee_derivative(x) / d2;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        (x, gramacy_lee(x))
    })
}

/// `10d + Σ (xᵢ² − 10 cos 2πxᵢ)`.
pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (TAU * v).cos()).sum::<f64>()
}

pub fn rastrigin_gradient(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 2.0 * v + 10.0 * TAU * (TAU * v).sin()).collect()
}

pub const RASTRIGIN_DOMAIN: (f64, f64) = (-5.12, 5.12);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gramacy_lee_values() {
        assert!(gramacy_lee(1.0).abs() < 1e-14);
        assert!((gramacy_lee(2.0) - 1.0).abs() < 1e-14);
        assert_eq!(gramacy_lee(0.0), 5.0 * PI + 1.0);
        // continuous across the filled singularity
        assert!((gramacy_lee(1e-9) - gramacy_lee(0.0)).abs() < 1e-6);
    }

    #[test]
    fn gramacy_lee_global_minimum_near_0_143() {
        let (x, f) = gramacy_lee_minimum();
        assert!((x - 0.143).abs() < 1e-3, "x = {x}");
        // independent check on a 1e-4 grid
        let grid_min = (0..=40_000)
            .map(|i| -1.0 + 1e-4 * i as f64)
            .map(|x| (x, gramacy_lee(x)))
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!((grid_min.0 - 0.143).abs() < 1e-3);
        assert!(f <= grid_min.1);
    }

    #[test]
    fn gramacy_lee_derivative_matches_differences() {
        for &x in &[-0.9, -0.3, 1e-7, 0.05, 0.143, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gramacy_lee(x + h) - gramacy_lee(x - h)) / (2.0 * h);
            let d = gramacy_lee_derivative(x);
            assert!((fd - d).abs() < 1e-4 * (1.0 + d.abs()), "x = {x}: {fd} vs {d}");
        }
    }

    #[test]
    fn rastrigin_values() {
        assert_eq!(rastrigin(&[0.0]), 0.0);
        assert!((rastrigin(&[1.0]) - 1.0).abs() < 1e-12);
        assert!((rastrigin(&[0.5]) - 20.25).abs() < 1e-12);
    }

    #[test]
    fn rastrigin_gradient_matches_differences() {
        let x = [0.3, -1.7];
        let g = rastrigin_gradient(&x);
        for i in 0..2 {
            let mut a = x;
            let mut b = x;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (rastrigin(&a) - rastrigin(&b)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-5);
        }
    }
}
