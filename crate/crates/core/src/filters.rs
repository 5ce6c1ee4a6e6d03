//! Smooth spectral window functions and the truncation-kernel constant.
//!
//! The basic object is the C-infinity bump `window(w0, r, w, om)`: identically 1
//! for |om - w0| <= r, identically 0 for |om - w0| >= r + w, with a smooth
//! Gevrey-class roll-off in between. Shifted copies on an even grid form an
//! exact partition of unity, which is what makes the soft measurements and the
//! subspace windows exactly complete.

use std::sync::OnceLock;

/// exp(-1/s) for s > 0, else 0. Smooth at 0 with all derivatives vanishing.
pub fn theta(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for s <= 0, 1 for s >= 1, theta(s)/(theta(s)+theta(1-s)) between.
pub fn step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = theta(s);
        a / (a + theta(1.0 - s))
    }
}

/// The base roll-off: 1 - step(om); equals 1 for om <= 0, 0 for om >= 1.
/// Satisfies the reflection identity base(om) + base(1 - om) = 1 on [0, 1].
fn base(om: f64) -> f64 {
    1.0 - step(om)
}

/// Bump window centered at `w0` with flat radius `r` and roll-off width `w`.
/// Equals 1 for |om - w0| <= r and 0 for |om - w0| >= r + w.
pub fn window(w0: f64, r: f64, w: f64, om: f64) -> f64 {
    base(((om - w0).abs() - r) / w)
}

/// Window centers for an `n_win`-window partition of [-1, 1]:
/// centers -1 + 2i/(n_win - 1), roll-off kappa = 2/(n_win - 1).
pub fn window_centers(n_win: usize) -> (Vec<f64>, f64) {
    assert!(n_win >= 2, "need at least two windows");
    let kappa = 2.0 / (n_win as f64 - 1.0);
    let centers = (0..n_win).map(|i| -1.0 + i as f64 * kappa).collect();
    (centers, kappa)
}

/// Largest deviation of the window family from a partition of unity over a
/// uniform grid of `grid` points on [-1, 1].
pub fn partition_deviation(n_win: usize, grid: usize) -> f64 {
    let (centers, kappa) = window_centers(n_win);
    let mut worst = 0.0_f64;
    for k in 0..grid {
        let om = -1.0 + 2.0 * k as f64 / (grid - 1) as f64;
        let total: f64 = centers.iter().map(|&c| window(c, 0.0, kappa, om)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    worst
}

/// The band-limited truncation kernel in closed form:
/// f(t) = 48 (t^3 cos t - 6 t^2 sin t - 15 t cos t + 15 sin t) / (pi t^7),
/// with a Taylor expansion near 0 to avoid cancellation. Its frequency profile
/// is (1 - om^2)^3 on [-1, 1].
pub fn kernel(t: f64) -> f64 {
    use std::f64::consts::PI;
    if t.abs() < 0.5 {
        let t2 = t * t;
        (16.0 / 35.0 - 8.0 * t2 / 315.0 + 2.0 * t2 * t2 / 3465.0 - t2 * t2 * t2 / 135135.0
            + t2 * t2 * t2 * t2 / 16216200.0)
            / PI
    } else {
        48.0 * (t * t * t * t.cos() - 6.0 * t * t * t.sin() - 15.0 * t * t.cos()
            + 15.0 * t.sin())
            / (PI * t.powi(7))
    }
}

/// Quadrature for the first absolute moment of the kernel,
/// integral of |t f(t)| dt over the line, with an analytic bound-based tail.
fn kernel_moment_quad(points_per_panel: usize, t_max: f64) -> f64 {
    use std::f64::consts::PI;
    let (nodes, weights) = gauss_legendre(points_per_panel);
    let half = PI / 2.0;
    let panels = (t_max / half).ceil() as usize;
    let mut total = 0.0;
    for p in 0..panels {
        let a = p as f64 * half;
        let b = a + half;
        let mid = 0.5 * (a + b);
        let rad = 0.5 * (b - a);
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let t = mid + rad * x;
            total += rad * w * (2.0 * t * kernel(t)).abs(); // x2: integrand is even
        }
    }
    total
}

/// integral of |t f(t)| dt, cached. Two quadrature resolutions are compared and
/// must agree to 1e-6; the value is approximately 2.320831.
pub fn kernel_moment() -> f64 {
    static CACHE: OnceLock<f64> = OnceLock::new();
    *CACHE.get_or_init(|| {
        let coarse = kernel_moment_quad(64, 10_000.0);
        let fine = kernel_moment_quad(96, 20_000.0);
        assert!(
            (coarse - fine).abs() < 1e-6,
            "kernel moment quadrature did not converge: {coarse} vs {fine}"
        );
        fine
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                let w = 2.0 / ((1.0 - x * x) * dp * dp);
                nodes[i] = -x;
                nodes[n - 1 - i] = x;
                weights[i] = w;
                weights[n - 1 - i] = w;
                break;
            }
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn step_at_half_is_half() {
        // theta(1/2) = theta(1 - 1/2), so the ratio is exactly 1/2
        assert_abs_diff_eq!(step(0.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn window_flat_and_support() {
        assert_abs_diff_eq!(window(0.3, 0.1, 0.2, 0.35), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(window(0.3, 0.1, 0.2, 0.61), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(window(0.0, 0.0, 1.0, 0.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn reflection_identity_on_grid() {
        // base(om) + base(1 - om) = 1 holds by construction of step
        let n = 100_000;
        let mut worst = 0.0_f64;
        for k in 0..=n {
            let om = k as f64 / n as f64;
            worst = worst.max((window(0.0, 0.0, 1.0, om) + window(0.0, 0.0, 1.0, 1.0 - om) - 1.0).abs());
        }
        assert!(worst <= 1e-12, "reflection deviation {worst}");
    }

    #[test]
    fn partition_of_unity_small_families() {
        for n_win in 2..=8 {
            assert!(partition_deviation(n_win, 2001) <= 1e-10);
        }
    }

    #[test]
    fn merged_windows_collapse_to_one_wide_window() {
        // sum of windows i..j equals the single window centered at the midpoint
        // with flat radius spanning the merged centers
        let (centers, kappa) = window_centers(8);
        let (i, j) = (2, 5);
        let mid = 0.5 * (centers[i] + centers[j]);
        let rad = 0.5 * (centers[j] - centers[i]);
        let mut worst = 0.0_f64;
        for k in 0..=4000 {
            let om = -1.0 + 2.0 * k as f64 / 4000.0;
            let merged: f64 = (i..=j).map(|w| window(centers[w], 0.0, kappa, om)).sum();
            worst = worst.max((merged - window(mid, rad, kappa, om)).abs());
        }
        assert!(worst <= 1e-10, "merged-window deviation {worst}");
    }

    #[test]
    fn kernel_value_at_zero() {
        use std::f64::consts::PI;
        assert_abs_diff_eq!(kernel(0.0), 16.0 / (35.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn kernel_branches_agree_at_cut() {
        // Taylor branch and closed form must agree across |t| = 0.5; the
        // straddle is tight enough that the true variation is below 1e-10
        assert_abs_diff_eq!(kernel(0.5 - 1e-9), kernel(0.5 + 1e-9), epsilon = 1e-10);
    }

    #[test]
    fn kernel_moment_value() {
        // frozen from an independent quadrature oracle
        assert_abs_diff_eq!(kernel_moment(), 2.320831, epsilon = 1e-5);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int_x6: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert_abs_diff_eq!(int_x6, 2.0 / 7.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn step_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(step(lo) <= step(hi) + 1e-15);
        }

        #[test]
        fn window_in_unit_interval(om in -2.0..2.0f64) {
            let v = window(0.2, 0.1, 0.3, om);
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
    }
}
