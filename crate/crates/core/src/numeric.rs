//! Scalar numerics shared by the radial theory: adaptive Simpson quadrature,
//! the Gamma function, unit-ball volumes and one-dimensional root/minimum search.

use crate::scalar::Real;

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative accuracy `rel_tol`.
pub fn adaptive_simpson<T: Real>(f: impl Fn(T) -> T, a: T, b: T, rel_tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let m = (a + b) / two;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) * (fa + T::lit(4.0) * fm + fb) / six;
    // scale from a coarse 8-panel estimate so the tolerance is relative to |∫|f||
    let coarse = {
        let n = 8;
        let hh = (b - a) / T::from_usize_lossy(n);
        (0..=n)
            .map(|i| f(a + hh * T::from_usize_lossy(i)).abs())
            .sum::<T>()
            * hh
    };
    let eps = rel_tol * coarse.max(T::min_positive_value());
    recurse(&f, a, b, fa, fm, fb, whole, eps, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, fa: T, fm: T, fb: T, whole: T, eps: T, depth: u32) -> T {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) * (fa + T::lit(4.0) * flm + fm) / six;
    let right = (b - m) * (fm + T::lit(4.0) * frm + fb) / six;
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * eps {
        return left + right + delta / T::lit(15.0);
    }
    recurse(f, a, m, fa, flm, fm, left, eps / two, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, eps / two, depth - 1)
}

/// Adaptive Simpson over consecutive breakpoints (kinks or jumps of `f`).
pub fn integrate_piecewise<T: Real>(f: impl Fn(T) -> T, breaks: &[T], rel_tol: T) -> T {
    breaks
        .windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], rel_tol))
        .sum()
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `Γ(x)` by the Lanczos approximation (`g = 7`, nine terms).
pub fn gamma(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        let series = LANCZOS[1..]
            .iter()
            .enumerate()
            .fold(LANCZOS[0], |acc, (i, c)| acc + c / (x + (i + 1) as f64));
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * series
    }
}

/// `ω_d = π^{d/2} / Γ(d/2 + 1)`, the volume of the unit ball in `ℝ^d`.
pub fn unit_ball_volume<T: Real>(d: usize) -> T {
    let half = d as f64 / 2.0;
    T::lit(std::f64::consts::PI.powf(half) / gamma(half + 1.0))
}

/// Radius of the ball of volume `v` in `ℝ^d`.
pub fn ball_radius<T: Real>(d: usize, v: T) -> T {
    (v / unit_ball_volume::<T>(d)).powf(T::one() / T::from_usize_lossy(d))
}

/// Bisection for a sign change of `f` on `[lo, hi]` (`f(lo) ≤ 0 < f(hi)`), returning the
/// last point where `f ≤ 0` to within machine resolution.
pub fn bisect_last_nonpositive<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
pub fn golden_section_min<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / T::lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_known_values() {
        assert_relative_eq!(gamma(1.0), 1.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(0.5), std::f64::consts::PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(gamma(2.5), 0.75 * std::f64::consts::PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(gamma(0.1), 9.513_507_698_668_732, max_relative = 1e-12);
    }

    #[test]
    fn unit_ball_volumes() {
        use std::f64::consts::PI;
        assert_relative_eq!(unit_ball_volume::<f64>(1), 2.0, max_relative = 1e-13);
        assert_relative_eq!(unit_ball_volume::<f64>(2), PI, max_relative = 1e-13);
        assert_relative_eq!(unit_ball_volume::<f64>(3), 4.0 * PI / 3.0, max_relative = 1e-13);
        assert_relative_eq!(ball_radius(2, PI), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_relative_eq!(v, 2.0, max_relative = 1e-11);
        let v = integrate_piecewise(|x: f64| if x < 0.3 { -1.0 } else { x * x }, &[0.0, 0.3, 1.0], 1e-12);
        assert_relative_eq!(v, -0.3 + (1.0 - 0.027) / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn root_and_minimum_search() {
        let r = bisect_last_nonpositive(|x: f64| x * x - 2.0, 0.0, 2.0);
        assert_relative_eq!(r, 2f64.sqrt(), max_relative = 1e-15);
        let m = golden_section_min(|x: f64| (x - 0.7).powi(2), 0.0, 2.0, 1e-10);
        assert!((m - 0.7).abs() < 1e-9);
    }
}
