//! Quadrature building blocks.
//!
//! Gauss–Legendre rules, a product rule on the unit sphere, adaptive 1D
//! integration, and an adaptive octree rule over boxes with optional forced
//! refinement toward a marked region (used for weakly singular integrands).

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::geometry::Point;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; accurate to machine
/// precision for the moderate orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev-based initial guess
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' at x by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n, p0 = P_{n-1}
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// Quadrature rule on the unit sphere: Gauss–Legendre in the polar angle ×
/// uniform in azimuth. Weights sum to `4π`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn product(n_theta: usize, n_phi: usize) -> Self {
        let (tn, tw) = gauss_legendre(n_theta);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * PI / n_phi as f64;
        for (t, wt) in tn.iter().zip(&tw) {
            // map [-1,1] -> [0,π]
            let theta = 0.5 * PI * (t + 1.0);
            let jac = 0.5 * PI * theta.sin();
            for j in 0..n_phi {
                let phi = dphi * (j as f64 + 0.5);
                points.push(Point::new(
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ));
                weights.push(wt * jac * dphi);
            }
        }
        SphereRule { points, weights }
    }

    /// Integral of `f` over the unit sphere.
    pub fn integrate(&self, mut f: impl FnMut(&Point) -> Complex64) -> Complex64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * f(p))
            .sum()
    }
}

/// Adaptive Simpson integration of a complex integrand on `[a, b]`.
pub fn adaptive_1d(
    f: &mut impl FnMut(f64) -> Complex64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Complex64 {
    fn simpson(fa: Complex64, fm: Complex64, fb: Complex64, h: f64) -> Complex64 {
        (fa + 4.0 * fm + fb) * (h / 6.0)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &mut impl FnMut(f64) -> Complex64,
        a: f64,
        b: f64,
        fa: Complex64,
        fm: Complex64,
        fb: Complex64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Complex64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

/// Result of an adaptive volume integration.
#[derive(Debug, Clone, Copy)]
pub struct IntegralEstimate {
    pub value: Complex64,
    /// Accumulated local error proxies (refinement deltas of accepted cells).
    pub error_estimate: f64,
    pub cells: usize,
}

/// Controls for [`adaptive_box`].
pub struct BoxRule<'a> {
    /// Absolute tolerance distributed over cells by volume share.
    pub tol: f64,
    /// Depth limit for ordinary refinement.
    pub max_depth: u32,
    /// Cells for which this returns true are refined regardless of the local
    /// error estimate (up to `forced_depth`), e.g. cells touching a singular
    /// set or a material discontinuity.
    pub force_refine: Option<&'a dyn Fn(&Point, &Point) -> bool>,
    /// Depth limit for forced refinement.
    pub forced_depth: u32,
}

impl Default for BoxRule<'_> {
    fn default() -> Self {
        BoxRule {
            tol: 1e-6,
            max_depth: 12,
            force_refine: None,
            forced_depth: 30,
        }
    }
}

/// Adaptive octree integration of `f` over the box `[lo, hi]`.
///
/// The coarse estimate is the midpoint rule, the fine estimate the sum of the
/// eight octant midpoints; a cell is accepted when the two agree within its
/// volume share of the tolerance.
pub fn adaptive_box(
    lo: &Point,
    hi: &Point,
    f: &(impl Fn(&Point) -> Complex64 + ?Sized),
    rule: &BoxRule,
) -> IntegralEstimate {
    let total_vol: f64 = (0..3).map(|i| hi[i] - lo[i]).product();
    let mut est = IntegralEstimate {
        value: Complex64::default(),
        error_estimate: 0.0,
        cells: 0,
    };
    recurse_box(lo, hi, f, rule, total_vol, 0, &mut est);
    est
}

fn midpoint(lo: &Point, hi: &Point) -> Point {
    0.5 * (lo + hi)
}

fn octants(lo: &Point, hi: &Point) -> [(Point, Point); 8] {
    let m = midpoint(lo, hi);
    let mut out = [(Point::zeros(), Point::zeros()); 8];
    for o in 0..8 {
        let mut olo = *lo;
        let mut ohi = m;
        for axis in 0..3 {
            if o & (1 << axis) != 0 {
                olo[axis] = m[axis];
                ohi[axis] = hi[axis];
            }
        }
        out[o] = (olo, ohi);
    }
    out
}

fn recurse_box(
    lo: &Point,
    hi: &Point,
    f: &(impl Fn(&Point) -> Complex64 + ?Sized),
    rule: &BoxRule,
    total_vol: f64,
    depth: u32,
    est: &mut IntegralEstimate,
) {
    let vol: f64 = (0..3).map(|i| hi[i] - lo[i]).product();
    let coarse = f(&midpoint(lo, hi)) * vol;
    let kids = octants(lo, hi);
    let fine: Complex64 = kids
        .iter()
        .map(|(klo, khi)| f(&midpoint(klo, khi)) * (vol / 8.0))
        .sum();
    let delta = (fine - coarse).norm();
    let local_tol = rule.tol * (vol / total_vol);
    let forced = rule
        .force_refine
        .map(|p| p(lo, hi) && depth < rule.forced_depth)
        .unwrap_or(false);
    let refine = forced || (delta > local_tol && depth < rule.max_depth);
    if !refine {
        est.value += fine;
        est.error_estimate += delta;
        est.cells += 1;
        return;
    }
    for (klo, khi) in &kids {
        recurse_box(klo, khi, f, rule, total_vol, depth + 1, est);
    }
}

/// Integral over a ball in spherical coordinates: adaptive in radius with a
/// fixed product rule for the angular average. `split_radii` forces panel
/// boundaries (e.g. at a cutoff radius).
pub fn ball_radial(
    center: &Point,
    radius: f64,
    f: &(impl Fn(&Point) -> Complex64 + ?Sized),
    angular: &SphereRule,
    tol: f64,
    split_radii: &[f64],
) -> Complex64 {
    let mut breaks: Vec<f64> = std::iter::once(0.0)
        .chain(split_radii.iter().cloned())
        .chain(std::iter::once(radius))
        .filter(|&r| (0.0..=radius).contains(&r))
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut g = |r: f64| -> Complex64 {
        if r == 0.0 {
            return Complex64::default();
        }
        let shell = angular.integrate(|s| f(&(center + r * s)));
        shell * r * r
    };
    let mut total = Complex64::default();
    for w in breaks.windows(2) {
        total += adaptive_1d(&mut g, w[0], w[1], tol / breaks.len() as f64, 40);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_exactness() {
        // degree-9 polynomial integrated exactly by a 5-point rule
        let (x, w) = gauss_legendre(5);
        let integral: f64 = x
            .iter()
            .zip(&w)
            .map(|(&x, &w)| w * (x.powi(9) + 3.0 * x.powi(4) - x))
            .sum();
        // ∫_{-1}^{1} (x⁹ + 3x⁴ − x) dx = 6/5
        assert_relative_eq!(integral, 1.2, max_relative = 1e-13);
    }

    #[test]
    fn sphere_rule_weight_sum() {
        let rule = SphereRule::product(16, 32);
        let s: f64 = rule.weights.iter().sum();
        assert_relative_eq!(s, 4.0 * PI, max_relative = 1e-12);
        // ∫ z² over the unit sphere = 4π/3
        let v = rule.integrate(|p| Complex64::from(p.z * p.z));
        assert_relative_eq!(v.re, 4.0 * PI / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn adaptive_1d_oscillatory() {
        let mut f = |x: f64| Complex64::from((10.0 * x).sin());
        let v = adaptive_1d(&mut f, 0.0, 1.0, 1e-12, 30);
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert_relative_eq!(v.re, exact, epsilon = 1e-10);
    }

    #[test]
    fn adaptive_1d_endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2, integrable endpoint singularity
        let mut f = |x: f64| Complex64::from(if x > 0.0 { x.powf(-0.5) } else { 0.0 });
        let v = adaptive_1d(&mut f, 0.0, 1.0, 1e-9, 48);
        assert_relative_eq!(v.re, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn box_integral_smooth() {
        let lo = Point::new(0.0, 0.0, 0.0);
        let hi = Point::new(1.0, 2.0, 1.0);
        let f = |p: &Point| Complex64::new(p.x * p.y, p.z);
        let est = adaptive_box(
            &lo,
            &hi,
            &f,
            &BoxRule {
                tol: 1e-10,
                max_depth: 10,
                ..Default::default()
            },
        );
        // ∫ xy over the box = (1/2)(2)(1) = 1; ∫ z = 2·(1/2) = 1
        assert_relative_eq!(est.value.re, 1.0, epsilon = 1e-8);
        assert_relative_eq!(est.value.im, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn box_integral_point_singularity() {
        // ∫ 1/|x| over [−1,1]³ with forced refinement toward the origin.
        // Reference: 8·∫over-unit-corner-cube ≈ 8 × 1.1900392… = 9.5203137…
        let lo = Point::new(-1.0, -1.0, -1.0);
        let hi = Point::new(1.0, 1.0, 1.0);
        let f = |p: &Point| {
            let r = p.norm();
            Complex64::from(if r > 0.0 { 1.0 / r } else { 0.0 })
        };
        let near = |lo: &Point, hi: &Point| -> bool {
            (0..3).all(|i| lo[i] <= 0.0 && 0.0 <= hi[i]) || {
                let mut d2 = 0.0;
                for i in 0..3 {
                    let d = (lo[i]).max(-hi[i]).max(0.0);
                    d2 += d * d;
                }
                d2.sqrt() < (hi - lo).norm() * 0.5
            }
        };
        let est = adaptive_box(
            &lo,
            &hi,
            &f,
            &BoxRule {
                tol: 1e-6,
                max_depth: 8,
                force_refine: Some(&near),
                forced_depth: 18,
            },
        );
        assert_relative_eq!(est.value.re, 9.5203137, epsilon = 2e-4);
    }

    #[test]
    fn ball_radial_singular_integrand() {
        // ∫_{|x|≤1} |x|^{-1} dx = 2π
        let rule = SphereRule::product(8, 16);
        let f = |p: &Point| Complex64::from(1.0 / p.norm());
        let v = ball_radial(&Point::zeros(), 1.0, &f, &rule, 1e-10, &[]);
        assert_relative_eq!(v.re, 2.0 * PI, max_relative = 1e-9);
    }
}
