//! Independent exact solutions and quadrature identities.
//!
//! The separation-of-variables series for a single impedance sphere in a
//! constant-speed background is the exact oracle against which the small-body
//! charge asymptotics are validated. The surface-layer identities
//! `∫_S ds/(4π|s−t|) = a` and `∮∮ ∂_N(4π r)^{-1} σ = −∫σ` (the latter for the
//! full exterior normal-derivative limit) are evaluated by pole-rotated
//! product quadrature.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::geometry::Point;
use crate::quad::gauss_legendre;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("ka must be positive, got {0}")]
    BadSizeParameter(f64),
    #[error("impedance resonance: modal denominator vanished at l = {l}")]
    Resonance { l: usize },
    #[error("point is not on the sphere: |t| = {got}, expected {expected}")]
    OffSphere { got: f64, expected: f64 },
}

// --- spherical Bessel functions ---

/// Spherical Bessel `j_l(x)` for `l = 0..=l_max` by downward recurrence
/// (Miller's algorithm), stable for `l > x`.
pub(crate) fn spherical_jn(l_max: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0);
    let start = l_max + 16 + (x as usize);
    let mut jp2 = 0.0f64;
    let mut jp1 = 1e-300f64;
    let mut out = vec![0.0; l_max + 1];
    for l in (0..=start).rev() {
        let j = (2.0 * l as f64 + 3.0) / x * jp1 - jp2;
        if l <= l_max {
            out[l] = j;
        }
        jp2 = jp1;
        jp1 = j;
        // rescale to avoid overflow
        if jp1.abs() > 1e250 {
            let s = 1e-250;
            jp1 *= s;
            jp2 *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    // normalize against j0 = sin(x)/x
    let scale = (x.sin() / x) / jp1;
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// Spherical Bessel `y_l(x)` for `l = 0..=l_max` by upward recurrence.
pub(crate) fn spherical_yn(l_max: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0);
    let mut out = vec![0.0; l_max + 1];
    out[0] = -x.cos() / x;
    if l_max >= 1 {
        out[1] = -x.cos() / (x * x) - x.sin() / x;
    }
    for l in 2..=l_max {
        out[l] = (2.0 * l as f64 - 1.0) / x * out[l - 1] - out[l - 2];
    }
    out
}

/// Derivatives via `f_l'(x) = f_{l−1}(x) − (l+1)/x · f_l(x)` (and
/// `f_0' = −f_1`).
fn derivatives(f: &[f64], x: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    out[0] = -f[1.min(f.len() - 1)];
    for l in 1..f.len() {
        out[l] = f[l - 1] - (l as f64 + 1.0) / x * f[l];
    }
    out
}

/// Exact exterior solution for a plane wave scattering off one impedance
/// ball `B(0, a)` in a constant background: coefficients of
/// `u = u₀ + Σ_l A_l h_l^{(1)}(kr) P_l(cosθ)` with `θ` measured from the
/// incidence direction and the boundary condition `∂u/∂r = ζ u` at `r = a`.
#[derive(Debug, Clone)]
pub struct SphereScatteringSeries {
    pub a: f64,
    pub zeta: Complex64,
    pub k: f64,
    pub l_max: usize,
    pub coefficients: Vec<Complex64>,
}

/// Truncation order rule: `l_max ≥ 10 + 2·ka`, adaptive in the size
/// parameter.
fn truncation_order(ka: f64) -> usize {
    10 + (2.0 * ka).ceil() as usize
}

/// Solves the single-sphere impedance problem exactly.
pub fn solve_sphere_exact(a: f64, zeta: Complex64, k: f64) -> Result<SphereScatteringSeries, OracleError> {
    let ka = k * a;
    if !(ka > 0.0) {
        return Err(OracleError::BadSizeParameter(ka));
    }
    let l_max = truncation_order(ka);
    let j = spherical_jn(l_max, ka);
    let y = spherical_yn(l_max, ka);
    let dj = derivatives(&j, ka);
    let dy = derivatives(&y, ka);
    let mut coefficients = Vec::with_capacity(l_max + 1);
    let mut il = Complex64::from(1.0); // i^l
    for l in 0..=l_max {
        let h = Complex64::new(j[l], y[l]);
        let dh = Complex64::new(dj[l], dy[l]);
        let numer = Complex64::from(k * dj[l]) - zeta * j[l];
        let denom = k * dh - zeta * h;
        let scale = (k * dh).norm() + (zeta * h).norm();
        if denom.norm() <= 1e-13 * scale {
            return Err(OracleError::Resonance { l });
        }
        let amp = il * (2.0 * l as f64 + 1.0);
        coefficients.push(-amp * numer / denom);
        il *= Complex64::i();
    }
    Ok(SphereScatteringSeries {
        a,
        zeta,
        k,
        l_max,
        coefficients,
    })
}

/// Legendre polynomials `P_l(x)` for `l = 0..=l_max`.
fn legendre_all(l_max: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; l_max + 1];
    p[0] = 1.0;
    if l_max >= 1 {
        p[1] = x;
    }
    for l in 1..l_max {
        p[l + 1] = ((2.0 * l as f64 + 1.0) * x * p[l] - l as f64 * p[l - 1]) / (l as f64 + 1.0);
    }
    p
}

impl SphereScatteringSeries {
    /// Total field `u(r, θ)` for `r ≥ a`; `θ` from the incidence direction.
    pub fn total_field(&self, r: f64, cos_theta: f64) -> Complex64 {
        let x = self.k * r;
        let j = spherical_jn(self.l_max, x);
        let y = spherical_yn(self.l_max, x);
        let p = legendre_all(self.l_max, cos_theta);
        let mut u = Complex64::default();
        let mut il = Complex64::from(1.0);
        for l in 0..=self.l_max {
            let h = Complex64::new(j[l], y[l]);
            u += (il * (2.0 * l as f64 + 1.0) * j[l] + self.coefficients[l] * h) * p[l];
            il *= Complex64::i();
        }
        u
    }

    /// Radial derivative `∂u/∂r` of the total field at `(r, θ)`.
    pub fn total_field_dr(&self, r: f64, cos_theta: f64) -> Complex64 {
        let x = self.k * r;
        let j = spherical_jn(self.l_max, x);
        let y = spherical_yn(self.l_max, x);
        let dj = derivatives(&j, x);
        let dy = derivatives(&y, x);
        let p = legendre_all(self.l_max, cos_theta);
        let mut du = Complex64::default();
        let mut il = Complex64::from(1.0);
        for l in 0..=self.l_max {
            let dh = Complex64::new(dj[l], dy[l]);
            du += (il * (2.0 * l as f64 + 1.0) * dj[l] + self.coefficients[l] * dh) * self.k * p[l];
            il *= Complex64::i();
        }
        du
    }

    /// Max boundary-condition residual `|∂u/∂r − ζu|` over sampled boundary
    /// points, relative to the incident amplitude.
    pub fn boundary_residual(&self, samples: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..samples {
            // deterministic spread of cosθ over (−1, 1)
            let ct = -1.0 + 2.0 * (i as f64 + 0.5) / samples as f64;
            let u = self.total_field(self.a, ct);
            let du = self.total_field_dr(self.a, ct);
            worst = worst.max((du - self.zeta * u).norm());
        }
        worst
    }

    /// Certifies the series truncation: `|A_{l_max}| / max_l |A_l|`.
    pub fn truncation_ratio(&self) -> f64 {
        let max = self
            .coefficients
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if max == 0.0 {
            0.0
        } else {
            self.coefficients[self.l_max].norm() / max
        }
    }
}

/// Charge carried by the scattered monopole: the far-field average of the
/// scattered wave over a sphere of radius `r_extract` is matched against the
/// constant-speed kernel `G(x, 0) = e^{ikr}/(4π c₀² r)`, giving
/// `Q = ⟨u_sc⟩ · 4π c₀² r e^{−ikr}`. Extraction at `r = 100/k` with a
/// sensitivity check at `200/k`.
pub fn extract_monopole_charge(series: &SphereScatteringSeries, c0: f64) -> Complex64 {
    let q_at = |r: f64| -> Complex64 {
        // angular average of the scattered field; P_l averages to δ_{l0}
        let (nodes, weights) = gauss_legendre(24);
        let mut avg = Complex64::default();
        for (t, w) in nodes.iter().zip(&weights) {
            avg += scattered_field(series, r, *t) * (*w / 2.0);
        }
        avg * 4.0 * PI * c0 * c0 * r * Complex64::from_polar(1.0, -series.k * r)
    };
    let r1 = 100.0 / series.k;
    let q1 = q_at(r1);
    let q2 = q_at(2.0 * r1);
    let drift = (q1 - q2).norm() / q1.norm().max(1e-300);
    if drift > 1e-8 {
        log::warn!("monopole extraction radius sensitivity {drift:.2e}");
    }
    q1
}

fn scattered_field(series: &SphereScatteringSeries, r: f64, cos_theta: f64) -> Complex64 {
    let x = series.k * r;
    let j = spherical_jn(series.l_max, x);
    let y = spherical_yn(series.l_max, x);
    let p = legendre_all(series.l_max, cos_theta);
    let mut u = Complex64::default();
    for l in 0..=series.l_max {
        let h = Complex64::new(j[l], y[l]);
        u += series.coefficients[l] * h * p[l];
    }
    u
}

/// Reference charge from the refined small-`a` relation
/// `Q = −4π ζ u₀ a² c / (1 + ζ a)` with `u₀ = u₀(center)`.
pub fn refined_charge_reference(a: f64, zeta: Complex64, c_at_center: f64, u0: Complex64) -> Complex64 {
    -4.0 * PI * zeta * u0 * a * a * c_at_center / (Complex64::from(1.0) + zeta * a)
}

/// Builds an orthonormal frame `(e1, e2, n)` with `n` given.
fn frame(n: &Point) -> (Point, Point) {
    let helper = if n.x.abs() < 0.9 {
        Point::new(1.0, 0.0, 0.0)
    } else {
        Point::new(0.0, 1.0, 0.0)
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Evaluates `∫_{S_a} ds / (4π|s−t|)` for `t` on the sphere of radius `a`
/// centered at the origin; the exact value is `a`. The pole of the product
/// rule is rotated onto `t` so the integrand (with the area element) stays
/// bounded.
pub fn single_layer_sphere_identity(a: f64, t: &Point, order: usize) -> Result<f64, OracleError> {
    let tn = t.norm();
    if (tn - a).abs() > 1e-9 * a.max(1.0) {
        return Err(OracleError::OffSphere {
            got: tn,
            expected: a,
        });
    }
    let n = t / tn;
    let (e1, e2) = frame(&n);
    let (nodes, weights) = gauss_legendre(order);
    let n_phi = 2 * order;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut total = 0.0;
    for (tt, wt) in nodes.iter().zip(&weights) {
        let theta = 0.5 * PI * (tt + 1.0);
        let jac = 0.5 * PI * theta.sin() * a * a;
        for jp in 0..n_phi {
            let phi = dphi * (jp as f64 + 0.5);
            // s in the frame whose pole is t
            let s = a
                * (theta.sin() * phi.cos() * e1 + theta.sin() * phi.sin() * e2 + theta.cos() * n);
            let r = (s - t).norm();
            total += wt * jac * dphi / (4.0 * PI * r);
        }
    }
    Ok(total)
}

/// Result of the normal-derivative layer identity check.
#[derive(Debug, Clone, Copy)]
pub struct LayerIdentity {
    /// `∮_S ds ∂/∂N_s^- ∮_S (4π r_st)^{-1} σ dt` — the double integral with
    /// the full exterior normal-derivative limit.
    pub double_integral: f64,
    /// Ratio of the double integral to the reference `−∫_S σ dt = −4πa²σ`.
    pub ratio_to_reference: f64,
}

/// Evaluates the double surface integral of the exterior normal derivative
/// of the single layer with constant density. The principal-value part is
/// computed by pole-rotated quadrature and the exterior jump `−σ/2` is added
/// analytically; the reference is `−∫σ = −4πa²σ`.
pub fn normal_derivative_layer_identity(a: f64, density: f64, order: usize) -> LayerIdentity {
    // PV kernel on the sphere: N_s · ∇_s (4π r_st)^{-1} = −1/(8π a r_st)
    // pole-rotation: fix s at the north pole; the PV integral over t is
    // independent of s by symmetry, but we still quadrature both layers.
    let (nodes, weights) = gauss_legendre(order);
    let n_phi = 2 * order;
    let dphi = 2.0 * PI / n_phi as f64;
    let s = Point::new(0.0, 0.0, a);
    let mut pv = 0.0;
    for (tt, wt) in nodes.iter().zip(&weights) {
        let theta = 0.5 * PI * (tt + 1.0);
        let jac = 0.5 * PI * theta.sin() * a * a;
        for jp in 0..n_phi {
            let phi = dphi * (jp as f64 + 0.5);
            let t = a * Point::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let r = (s - t).norm();
            if r == 0.0 {
                continue;
            }
            pv += wt * jac * dphi * (-1.0 / (8.0 * PI * a * r));
        }
    }
    // exterior limit per unit area: PV − σ/2; integrate over s (area 4πa²)
    let per_area = pv * density - 0.5 * density;
    let double_integral = per_area * 4.0 * PI * a * a;
    let reference = -4.0 * PI * a * a * density;
    LayerIdentity {
        double_integral,
        ratio_to_reference: double_integral / reference,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bessel_low_orders_match_closed_forms() {
        for &x in &[0.05f64, 0.7, 2.0, 9.5] {
            let j = spherical_jn(3, x);
            assert_relative_eq!(j[0], x.sin() / x, max_relative = 1e-12);
            assert_relative_eq!(j[1], x.sin() / (x * x) - x.cos() / x, max_relative = 1e-10);
            let y = spherical_yn(3, x);
            assert_relative_eq!(y[0], -x.cos() / x, max_relative = 1e-12);
            assert_relative_eq!(y[1], -x.cos() / (x * x) - x.sin() / x, max_relative = 1e-12);
            // Wronskian j_l y_l' − j_l' y_l = 1/x²
            let dj = derivatives(&j, x);
            let dy = derivatives(&y, x);
            for l in 0..=2 {
                assert_relative_eq!(
                    j[l] * dy[l] - dj[l] * y[l],
                    1.0 / (x * x),
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn series_satisfies_boundary_condition() {
        let series = solve_sphere_exact(0.01, Complex64::new(10.0, -3.0), 1.0).unwrap();
        assert!(series.boundary_residual(100) <= 1e-10);
        assert!(series.truncation_ratio() <= 1e-12);
    }

    #[test]
    fn large_impedance_approaches_dirichlet() {
        // |ζ| = 1e8, a = 0.01: the boundary value tends to zero like
        // 1/(|ζ|a) = 1e−6 (the leading term saturates that bound exactly,
        // hence the 5% headroom)
        let zeta = 1e8;
        let a = 0.01;
        let series = solve_sphere_exact(a, Complex64::new(zeta, 0.0), 1.0).unwrap();
        for i in 0..50 {
            let ct = -1.0 + 2.0 * (i as f64 + 0.5) / 50.0;
            let u = series.total_field(series.a, ct);
            assert!(
                u.norm() <= 1.05 / (zeta * a),
                "|u| = {} at cosθ = {ct}",
                u.norm()
            );
        }
    }

    #[test]
    fn neumann_monopole_scales_as_ka_cubed() {
        // ζ = 0: log-log slope of |A₀| against a is ≈ 3
        let k = 1.0;
        let mut logs = Vec::new();
        for &a in &[1e-2, 5e-3, 2.5e-3] {
            let series = solve_sphere_exact(a, Complex64::default(), k).unwrap();
            logs.push((a.ln(), series.coefficients[0].norm().ln()));
        }
        let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
        assert!((slope - 3.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn monopole_charge_matches_refined_asymptotics() {
        // ζ = h/a^κ with h = 1, κ = 0.5: Q_exact / Q_refined → 1 as a → 0
        let k = 1.0;
        let h = 1.0;
        let kappa = 0.5;
        let mut deviations = Vec::new();
        for &a in &[1e-2f64, 5e-3, 2.5e-3] {
            let zeta = Complex64::from(h / a.powf(kappa));
            let series = solve_sphere_exact(a, zeta, k).unwrap();
            let q = extract_monopole_charge(&series, 1.0);
            let q_ref = refined_charge_reference(a, zeta, 1.0, Complex64::from(1.0));
            deviations.push((q / q_ref - Complex64::from(1.0)).norm());
        }
        assert!(deviations[1] < deviations[0]);
        assert!(deviations[2] < deviations[1]);
        assert!(deviations[2] <= 0.02, "final deviation {}", deviations[2]);
    }

    #[test]
    fn neumann_charge_vanishes_faster_than_a_squared() {
        let k = 1.0;
        let mut ratios = Vec::new();
        for &a in &[1e-2, 5e-3] {
            let series = solve_sphere_exact(a, Complex64::default(), k).unwrap();
            let q = extract_monopole_charge(&series, 1.0);
            ratios.push(q.norm() / (a * a));
        }
        assert!(ratios[1] < 0.6 * ratios[0], "{ratios:?}");
    }

    #[test]
    fn charge_sign_tracks_impedance() {
        // Im ζ ≤ 0 inputs: sign of Q/u₀ agrees with −4πζa²
        let k = 1.0;
        let a = 5e-3;
        for zeta in [Complex64::new(5.0, -2.0), Complex64::new(0.0, -4.0)] {
            let series = solve_sphere_exact(a, zeta, k).unwrap();
            let q = extract_monopole_charge(&series, 1.0);
            let predicted = -4.0 * PI * zeta * a * a;
            assert!(q.re * predicted.re >= 0.0 || predicted.re.abs() < 1e-12);
            assert!(q.im * predicted.im >= 0.0 || predicted.im.abs() < 1e-12);
        }
    }

    #[test]
    fn single_layer_identity_values() {
        // ∫ ds/(4π|s−t|) = a at a = 1 and a = 0.5
        for &a in &[1.0, 0.5] {
            let t = Point::new(0.0, 0.0, a);
            let v = single_layer_sphere_identity(a, &t, 24).unwrap();
            assert_relative_eq!(v, a, max_relative = 1e-6);
        }
        // off-sphere input rejected
        assert!(single_layer_sphere_identity(1.0, &Point::new(0.0, 0.0, 1.5), 16).is_err());
        // arbitrary on-sphere point, not the pole
        let t = Point::new(1.0, 1.0, 1.0).normalize() * 0.5;
        let v = single_layer_sphere_identity(0.5, &t, 24).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-6);
    }

    #[test]
    fn single_layer_identity_convergence() {
        let t = Point::new(0.0, 0.0, 1.0);
        let e_coarse = (single_layer_sphere_identity(1.0, &t, 6).unwrap() - 1.0).abs();
        let e_fine = (single_layer_sphere_identity(1.0, &t, 12).unwrap() - 1.0).abs();
        assert!(
            e_fine <= 0.5 * e_coarse || e_fine < 1e-12,
            "coarse {e_coarse:.3e}, fine {e_fine:.3e}"
        );
    }

    #[test]
    fn normal_derivative_identity() {
        // σ ≡ 1, a = 1: double integral → −4π; σ ≡ 2 scales linearly → −8π
        let id1 = normal_derivative_layer_identity(1.0, 1.0, 32);
        assert_relative_eq!(id1.double_integral, -4.0 * PI, max_relative = 1e-4);
        assert_relative_eq!(id1.ratio_to_reference, 1.0, max_relative = 1e-4);
        let id2 = normal_derivative_layer_identity(1.0, 2.0, 32);
        assert_relative_eq!(id2.double_integral, -8.0 * PI, max_relative = 1e-4);
        // moderate order reaches 1e-3
        let id3 = normal_derivative_layer_identity(0.5, 1.0, 16);
        assert!((id3.ratio_to_reference - 1.0).abs() < 1e-3);
    }

    #[test]
    fn resonance_detected() {
        // ζ chosen to zero the l = 0 denominator: ζ = k h₀'(ka)/h₀(ka)
        let k = 1.0;
        let a = 0.3;
        let x = k * a;
        let j = spherical_jn(1, x);
        let y = spherical_yn(1, x);
        let dj = derivatives(&j, x);
        let dy = derivatives(&y, x);
        let h0 = Complex64::new(j[0], y[0]);
        let dh0 = Complex64::new(dj[0], dy[0]);
        let zeta = k * dh0 / h0;
        // the resonant ζ has Im > 0, so it cannot arise from admissible h;
        // the solver still reports it as a resonance error
        let res = solve_sphere_exact(a, zeta, k);
        assert!(matches!(res, Err(OracleError::Resonance { l: 0 })), "{res:?}");
    }
}
