//! Reproducible probe-point sets for field comparisons.
//!
//! Probe points come from a fixed Halton sequence mapped into the domain's
//! bounding box, filtered to the domain interior and away from particle
//! centers, optionally extended by a ring of exterior points.

use crate::geometry::{Domain, Point};

/// Radical-inverse of `i` in the given base.
fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= b;
    }
    out
}

/// The `i`-th Halton point (bases 2, 3, 5) in the unit cube.
pub fn halton(i: usize) -> [f64; 3] {
    [
        radical_inverse(i + 1, 2),
        radical_inverse(i + 1, 3),
        radical_inverse(i + 1, 5),
    ]
}

/// First `count` Halton points inside `domain` that keep distance
/// `> min_dist` from every point in `centers`. Deterministic.
pub fn interior_probes(
    domain: &Domain,
    centers: &[Point],
    min_dist: f64,
    count: usize,
) -> Vec<Point> {
    let (lo, hi) = domain.bounding_box();
    let mut out = Vec::with_capacity(count);
    let mut i = 0usize;
    // generous scan limit so sparse survivor sets still fill up
    let max_scan = 1000 * count.max(1);
    while out.len() < count && i < max_scan {
        let u = halton(i);
        i += 1;
        let p = Point::new(
            lo.x + u[0] * (hi.x - lo.x),
            lo.y + u[1] * (hi.y - lo.y),
            lo.z + u[2] * (hi.z - lo.z),
        );
        if !domain.contains(&p) {
            continue;
        }
        if centers.iter().any(|c| (p - c).norm() <= min_dist) {
            continue;
        }
        out.push(p);
    }
    out
}

/// `count` points on a circle of radius `factor · circumradius` around the
/// domain center, in the z-plane through the center. All lie outside `D`.
pub fn exterior_ring(domain: &Domain, factor: f64, count: usize) -> Vec<Point> {
    let c = domain.center();
    let r = factor * domain.circumradius();
    (0..count)
        .map(|j| {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
            Point::new(c.x + r * phi.cos(), c.y + r * phi.sin(), c.z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_deterministic_and_in_unit_cube() {
        for i in 0..100 {
            let a = halton(i);
            let b = halton(i);
            assert_eq!(a, b);
            assert!(a.iter().all(|&u| (0.0..1.0).contains(&u)));
        }
    }

    #[test]
    fn interior_probes_respect_exclusion() {
        let d = Domain::unit_cube();
        let centers = vec![Point::new(0.5, 0.5, 0.5)];
        let probes = interior_probes(&d, &centers, 0.25, 40);
        assert_eq!(probes.len(), 40);
        for p in &probes {
            assert!(d.contains(p));
            assert!((p - centers[0]).norm() > 0.25);
        }
    }

    #[test]
    fn exterior_ring_is_outside() {
        let d = Domain::unit_cube();
        for p in exterior_ring(&d, 1.5, 8) {
            assert!(!d.contains(&p));
        }
    }
}
