//! Domains and basic point geometry.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point (or vector) in 3-space.
pub type Point = Vector3<f64>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("box corners must be strictly ordered per axis: lo[{axis}] = {lo} >= hi[{axis}] = {hi}")]
    UnorderedCorners { axis: usize, lo: f64, hi: f64 },
    #[error("ball radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("coordinate is not finite")]
    NonFiniteCoordinate,
}

/// A bounded domain `D ⊂ R³`: an axis-aligned box or a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Domain {
    Box { lo: Point, hi: Point },
    Ball { center: Point, radius: f64 },
}

impl Domain {
    /// Axis-aligned box with strictly ordered corners.
    pub fn new_box(lo: Point, hi: Point) -> Result<Self, GeometryError> {
        for axis in 0..3 {
            if !(lo[axis].is_finite() && hi[axis].is_finite()) {
                return Err(GeometryError::NonFiniteCoordinate);
            }
            if lo[axis] >= hi[axis] {
                return Err(GeometryError::UnorderedCorners {
                    axis,
                    lo: lo[axis],
                    hi: hi[axis],
                });
            }
        }
        Ok(Domain::Box { lo, hi })
    }

    /// Ball with positive radius.
    pub fn new_ball(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !center.iter().all(|c| c.is_finite()) || !radius.is_finite() {
            return Err(GeometryError::NonFiniteCoordinate);
        }
        if radius <= 0.0 {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Domain::Ball { center, radius })
    }

    /// The unit cube `[0,1]³`.
    pub fn unit_cube() -> Self {
        Domain::Box {
            lo: Point::zeros(),
            hi: Point::new(1.0, 1.0, 1.0),
        }
    }

    /// The unit ball centered at the origin.
    pub fn unit_ball() -> Self {
        Domain::Ball {
            center: Point::zeros(),
            radius: 1.0,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Box { lo, hi } => (0..3).map(|i| hi[i] - lo[i]).product(),
            Domain::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        match self {
            Domain::Box { lo, hi } => (0..3).all(|i| lo[i] <= x[i] && x[i] <= hi[i]),
            Domain::Ball { center, radius } => (x - center).norm() <= *radius,
        }
    }

    /// Distance from `x` to the boundary surface `S = ∂D` (positive inside and outside).
    pub fn dist_to_boundary(&self, x: &Point) -> f64 {
        match self {
            Domain::Box { lo, hi } => {
                if self.contains(x) {
                    (0..3)
                        .map(|i| (x[i] - lo[i]).min(hi[i] - x[i]))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    // distance to the box
                    let mut d2 = 0.0;
                    for i in 0..3 {
                        let d = (lo[i] - x[i]).max(0.0).max(x[i] - hi[i]);
                        d2 += d * d;
                    }
                    d2.sqrt()
                }
            }
            Domain::Ball { center, radius } => ((x - center).norm() - radius).abs(),
        }
    }

    /// Smallest axis-aligned box containing the domain, as `(lo, hi)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Domain::Box { lo, hi } => (*lo, *hi),
            Domain::Ball { center, radius } => {
                let r = Point::new(*radius, *radius, *radius);
                (center - r, center + r)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Box { lo, hi } => (hi - lo).norm(),
            Domain::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn center(&self) -> Point {
        match self {
            Domain::Box { lo, hi } => 0.5 * (lo + hi),
            Domain::Ball { center, .. } => *center,
        }
    }

    /// Radius of the smallest ball around `center()` containing the domain.
    pub fn circumradius(&self) -> f64 {
        match self {
            Domain::Box { lo, hi } => 0.5 * (hi - lo).norm(),
            Domain::Ball { radius, .. } => *radius,
        }
    }

    /// Moves `x` to the nearest point at distance at least `margin` inside the
    /// boundary; returns `None` if the domain is too thin for the margin.
    pub fn pull_inside(&self, x: &Point, margin: f64) -> Option<Point> {
        match self {
            Domain::Box { lo, hi } => {
                let mut y = *x;
                for i in 0..3 {
                    if hi[i] - lo[i] < 2.0 * margin {
                        return None;
                    }
                    y[i] = y[i].clamp(lo[i] + margin, hi[i] - margin);
                }
                Some(y)
            }
            Domain::Ball { center, radius } => {
                let rmax = radius - margin;
                if rmax <= 0.0 {
                    return None;
                }
                let d = x - center;
                let n = d.norm();
                if n <= rmax {
                    Some(*x)
                } else if n == 0.0 {
                    Some(*center)
                } else {
                    Some(center + d * (rmax / n))
                }
            }
        }
    }
}
