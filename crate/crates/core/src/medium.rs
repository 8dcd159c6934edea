//! Background medium and incident fields.
//!
//! The medium carries the domain `D`, the background sound speed `c₀`
//! outside `D`, a speed profile `c(x)` inside `D`, and the angular frequency
//! `ω`. The wave number is always derived as `k = ω/c₀` and never stored
//! independently. All types are immutable after construction and evaluation
//! is pure.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::fields::ScalarField;
use crate::geometry::{Domain, Point};

#[derive(Debug, Error)]
pub enum MediumError {
    #[error("background speed c0 must be positive, got {0}")]
    NonPositiveC0(f64),
    #[error("angular frequency omega must be positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("speed profile must be strictly positive; c({x:?}) = {value}")]
    NonPositiveSpeed { x: [f64; 3], value: f64 },
    #[error("plane-wave direction must be nonzero")]
    ZeroDirection,
    #[error("point-source location must lie outside the domain")]
    SourceInsideDomain,
    #[error("coordinate is not finite")]
    NonFiniteCoordinate,
}

/// The background medium: domain `D`, exterior speed `c₀`, interior speed
/// profile `c(x)`, and frequency `ω`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    domain: Domain,
    c0: f64,
    speed: ScalarField,
    omega: f64,
}

impl Medium {
    pub fn new(
        domain: Domain,
        c0: f64,
        speed: ScalarField,
        omega: f64,
    ) -> Result<Self, MediumError> {
        if !(c0 > 0.0) {
            return Err(MediumError::NonPositiveC0(c0));
        }
        if !(omega > 0.0) {
            return Err(MediumError::NonPositiveOmega(omega));
        }
        let m = Medium {
            domain,
            c0,
            speed,
            omega,
        };
        // spot-check positivity of the interior profile on a coarse lattice
        let (lo, hi) = m.domain.bounding_box();
        for i in 0..5 {
            for j in 0..5 {
                for l in 0..5 {
                    let x = Point::new(
                        lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / 5.0,
                        lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / 5.0,
                        lo.z + (hi.z - lo.z) * (l as f64 + 0.5) / 5.0,
                    );
                    if m.domain.contains(&x) {
                        let c = m.speed.eval(&x);
                        if !(c > 0.0) {
                            return Err(MediumError::NonPositiveSpeed {
                                x: [x.x, x.y, x.z],
                                value: c,
                            });
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Medium with `c ≡ c₀` everywhere.
    pub fn homogeneous(domain: Domain, c0: f64, omega: f64) -> Result<Self, MediumError> {
        Medium::new(domain, c0, ScalarField::constant(c0), omega)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Wave number `k = ω/c₀`.
    pub fn k(&self) -> f64 {
        self.omega / self.c0
    }

    /// Sound speed `c(x)`: the interior profile inside `D`, `c₀` outside.
    pub fn sample_speed(&self, x: &Point) -> Result<f64, MediumError> {
        if !x.iter().all(|c| c.is_finite()) {
            return Err(MediumError::NonFiniteCoordinate);
        }
        if self.domain.contains(x) {
            let c = self.speed.eval(x);
            if !(c > 0.0) {
                return Err(MediumError::NonPositiveSpeed {
                    x: [x.x, x.y, x.z],
                    value: c,
                });
            }
            Ok(c)
        } else {
            Ok(self.c0)
        }
    }

    /// True when the speed profile is the constant `c₀` (so the plane wave
    /// `e^{ikα·x}` is an exact solution of `L₀u = 0`).
    pub fn is_uniform(&self) -> bool {
        self.speed.as_constant() == Some(self.c0)
    }
}

/// The incident field `u₀`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IncidentField {
    /// `e^{ikα·x}` with `|α| = 1`.
    PlaneWave { direction: Point },
    /// `e^{ik|x−y₀|}/(4π|x−y₀|)` for a source at `y₀` outside `D`.
    PointSource { location: Point },
    #[serde(skip)]
    Custom(Arc<dyn Fn(&Point) -> Complex64 + Send + Sync>),
}

impl std::fmt::Debug for IncidentField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IncidentField::PlaneWave { direction } => write!(f, "PlaneWave({direction:?})"),
            IncidentField::PointSource { location } => write!(f, "PointSource({location:?})"),
            IncidentField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl IncidentField {
    /// Plane wave; the direction is normalized to unit length.
    pub fn plane_wave(direction: Point) -> Result<Self, MediumError> {
        let n = direction.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(MediumError::ZeroDirection);
        }
        Ok(IncidentField::PlaneWave {
            direction: direction / n,
        })
    }

    /// Point source at `y₀`; must lie outside the medium's domain.
    pub fn point_source(location: Point, medium: &Medium) -> Result<Self, MediumError> {
        if medium.domain().contains(&location) {
            return Err(MediumError::SourceInsideDomain);
        }
        Ok(IncidentField::PointSource { location })
    }

    pub fn custom(f: impl Fn(&Point) -> Complex64 + Send + Sync + 'static) -> Self {
        IncidentField::Custom(Arc::new(f))
    }

    /// Complex amplitude of `u₀` at `x`.
    pub fn eval(&self, medium: &Medium, x: &Point) -> Complex64 {
        let k = medium.k();
        match self {
            IncidentField::PlaneWave { direction } => {
                Complex64::from_polar(1.0, k * direction.dot(x))
            }
            IncidentField::PointSource { location } => {
                let r = (x - location).norm();
                Complex64::from_polar(1.0, k * r) / (4.0 * std::f64::consts::PI * r)
            }
            IncidentField::Custom(f) => f(x),
        }
    }

    /// Gradient of `u₀` at `x` where a closed form exists.
    pub fn eval_grad(&self, medium: &Medium, x: &Point) -> Option<[Complex64; 3]> {
        let k = medium.k();
        match self {
            IncidentField::PlaneWave { direction } => {
                let v = Complex64::new(0.0, k) * self.eval(medium, x);
                Some([v * direction.x, v * direction.y, v * direction.z])
            }
            IncidentField::PointSource { location } => {
                let d = x - location;
                let r = d.norm();
                let u = self.eval(medium, x);
                // d/dr [e^{ikr}/(4πr)] = (ik − 1/r) u
                let radial = (Complex64::new(0.0, k) - Complex64::from(1.0 / r)) * u / r;
                Some([radial * d.x, radial * d.y, radial * d.z])
            }
            IncidentField::Custom(_) => None,
        }
    }
}
