//! Function descriptors for material data.
//!
//! Material laws (sound speed profiles, impedance functions `h(x)`, particle
//! densities `N(x)`, refraction coefficients) are carried around as cheap
//! cloneable descriptors that can be sampled pointwise. The non-closure
//! variants round-trip through configuration files; `Custom` is for library
//! users and cannot be expressed in a config.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("density must be nonnegative; N({x:?}) = {value}")]
    NegativeDensity { x: [f64; 3], value: f64 },
    #[error("impedance must have nonpositive imaginary part; Im h({x:?}) = {value}")]
    PositiveImpedanceImag { x: [f64; 3], value: f64 },
}

/// A real scalar field on `R³`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarField {
    Constant { value: f64 },
    /// `base + gradient · x`.
    Affine { base: f64, gradient: Point },
    /// Piecewise constant: `default` outside every piece, the piece value
    /// inside its box (first matching piece wins).
    PiecewiseBoxes {
        default: f64,
        pieces: Vec<BoxPiece>,
    },
    /// `offset + amplitude · exp(−|x−center|²/(2 width²))`.
    Gaussian {
        center: Point,
        amplitude: f64,
        width: f64,
        offset: f64,
    },
    #[serde(skip)]
    Custom(Arc<dyn Fn(&Point) -> f64 + Send + Sync>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxPiece {
    pub lo: Point,
    pub hi: Point,
    pub value: f64,
}

impl BoxPiece {
    fn contains(&self, x: &Point) -> bool {
        (0..3).all(|i| self.lo[i] <= x[i] && x[i] <= self.hi[i])
    }
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn custom(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Affine { base, gradient } => base + gradient.dot(x),
            ScalarField::PiecewiseBoxes { default, pieces } => pieces
                .iter()
                .find(|p| p.contains(x))
                .map_or(*default, |p| p.value),
            ScalarField::Gaussian {
                center,
                amplitude,
                width,
                offset,
            } => offset + amplitude * (-(x - center).norm_squared() / (2.0 * width * width)).exp(),
            ScalarField::Custom(f) => f(x),
        }
    }

    /// True when the descriptor is a plain constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarField::Constant { value } => Some(*value),
            _ => None,
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant { value } => write!(f, "Constant({value})"),
            ScalarField::Affine { base, gradient } => write!(f, "Affine({base} + {gradient:?}·x)"),
            ScalarField::PiecewiseBoxes { default, pieces } => {
                write!(f, "PiecewiseBoxes(default {default}, {} pieces)", pieces.len())
            }
            ScalarField::Gaussian { .. } => write!(f, "Gaussian"),
            ScalarField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A complex scalar field on `R³`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComplexField {
    Constant { re: f64, im: f64 },
    /// `factor · base(x)` with a real-valued base profile.
    Scaled {
        re: f64,
        im: f64,
        base: ScalarField,
    },
    #[serde(skip)]
    Custom(Arc<dyn Fn(&Point) -> Complex64 + Send + Sync>),
}

impl ComplexField {
    pub fn constant(value: Complex64) -> Self {
        ComplexField::Constant {
            re: value.re,
            im: value.im,
        }
    }

    pub fn custom(f: impl Fn(&Point) -> Complex64 + Send + Sync + 'static) -> Self {
        ComplexField::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: &Point) -> Complex64 {
        match self {
            ComplexField::Constant { re, im } => Complex64::new(*re, *im),
            ComplexField::Scaled { re, im, base } => Complex64::new(*re, *im) * base.eval(x),
            ComplexField::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComplexField::Constant { re, im } => write!(f, "Constant({re}{im:+}i)"),
            ComplexField::Scaled { re, im, base } => write!(f, "Scaled({re}{im:+}i × {base:?})"),
            ComplexField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The particle number density `N(x) ≥ 0` steering how many small bodies
/// land in each subdomain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DensityFunction(pub ScalarField);

impl DensityFunction {
    pub fn constant(value: f64) -> Self {
        DensityFunction(ScalarField::constant(value))
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.0.eval(x)
    }

    /// Checks `N ≥ 0` at the given sample points.
    pub fn validate_nonnegative<'a>(
        &self,
        samples: impl IntoIterator<Item = &'a Point>,
    ) -> Result<(), FieldError> {
        for x in samples {
            let v = self.eval(x);
            if v < 0.0 {
                return Err(FieldError::NegativeDensity {
                    x: [x.x, x.y, x.z],
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Checks `Im h ≤ 0` at the given sample points.
pub fn validate_impedance_sign<'a>(
    h: &ComplexField,
    samples: impl IntoIterator<Item = &'a Point>,
) -> Result<(), FieldError> {
    for x in samples {
        let v = h.eval(x);
        if v.im > 0.0 {
            return Err(FieldError::PositiveImpedanceImag {
                x: [x.x, x.y, x.z],
                value: v.im,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_lookup() {
        let f = ScalarField::PiecewiseBoxes {
            default: 1.0,
            pieces: vec![
                BoxPiece {
                    lo: Point::new(0.0, 0.0, 0.0),
                    hi: Point::new(0.5, 1.0, 1.0),
                    value: 2.0,
                },
                BoxPiece {
                    lo: Point::new(0.5, 0.0, 0.0),
                    hi: Point::new(1.0, 1.0, 1.0),
                    value: 3.0,
                },
            ],
        };
        assert_eq!(f.eval(&Point::new(0.25, 0.5, 0.5)), 2.0);
        assert_eq!(f.eval(&Point::new(0.75, 0.5, 0.5)), 3.0);
        assert_eq!(f.eval(&Point::new(2.0, 0.5, 0.5)), 1.0);
    }

    #[test]
    fn density_sign_check() {
        let n = DensityFunction(ScalarField::Affine {
            base: 0.0,
            gradient: Point::new(1.0, 0.0, 0.0),
        });
        let good = Point::new(1.0, 0.0, 0.0);
        let bad = Point::new(-1.0, 0.0, 0.0);
        assert!(n.validate_nonnegative([&good]).is_ok());
        assert!(n.validate_nonnegative([&good, &bad]).is_err());
    }

    #[test]
    fn impedance_sign_check() {
        let h = ComplexField::constant(Complex64::new(1.0, 0.5));
        let x = Point::zeros();
        assert!(validate_impedance_sign(&h, [&x]).is_err());
        let h = ComplexField::constant(Complex64::new(1.0, -0.5));
        assert!(validate_impedance_sign(&h, [&x]).is_ok());
    }
}
