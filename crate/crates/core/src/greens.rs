//! Green's kernels of the governing operator and their local asymptotics.
//!
//! For a constant background speed the kernel of `∇·(c₀²∇·) + ω²` with the
//! outgoing radiation condition is known in closed form,
//! `G(x,y) = e^{ik|x−y|}/(4π c₀² |x−y|)` with `k = ω/c₀`. Near the
//! singularity the kernel behaves like `1/(4π|x−y|c(x))` up to normalization;
//! both normalizations are selectable and coincide at `c₀ = 1`. Near a smooth
//! interface of the speed the two-sided image-type asymptotics apply.
//!
//! Kernels are immutable and evaluation is pure, so concurrent use is safe.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

use crate::geometry::Point;
use crate::grid::ScalarGridField;

#[derive(Debug, Error)]
pub enum GreensError {
    #[error("kernel is singular at x = y")]
    CoincidentPoints,
    #[error("speeds must be positive: c_plus = {c_plus}, c_minus = {c_minus}")]
    NonPositiveSpeed { c_plus: f64, c_minus: f64 },
    #[error("kernel parameters must be positive: c0 = {c0}, k = {k}")]
    BadParameters { c0: f64, k: f64 },
    #[error(
        "user-table kernel refuses evaluation at r = {r:.3e} below twice its sample spacing {h:.3e}"
    )]
    BelowTableResolution { r: f64, h: f64 },
    #[error("displacement {0:?} is outside the user table")]
    OutsideTable([f64; 3]),
}

/// Normalization of the kernel's singular strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `r·G → 1/(4π c₀²)` — the distributional solution of `L₀G = −δ`.
    Distributional,
    /// `r·G → 1/(4π c(x))` — the form quoted for the variable-speed kernel.
    Paper,
}

/// Evaluation mode of the kernel.
#[derive(Clone)]
pub enum KernelMode {
    /// Closed form for constant background speed.
    ConstantSpeed,
    /// Static leading term of the near-singularity asymptotics only.
    PaperSingularity,
    /// Trilinear interpolation of user-supplied samples of `g(x−y)` on a
    /// displacement grid; refuses evaluation below twice the sample spacing.
    UserTable(Arc<ScalarGridField>),
    /// Arbitrary user-supplied kernel.
    Custom(Arc<dyn Fn(&Point, &Point) -> Complex64 + Send + Sync>),
}

impl std::fmt::Debug for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelMode::ConstantSpeed => write!(f, "ConstantSpeed"),
            KernelMode::PaperSingularity => write!(f, "PaperSingularity"),
            KernelMode::UserTable(t) => write!(f, "UserTable({:?} nodes)", t.grid.counts),
            KernelMode::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Green's kernel `G(x,y)` of the governing operator.
#[derive(Debug, Clone)]
pub struct GreensKernel {
    pub mode: KernelMode,
    pub c0: f64,
    pub k: f64,
    pub normalization: Normalization,
}

impl GreensKernel {
    pub fn new(
        mode: KernelMode,
        c0: f64,
        k: f64,
        normalization: Normalization,
    ) -> Result<Self, GreensError> {
        if !(c0 > 0.0) || !(k >= 0.0) {
            return Err(GreensError::BadParameters { c0, k });
        }
        Ok(GreensKernel {
            mode,
            c0,
            k,
            normalization,
        })
    }

    /// Constant-speed closed form under the distributional normalization.
    pub fn constant_speed(c0: f64, k: f64) -> Result<Self, GreensError> {
        GreensKernel::new(KernelMode::ConstantSpeed, c0, k, Normalization::Distributional)
    }

    fn strength(&self) -> f64 {
        match self.normalization {
            Normalization::Distributional => 1.0 / (4.0 * PI * self.c0 * self.c0),
            Normalization::Paper => 1.0 / (4.0 * PI * self.c0),
        }
    }

    /// `G(x, y)`; `x = y` is a singularity error.
    pub fn eval(&self, x: &Point, y: &Point) -> Result<Complex64, GreensError> {
        let d = x - y;
        let r = d.norm();
        if r == 0.0 {
            return Err(GreensError::CoincidentPoints);
        }
        match &self.mode {
            KernelMode::ConstantSpeed => {
                Ok(Complex64::from_polar(self.strength() / r, self.k * r))
            }
            KernelMode::PaperSingularity => Ok(Complex64::from(self.strength() / r)),
            KernelMode::UserTable(table) => {
                let h = table
                    .grid
                    .spacing
                    .iter()
                    .cloned()
                    .fold(f64::MIN, f64::max);
                if r < 2.0 * h {
                    // below table resolution: fall back to the asymptotic form
                    return Ok(Complex64::from(self.strength() / r));
                }
                trilinear(table, &d).ok_or(GreensError::OutsideTable([d.x, d.y, d.z]))
            }
            KernelMode::Custom(f) => Ok(f(x, y)),
        }
    }

    /// Leading near-singularity term `1/(4π|x−y| c(x))` with the local speed
    /// supplied by the caller.
    pub fn near_singularity(
        &self,
        x: &Point,
        y: &Point,
        c_at_x: f64,
    ) -> Result<Complex64, GreensError> {
        let r = (x - y).norm();
        if r == 0.0 {
            return Err(GreensError::CoincidentPoints);
        }
        Ok(Complex64::from(1.0 / (4.0 * PI * r * c_at_x)))
    }

    /// True when `G(x,y)` depends on `x − y` only; enables translation-
    /// invariant precomputation in grid solvers.
    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self.mode, KernelMode::Custom(_))
    }
}

fn trilinear(table: &ScalarGridField, d: &Point) -> Option<Complex64> {
    let g = &table.grid;
    let mut idx = [0usize; 3];
    let mut frac = [0f64; 3];
    for axis in 0..3 {
        // node coordinates are origin + (i + 0.5) * spacing
        let t = (d[axis] - g.origin[axis]) / g.spacing[axis] - 0.5;
        if t < 0.0 || t > (g.counts[axis] - 1) as f64 {
            return None;
        }
        let i0 = (t.floor() as usize).min(g.counts[axis].saturating_sub(2));
        idx[axis] = i0;
        frac[axis] = t - i0 as f64;
    }
    let mut out = Complex64::default();
    for di in 0..2usize {
        for dj in 0..2usize {
            for dl in 0..2usize {
                let w = (if di == 0 { 1.0 - frac[0] } else { frac[0] })
                    * (if dj == 0 { 1.0 - frac[1] } else { frac[1] })
                    * (if dl == 0 { 1.0 - frac[2] } else { frac[2] });
                out += w * table.at(idx[0] + di, idx[1] + dj, idx[2] + dl);
            }
        }
    }
    Some(out)
}

/// Two-sided local asymptotics of `G` near a smooth interface of the speed.
///
/// The local frame has its origin on the interface with the `x₃`-axis normal
/// to it; `c₊`/`c₋` are the limits of the speed from inside/outside `D`. The
/// reflection coefficient is `b = (c₊ − c₋)/(c₊ + c₋)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InterfaceAsymptotics {
    pub c_plus: f64,
    pub c_minus: f64,
}

/// Which side of the interface the source point `y` is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceSide {
    Inside,
    Outside,
}

impl InterfaceAsymptotics {
    pub fn new(c_plus: f64, c_minus: f64) -> Result<Self, GreensError> {
        if !(c_plus > 0.0) || !(c_minus > 0.0) {
            return Err(GreensError::NonPositiveSpeed { c_plus, c_minus });
        }
        Ok(InterfaceAsymptotics { c_plus, c_minus })
    }

    /// Reflection coefficient `b`; zero for a transparent interface.
    pub fn reflection_coefficient(&self) -> f64 {
        (self.c_plus - self.c_minus) / (self.c_plus + self.c_minus)
    }

    /// Image distance `R = √(ρ² + (|x₃| + |y₃|)²)`.
    pub fn image_distance(x: &Point, y: &Point) -> f64 {
        let rho2 = (x.x - y.x).powi(2) + (x.y - y.y).powi(2);
        (rho2 + (x.z.abs() + y.z.abs()).powi(2)).sqrt()
    }

    /// Leading interface form of `G(x,y)` in the local frame.
    pub fn eval(
        &self,
        x: &Point,
        y: &Point,
        side: InterfaceSide,
    ) -> Result<Complex64, GreensError> {
        let r = (x - y).norm();
        if r == 0.0 {
            return Err(GreensError::CoincidentPoints);
        }
        let b = self.reflection_coefficient();
        let big_r = Self::image_distance(x, y);
        let v = match side {
            InterfaceSide::Inside => (1.0 / r + b / big_r) / (4.0 * PI * self.c_plus),
            InterfaceSide::Outside => (1.0 / r - b / big_r) / (4.0 * PI * self.c_minus),
        };
        Ok(Complex64::from(v))
    }
}
