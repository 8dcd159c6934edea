//! The limiting volume integral equation and the effective medium.
//!
//! As the particle radius shrinks, the effective field tends to the solution
//! of
//!
//! ```text
//! u(x) = u₀(x) − 4π ∫_D G(x,y) h(y) c(y) N(y) u(y) dy,
//! ```
//!
//! discretized here by a Nyström rule on a uniform cell-centered grid: one
//! node per cell, cell-volume weights, and an analytic static self-integral
//! for the singular cell (the smooth remainder `(e^{ikr}−1)/4πr` uses the
//! midpoint value). The dense node system is solved directly or by Born
//! iteration `u ← u₀ − K u`, which converges when the coupling is a
//! contraction. Applying the governing operator by conservative central
//! differences gives an a-posteriori PDE residual for the limiting equation
//! `∇·(c²∇u) + ω²u − 4π h c N u = 0`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

use crate::fields::{ComplexField, DensityFunction};
use crate::geometry::{Domain, Point};
use crate::greens::GreensKernel;
use crate::grid::{GridSpec, ScalarGridField};
use crate::medium::{IncidentField, Medium};

#[derive(Debug, Error)]
pub enum ContinuumError {
    #[error("grid: {0}")]
    Grid(#[from] crate::grid::GridError),
    #[error("medium: {0}")]
    Medium(#[from] crate::medium::MediumError),
    #[error("field data invalid: {0}")]
    Field(#[from] crate::fields::FieldError),
    #[error("kernel evaluation failed: {0}")]
    Kernel(#[from] crate::greens::GreensError),
    #[error("dense solve failed: matrix is singular")]
    SingularSystem,
    #[error(
        "born iteration diverged after {iterations} sweeps (residual {residual:.3e}); \
         the coupling is not a contraction — use the direct method"
    )]
    BornDiverged { iterations: usize, residual: f64 },
    #[error("born iteration did not reach tolerance in {0} sweeps")]
    BornStalled(usize),
    #[error("grid too coarse for the finite-difference stencil (no interior nodes)")]
    GridTooCoarse,
    #[error("wave number must be positive, got {0}")]
    BadWaveNumber(f64),
}

/// The discretized limit problem on a uniform grid over the domain's
/// bounding box. Nodes whose cells fall outside `D` carry zero coupling, so
/// the representation remains valid there (`u = u₀ − Ku` everywhere).
pub struct ContinuumProblem {
    pub medium: Medium,
    pub kernel: GreensKernel,
    pub h: ComplexField,
    pub density: DensityFunction,
    pub u0: IncidentField,
    pub grid: GridSpec,
    /// `4π h(x_j) c(x_j) N(x_j)` per node; zero outside `D`.
    coupling: Vec<Complex64>,
    /// Fraction of `vol(D)` missed by the covered cells (diagnostic).
    boundary_volume_error: f64,
    /// Whether the grid resolves the wavelength (≥ `min_nodes_per_wavelength`).
    resolved: bool,
}

/// Minimum nodes-per-wavelength before an under-resolution warning.
pub const MIN_NODES_PER_WAVELENGTH: f64 = 8.0;

impl ContinuumProblem {
    pub fn new(
        medium: Medium,
        kernel: GreensKernel,
        h: ComplexField,
        density: DensityFunction,
        u0: IncidentField,
        nodes_per_axis: [usize; 3],
    ) -> Result<Self, ContinuumError> {
        let grid = GridSpec::covering(medium.domain(), nodes_per_axis)?;
        let mut coupling = vec![Complex64::default(); grid.node_count()];
        let mut covered = 0.0;
        for (idx, x) in grid.iter_nodes() {
            if !medium.domain().contains(&x) {
                continue;
            }
            let hv = h.eval(&x);
            if hv.im > 0.0 {
                return Err(crate::fields::FieldError::PositiveImpedanceImag {
                    x: [x.x, x.y, x.z],
                    value: hv.im,
                }
                .into());
            }
            let nv = density.eval(&x);
            if nv < 0.0 {
                return Err(crate::fields::FieldError::NegativeDensity {
                    x: [x.x, x.y, x.z],
                    value: nv,
                }
                .into());
            }
            let c = medium.sample_speed(&x)?;
            coupling[idx] = 4.0 * PI * hv * c * nv;
            covered += grid.cell_volume();
        }
        let boundary_volume_error =
            (covered - medium.domain().volume()).abs() / medium.domain().volume();
        let wavelength = 2.0 * PI / medium.k();
        let max_spacing = grid.spacing.iter().cloned().fold(0.0, f64::max);
        let resolved = wavelength / max_spacing >= MIN_NODES_PER_WAVELENGTH;
        if !resolved {
            log::warn!(
                "grid under-resolves the wavelength: {:.2} nodes per wavelength (< {})",
                wavelength / max_spacing,
                MIN_NODES_PER_WAVELENGTH
            );
        }
        Ok(ContinuumProblem {
            medium,
            kernel,
            h,
            density,
            u0,
            grid,
            coupling,
            boundary_volume_error,
            resolved,
        })
    }

    pub fn boundary_volume_error(&self) -> f64 {
        self.boundary_volume_error
    }

    /// Static self-integral `∫_cell 1/(4π|y−x_c|) dy` for one grid cell,
    /// assembled from the closed-form corner integral of `1/r` over a box.
    fn static_self_integral(&self) -> f64 {
        let [sx, sy, sz] = self.grid.spacing;
        8.0 * corner_inverse_r_integral(sx / 2.0, sy / 2.0, sz / 2.0) / (4.0 * PI)
    }

    /// Quadrature weight of the singular (self) cell:
    /// static part analytic, smooth remainder `(e^{ikr}−1)/(4πr) → ik/4π`
    /// by the midpoint rule, all divided by the kernel normalization.
    fn self_weight(&self) -> Complex64 {
        let k = self.kernel.k;
        let c0 = self.kernel.c0;
        let dv = self.grid.cell_volume();
        (Complex64::from(self.static_self_integral())
            + Complex64::new(0.0, k * dv / (4.0 * PI)))
            / (c0 * c0)
    }

    /// Kernel-times-volume table over node offsets for translation-invariant
    /// kernels; entry at offset zero is the self weight.
    fn kernel_table(&self) -> Result<Vec<Complex64>, ContinuumError> {
        let n = self.grid.counts;
        let dims = [2 * n[0] - 1, 2 * n[1] - 1, 2 * n[2] - 1];
        let dv = self.grid.cell_volume();
        let mut table = vec![Complex64::default(); dims[0] * dims[1] * dims[2]];
        let origin = Point::zeros();
        for (flat, slot) in table.iter_mut().enumerate() {
            let di = (flat % dims[0]) as isize - (n[0] as isize - 1);
            let dj = ((flat / dims[0]) % dims[1]) as isize - (n[1] as isize - 1);
            let dl = (flat / (dims[0] * dims[1])) as isize - (n[2] as isize - 1);
            if di == 0 && dj == 0 && dl == 0 {
                *slot = self.self_weight();
                continue;
            }
            let y = Point::new(
                di as f64 * self.grid.spacing[0],
                dj as f64 * self.grid.spacing[1],
                dl as f64 * self.grid.spacing[2],
            );
            *slot = self.kernel.eval(&origin, &y)? * dv;
        }
        Ok(table)
    }

    fn table_index(&self, i: (usize, usize, usize), j: (usize, usize, usize)) -> usize {
        let n = self.grid.counts;
        let dims = [2 * n[0] - 1, 2 * n[1] - 1, 2 * n[2] - 1];
        let di = (i.0 as isize - j.0 as isize + n[0] as isize - 1) as usize;
        let dj = (i.1 as isize - j.1 as isize + n[1] as isize - 1) as usize;
        let dl = (i.2 as isize - j.2 as isize + n[2] as isize - 1) as usize;
        di + dims[0] * (dj + dims[1] * dl)
    }

    /// `K u` with the precomputed table.
    fn apply_coupling(&self, table: &[Complex64], u: &[Complex64]) -> Vec<Complex64> {
        let n_total = self.grid.node_count();
        let weighted: Vec<Complex64> = u
            .iter()
            .zip(&self.coupling)
            .map(|(u, psi)| u * psi)
            .collect();
        (0..n_total)
            .into_par_iter()
            .map(|i| {
                let ii = self.grid.unflat(i);
                let mut acc = Complex64::default();
                for (j, wj) in weighted.iter().enumerate() {
                    if wj.re == 0.0 && wj.im == 0.0 {
                        continue;
                    }
                    let jj = self.grid.unflat(j);
                    acc += table[self.table_index(ii, jj)] * wj;
                }
                acc
            })
            .collect()
    }

    /// Incident field sampled at the nodes.
    fn incident_values(&self) -> Vec<Complex64> {
        self.grid
            .iter_nodes()
            .map(|(_, x)| self.u0.eval(&self.medium, &x))
            .collect()
    }
}

/// Closed-form `∫₀^a∫₀^b∫₀^c dV/√(x²+y²+z²)` (potential of a box corner).
fn corner_inverse_r_integral(a: f64, b: f64, c: f64) -> f64 {
    let r = (a * a + b * b + c * c).sqrt();
    let asinh = |t: f64| t.asinh();
    b * c * asinh(a / (b * b + c * c).sqrt())
        + a * c * asinh(b / (a * a + c * c).sqrt())
        + a * b * asinh(c / (a * a + b * b).sqrt())
        - a * a / 2.0 * (b * c / (a * r)).atan()
        - b * b / 2.0 * (a * c / (b * r)).atan()
        - c * c / 2.0 * (a * b / (c * r)).atan()
}

/// Solution method for the discretized limit equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitSolveMethod {
    /// Dense LU on the node system.
    Direct,
    /// Fixed-point iteration `u ← u₀ − K u`; requires a contraction.
    BornIteration,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuumDiagnostics {
    pub method: String,
    pub iterations: Option<usize>,
    /// Fixed-point residual `‖u − (u₀ − Ku)‖₂ / ‖u₀‖₂`.
    pub fixed_point_residual: f64,
    pub boundary_volume_error: f64,
    pub wavelength_resolved: bool,
    pub quadrature: String,
}

/// Grid samples of the limiting field plus solve diagnostics.
pub struct ContinuumSolution {
    pub u: ScalarGridField,
    pub diagnostics: ContinuumDiagnostics,
}

/// Born-iteration controls.
const BORN_MAX_SWEEPS: usize = 200;
const BORN_RELATIVE_UPDATE: f64 = 1e-10;

/// Solves the discretized limit equation.
pub fn solve_limit_equation(
    problem: &ContinuumProblem,
    method: LimitSolveMethod,
) -> Result<ContinuumSolution, ContinuumError> {
    let table = problem.kernel_table()?;
    let u0 = problem.incident_values();
    let n = u0.len();

    let (u, method_name, iterations) = match method {
        LimitSolveMethod::Direct => {
            use nalgebra::{DMatrix, DVector};
            // dense I + K, column-major
            let mut data = vec![Complex64::default(); n * n];
            data.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
                let jj = problem.grid.unflat(j);
                let psi = problem.coupling[j];
                for (i, slot) in col.iter_mut().enumerate() {
                    let ii = problem.grid.unflat(i);
                    let mut v = table[problem.table_index(ii, jj)] * psi;
                    if i == j {
                        v += Complex64::from(1.0);
                    }
                    *slot = v;
                }
            });
            let matrix = DMatrix::from_vec(n, n, data);
            let lu = matrix.lu();
            let rhs = DVector::from_column_slice(&u0);
            let x = lu.solve(&rhs).ok_or(ContinuumError::SingularSystem)?;
            (x.iter().cloned().collect::<Vec<_>>(), "direct-lu", None)
        }
        LimitSolveMethod::BornIteration => {
            let mut u = u0.clone();
            let mut last_update = f64::INFINITY;
            let mut growth_streak = 0usize;
            let mut sweeps = 0usize;
            loop {
                let ku = problem.apply_coupling(&table, &u);
                let mut update = 0.0f64;
                let mut scale = 0.0f64;
                let mut next = Vec::with_capacity(n);
                for i in 0..n {
                    let v = u0[i] - ku[i];
                    update += (v - u[i]).norm_sqr();
                    scale += v.norm_sqr();
                    next.push(v);
                }
                u = next;
                sweeps += 1;
                let rel = (update / scale.max(1e-300)).sqrt();
                if rel <= BORN_RELATIVE_UPDATE {
                    break;
                }
                if rel > last_update {
                    growth_streak += 1;
                    if growth_streak >= 3 && rel > 1.0 {
                        return Err(ContinuumError::BornDiverged {
                            iterations: sweeps,
                            residual: rel,
                        });
                    }
                } else {
                    growth_streak = 0;
                }
                last_update = rel;
                if sweeps >= BORN_MAX_SWEEPS {
                    return Err(ContinuumError::BornStalled(sweeps));
                }
            }
            (u, "born", Some(sweeps))
        }
    };

    // fixed-point residual
    let ku = problem.apply_coupling(&table, &u);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..n {
        num += (u[i] - (u0[i] - ku[i])).norm_sqr();
        den += u0[i].norm_sqr();
    }
    let residual = (num / den.max(1e-300)).sqrt();

    Ok(ContinuumSolution {
        u: ScalarGridField::new(problem.grid.clone(), u)?,
        diagnostics: ContinuumDiagnostics {
            method: method_name.into(),
            iterations,
            fixed_point_residual: residual,
            boundary_volume_error: problem.boundary_volume_error,
            wavelength_resolved: problem.resolved,
            quadrature: "midpoint + analytic static self-cell".into(),
        },
    })
}

/// Evaluates the Nyström representation `u(x) = u₀(x) − Σ_j w_j(x) ψ_j u_j`
/// at an arbitrary point. A node closer than half a cell uses the self-cell
/// weight in place of the singular kernel value.
pub fn eval_solution_at(
    problem: &ContinuumProblem,
    solution: &ContinuumSolution,
    x: &Point,
) -> Result<Complex64, ContinuumError> {
    let dv = problem.grid.cell_volume();
    let half_cell = 0.5 * problem.grid.spacing.iter().cloned().fold(f64::MAX, f64::min);
    let self_w = problem.self_weight();
    let mut acc = problem.u0.eval(&problem.medium, x);
    for (idx, y) in problem.grid.iter_nodes() {
        let psi = problem.coupling[idx];
        if psi.re == 0.0 && psi.im == 0.0 {
            continue;
        }
        let w = if (x - y).norm() < half_cell {
            self_w
        } else {
            problem.kernel.eval(x, &y)? * dv
        };
        acc -= w * psi * solution.u.values[idx];
    }
    Ok(acc)
}

/// The effective refraction coefficient `n²(x) = n₀²(x) − 4π k⁻² h(x) N(x)`.
pub fn effective_refraction(
    n0sq: &ComplexField,
    h: &ComplexField,
    density: &DensityFunction,
    k: f64,
    x: &Point,
) -> Result<Complex64, ContinuumError> {
    if !(k > 0.0) {
        return Err(ContinuumError::BadWaveNumber(k));
    }
    Ok(n0sq.eval(x) - 4.0 * PI / (k * k) * h.eval(x) * density.eval(x))
}

/// Norms of the discrete residual of `∇·(c²∇u) + ω²u − 4π h c N u` over
/// interior nodes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PdeResidual {
    pub max_abs: f64,
    pub rms: f64,
    pub interior_nodes: usize,
}

/// Applies the governing operator `L₀ = ∇·(c²∇·) + ω²` by conservative
/// central differences. Boundary-ring nodes (no full stencil) are zeroed.
pub fn apply_l0(field: &ScalarGridField, medium: &Medium) -> Result<ScalarGridField, ContinuumError> {
    let g = &field.grid;
    if g.counts.iter().any(|&n| n < 3) {
        return Err(ContinuumError::GridTooCoarse);
    }
    let omega2 = medium.omega() * medium.omega();
    let mut out = vec![Complex64::default(); g.node_count()];
    for l in 1..g.counts[2] - 1 {
        for j in 1..g.counts[1] - 1 {
            for i in 1..g.counts[0] - 1 {
                let idx = g.flat(i, j, l);
                let x = g.node(i, j, l);
                let u = field.values[idx];
                let mut acc = omega2 * u;
                for axis in 0..3 {
                    let mut e = Point::zeros();
                    e[axis] = g.spacing[axis];
                    let (ip, im) = match axis {
                        0 => (g.flat(i + 1, j, l), g.flat(i - 1, j, l)),
                        1 => (g.flat(i, j + 1, l), g.flat(i, j - 1, l)),
                        _ => (g.flat(i, j, l + 1), g.flat(i, j, l - 1)),
                    };
                    let c_plus = medium.sample_speed(&(x + e / 2.0))?;
                    let c_minus = medium.sample_speed(&(x - e / 2.0))?;
                    let s2 = g.spacing[axis] * g.spacing[axis];
                    acc += (c_plus * c_plus * (field.values[ip] - u)
                        - c_minus * c_minus * (u - field.values[im]))
                        / s2;
                }
                out[idx] = acc;
            }
        }
    }
    Ok(ScalarGridField::new(g.clone(), out)?)
}

/// Expanded (non-conservative) form `c²Δu + ∇(c²)·∇u + ω²u` by central
/// differences; agrees with [`apply_l0`] to stencil accuracy for smooth `c`.
pub(crate) fn apply_l0_expanded(
    field: &ScalarGridField,
    medium: &Medium,
) -> Result<ScalarGridField, ContinuumError> {
    let g = &field.grid;
    if g.counts.iter().any(|&n| n < 3) {
        return Err(ContinuumError::GridTooCoarse);
    }
    let omega2 = medium.omega() * medium.omega();
    let mut out = vec![Complex64::default(); g.node_count()];
    for l in 1..g.counts[2] - 1 {
        for j in 1..g.counts[1] - 1 {
            for i in 1..g.counts[0] - 1 {
                let idx = g.flat(i, j, l);
                let x = g.node(i, j, l);
                let u = field.values[idx];
                let c = medium.sample_speed(&x)?;
                let mut acc = omega2 * u;
                for axis in 0..3 {
                    let mut e = Point::zeros();
                    e[axis] = g.spacing[axis];
                    let (ip, im) = match axis {
                        0 => (g.flat(i + 1, j, l), g.flat(i - 1, j, l)),
                        1 => (g.flat(i, j + 1, l), g.flat(i, j - 1, l)),
                        _ => (g.flat(i, j, l + 1), g.flat(i, j, l - 1)),
                    };
                    let s = g.spacing[axis];
                    let cp = medium.sample_speed(&(x + e))?;
                    let cm = medium.sample_speed(&(x - e))?;
                    let lap = (field.values[ip] - 2.0 * u + field.values[im]) / (s * s);
                    let grad_c2 = (cp * cp - cm * cm) / (2.0 * s);
                    let grad_u = (field.values[ip] - field.values[im]) / (2.0 * s);
                    acc += c * c * lap + grad_c2 * grad_u;
                }
                out[idx] = acc;
            }
        }
    }
    Ok(ScalarGridField::new(g.clone(), out)?)
}

/// Residual of the limiting equation for a computed solution, over interior
/// nodes whose full stencil lies in `D`'s grid cover.
pub fn pde_residual(
    solution: &ContinuumSolution,
    problem: &ContinuumProblem,
) -> Result<PdeResidual, ContinuumError> {
    let lu = apply_l0(&solution.u, &problem.medium)?;
    let g = &solution.u.grid;
    let mut max_abs = 0.0f64;
    let mut sum_sqr = 0.0f64;
    let mut count = 0usize;
    for l in 1..g.counts[2] - 1 {
        for j in 1..g.counts[1] - 1 {
            for i in 1..g.counts[0] - 1 {
                let idx = g.flat(i, j, l);
                // stencil support must stay inside the coupled region
                let x = g.node(i, j, l);
                if !problem.medium.domain().contains(&x) {
                    continue;
                }
                let r = lu.values[idx] - problem.coupling[idx] * solution.u.values[idx];
                let a = r.norm();
                max_abs = max_abs.max(a);
                sum_sqr += a * a;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(ContinuumError::GridTooCoarse);
    }
    Ok(PdeResidual {
        max_abs,
        rms: (sum_sqr / count as f64).sqrt(),
        interior_nodes: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::fields::ScalarField;

    fn unit_problem(
        h: Complex64,
        density: f64,
        n: usize,
        omega: f64,
    ) -> ContinuumProblem {
        let d = Domain::unit_cube();
        let medium = Medium::homogeneous(d, 1.0, omega).unwrap();
        let kernel = GreensKernel::constant_speed(1.0, medium.k()).unwrap();
        let u0 = IncidentField::plane_wave(Point::new(0.0, 0.0, 1.0)).unwrap();
        ContinuumProblem::new(
            medium,
            kernel,
            ComplexField::constant(h),
            DensityFunction::constant(density),
            u0,
            [n, n, n],
        )
        .unwrap()
    }

    #[test]
    fn corner_integral_matches_adaptive_quadrature() {
        // oracle: adaptive integration of 1/r over [0,a]×[0,b]×[0,c]
        use crate::quad::{adaptive_box, BoxRule};
        let (a, b, c) = (0.3, 0.2, 0.45);
        let f = |p: &Point| Complex64::from(1.0 / p.norm());
        let near_origin = |lo: &Point, _hi: &Point| lo.norm() < 1e-12;
        let est = adaptive_box(
            &Point::new(0.0, 0.0, 0.0),
            &Point::new(a, b, c),
            &f,
            &BoxRule {
                tol: 1e-7,
                max_depth: 7,
                force_refine: Some(&near_origin),
                forced_depth: 20,
            },
        );
        let exact = corner_inverse_r_integral(a, b, c);
        assert_relative_eq!(est.value.re, exact, max_relative = 1e-4);
    }

    #[test]
    fn self_cell_constant_matches_known_cube_value() {
        // ∫ over a unit cube centered at the singularity: 8 corner boxes
        let v = 8.0 * corner_inverse_r_integral(0.5, 0.5, 0.5);
        assert_relative_eq!(v, 2.3800774, max_relative = 1e-6);
    }

    #[test]
    fn zero_coupling_returns_incident_exactly() {
        for (h, n_dens) in [(Complex64::default(), 1.0), (Complex64::new(1.0, -1.0), 0.0)] {
            let problem = unit_problem(h, n_dens, 6, 1.0);
            for method in [LimitSolveMethod::Direct, LimitSolveMethod::BornIteration] {
                let sol = solve_limit_equation(&problem, method).unwrap();
                for (idx, x) in problem.grid.iter_nodes() {
                    let expect = problem.u0.eval(&problem.medium, &x);
                    assert_eq!(sol.u.values[idx], expect);
                }
            }
        }
    }

    #[test]
    fn born_and_direct_agree_in_contraction_regime() {
        // ‖K‖ ≈ 0.1: Born is an independent oracle for the dense solve
        let problem = unit_problem(Complex64::new(0.0, -0.05), 1.0, 8, 1.0);
        let direct = solve_limit_equation(&problem, LimitSolveMethod::Direct).unwrap();
        let born = solve_limit_equation(&problem, LimitSolveMethod::BornIteration).unwrap();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (a, b) in direct.u.values.iter().zip(&born.u.values) {
            num += (a - b).norm_sqr();
            den += a.norm_sqr();
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-8, "relative difference {rel}");
        assert!(direct.diagnostics.fixed_point_residual <= 1e-10);
        assert!(born.diagnostics.fixed_point_residual <= 1e-9);
    }

    #[test]
    fn born_diverges_for_strong_coupling() {
        // large |h| forces ‖K‖ > 1
        let problem = unit_problem(Complex64::new(0.0, -80.0), 1.0, 6, 1.0);
        let res = solve_limit_equation(&problem, LimitSolveMethod::BornIteration);
        assert!(
            matches!(
                res,
                Err(ContinuumError::BornDiverged { .. }) | Err(ContinuumError::BornStalled(_))
            ),
            "expected divergence"
        );
    }

    #[test]
    fn effective_refraction_values() {
        let x = Point::new(0.3, 0.3, 0.3);
        let n0 = ComplexField::constant(Complex64::from(1.0));
        let n_dens = DensityFunction::constant(1.0);
        // h = 0 → n² = n₀²
        let v = effective_refraction(
            &n0,
            &ComplexField::constant(Complex64::default()),
            &n_dens,
            2.0,
            &x,
        )
        .unwrap();
        assert_eq!(v, Complex64::from(1.0));
        // n₀²=1, k=2, h=1/(2π), N=1 → 1 − 4π/(4)·(1/(2π)) = 0.5
        let v = effective_refraction(
            &n0,
            &ComplexField::constant(Complex64::from(1.0 / (2.0 * PI))),
            &n_dens,
            2.0,
            &x,
        )
        .unwrap();
        assert_relative_eq!(v.re, 0.5, max_relative = 1e-14);
        assert_eq!(v.im, 0.0);
        // n₀²=1, k=1, h=−i/(4π) → 1 + i
        let v = effective_refraction(
            &n0,
            &ComplexField::constant(Complex64::new(0.0, -1.0 / (4.0 * PI))),
            &n_dens,
            1.0,
            &x,
        )
        .unwrap();
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-14);
        assert_relative_eq!(v.im, 1.0, max_relative = 1e-14);
        // k = 0 rejected
        assert!(effective_refraction(&n0, &n0, &n_dens, 0.0, &x).is_err());
    }

    #[test]
    fn sign_preservation_on_nodes() {
        // Im n² ≥ 0 whenever Im n₀² ≥ 0, Im h ≤ 0, N ≥ 0
        let n0 = ComplexField::constant(Complex64::new(1.0, 0.3));
        let h = ComplexField::constant(Complex64::new(0.7, -0.4));
        let n_dens = DensityFunction(ScalarField::Gaussian {
            center: Point::new(0.5, 0.5, 0.5),
            amplitude: 2.0,
            width: 0.3,
            offset: 0.1,
        });
        let grid = GridSpec::covering(&Domain::unit_cube(), [7, 7, 7]).unwrap();
        for (_, x) in grid.iter_nodes() {
            let v = effective_refraction(&n0, &h, &n_dens, 1.3, &x).unwrap();
            assert!(v.im >= 0.0);
        }
    }

    #[test]
    fn plane_wave_l0_residual_is_truncation_only() {
        // c ≡ 1, h ≡ 0: L₀ of the plane wave is 0; the stencil sees O(Δx²)
        let medium = Medium::homogeneous(Domain::unit_cube(), 1.0, 1.0).unwrap();
        let k = medium.k();
        let sample = |n: usize| {
            let grid = GridSpec::covering(&Domain::unit_cube(), [n, n, n]).unwrap();
            let field = ScalarGridField::sample(grid, |p| Complex64::from_polar(1.0, k * p.z));
            let lu = apply_l0(&field, &medium).unwrap();
            let mut maxv = 0.0f64;
            let g = &lu.grid;
            for l in 1..n - 1 {
                for j in 1..n - 1 {
                    for i in 1..n - 1 {
                        maxv = maxv.max(lu.values[g.flat(i, j, l)].norm());
                    }
                }
            }
            maxv
        };
        let r1 = sample(10);
        let r2 = sample(20);
        let order = (r1 / r2).log2();
        assert!(order > 1.7 && order < 2.3, "order {order}");
    }

    #[test]
    fn constant_field_zero_frequency_is_exact_kernel() {
        // u ≡ const with ω → the stencil sees exactly ω²·u; at the smallest
        // admissible ω the difference part vanishes identically
        let medium = Medium::homogeneous(Domain::unit_cube(), 1.0, 1e-12).unwrap();
        let grid = GridSpec::covering(&Domain::unit_cube(), [5, 5, 5]).unwrap();
        let field = ScalarGridField::sample(grid, |_| Complex64::from(3.25));
        let lu = apply_l0(&field, &medium).unwrap();
        let g = &lu.grid;
        for l in 1..4 {
            for j in 1..4 {
                for i in 1..4 {
                    let v = lu.values[g.flat(i, j, l)];
                    // difference terms cancel exactly; only ω²u remains
                    assert!((v - Complex64::from(3.25e-24)).norm() < 1e-30);
                }
            }
        }
    }

    #[test]
    fn manufactured_solution_piecewise_speed() {
        // c piecewise-constant away from the test region; manufactured
        // u = sin(αx)cos(βy)e^{γz} has known L₀u = (c²(−α²−β²+γ²) + ω²)u
        let speed = ScalarField::PiecewiseBoxes {
            default: 2.0,
            pieces: vec![crate::fields::BoxPiece {
                lo: Point::new(-10.0, -10.0, -10.0),
                hi: Point::new(-5.0, -5.0, -5.0),
                value: 3.0,
            }],
        };
        let medium = Medium::new(Domain::unit_cube(), 1.0, speed, 2.0).unwrap();
        let (alpha, beta, gamma) = (1.3, 0.7, 0.4);
        let exact = move |p: &Point| {
            Complex64::from((alpha * p.x).sin() * (beta * p.y).cos() * (gamma * p.z).exp())
        };
        let factor = move |c: f64| c * c * (-alpha * alpha - beta * beta + gamma * gamma) + 4.0;
        let err_at = |n: usize| {
            let grid = GridSpec::covering(&Domain::unit_cube(), [n, n, n]).unwrap();
            let field = ScalarGridField::sample(grid.clone(), exact);
            let lu = apply_l0(&field, &medium).unwrap();
            let mut maxe = 0.0f64;
            for l in 1..n - 1 {
                for j in 1..n - 1 {
                    for i in 1..n - 1 {
                        let idx = grid.flat(i, j, l);
                        let x = grid.node(i, j, l);
                        let expect = factor(2.0) * exact(&x);
                        maxe = maxe.max((lu.values[idx] - expect).norm());
                    }
                }
            }
            maxe
        };
        let e1 = err_at(8);
        let e2 = err_at(16);
        let order = (e1 / e2).log2();
        assert!(order > 1.6 && order < 2.4, "order {order}");
    }

    #[test]
    fn conservative_and_expanded_forms_agree() {
        let speed = ScalarField::Gaussian {
            center: Point::new(0.5, 0.5, 0.5),
            amplitude: 0.4,
            width: 0.4,
            offset: 1.2,
        };
        let medium = Medium::new(Domain::unit_cube(), 1.0, speed, 1.5).unwrap();
        let n = 16;
        let grid = GridSpec::covering(&Domain::unit_cube(), [n, n, n]).unwrap();
        let field = ScalarGridField::sample(grid.clone(), |p| {
            Complex64::new((2.0 * p.x).sin() + p.y, (1.5 * p.z).cos())
        });
        let cons = apply_l0(&field, &medium).unwrap();
        let expd = apply_l0_expanded(&field, &medium).unwrap();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for l in 1..n - 1 {
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let idx = grid.flat(i, j, l);
                    worst = worst.max((cons.values[idx] - expd.values[idx]).norm());
                    scale = scale.max(cons.values[idx].norm());
                }
            }
        }
        // both are second-order discretizations of the same operator
        let spacing = grid.spacing[0];
        assert!(
            worst <= 5.0 * spacing * spacing * scale,
            "disagreement {worst} vs scale {scale}"
        );
    }

    #[test]
    fn solution_pde_residual_drops_under_refinement() {
        let solve_res = |n: usize| {
            let problem = unit_problem(Complex64::new(0.0, -0.05), 1.0, n, 1.0);
            let sol = solve_limit_equation(&problem, LimitSolveMethod::BornIteration).unwrap();
            pde_residual(&sol, &problem).unwrap()
        };
        let r1 = solve_res(8);
        let r2 = solve_res(16);
        let order = (r1.rms / r2.rms).log2();
        assert!(order >= 1.0, "measured order {order} (rms {} → {})", r1.rms, r2.rms);
    }

    #[test]
    fn corrupted_solution_has_much_larger_residual() {
        let problem = unit_problem(Complex64::new(0.0, -0.05), 1.0, 12, 1.0);
        let sol = solve_limit_equation(&problem, LimitSolveMethod::BornIteration).unwrap();
        let clean = pde_residual(&sol, &problem).unwrap();
        // 10% multiplicative noise on a mid-grid node neighborhood
        let mut corrupted_values = sol.u.values.clone();
        for (i, v) in corrupted_values.iter_mut().enumerate() {
            if i % 7 == 3 {
                *v *= 1.1;
            }
        }
        let corrupted = ContinuumSolution {
            u: ScalarGridField::new(sol.u.grid.clone(), corrupted_values).unwrap(),
            diagnostics: sol.diagnostics.clone(),
        };
        let noisy = pde_residual(&corrupted, &problem).unwrap();
        assert!(
            noisy.rms >= 10.0 * clean.rms,
            "noisy {} vs clean {}",
            noisy.rms,
            clean.rms
        );
    }

    #[test]
    fn nystrom_interpolation_matches_nodes() {
        let problem = unit_problem(Complex64::new(0.0, -0.05), 1.0, 8, 1.0);
        let sol = solve_limit_equation(&problem, LimitSolveMethod::Direct).unwrap();
        // evaluating at a node reproduces the node value (the self weight
        // is the same one used in the solve)
        let (idx, x) = problem.grid.iter_nodes().nth(100).unwrap();
        let v = eval_solution_at(&problem, &sol, &x).unwrap();
        assert!((v - sol.u.values[idx]).norm() <= 1e-10);
        // and off-node evaluation stays close to trilinear expectations
        let mid = x + Point::new(0.04, 0.03, 0.02);
        let v_mid = eval_solution_at(&problem, &sol, &mid).unwrap();
        assert!((v_mid - sol.u.values[idx]).norm() <= 0.05);
    }
}
