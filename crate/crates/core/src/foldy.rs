//! The linear algebraic system for the effective field at particle centers.
//!
//! Each particle sees the incident field plus the fields radiated by all
//! other particles, reduced to monopole charges:
//!
//! ```text
//! u_m = u₀(x_m) − 4π Σ_{m'≠m} G(x_m, x_{m'}) h(x_{m'}) c(x_{m'}) u_{m'} a^{2−κ}
//! ```
//!
//! The system matrix is the identity plus a small coupling in the intended
//! regime (its diagonal is exactly 1, so diagonal preconditioning coincides
//! with no preconditioning). A dense LU path covers moderate sizes; a
//! matrix-free restarted GMRES that re-evaluates kernel products covers
//! large ones. Assembly and operator application are data-parallel over
//! rows; solutions are immutable.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::cloud::ParticleCloud;
use crate::geometry::Point;
use crate::greens::GreensKernel;
use crate::medium::{IncidentField, Medium};

/// Default size up to which the dense factorization is used.
pub const DENSE_LIMIT: usize = 8000;

#[derive(Debug, Error)]
pub enum FoldyError {
    #[error("coincident centers {0} and {1}")]
    CoincidentCenters(usize, usize),
    #[error("kernel evaluation failed between centers {i} and {j}: {source}")]
    Kernel {
        i: usize,
        j: usize,
        source: crate::greens::GreensError,
    },
    #[error("medium speed sampling failed: {0}")]
    Medium(#[from] crate::medium::MediumError),
    #[error("system of dimension {0} exceeds the dense limit {1}; use the iterative method")]
    TooLargeForDirect(usize, usize),
    #[error("matrix is singular or ill-conditioned: pivot {pivot:.3e} at index {index} (pivot ratio {ratio:.3e})")]
    SingularSystem {
        index: usize,
        pivot: f64,
        ratio: f64,
    },
    #[error("iteration did not converge in {iterations} steps; final residual {residual:.3e} (history of {} entries attached)", history.len())]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("accepted solve exceeded the residual tolerance: {residual:.3e} > {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("degenerate impedance: 1 + ζ_m a = 0 at particle {0} (refined charge mode)")]
    DegenerateImpedance(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-point failure of a field evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityError {
    pub particle: usize,
    pub dist: f64,
    pub a: f64,
}

impl std::fmt::Display for ProximityError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "evaluation point is {:.3e} from particle {} (needs > a = {:.3e})",
            self.dist, self.particle, self.a
        )
    }
}

/// The assembled system: identity plus kernel coupling.
pub struct FoldySystem {
    centers: Vec<Point>,
    /// `4π a^{2−κ} h(x_j) c(x_j)` per particle.
    coefficients: Vec<Complex64>,
    rhs: Vec<Complex64>,
    kernel: GreensKernel,
    /// Dense matrix, built when the dimension allows it.
    dense: Option<DMatrix<Complex64>>,
}

impl FoldySystem {
    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &[Complex64] {
        &self.rhs
    }

    pub fn dense_matrix(&self) -> Option<&DMatrix<Complex64>> {
        self.dense.as_ref()
    }

    /// Matrix-free application `y = A x`, re-evaluating kernel products.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.dimension();
        assert_eq!(x.len(), n);
        (0..n)
            .into_par_iter()
            .map(|m| {
                let mut acc = x[m];
                for j in 0..n {
                    if j == m {
                        continue;
                    }
                    // centers are distinct (checked at assembly)
                    let g = self.kernel.eval(&self.centers[m], &self.centers[j]).unwrap();
                    acc += g * self.coefficients[j] * x[j];
                }
                acc
            })
            .collect()
    }

    /// Relative residual `‖Ax − b‖₂ / ‖b‖₂`.
    pub fn relative_residual(&self, x: &[Complex64]) -> f64 {
        let ax = self.apply(x);
        let mut num = 0.0;
        let mut den = 0.0;
        for (axi, bi) in ax.iter().zip(&self.rhs) {
            num += (axi - bi).norm_sqr();
            den += bi.norm_sqr();
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// Builds the system for a cloud in a medium with a kernel and incident
/// field. Cost is `O(M²)` kernel evaluations when the dense matrix is built.
pub fn assemble(
    cloud: &ParticleCloud,
    medium: &Medium,
    kernel: &GreensKernel,
    u0: &IncidentField,
) -> Result<FoldySystem, FoldyError> {
    assemble_with_limit(cloud, medium, kernel, u0, DENSE_LIMIT)
}

/// As [`assemble`], with an explicit dense-size threshold.
pub fn assemble_with_limit(
    cloud: &ParticleCloud,
    medium: &Medium,
    kernel: &GreensKernel,
    u0: &IncidentField,
    dense_limit: usize,
) -> Result<FoldySystem, FoldyError> {
    let n = cloud.len();
    let centers = cloud.centers().to_vec();
    let weight = 4.0 * PI * cloud.coupling_weight();
    let mut coefficients = Vec::with_capacity(n);
    for (c, h) in centers.iter().zip(cloud.h_values()) {
        let speed = medium.sample_speed(c)?;
        coefficients.push(weight * h * speed);
    }
    let rhs: Vec<Complex64> = centers.iter().map(|c| u0.eval(medium, c)).collect();

    let dense = if n <= dense_limit && n > 0 {
        // column-major fill, parallel over columns; column j carries the
        // common factor coefficients[j]
        let mut data = vec![Complex64::default(); n * n];
        data.par_chunks_mut(n)
            .enumerate()
            .try_for_each(|(j, col)| -> Result<(), FoldyError> {
                for (i, slot) in col.iter_mut().enumerate() {
                    *slot = if i == j {
                        Complex64::from(1.0)
                    } else {
                        let g = kernel.eval(&centers[i], &centers[j]).map_err(|source| {
                            match source {
                                crate::greens::GreensError::CoincidentPoints => {
                                    FoldyError::CoincidentCenters(i.min(j), i.max(j))
                                }
                                other => FoldyError::Kernel { i, j, source: other },
                            }
                        })?;
                        g * coefficients[j]
                    };
                }
                Ok(())
            })?;
        Some(DMatrix::from_vec(n, n, data))
    } else {
        // still validate distinct centers for the matrix-free path
        for i in 0..n {
            for j in (i + 1)..n {
                if centers[i] == centers[j] {
                    return Err(FoldyError::CoincidentCenters(i, j));
                }
            }
        }
        None
    };

    Ok(FoldySystem {
        centers,
        coefficients,
        rhs,
        kernel: kernel.clone(),
        dense,
    })
}

/// Solver selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMethod {
    /// Dense LU when available, otherwise GMRES.
    Auto,
    Direct,
    Iterative,
}

/// Tolerances and limits for [`solve_with`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Residual acceptance for the direct path.
    pub direct_tol: f64,
    /// Residual target and acceptance for the iterative path.
    pub iterative_tol: f64,
    pub max_iterations: usize,
    pub restart: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            direct_tol: 1e-10,
            iterative_tol: 1e-8,
            max_iterations: 2000,
            restart: 50,
        }
    }
}

/// How a solution was obtained, plus its health indicators.
#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub method: String,
    pub relative_residual: f64,
    pub iterations: Option<usize>,
    /// Smallest and largest LU pivot magnitudes (direct path).
    pub pivot_min: Option<f64>,
    pub pivot_max: Option<f64>,
    pub residual_history: Vec<f64>,
}

/// Effective field values and charges at the particle centers.
#[derive(Debug, Clone)]
pub struct FoldySolution {
    /// `u_m = u_e(x_m)`.
    pub u: Vec<Complex64>,
    /// Charges in asymptotic mode, `Q_m = −4π h_m c_m a^{2−κ} u_m`.
    pub q: Vec<Complex64>,
    pub diagnostics: SolveDiagnostics,
}

pub fn solve(system: &FoldySystem, method: SolveMethod) -> Result<FoldySolution, FoldyError> {
    solve_with(system, method, &SolveOptions::default())
}

pub fn solve_with(
    system: &FoldySystem,
    method: SolveMethod,
    opts: &SolveOptions,
) -> Result<FoldySolution, FoldyError> {
    let n = system.dimension();
    if n == 0 {
        return Ok(FoldySolution {
            u: Vec::new(),
            q: Vec::new(),
            diagnostics: SolveDiagnostics {
                method: "empty".into(),
                relative_residual: 0.0,
                iterations: None,
                pivot_min: None,
                pivot_max: None,
                residual_history: Vec::new(),
            },
        });
    }
    let use_direct = match method {
        SolveMethod::Direct => true,
        SolveMethod::Iterative => false,
        SolveMethod::Auto => system.dense.is_some(),
    };
    let (u, mut diagnostics) = if use_direct {
        let dense = system
            .dense
            .as_ref()
            .ok_or(FoldyError::TooLargeForDirect(n, DENSE_LIMIT))?;
        direct_solve(dense, &system.rhs)?
    } else {
        gmres_solve(system, opts)?
    };

    let residual = system.relative_residual(&u);
    diagnostics.relative_residual = residual;
    let tolerance = if use_direct {
        opts.direct_tol
    } else {
        opts.iterative_tol
    };
    if residual > tolerance {
        return Err(FoldyError::ResidualTooLarge {
            residual,
            tolerance,
        });
    }

    let q = u
        .iter()
        .zip(&system.coefficients)
        .map(|(u, c)| -c * u)
        .collect();
    Ok(FoldySolution { u, q, diagnostics })
}

fn direct_solve(
    matrix: &DMatrix<Complex64>,
    rhs: &[Complex64],
) -> Result<(Vec<Complex64>, SolveDiagnostics), FoldyError> {
    let lu = matrix.clone().lu();
    // pivot health from the factorization's U diagonal
    let upper = lu.u();
    let n = rhs.len();
    let mut pivot_min = f64::INFINITY;
    let mut pivot_max = 0.0f64;
    let mut worst = 0usize;
    for i in 0..n {
        let p = upper[(i, i)].norm();
        if p < pivot_min {
            pivot_min = p;
            worst = i;
        }
        pivot_max = pivot_max.max(p);
    }
    if pivot_min <= 1e-300 || pivot_min / pivot_max <= 1e-15 {
        return Err(FoldyError::SingularSystem {
            index: worst,
            pivot: pivot_min,
            ratio: pivot_min / pivot_max,
        });
    }
    let b = DVector::from_column_slice(rhs);
    let x = lu.solve(&b).ok_or(FoldyError::SingularSystem {
        index: worst,
        pivot: pivot_min,
        ratio: pivot_min / pivot_max,
    })?;
    Ok((
        x.iter().cloned().collect(),
        SolveDiagnostics {
            method: "direct-lu".into(),
            relative_residual: f64::NAN,
            iterations: None,
            pivot_min: Some(pivot_min),
            pivot_max: Some(pivot_max),
            residual_history: Vec::new(),
        },
    ))
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn vec_dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Restarted GMRES on the matrix-free operator.
fn gmres_solve(
    system: &FoldySystem,
    opts: &SolveOptions,
) -> Result<(Vec<Complex64>, SolveDiagnostics), FoldyError> {
    let n = system.dimension();
    let b = &system.rhs;
    let b_norm = vec_norm(b);
    let mut x = vec![Complex64::default(); n];
    let mut history = Vec::new();
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveDiagnostics {
                method: "gmres".into(),
                relative_residual: 0.0,
                iterations: Some(0),
                pivot_min: None,
                pivot_max: None,
                residual_history: history,
            },
        ));
    }
    let abs_tol = opts.iterative_tol * b_norm * 0.1;
    let restart = opts.restart.min(n).max(1);
    let mut total_iters = 0usize;

    loop {
        let ax = system.apply(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = vec_norm(&r);
        history.push(beta / b_norm);
        if beta <= abs_tol {
            let diag = SolveDiagnostics {
                method: "gmres".into(),
                relative_residual: beta / b_norm,
                iterations: Some(total_iters),
                pivot_min: None,
                pivot_max: None,
                residual_history: history,
            };
            return Ok((x, diag));
        }
        if total_iters >= opts.max_iterations {
            return Err(FoldyError::NonConvergence {
                iterations: total_iters,
                residual: beta / b_norm,
                history,
            });
        }

        // Arnoldi with Givens rotations
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|c| c / beta).collect());
        let mut hess = vec![vec![Complex64::default(); restart]; restart + 1];
        let mut cs = Vec::with_capacity(restart);
        let mut sn: Vec<Complex64> = Vec::with_capacity(restart);
        let mut g = vec![Complex64::default(); restart + 1];
        g[0] = Complex64::from(beta);
        let mut j = 0usize;
        while j < restart && total_iters < opts.max_iterations {
            let mut w = system.apply(&basis[j]);
            for i in 0..=j {
                let hij = vec_dot(&basis[i], &w);
                hess[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * vk;
                }
            }
            let h_next = vec_norm(&w);
            hess[j + 1][j] = Complex64::from(h_next);
            if h_next > 1e-300 {
                basis.push(w.iter().map(|c| c / h_next).collect());
            } else {
                basis.push(vec![Complex64::default(); n]);
            }
            for i in 0..j {
                let tmp = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] =
                    -sn[i].conj() * hess[i][j] + Complex64::from(cs[i]) * hess[i + 1][j];
                hess[i][j] = tmp;
            }
            let (c, s) = givens(hess[j][j], hess[j + 1][j]);
            cs.push(c);
            sn.push(s);
            let tmp = Complex64::from(c) * hess[j][j] + s * hess[j + 1][j];
            hess[j + 1][j] = Complex64::default();
            hess[j][j] = tmp;
            let tmp = Complex64::from(c) * g[j] + s * g[j + 1];
            g[j + 1] = -s.conj() * g[j] + Complex64::from(c) * g[j + 1];
            g[j] = tmp;

            total_iters += 1;
            j += 1;
            history.push(g[j].norm() / b_norm);
            if g[j].norm() <= abs_tol {
                break;
            }
        }

        // back substitution and update
        let mut y = vec![Complex64::default(); j];
        for i in (0..j).rev() {
            let mut sum = g[i];
            for l in (i + 1)..j {
                sum -= hess[i][l] * y[l];
            }
            if hess[i][i].norm() > 1e-300 {
                y[i] = sum / hess[i][i];
            }
        }
        for i in 0..j {
            for (xk, vk) in x.iter_mut().zip(&basis[i]) {
                *xk += y[i] * vk;
            }
        }
    }
}

fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    if b.norm() == 0.0 {
        return (1.0, Complex64::default());
    }
    if a.norm() == 0.0 {
        return (0.0, b / b.norm());
    }
    let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let c = a.norm() / r;
    let s = (a / a.norm()) * b.conj() / r;
    (c, s)
}

/// Charge evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeMode {
    /// `Q_m = −4π h_m c_m a^{2−κ} u_m` — the leading asymptotics.
    Asymptotic,
    /// `Q_m = −4π ζ_m u_m a² c_m / (1 + ζ_m a)` — keeps the `ζa` correction.
    Refined,
}

/// Charges from the effective-field values.
pub fn charges(
    solution: &FoldySolution,
    cloud: &ParticleCloud,
    medium: &Medium,
    mode: ChargeMode,
) -> Result<Vec<Complex64>, FoldyError> {
    let a = cloud.a();
    let mut out = Vec::with_capacity(cloud.len());
    for (m, (&u, center)) in solution.u.iter().zip(cloud.centers()).enumerate() {
        let c = medium.sample_speed(center)?;
        let h = cloud.h_values()[m];
        let q = match mode {
            ChargeMode::Asymptotic => -4.0 * PI * h * c * cloud.coupling_weight() * u,
            ChargeMode::Refined => {
                let zeta = cloud.zeta(m);
                let denom = Complex64::from(1.0) + zeta * a;
                if denom.norm() <= 1e-14 * (1.0 + (zeta * a).norm()) {
                    return Err(FoldyError::DegenerateImpedance(m));
                }
                -4.0 * PI * zeta * u * a * a * c / denom
            }
        };
        out.push(q);
    }
    Ok(out)
}

/// Scattered-plus-incident field `u(x) = u₀(x) + Σ_m G(x, x_m) Q_m`,
/// evaluated per point; points within distance `a` of any center are
/// rejected individually while the rest still evaluate.
pub fn evaluate_field(
    solution: &FoldySolution,
    cloud: &ParticleCloud,
    medium: &Medium,
    kernel: &GreensKernel,
    u0: &IncidentField,
    points: &[Point],
) -> Vec<Result<Complex64, ProximityError>> {
    let a = cloud.a();
    points
        .par_iter()
        .map(|x| {
            let mut acc = u0.eval(medium, x);
            for (m, center) in cloud.centers().iter().enumerate() {
                let dist = (x - center).norm();
                if dist <= a {
                    return Err(ProximityError {
                        particle: m,
                        dist,
                        a,
                    });
                }
                acc += kernel.eval(x, center).unwrap() * solution.q[m];
            }
            Ok(acc)
        })
        .collect()
}

/// Proxy upper bound for the term discarded when densities are replaced by
/// point charges: `max_m (a/|x−x_m|) · |G(x, x_m) Q_m|`. Requires
/// `|x − x_m| > 2a` for every particle. Diagnostics only.
pub fn neglected_term_bound(
    cloud: &ParticleCloud,
    solution: &FoldySolution,
    kernel: &GreensKernel,
    point: &Point,
) -> Result<f64, FoldyError> {
    let a = cloud.a();
    let mut bound = 0.0f64;
    for (m, center) in cloud.centers().iter().enumerate() {
        let r = (point - center).norm();
        if r <= 2.0 * a {
            return Err(FoldyError::Kernel {
                i: m,
                j: m,
                source: crate::greens::GreensError::CoincidentPoints,
            });
        }
        let g = kernel
            .eval(point, center)
            .map_err(|source| FoldyError::Kernel { i: m, j: m, source })?;
        bound = bound.max(a / r * (g * solution.q[m]).norm());
    }
    Ok(bound)
}

/// Writes `m,re_u,im_u,re_q,im_q` rows.
pub fn write_solution_csv(solution: &FoldySolution, w: impl Write) -> Result<(), FoldyError> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "m,re_u,im_u,re_q,im_q")?;
    for (m, (u, q)) in solution.u.iter().zip(&solution.q).enumerate() {
        writeln!(w, "{},{},{},{},{}", m, u.re, u.im, q.re, q.im)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_solution_csv(
    solution: &FoldySolution,
    path: impl AsRef<Path>,
) -> Result<(), FoldyError> {
    write_solution_csv(solution, std::fs::File::create(path)?)
}
