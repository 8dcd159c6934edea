//! Particle cloud generation and auditing.
//!
//! Clouds follow the prescribed count law: the number of balls in a
//! subdomain `Δ` is `a^{κ−2} ∫_Δ N(x) dx` up to lattice rounding. The
//! default placement is a deterministic stratified lattice whose cells have
//! volume close to `a^{2−κ}/N(x)`, so neighbor spacing scales like
//! `a^{(2−κ)/3}`; per-cell counts are apportioned by largest remainder so the
//! total count matches the law exactly. Optional seeded jitter (bounded by a
//! quarter cell) and a Poisson-disk mode are available for placement
//! sensitivity studies.
//!
//! Generation is single-task and deterministic; the produced cloud is
//! immutable and freely shared.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{ComplexField, DensityFunction, ScalarField};
use crate::geometry::{Domain, Point};
use crate::medium::Medium;
use crate::quad::{adaptive_box, ball_radial, BoxRule, SphereRule};
use crate::util::scrambled_order;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("kappa must lie in [0, 1], got {0} (interior (0,1) is the intended regime)")]
    BadKappa(f64),
    #[error("impedance sign violated at particle {index}: Im h = {im}")]
    ImpedanceSign { index: usize, im: f64 },
    #[error(
        "regime violation: requested density needs spacing {spacing:.4e} < 2a = {required:.4e}; \
         a is too large for the density"
    )]
    Overlap { spacing: f64, required: f64 },
    #[error("domain is too thin to keep centers at distance a = {0} from the boundary")]
    MarginInfeasible(f64),
    #[error("poisson-disk sampling placed only {placed} of {target} particles")]
    PoissonDiskExhausted { placed: usize, target: usize },
    #[error("density integral is not finite")]
    BadDensityIntegral,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse: {0}")]
    CsvParse(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Placement scheme for generated clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PlacementMode {
    /// Deterministic stratified lattice (the default).
    Lattice,
    /// Lattice plus seeded uniform jitter; `fraction` of a cell per axis,
    /// capped at 0.25 (a quarter cell, i.e. d/4).
    JitteredLattice { fraction: f64 },
    /// Seeded dart throwing with a density-scaled exclusion radius.
    PoissonDisk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub placement: PlacementMode,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            placement: PlacementMode::Lattice,
            seed: 0,
        }
    }
}

/// An immutable configuration of small balls `B(x_m, a)` inside a domain.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    domain: Domain,
    centers: Vec<Point>,
    h_values: Vec<Complex64>,
    a: f64,
    kappa: f64,
}

impl ParticleCloud {
    /// Assembles a cloud from raw parts without placement; disjointness is
    /// not enforced here and is reported by [`audit_regime`].
    pub fn from_parts(
        domain: Domain,
        centers: Vec<Point>,
        h_values: Vec<Complex64>,
        a: f64,
        kappa: f64,
    ) -> Result<Self, CloudError> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CloudError::BadRadius(a));
        }
        check_kappa(kappa)?;
        assert_eq!(centers.len(), h_values.len());
        for (index, h) in h_values.iter().enumerate() {
            if h.im > 0.0 {
                return Err(CloudError::ImpedanceSign { index, im: h.im });
            }
        }
        Ok(ParticleCloud {
            domain,
            centers,
            h_values,
            a,
            kappa,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn h_values(&self) -> &[Complex64] {
        &self.h_values
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Particle count `M`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Boundary impedance `ζ_m = h(x_m)/a^κ`.
    pub fn zeta(&self, m: usize) -> Complex64 {
        self.h_values[m] / self.a.powf(self.kappa)
    }

    /// The coupling weight `a^{2−κ}`.
    pub fn coupling_weight(&self) -> f64 {
        self.a.powf(2.0 - self.kappa)
    }

    /// Minimum pairwise center distance (`∞` for fewer than two particles).
    pub fn min_center_distance(&self) -> f64 {
        min_pairwise_distance(&self.centers)
    }

    /// Writes the `m,x,y,z,re_h,im_h` CSV table. Floats use the shortest
    /// round-trip representation, so a reload is bit-exact.
    pub fn write_csv(&self, w: impl Write) -> Result<(), CloudError> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "m,x,y,z,re_h,im_h")?;
        for (m, (c, h)) in self.centers.iter().zip(&self.h_values).enumerate() {
            writeln!(w, "{},{},{},{},{},{}", m, c.x, c.y, c.z, h.re, h.im)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), CloudError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a CSV table written by [`ParticleCloud::write_csv`].
    pub fn read_csv(
        r: impl std::io::Read,
        domain: Domain,
        a: f64,
        kappa: f64,
    ) -> Result<Self, CloudError> {
        let r = std::io::BufReader::new(r);
        let mut centers = Vec::new();
        let mut h_values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "m,x,y,z,re_h,im_h" {
                    return Err(CloudError::CsvParse(format!("bad header: {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(CloudError::CsvParse(format!(
                    "line {}: expected 6 fields, got {}",
                    lineno + 1,
                    parts.len()
                )));
            }
            let f = |s: &str| -> Result<f64, CloudError> {
                s.trim()
                    .parse()
                    .map_err(|e| CloudError::CsvParse(format!("line {}: {e}", lineno + 1)))
            };
            centers.push(Point::new(f(parts[1])?, f(parts[2])?, f(parts[3])?));
            h_values.push(Complex64::new(f(parts[4])?, f(parts[5])?));
        }
        ParticleCloud::from_parts(domain, centers, h_values, a, kappa)
    }

    pub fn load_csv(
        path: impl AsRef<Path>,
        domain: Domain,
        a: f64,
        kappa: f64,
    ) -> Result<Self, CloudError> {
        Self::read_csv(std::fs::File::open(path)?, domain, a, kappa)
    }

    /// Writes the JSON provenance sidecar next to a cloud CSV.
    pub fn write_sidecar(
        &self,
        w: impl Write,
        density: &DensityFunction,
        opts: &GenerateOptions,
    ) -> Result<(), CloudError> {
        let record = serde_json::json!({
            "a": self.a,
            "kappa": self.kappa,
            "m": self.len(),
            "domain": serde_json::to_value(&self.domain)?,
            "density": serde_json::to_value(&density.0).unwrap_or_else(|_| "custom".into()),
            "placement": serde_json::to_value(opts.placement)?,
            "seed": opts.seed,
        });
        serde_json::to_writer_pretty(w, &record)?;
        Ok(())
    }
}

fn check_kappa(kappa: f64) -> Result<(), CloudError> {
    if !(0.0..=1.0).contains(&kappa) || !kappa.is_finite() {
        return Err(CloudError::BadKappa(kappa));
    }
    if kappa == 0.0 || kappa == 1.0 {
        log::warn!("kappa = {kappa} is an endpoint value; the intended regime is kappa in (0,1)");
    }
    Ok(())
}

/// `∫_D N dx`, exact for constant densities and piecewise-constant boxes on
/// box domains, adaptive quadrature otherwise.
pub fn integrate_density(domain: &Domain, density: &DensityFunction) -> f64 {
    match (&density.0, domain) {
        (ScalarField::Constant { value }, _) => value * domain.volume(),
        (ScalarField::PiecewiseBoxes { pieces, .. }, Domain::Box { lo, hi }) => {
            // exact: split at every piece face, each sub-box is constant
            let field = &density.0;
            let mut cuts: [Vec<f64>; 3] = [vec![lo.x, hi.x], vec![lo.y, hi.y], vec![lo.z, hi.z]];
            for p in pieces {
                for (axis, cut) in cuts.iter_mut().enumerate() {
                    for v in [p.lo[axis], p.hi[axis]] {
                        if v > lo[axis] && v < hi[axis] {
                            cut.push(v);
                        }
                    }
                }
            }
            for c in &mut cuts {
                c.sort_by(|a, b| a.partial_cmp(b).unwrap());
                c.dedup();
            }
            let mut total = 0.0;
            for ix in cuts[0].windows(2) {
                for iy in cuts[1].windows(2) {
                    for iz in cuts[2].windows(2) {
                        let mid = Point::new(
                            0.5 * (ix[0] + ix[1]),
                            0.5 * (iy[0] + iy[1]),
                            0.5 * (iz[0] + iz[1]),
                        );
                        let vol = (ix[1] - ix[0]) * (iy[1] - iy[0]) * (iz[1] - iz[0]);
                        total += field.eval(&mid) * vol;
                    }
                }
            }
            total
        }
        (_, Domain::Box { lo, hi }) => {
            let f = |p: &Point| Complex64::from(density.eval(p));
            adaptive_box(
                lo,
                hi,
                &f,
                &BoxRule {
                    tol: 1e-9,
                    max_depth: 12,
                    ..Default::default()
                },
            )
            .value
            .re
        }
        (_, Domain::Ball { center, radius }) => {
            let rule = SphereRule::product(16, 32);
            let f = |p: &Point| Complex64::from(density.eval(p));
            ball_radial(center, *radius, &f, &rule, 1e-9, &[]).re
        }
    }
}

/// The count law: `round(a^{κ−2} ∫_D N dx)`.
pub fn predicted_count(
    domain: &Domain,
    density: &DensityFunction,
    a: f64,
    kappa: f64,
) -> Result<usize, CloudError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(CloudError::BadRadius(a));
    }
    check_kappa(kappa)?;
    let integral = integrate_density(domain, density);
    if !integral.is_finite() || integral < 0.0 {
        return Err(CloudError::BadDensityIntegral);
    }
    Ok((a.powf(kappa - 2.0) * integral).round() as usize)
}

/// Generates a cloud with default options (deterministic lattice).
pub fn generate_cloud(
    domain: &Domain,
    density: &DensityFunction,
    h: &ComplexField,
    a: f64,
    kappa: f64,
) -> Result<ParticleCloud, CloudError> {
    generate_cloud_with(domain, density, h, a, kappa, &GenerateOptions::default())
}

pub fn generate_cloud_with(
    domain: &Domain,
    density: &DensityFunction,
    h: &ComplexField,
    a: f64,
    kappa: f64,
    opts: &GenerateOptions,
) -> Result<ParticleCloud, CloudError> {
    let target = predicted_count(domain, density, a, kappa)?;
    if target == 0 {
        return ParticleCloud::from_parts(domain.clone(), Vec::new(), Vec::new(), a, kappa);
    }
    let integral = integrate_density(domain, density);
    let mean_density = integral / domain.volume();

    let centers = match opts.placement {
        PlacementMode::Lattice => {
            stratified_lattice(domain, density, a, kappa, mean_density, target, None)?
        }
        PlacementMode::JitteredLattice { fraction } => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            stratified_lattice(
                domain,
                density,
                a,
                kappa,
                mean_density,
                target,
                Some((&mut rng, fraction.clamp(0.0, 0.25))),
            )?
        }
        PlacementMode::PoissonDisk => poisson_disk(domain, density, a, kappa, target, opts.seed)?,
    };

    // disjointness is part of the generation contract
    let min_dist = min_pairwise_distance(&centers);
    if min_dist < 2.0 * a {
        return Err(CloudError::Overlap {
            spacing: min_dist,
            required: 2.0 * a,
        });
    }

    let h_values: Vec<Complex64> = centers.iter().map(|c| h.eval(c)).collect();
    ParticleCloud::from_parts(domain.clone(), centers, h_values, a, kappa)
}

/// Stratified-lattice placement. Cells of near-natural size tile the
/// bounding box; per-cell in-domain fractions come from 3×3×3 subsampling;
/// counts are apportioned by largest remainder with a bit-reversed tie-break.
fn stratified_lattice(
    domain: &Domain,
    density: &DensityFunction,
    a: f64,
    kappa: f64,
    mean_density: f64,
    target: usize,
    mut jitter: Option<(&mut ChaCha8Rng, f64)>,
) -> Result<Vec<Point>, CloudError> {
    let (lo, hi) = domain.bounding_box();
    let b_nat = (a.powf(2.0 - kappa) / mean_density).cbrt();
    let mut counts = [0usize; 3];
    let mut side = [0f64; 3];
    for axis in 0..3 {
        let len = hi[axis] - lo[axis];
        counts[axis] = ((len / b_nat).round() as usize).max(1);
        side[axis] = len / counts[axis] as f64;
    }
    let n_cells = counts[0] * counts[1] * counts[2];
    let cell_vol: f64 = side.iter().product();

    // per-cell weights and representative points
    let mut weights = vec![0f64; n_cells];
    let mut reps = vec![Point::zeros(); n_cells];
    for idx in 0..n_cells {
        let i = idx % counts[0];
        let j = (idx / counts[0]) % counts[1];
        let l = idx / (counts[0] * counts[1]);
        let cell_lo = Point::new(
            lo.x + i as f64 * side[0],
            lo.y + j as f64 * side[1],
            lo.z + l as f64 * side[2],
        );
        let mut inside = 0usize;
        let mut centroid = Point::zeros();
        for si in 0..3 {
            for sj in 0..3 {
                for sl in 0..3 {
                    let p = Point::new(
                        cell_lo.x + (si as f64 + 0.5) / 3.0 * side[0],
                        cell_lo.y + (sj as f64 + 0.5) / 3.0 * side[1],
                        cell_lo.z + (sl as f64 + 0.5) / 3.0 * side[2],
                    );
                    if domain.contains(&p) {
                        inside += 1;
                        centroid += p;
                    }
                }
            }
        }
        if inside == 0 {
            continue;
        }
        let rep = centroid / inside as f64;
        let frac = inside as f64 / 27.0;
        reps[idx] = rep;
        weights[idx] = density.eval(&rep).max(0.0) * frac * cell_vol;
    }

    let occupancy = apportion(&weights, target);

    let mut centers = Vec::with_capacity(target);
    // octant visiting order keeps multiply-occupied cells spread out
    const OCTANT_ORDER: [usize; 8] = [0, 7, 3, 4, 5, 2, 6, 1];
    for idx in 0..n_cells {
        let n_here = occupancy[idx];
        if n_here == 0 {
            continue;
        }
        let rep = reps[idx];
        let mut local = Vec::with_capacity(n_here);
        if n_here == 1 {
            local.push(rep);
        } else if n_here <= 8 {
            for &o in OCTANT_ORDER.iter().take(n_here) {
                let mut p = rep;
                for axis in 0..3 {
                    let sign = if o & (1 << axis) != 0 { 1.0 } else { -1.0 };
                    p[axis] += sign * side[axis] / 4.0;
                }
                local.push(p);
            }
        } else {
            let m = (n_here as f64).cbrt().ceil() as usize;
            'fill: for sl in 0..m {
                for sj in 0..m {
                    for si in 0..m {
                        if local.len() == n_here {
                            break 'fill;
                        }
                        let p = Point::new(
                            rep.x + ((si as f64 + 0.5) / m as f64 - 0.5) * side[0],
                            rep.y + ((sj as f64 + 0.5) / m as f64 - 0.5) * side[1],
                            rep.z + ((sl as f64 + 0.5) / m as f64 - 0.5) * side[2],
                        );
                        local.push(p);
                    }
                }
            }
        }
        for mut p in local {
            if let Some((rng, frac)) = jitter.as_mut() {
                if *frac > 0.0 {
                    for axis in 0..3 {
                        p[axis] += rng.gen_range(-1.0..1.0) * *frac * side[axis];
                    }
                }
            }
            let p = domain
                .pull_inside(&p, a)
                .ok_or(CloudError::MarginInfeasible(a))?;
            centers.push(p);
        }
    }
    Ok(centers)
}

/// Largest-remainder apportionment of `target` units proportional to
/// `weights`, with ties broken in bit-reversed cell order so surplus and
/// deficit spread spatially.
fn apportion(weights: &[f64], target: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let n = weights.len();
    let mut counts = vec![0usize; n];
    if total <= 0.0 || target == 0 {
        return counts;
    }
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut assigned = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        let q = w * target as f64 / total;
        let fl = q.floor() as usize;
        counts[i] = fl;
        assigned += fl;
        remainders.push((i, q - fl as f64));
    }
    let scramble = scrambled_order(n);
    let mut rank = vec![0usize; n];
    for (pos, &cell) in scramble.iter().enumerate() {
        rank[cell] = pos;
    }
    remainders.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| rank[a.0].cmp(&rank[b.0]))
    });
    let mut deficit = target.saturating_sub(assigned);
    for (i, _) in remainders {
        if deficit == 0 {
            break;
        }
        counts[i] += 1;
        deficit -= 1;
    }
    counts
}

/// Seeded dart throwing with a density-scaled exclusion radius.
fn poisson_disk(
    domain: &Domain,
    density: &DensityFunction,
    a: f64,
    kappa: f64,
    target: usize,
    seed: u64,
) -> Result<Vec<Point>, CloudError> {
    let (lo, hi) = domain.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // exclusion radius tracking the local natural spacing, never below 2a
    let r_of = |x: &Point| -> f64 {
        let n = density.eval(x).max(1e-300);
        (0.62 * (a.powf(2.0 - kappa) / n).cbrt()).max(2.0 * a)
    };
    // density ceiling for rejection sampling
    let mut n_max: f64 = 0.0;
    for i in 0..4096 {
        let u = crate::probes::halton(i);
        let p = Point::new(
            lo.x + u[0] * (hi.x - lo.x),
            lo.y + u[1] * (hi.y - lo.y),
            lo.z + u[2] * (hi.z - lo.z),
        );
        if domain.contains(&p) {
            n_max = n_max.max(density.eval(&p));
        }
    }
    if n_max <= 0.0 {
        return Ok(Vec::new());
    }
    let mut accepted: Vec<Point> = Vec::with_capacity(target);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let cell = r_of(&domain.center());
    let key = |p: &Point| {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let max_attempts = 400 * target.max(64);
    let mut attempts = 0usize;
    while accepted.len() < target && attempts < max_attempts {
        attempts += 1;
        let cand = Point::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        );
        if !domain.contains(&cand) {
            continue;
        }
        if rng.gen_range(0.0..1.0) > density.eval(&cand) / n_max {
            continue;
        }
        let cand = match domain.pull_inside(&cand, a) {
            Some(p) => p,
            None => return Err(CloudError::MarginInfeasible(a)),
        };
        let r = r_of(&cand);
        let (ki, kj, kl) = key(&cand);
        let reach = (r / cell).ceil() as i64;
        let mut ok = true;
        'scan: for di in -reach..=reach {
            for dj in -reach..=reach {
                for dl in -reach..=reach {
                    if let Some(ids) = grid.get(&(ki + di, kj + dj, kl + dl)) {
                        for &id in ids {
                            if (accepted[id] - cand).norm() < r {
                                ok = false;
                                break 'scan;
                            }
                        }
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        grid.entry((ki, kj, kl)).or_default().push(accepted.len());
        accepted.push(cand);
    }
    if accepted.len() < target {
        return Err(CloudError::PoissonDiskExhausted {
            placed: accepted.len(),
            target,
        });
    }
    Ok(accepted)
}

/// Exact count of centers inside `delta`.
pub fn count_in_subdomain(cloud: &ParticleCloud, delta: &Domain) -> usize {
    cloud.centers().iter().filter(|c| delta.contains(c)).count()
}

fn min_pairwise_distance(centers: &[Point]) -> f64 {
    if centers.len() < 2 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (centers[0], centers[0]);
    for c in centers {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(c[axis]);
            hi[axis] = hi[axis].max(c[axis]);
        }
    }
    // equal-share cell with headroom: a pair closer than `cell` is always
    // found within the one-ring, which is all the grid pass claims
    let vol: f64 = (0..3).map(|i| (hi[i] - lo[i]).max(1e-12)).product();
    let cell = (1.5 * (vol / centers.len() as f64).cbrt()).max(1e-12);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: &Point| {
        (
            ((p.x - lo.x) / cell).floor() as i64,
            ((p.y - lo.y) / cell).floor() as i64,
            ((p.z - lo.z) / cell).floor() as i64,
        )
    };
    for (i, c) in centers.iter().enumerate() {
        grid.entry(key(c)).or_default().push(i);
    }
    let mut best = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let (ki, kj, kl) = key(c);
        for di in -1..=1 {
            for dj in -1..=1 {
                for dl in -1..=1 {
                    if let Some(ids) = grid.get(&(ki + di, kj + dj, kl + dl)) {
                        for &j in ids {
                            if j > i {
                                best = best.min((centers[j] - c).norm());
                            }
                        }
                    }
                }
            }
        }
    }
    if best <= cell {
        return best;
    }
    // sparse or degenerate layouts: the grid pass proves nothing, fall back
    let mut best = f64::INFINITY;
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            best = best.min((centers[j] - centers[i]).norm());
        }
    }
    best
}

/// Thresholds applied by [`audit_regime`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegimeThresholds {
    /// `ka` must stay below this (small-scatterer regime).
    pub ka_max: f64,
    /// `min distance / a^{(2−κ)/3}`-scale ratio must stay above this.
    pub spacing_ratio_min: f64,
    /// `max |ζ_m| a = |h| a^{1−κ}` must stay below this (the o(1) audit).
    pub zeta_a_max: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            ka_max: 0.1,
            spacing_ratio_min: 0.4,
            zeta_a_max: 0.5,
        }
    }
}

/// Outcome of the regime audit; failures are report entries, not errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeReport {
    pub m: usize,
    pub ka: f64,
    pub ka_pass: bool,
    pub min_center_distance: f64,
    pub disjoint_pass: bool,
    /// Spacing scale `(a^{2−κ}/N̄)^{1/3}` from the cloud's mean density.
    pub d_scale: f64,
    pub spacing_ratio: f64,
    pub spacing_pass: bool,
    pub max_zeta_a: f64,
    pub zeta_a_pass: bool,
    pub centers_inside_pass: bool,
    pub all_pass: bool,
}

/// Audits the asymptotic-regime assumptions for a cloud in a medium.
pub fn audit_regime(cloud: &ParticleCloud, medium: &Medium) -> RegimeReport {
    audit_regime_with(cloud, medium, &RegimeThresholds::default())
}

pub fn audit_regime_with(
    cloud: &ParticleCloud,
    medium: &Medium,
    thresholds: &RegimeThresholds,
) -> RegimeReport {
    let a = cloud.a();
    let ka = medium.k() * a;
    let min_dist = cloud.min_center_distance();
    let vol = cloud.domain().volume();
    let mean_density = if cloud.is_empty() {
        0.0
    } else {
        cloud.len() as f64 * cloud.coupling_weight() / vol
    };
    let d_scale = if mean_density > 0.0 {
        (cloud.coupling_weight() / mean_density).cbrt()
    } else {
        f64::INFINITY
    };
    let spacing_ratio = if d_scale.is_finite() {
        min_dist / d_scale
    } else {
        f64::INFINITY
    };
    let max_zeta_a = cloud
        .h_values()
        .iter()
        .map(|h| h.norm() * a.powf(1.0 - cloud.kappa()))
        .fold(0.0, f64::max);
    let tol = 1e-12 * (1.0 + a);
    let centers_inside_pass = cloud
        .centers()
        .iter()
        .all(|c| cloud.domain().contains(c) && cloud.domain().dist_to_boundary(c) >= a - tol);
    let ka_pass = ka < thresholds.ka_max;
    let disjoint_pass = min_dist >= 2.0 * a;
    let spacing_pass = spacing_ratio >= thresholds.spacing_ratio_min;
    let zeta_a_pass = max_zeta_a < thresholds.zeta_a_max;
    RegimeReport {
        m: cloud.len(),
        ka,
        ka_pass,
        min_center_distance: min_dist,
        disjoint_pass,
        d_scale,
        spacing_ratio,
        spacing_pass,
        max_zeta_a,
        zeta_a_pass,
        centers_inside_pass,
        all_pass: ka_pass && disjoint_pass && spacing_pass && zeta_a_pass && centers_inside_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_density() -> DensityFunction {
        DensityFunction::constant(1.0)
    }

    fn zero_h() -> ComplexField {
        ComplexField::constant(Complex64::default())
    }

    #[test]
    fn count_law_kappa_one() {
        // unit cube, N≡1, κ=1, a=0.01 → M = 100
        let d = Domain::unit_cube();
        assert_eq!(predicted_count(&d, &unit_density(), 0.01, 1.0).unwrap(), 100);
        let cloud = generate_cloud(&d, &unit_density(), &zero_h(), 0.01, 1.0).unwrap();
        assert_eq!(cloud.len(), 100);
    }

    #[test]
    fn count_law_kappa_zero_is_arithmetically_200_but_infeasible() {
        // N≡2, κ=0, a=0.1: the count law gives 200, but 200 disjoint balls of
        // radius 0.1 cannot fit in the unit cube, so generation must refuse.
        let d = Domain::unit_cube();
        let n2 = DensityFunction::constant(2.0);
        assert_eq!(predicted_count(&d, &n2, 0.1, 0.0).unwrap(), 200);
        let res = generate_cloud(&d, &n2, &zero_h(), 0.1, 0.0);
        assert!(matches!(res, Err(CloudError::Overlap { .. })), "{res:?}");
    }

    #[test]
    fn count_law_kappa_half_with_spacing() {
        // κ=0.5, a=0.01 → M = 1000, lattice spacing 0.1 ≥ 2a
        let d = Domain::unit_cube();
        let cloud = generate_cloud(&d, &unit_density(), &zero_h(), 0.01, 0.5).unwrap();
        assert_eq!(cloud.len(), 1000);
        assert_relative_eq!(cloud.min_center_distance(), 0.1, max_relative = 1e-12);
        let medium = Medium::homogeneous(d, 1.0, 1.0).unwrap();
        let report = audit_regime(&cloud, &medium);
        assert!(report.all_pass, "{report:?}");
    }

    #[test]
    fn empty_density_gives_empty_cloud() {
        let d = Domain::unit_cube();
        let n0 = DensityFunction::constant(0.0);
        let cloud = generate_cloud(&d, &n0, &zero_h(), 0.01, 0.5).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn subdomain_counts() {
        let d = Domain::unit_cube();
        let cloud = generate_cloud(&d, &unit_density(), &zero_h(), 0.01, 1.0).unwrap();
        // whole domain
        assert_eq!(count_in_subdomain(&cloud, &d), cloud.len());
        // left half: 50 ± lattice rounding (half a lattice column)
        let left = Domain::new_box(Point::new(0.0, 0.0, 0.0), Point::new(0.5, 1.0, 1.0)).unwrap();
        let c = count_in_subdomain(&cloud, &left) as f64;
        let per_column = cloud.len() as f64 / 5.0; // 5 columns along x
        assert!(
            (c - 50.0).abs() <= per_column / 2.0 + 2.0,
            "left-half count {c}"
        );
        // brute-force recount agrees exactly
        let brute = cloud
            .centers()
            .iter()
            .filter(|p| p.x <= 0.5 && (0.0..=1.0).contains(&p.y) && (0.0..=1.0).contains(&p.z))
            .count();
        assert_eq!(brute, c as usize);
        // a zero-density subdomain holds nothing
        let far = Domain::new_box(Point::new(10.0, 0.0, 0.0), Point::new(11.0, 1.0, 1.0)).unwrap();
        assert_eq!(count_in_subdomain(&cloud, &far), 0);
    }

    #[test]
    fn distribution_law_error_decreases() {
        let d = Domain::unit_cube();
        let delta = Domain::new_box(Point::new(0.0, 0.0, 0.0), Point::new(0.5, 0.5, 1.0)).unwrap();
        let mut errors = Vec::new();
        for a in [0.02, 0.01, 0.005] {
            let cloud = generate_cloud(&d, &unit_density(), &zero_h(), a, 0.5).unwrap();
            let expect = a.powf(-1.5) * 0.25;
            let got = count_in_subdomain(&cloud, &delta) as f64;
            errors.push((got / expect - 1.0).abs());
        }
        assert!(
            errors[2] <= errors[0] + 1e-12,
            "errors did not shrink: {errors:?}"
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let d = Domain::unit_cube();
        let opts = GenerateOptions {
            placement: PlacementMode::JitteredLattice { fraction: 0.2 },
            seed: 42,
        };
        let h = ComplexField::constant(Complex64::new(1.0, -0.5));
        let c1 = generate_cloud_with(&d, &unit_density(), &h, 0.01, 0.5, &opts).unwrap();
        let c2 = generate_cloud_with(&d, &unit_density(), &h, 0.01, 0.5, &opts).unwrap();
        assert_eq!(c1.centers(), c2.centers());
        assert_eq!(c1.h_values(), c2.h_values());
        // different seed moves the jittered points
        let opts2 = GenerateOptions { seed: 43, ..opts };
        let c3 = generate_cloud_with(&d, &unit_density(), &h, 0.01, 0.5, &opts2).unwrap();
        assert_ne!(c1.centers(), c3.centers());
    }

    #[test]
    fn jitter_respects_disjointness() {
        let d = Domain::unit_cube();
        let opts = GenerateOptions {
            placement: PlacementMode::JitteredLattice { fraction: 0.25 },
            seed: 7,
        };
        let cloud = generate_cloud_with(&d, &unit_density(), &zero_h(), 0.01, 0.5, &opts).unwrap();
        assert!(cloud.min_center_distance() >= 0.02);
    }

    #[test]
    fn poisson_disk_places_target_count() {
        let d = Domain::unit_cube();
        let opts = GenerateOptions {
            placement: PlacementMode::PoissonDisk,
            seed: 1,
        };
        let cloud = generate_cloud_with(&d, &unit_density(), &zero_h(), 0.005, 0.5, &opts).unwrap();
        assert_eq!(
            cloud.len(),
            predicted_count(&d, &unit_density(), 0.005, 0.5).unwrap()
        );
        assert!(cloud.min_center_distance() >= 0.01);
    }

    #[test]
    fn audit_flags() {
        // a=0.01, k=1, κ=0.5, h=1 → ka = 0.01 pass, ζa = 0.1 reported
        let d = Domain::unit_cube();
        let h1 = ComplexField::constant(Complex64::new(1.0, 0.0));
        let cloud = generate_cloud(&d, &unit_density(), &h1, 0.01, 0.5).unwrap();
        let medium = Medium::homogeneous(d.clone(), 1.0, 1.0).unwrap();
        let report = audit_regime(&cloud, &medium);
        assert!(report.ka_pass);
        assert_relative_eq!(report.ka, 0.01);
        assert_relative_eq!(report.max_zeta_a, 0.1, max_relative = 1e-12);
        assert!(report.zeta_a_pass);

        // two centers closer than 2a → overlap fail flag
        let tight = ParticleCloud::from_parts(
            d.clone(),
            vec![Point::new(0.5, 0.5, 0.5), Point::new(0.512, 0.5, 0.5)],
            vec![Complex64::default(); 2],
            0.01,
            0.5,
        )
        .unwrap();
        let report = audit_regime(&tight, &medium);
        assert!(!report.disjoint_pass);
        assert!(!report.all_pass);

        // κ→1, h=1: ζa = a^0 = 1 fails the 0.5 o(1) threshold
        let cloud = generate_cloud(&d, &unit_density(), &h1, 0.01, 1.0).unwrap();
        let report = audit_regime(&cloud, &medium);
        assert_relative_eq!(report.max_zeta_a, 1.0, max_relative = 1e-12);
        assert!(!report.zeta_a_pass);
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let d = Domain::unit_cube();
        let h = ComplexField::custom(|p: &Point| Complex64::new(p.x, -p.y / 3.0));
        let opts = GenerateOptions {
            placement: PlacementMode::JitteredLattice { fraction: 0.2 },
            seed: 5,
        };
        let cloud = generate_cloud_with(&d, &unit_density(), &h, 0.02, 0.5, &opts).unwrap();
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let back = ParticleCloud::read_csv(buf.as_slice(), d, cloud.a(), cloud.kappa()).unwrap();
        assert_eq!(cloud.centers(), back.centers());
        assert_eq!(cloud.h_values(), back.h_values());
        // serialization itself is deterministic
        let mut buf2 = Vec::new();
        cloud.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn impedance_sign_enforced() {
        let d = Domain::unit_cube();
        let bad = ComplexField::constant(Complex64::new(0.0, 0.3));
        let res = generate_cloud(&d, &unit_density(), &bad, 0.01, 0.5);
        assert!(matches!(res, Err(CloudError::ImpedanceSign { .. })));
    }

    #[test]
    fn kappa_validation() {
        let d = Domain::unit_cube();
        assert!(matches!(
            predicted_count(&d, &unit_density(), 0.01, 1.5),
            Err(CloudError::BadKappa(_))
        ));
        // endpoints tolerated
        assert!(predicted_count(&d, &unit_density(), 0.01, 1.0).is_ok());
        assert!(predicted_count(&d, &unit_density(), 0.01, 0.0).is_ok());
    }

    #[test]
    fn ball_domain_counts_track_the_law() {
        let d = Domain::unit_ball();
        let cloud = generate_cloud(&d, &unit_density(), &zero_h(), 0.01, 0.5).unwrap();
        let expect = predicted_count(&d, &unit_density(), 0.01, 0.5).unwrap();
        assert_eq!(cloud.len(), expect);
        // all inside with margin
        for c in cloud.centers() {
            assert!(c.norm() <= 1.0 - 0.01 + 1e-12);
        }
    }

    #[test]
    fn piecewise_density_integral_is_exact() {
        let d = Domain::unit_cube();
        let n = DensityFunction(ScalarField::PiecewiseBoxes {
            default: 1.0,
            pieces: vec![crate::fields::BoxPiece {
                lo: Point::new(0.0, 0.0, 0.0),
                hi: Point::new(0.5, 1.0, 1.0),
                value: 3.0,
            }],
        });
        assert_relative_eq!(integrate_density(&d, &n), 2.0, max_relative = 1e-14);
    }
}
