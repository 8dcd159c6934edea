//! Uniform Cartesian grids and sampled complex fields.
//!
//! Nodes are cell-centered: node `(i,j,l)` sits at
//! `origin + ((i+½)s_x, (j+½)s_y, (l+½)s_z)`, so each node owns a cell of
//! volume `s_x s_y s_z` and the cells tile the covered box exactly.
//!
//! Grid fields serialize to a CSV table with columns `x,y,z,re,im` and to a
//! compact binary dump (magic `SGF1`, little-endian: three `u64` axis counts,
//! origin, spacing, then `re,im` f64 pairs in node order).

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, Point};

const BINARY_MAGIC: &[u8; 4] = b"SGF1";

#[derive(Debug, Error)]
pub enum GridError {
    #[error("axis counts must be positive, got {0:?}")]
    EmptyAxis([usize; 3]),
    #[error("spacing must be positive, got {0:?}")]
    NonPositiveSpacing([f64; 3]),
    #[error("value count {values} does not match node count {nodes}")]
    ValueCountMismatch { values: usize, nodes: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad binary dump: {0}")]
    BadDump(String),
}

/// Geometry of a uniform cell-centered grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point,
    pub counts: [usize; 3],
    pub spacing: [f64; 3],
}

impl GridSpec {
    pub fn new(origin: Point, counts: [usize; 3], spacing: [f64; 3]) -> Result<Self, GridError> {
        if counts.iter().any(|&n| n == 0) {
            return Err(GridError::EmptyAxis(counts));
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(GridError::NonPositiveSpacing(spacing));
        }
        Ok(GridSpec {
            origin,
            counts,
            spacing,
        })
    }

    /// Grid covering the bounding box of `domain` with `n` nodes per axis.
    pub fn covering(domain: &Domain, n: [usize; 3]) -> Result<Self, GridError> {
        let (lo, hi) = domain.bounding_box();
        let spacing = [
            (hi.x - lo.x) / n[0] as f64,
            (hi.y - lo.y) / n[1] as f64,
            (hi.z - lo.z) / n[2] as f64,
        ];
        GridSpec::new(lo, n, spacing)
    }

    pub fn node_count(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    /// Position of node `(i,j,l)`.
    pub fn node(&self, i: usize, j: usize, l: usize) -> Point {
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.spacing[0],
            self.origin.y + (j as f64 + 0.5) * self.spacing[1],
            self.origin.z + (l as f64 + 0.5) * self.spacing[2],
        )
    }

    /// Flat index of node `(i,j,l)` (x fastest).
    pub fn flat(&self, i: usize, j: usize, l: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * l)
    }

    /// Inverse of [`GridSpec::flat`].
    pub fn unflat(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.counts[0];
        let j = (idx / self.counts[0]) % self.counts[1];
        let l = idx / (self.counts[0] * self.counts[1]);
        (i, j, l)
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn iter_nodes(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        (0..self.node_count()).map(move |idx| {
            let (i, j, l) = self.unflat(idx);
            (idx, self.node(i, j, l))
        })
    }
}

/// Complex samples on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGridField {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl ScalarGridField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::ValueCountMismatch {
                values: values.len(),
                nodes: grid.node_count(),
            });
        }
        Ok(ScalarGridField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.node_count();
        ScalarGridField {
            grid,
            values: vec![Complex64::default(); n],
        }
    }

    /// Samples `f` at every node.
    pub fn sample(grid: GridSpec, f: impl Fn(&Point) -> Complex64) -> Self {
        let values = grid.iter_nodes().map(|(_, x)| f(&x)).collect();
        ScalarGridField { grid, values }
    }

    pub fn at(&self, i: usize, j: usize, l: usize) -> Complex64 {
        self.values[self.grid.flat(i, j, l)]
    }

    /// Writes the `x,y,z,re,im` CSV table.
    pub fn write_csv(&self, w: impl Write) -> Result<(), GridError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "y", "z", "re", "im"])?;
        for (idx, p) in self.grid.iter_nodes() {
            let v = self.values[idx];
            wtr.write_record([
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                v.re.to_string(),
                v.im.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Writes the binary dump.
    pub fn write_binary(&self, mut w: impl Write) -> Result<(), GridError> {
        w.write_all(BINARY_MAGIC)?;
        for &n in &self.grid.counts {
            w.write_u64::<LittleEndian>(n as u64)?;
        }
        for v in [
            self.grid.origin.x,
            self.grid.origin.y,
            self.grid.origin.z,
            self.grid.spacing[0],
            self.grid.spacing[1],
            self.grid.spacing[2],
        ] {
            w.write_f64::<LittleEndian>(v)?;
        }
        for v in &self.values {
            w.write_f64::<LittleEndian>(v.re)?;
            w.write_f64::<LittleEndian>(v.im)?;
        }
        Ok(())
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        Ok(())
    }

    /// Reads a binary dump written by [`ScalarGridField::write_binary`].
    pub fn read_binary(mut r: impl Read) -> Result<Self, GridError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(GridError::BadDump(format!(
                "bad magic {:?}, expected {:?}",
                magic, BINARY_MAGIC
            )));
        }
        let mut counts = [0usize; 3];
        for c in &mut counts {
            *c = r.read_u64::<LittleEndian>()? as usize;
        }
        let mut geo = [0f64; 6];
        for g in &mut geo {
            *g = r.read_f64::<LittleEndian>()?;
        }
        let grid = GridSpec::new(
            Point::new(geo[0], geo[1], geo[2]),
            counts,
            [geo[3], geo[4], geo[5]],
        )?;
        let n = grid.node_count();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            values.push(Complex64::new(re, im));
        }
        ScalarGridField::new(grid, values)
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self, GridError> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
