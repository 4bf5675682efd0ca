//! Regular height rasters and the `.grid` file format.
//!
//! ```text
//! magic     4 bytes "FLSG"
//! nx, ny    u32 each
//! cell      f32, meters
//! origin    f64 x, f64 y (lower-left corner of cell (0, 0))
//! values    nx * ny f32, row-major (row = y index), NaN = invalid
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::encoding::Bounds2;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"FLSG";

#[derive(Clone, Debug, PartialEq)]
pub struct HeightRaster {
    pub origin: [f64; 2],
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    /// Ensonification counts; zero-length when not computed.
    pub counts: Vec<u32>,
}

impl HeightRaster {
    pub fn new(origin: [f64; 2], cell: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(cell > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::Config(format!("raster needs positive cell size and extent (cell {cell}, {nx}x{ny})")));
        }
        Ok(HeightRaster { origin, cell, nx, ny, values: vec![0.0; nx * ny], valid: vec![true; nx * ny], counts: Vec::new() })
    }

    /// Raster covering `bounds` with cells of size `cell` (extent rounded to
    /// the nearest whole cell count).
    pub fn covering(bounds: &Bounds2, cell: f64) -> Result<Self> {
        if !(cell > 0.0) {
            return Err(Error::Config("raster resolution must be positive".into()));
        }
        let nx = ((bounds.width() / cell).round() as usize).max(1);
        let ny = ((bounds.height() / cell).round() as usize).max(1);
        Self::new(bounds.min, cell, nx, ny)
    }

    pub fn from_fn(bounds: &Bounds2, cell: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut r = Self::covering(bounds, cell)?;
        for j in 0..r.ny {
            for i in 0..r.nx {
                let [x, y] = r.cell_center(i, j);
                r.values[j * r.nx + i] = f(x, y);
            }
        }
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + (i as f64 + 0.5) * self.cell, self.origin[1] + (j as f64 + 0.5) * self.cell]
    }

    pub fn bounds(&self) -> Bounds2 {
        Bounds2::new(self.origin[0], self.origin[1], self.origin[0] + self.nx as f64 * self.cell, self.origin[1] + self.ny as f64 * self.cell)
    }

    /// Cell containing (x, y), if any.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin[0]) / self.cell;
        let fy = (y - self.origin[1]) / self.cell;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.index(i, j);
        self.valid[k].then_some(self.values[k])
    }

    /// Bilinear interpolation between cell centers, clamped at the edges.
    /// Invalid cells are not special-cased.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin[0]) / self.cell - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((y - self.origin[1]) / self.cell - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j0 = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let i1 = (i0 + 1).min(self.nx - 1);
        let j1 = (j0 + 1).min(self.ny - 1);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v = |i, j| self.values[self.index(i, j)];
        let a = v(i0, j0) * (1.0 - tx) + v(i1, j0) * tx;
        let b = v(i0, j1) * (1.0 - tx) + v(i1, j1) * tx;
        a * (1.0 - ty) + b * ty
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().zip(&self.valid).filter(|(_, ok)| **ok).map(|(v, _)| *v);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Sub-raster of the cells lying entirely inside `bounds`.
    pub fn crop(&self, bounds: &Bounds2) -> Result<Self> {
        let eps = 1e-9 * self.cell;
        let i0 = (((bounds.min[0] - self.origin[0]) / self.cell - eps).ceil().max(0.0)) as usize;
        let j0 = (((bounds.min[1] - self.origin[1]) / self.cell - eps).ceil().max(0.0)) as usize;
        let i1 = ((((bounds.max[0] - self.origin[0]) / self.cell + eps).floor()) as usize).min(self.nx);
        let j1 = ((((bounds.max[1] - self.origin[1]) / self.cell + eps).floor()) as usize).min(self.ny);
        if i1 <= i0 || j1 <= j0 {
            return Err(Error::Empty("crop leaves no cells"));
        }
        let mut out = Self::new([self.origin[0] + i0 as f64 * self.cell, self.origin[1] + j0 as f64 * self.cell], self.cell, i1 - i0, j1 - j0)?;
        for j in j0..j1 {
            for i in i0..i1 {
                let (src, dst) = (self.index(i, j), out.index(i - i0, j - j0));
                out.values[dst] = self.values[src];
                out.valid[dst] = self.valid[src];
            }
        }
        if !self.counts.is_empty() {
            out.counts = vec![0; out.len()];
            for j in j0..j1 {
                for i in i0..i1 {
                    out.counts[(j - j0) * out.nx + (i - i0)] = self.counts[self.index(i, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && (self.cell - other.cell).abs() <= 1e-6 * self.cell
            && (self.origin[0] - other.origin[0]).abs() <= 1e-6 * self.cell
            && (self.origin[1] - other.origin[1]).abs() <= 1e-6 * self.cell
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_all(&(self.nx as u32).to_le_bytes())?;
        w.write_all(&(self.ny as u32).to_le_bytes())?;
        w.write_all(&(self.cell as f32).to_le_bytes())?;
        w.write_all(&self.origin[0].to_le_bytes())?;
        w.write_all(&self.origin[1].to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.len() * 4);
        for (v, ok) in self.values.iter().zip(&self.valid) {
            let x = if *ok { *v as f32 } else { f32::NAN };
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut head = [0u8; 32];
        r.read_exact(&mut head)?;
        if &head[0..4] != GRID_MAGIC {
            return Err(Error::Format("not a grid file (bad magic)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().expect("4 bytes")) as usize;
        let (nx, ny) = (u32_at(4), u32_at(8));
        let cell = f32::from_le_bytes(head[12..16].try_into().expect("4 bytes")) as f64;
        let ox = f64::from_le_bytes(head[16..24].try_into().expect("8 bytes"));
        let oy = f64::from_le_bytes(head[24..32].try_into().expect("8 bytes"));
        if nx.checked_mul(ny).map_or(true, |n| n > 1 << 28) {
            return Err(Error::Format(format!("implausible grid size {nx}x{ny}")));
        }
        let mut out = Self::new([ox, oy], cell, nx, ny)?;
        let mut raw = vec![0u8; nx * ny * 4];
        r.read_exact(&mut raw)?;
        for (k, c) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            out.valid[k] = !v.is_nan();
            out.values[k] = if v.is_nan() { 0.0 } else { v as f64 };
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
