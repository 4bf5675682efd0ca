use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::Bounds2;
use crate::error::{Error, Result};
use crate::raster::HeightRaster;

/// Height primitives; the scene height is their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// z = z0 + sx * x + sy * y
    Plane { z0: f64, sx: f64, sy: f64 },
    Bump { x: f64, y: f64, amplitude: f64, sigma: f64 },
    /// Adds `height` on the side of the line through (x, y) that the unit
    /// normal (nx, ny) points to.
    Step { x: f64, y: f64, nx: f64, ny: f64, height: f64 },
    /// Flat-topped band of `height` within `half_width` of the segment
    /// (x0, y0)-(x1, y1); vertical sides.
    Ridge { x0: f64, y0: f64, x1: f64, y1: f64, half_width: f64, height: f64 },
}

impl Primitive {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Primitive::Plane { z0, sx, sy } => z0 + sx * x + sy * y,
            Primitive::Bump { x: bx, y: by, amplitude, sigma } => {
                let d2 = (x - bx).powi(2) + (y - by).powi(2);
                amplitude * (-d2 / (2.0 * sigma * sigma)).exp()
            }
            Primitive::Step { x: sx, y: sy, nx, ny, height } => {
                if (x - sx) * nx + (y - sy) * ny >= 0.0 {
                    height
                } else {
                    0.0
                }
            }
            Primitive::Ridge { x0, y0, x1, y1, half_width, height } => {
                if segment_distance([x, y], [x0, y0], [x1, y1]) <= half_width {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        match *self {
            Primitive::Plane { .. } => 0.0,
            Primitive::Bump { amplitude, .. } => amplitude.abs(),
            Primitive::Step { height, .. } | Primitive::Ridge { height, .. } => height.abs(),
        }
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Terrain {
    Analytic(Vec<Primitive>),
    Raster(HeightRaster),
}

/// Ground-truth seabed: a height function over a box plus a constant
/// reflectivity.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub bounds: Bounds2,
    pub terrain: Terrain,
    pub reflectivity: f64,
    z_range: (f64, f64),
    tiles: TileBounds,
}

/// Upper bounds on the terrain height over square tiles of the padded
/// scene box, used to skip empty space when ray marching.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TileBounds {
    pub origin: [f64; 2],
    pub tile: f64,
    pub nx: usize,
    pub ny: usize,
    pub max: Vec<f64>,
}

impl TileBounds {
    /// Tile index and its height bound at (x, y), if inside the tiled area.
    pub fn lookup(&self, x: f64, y: f64) -> Option<(usize, usize, f64)> {
        let fx = (x - self.origin[0]) / self.tile;
        let fy = (y - self.origin[1]) / self.tile;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        (i < self.nx && j < self.ny).then(|| (i, j, self.max[j * self.nx + i]))
    }
}

impl Scene {
    pub fn analytic(bounds: Bounds2, primitives: Vec<Primitive>, reflectivity: f64) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(Error::Config("scene box is empty".into()));
        }
        let mut s = Scene { bounds, terrain: Terrain::Analytic(primitives), reflectivity, z_range: (0.0, 0.0), tiles: TileBounds::default() };
        s.z_range = s.scan_z_range();
        s.tiles = s.build_tiles();
        Ok(s)
    }

    pub fn raster(raster: HeightRaster, reflectivity: f64) -> Result<Self> {
        let bounds = raster.bounds();
        let (lo, hi) = raster.min_max().ok_or(Error::Empty("scene raster has no valid cells"))?;
        let mut s = Scene { bounds, terrain: Terrain::Raster(raster), reflectivity, z_range: (lo, hi), tiles: TileBounds::default() };
        s.tiles = s.build_tiles();
        Ok(s)
    }

    pub fn flat(bounds: Bounds2, z: f64) -> Self {
        Self::analytic(bounds, vec![Primitive::Plane { z0: z, sx: 0.0, sy: 0.0 }], 1.0).expect("valid flat scene")
    }

    /// Terrain height. Outside the box the terrain continues (primitives)
    /// or is clamped (raster).
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match &self.terrain {
            Terrain::Analytic(ps) => ps.iter().map(|p| p.height(x, y)).sum(),
            Terrain::Raster(r) => r.sample(x, y),
        }
    }

    /// Unit surface normal from central differences at scale `h`.
    pub fn normal(&self, x: f64, y: f64, h: f64) -> [f64; 3] {
        let gx = (self.height(x + h, y) - self.height(x - h, y)) / (2.0 * h);
        let gy = (self.height(x, y + h) - self.height(x, y - h)) / (2.0 * h);
        let n = (gx * gx + gy * gy + 1.0).sqrt();
        [-gx / n, -gy / n, 1.0 / n]
    }

    /// Bounds on the terrain height, padded, used to limit ray marching.
    pub fn z_range(&self) -> (f64, f64) {
        self.z_range
    }

    /// Smallest horizontal feature scale: raster spacing, or zero (no limit)
    /// for analytic terrain.
    pub fn grid_spacing(&self) -> Option<f64> {
        match &self.terrain {
            Terrain::Analytic(_) => None,
            Terrain::Raster(r) => Some(r.cell),
        }
    }

    pub fn tiles(&self) -> &TileBounds {
        &self.tiles
    }

    fn build_tiles(&self) -> TileBounds {
        let pad = self.bounds.padded(0.5 * self.bounds.width().max(self.bounds.height()));
        let tile = 0.5;
        let step = self.grid_spacing().map_or(0.05, |g| (0.5 * g).min(0.05));
        let nx = (pad.width() / tile).ceil() as usize;
        let ny = (pad.height() / tile).ceil() as usize;
        let per = (tile / step).ceil() as usize;
        let mut raw = vec![f64::NEG_INFINITY; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut m = f64::NEG_INFINITY;
                for b in 0..=per {
                    for a in 0..=per {
                        let x = pad.min[0] + (i as f64 + a as f64 / per as f64) * tile;
                        let y = pad.min[1] + (j as f64 + b as f64 / per as f64) * tile;
                        m = m.max(self.height(x, y));
                    }
                }
                raw[j * nx + i] = m;
            }
        }
        // dilate so features narrower than the sampling step are still covered
        let mut max = vec![f64::NEG_INFINITY; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut m = f64::NEG_INFINITY;
                for dj in j.saturating_sub(1)..=(j + 1).min(ny - 1) {
                    for di in i.saturating_sub(1)..=(i + 1).min(nx - 1) {
                        m = m.max(raw[dj * nx + di]);
                    }
                }
                max[j * nx + i] = m + 0.01;
            }
        }
        TileBounds { origin: pad.min, tile, nx, ny, max }
    }

    fn scan_z_range(&self) -> (f64, f64) {
        // analytic bound: planes vary over the padded box, other primitives by their amplitude
        let Terrain::Analytic(ps) = &self.terrain else { unreachable!() };
        let pad = self.bounds.padded(0.5 * self.bounds.width().max(self.bounds.height()));
        let (mut lo, mut hi) = (0.0, 0.0);
        for p in ps {
            match *p {
                Primitive::Plane { z0, sx, sy } => {
                    let corners = [pad.min, [pad.min[0], pad.max[1]], [pad.max[0], pad.min[1]], pad.max];
                    let vals = corners.map(|c| z0 + sx * c[0] + sy * c[1]);
                    lo += vals.iter().copied().fold(f64::INFINITY, f64::min);
                    hi += vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                }
                _ => {
                    let a = p.max_abs();
                    let sign_h = match *p {
                        Primitive::Bump { amplitude, .. } => amplitude,
                        Primitive::Step { height, .. } | Primitive::Ridge { height, .. } => height,
                        _ => 0.0,
                    };
                    if sign_h >= 0.0 {
                        hi += a;
                    } else {
                        lo -= a;
                    }
                }
            }
        }
        (lo - 0.01, hi + 0.01)
    }

    /// Rasterizes the terrain over the scene box at `cell` spacing
    /// (values at cell centres).
    pub fn to_raster(&self, cell: f64) -> Result<HeightRaster> {
        HeightRaster::from_fn(&self.bounds, cell, |x, y| self.height(x, y))
    }

    /// Block average of the terrain over `cell`-sized cells, `sub` x `sub`
    /// samples per cell.
    pub fn block_average(&self, cell: f64, sub: usize) -> Result<HeightRaster> {
        let sub = sub.max(1);
        HeightRaster::from_fn(&self.bounds, cell, |cx, cy| {
            let mut acc = 0.0;
            for a in 0..sub {
                for b in 0..sub {
                    let x = cx - 0.5 * cell + (a as f64 + 0.5) * cell / sub as f64;
                    let y = cy - 0.5 * cell + (b as f64 + 0.5) * cell / sub as f64;
                    acc += self.height(x, y);
                }
            }
            acc / (sub * sub) as f64
        })
    }
}

/// Parameters of the reference desk-scale rocky scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinirocksConfig {
    pub size: f64,
    pub base_z: f64,
    pub n_bumps: usize,
    pub amp_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub ridge_height: f64,
    pub ridge_half_width: f64,
    pub seed: u64,
}

impl Default for MinirocksConfig {
    fn default() -> Self {
        MinirocksConfig {
            size: 20.0,
            base_z: 0.0,
            n_bumps: 6,
            amp_range: (0.3, 1.5),
            sigma_range: (0.8, 2.0),
            ridge_height: 1.0,
            ridge_half_width: 1.0,
            seed: 7,
        }
    }
}

/// Seeded Gaussian bumps plus one step ridge on a flat base, in the box
/// [0, size]^2.
pub fn minirocks(cfg: &MinirocksConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.size;
    let mut prims = vec![Primitive::Plane { z0: cfg.base_z, sx: 0.0, sy: 0.0 }];
    for _ in 0..cfg.n_bumps {
        prims.push(Primitive::Bump {
            x: rng.gen_range(0.15 * s..0.85 * s),
            y: rng.gen_range(0.15 * s..0.85 * s),
            amplitude: rng.gen_range(cfg.amp_range.0..=cfg.amp_range.1),
            sigma: rng.gen_range(cfg.sigma_range.0..=cfg.sigma_range.1),
        });
    }
    // ridge running across the box at a slight angle
    let y0 = rng.gen_range(0.3 * s..0.4 * s);
    let y1 = y0 + rng.gen_range(0.05 * s..0.15 * s);
    prims.push(Primitive::Ridge { x0: 0.1 * s, y0, x1: 0.9 * s, y1, half_width: cfg.ridge_half_width, height: cfg.ridge_height });
    Scene::analytic(Bounds2::new(0.0, 0.0, s, s), prims, 1.0).expect("valid minirocks box")
}
