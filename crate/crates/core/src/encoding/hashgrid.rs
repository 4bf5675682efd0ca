use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradnet::ParamStore;

/// Per-axis primes of the spatial hash; the first axis is left unscrambled.
pub const HASH_PRIMES: [u32; 2] = [1, 2_654_435_761];

/// Axis-aligned horizontal box, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds2 {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Bounds2 { min: [xmin, ymin], max: [xmax, ymax] }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    pub fn is_valid(&self) -> bool {
        self.width() > 0.0 && self.height() > 0.0 && self.min.iter().chain(&self.max).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn padded(&self, margin: f64) -> Self {
        Bounds2::new(self.min[0] - margin, self.min[1] - margin, self.max[0] + margin, self.max[1] + margin)
    }

    /// Shrinks by `margin` on every side.
    pub fn inner(&self, margin: f64) -> Self {
        self.padded(-margin)
    }

    /// Parses `xmin,ymin,xmax,ymax`.
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bounds '{s}': {e}")))?;
        if v.len() != 4 {
            return Err(Error::Parse(format!("bounds '{s}': expected xmin,ymin,xmax,ymax")));
        }
        let b = Bounds2::new(v[0], v[1], v[2], v[3]);
        if !b.is_valid() {
            return Err(Error::Parse(format!("bounds '{s}': empty box")));
        }
        Ok(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashGridConfig {
    pub levels: usize,
    pub log2_table_size: u32,
    pub features_per_entry: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub bounds: Bounds2,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        HashGridConfig {
            levels: 15,
            log2_table_size: 15,
            features_per_entry: 2,
            n_min: 16,
            n_max: 1024,
            bounds: Bounds2::new(0.0, 0.0, 1.0, 1.0),
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_entry == 0 || self.n_min == 0 {
            return Err(Error::Config("hash grid: levels, features and n_min must be >= 1".into()));
        }
        if self.log2_table_size == 0 || self.log2_table_size > 30 {
            return Err(Error::Config("hash grid: log2_table_size must be in 1..=30".into()));
        }
        if self.levels > 1 && self.n_max <= self.n_min {
            return Err(Error::Config("hash grid: n_max must exceed n_min when levels > 1".into()));
        }
        if !self.bounds.is_valid() {
            return Err(Error::Config("hash grid: empty domain bounds".into()));
        }
        Ok(())
    }

    pub fn table_size(&self) -> usize {
        1usize << self.log2_table_size
    }

    pub fn growth_factor(&self) -> f64 {
        if self.levels <= 1 {
            return 1.0;
        }
        (((self.n_max as f64).ln() - (self.n_min as f64).ln()) / (self.levels as f64 - 1.0)).exp()
    }

    /// N_l = floor(n_min * b^l). A tiny epsilon keeps exact powers from
    /// rounding down.
    pub fn level_resolution(&self, level: usize) -> usize {
        ((self.n_min as f64) * self.growth_factor().powi(level as i32) + 1e-9).floor() as usize
    }

    pub fn level_is_dense(&self, level: usize) -> bool {
        let n = self.level_resolution(level) + 1;
        n * n <= self.table_size()
    }

    pub fn level_entries(&self, level: usize) -> usize {
        if self.level_is_dense(level) {
            let n = self.level_resolution(level) + 1;
            n * n
        } else {
            self.table_size()
        }
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_entry
    }
}

/// XOR-of-products spatial hash masked to `table_size` (a power of two).
pub fn hash_index(cell: [u32; 2], table_size: usize) -> usize {
    debug_assert!(table_size.is_power_of_two());
    let h = cell[0].wrapping_mul(HASH_PRIMES[0]) ^ cell[1].wrapping_mul(HASH_PRIMES[1]);
    (h as usize) & (table_size - 1)
}

/// Table slot of a lattice vertex: row-major for levels that fit densely,
/// hashed otherwise.
pub fn vertex_index(level_resolution: usize, cell: [u32; 2], table_size: usize) -> usize {
    let side = level_resolution + 1;
    if side * side <= table_size {
        cell[0] as usize + cell[1] as usize * side
    } else {
        hash_index(cell, table_size)
    }
}

/// Saved per-query state of [`HashGrid::encode`].
#[derive(Clone, Debug, Default)]
pub struct EncodeTape {
    pub features: Vec<f64>,
    pub dfdx: Vec<f64>,
    pub dfdy: Vec<f64>,
    pub active_levels: usize,
    pub has_tangents: bool,
    corner_offset: Vec<usize>,
    corner_w: Vec<f64>,
    corner_dwx: Vec<f64>,
    corner_dwy: Vec<f64>,
}

impl EncodeTape {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Trainable multi-resolution grid. Table values live in a [`ParamStore`];
/// the grid only records where each level's block starts.
#[derive(Clone, Debug)]
pub struct HashGrid {
    pub config: HashGridConfig,
    level_offset: Vec<usize>,
    level_res: Vec<usize>,
    level_dense: Vec<bool>,
    param_range: std::ops::Range<usize>,
}

impl HashGrid {
    /// Registers one block per level under `prefix` and fills it uniformly in
    /// [-init_scale, init_scale].
    pub fn new(config: HashGridConfig, store: &mut ParamStore, prefix: &str, init_scale: f64, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let f = config.features_per_entry;
        let mut level_offset = Vec::with_capacity(config.levels);
        let start = store.len();
        for l in 0..config.levels {
            let len = config.level_entries(l) * f;
            let off = store.add_block(&format!("{prefix}.level{l:02}"), len);
            for v in store.values_mut(off, len) {
                *v = rng.gen_range(-init_scale..=init_scale);
            }
            level_offset.push(off);
        }
        let end = store.len();
        Ok(HashGrid {
            level_res: (0..config.levels).map(|l| config.level_resolution(l)).collect(),
            level_dense: (0..config.levels).map(|l| config.level_is_dense(l)).collect(),
            config,
            level_offset,
            param_range: start..end,
        })
    }

    /// Rebuilds the layout against blocks already present in `store`.
    pub fn attach(config: HashGridConfig, store: &ParamStore, prefix: &str) -> Result<Self> {
        config.validate()?;
        let f = config.features_per_entry;
        let mut level_offset = Vec::with_capacity(config.levels);
        for l in 0..config.levels {
            let name = format!("{prefix}.level{l:02}");
            let (off, len) = store
                .block(&name)
                .ok_or_else(|| Error::Format(format!("missing parameter block {name}")))?;
            if len != config.level_entries(l) * f {
                return Err(Error::Format(format!("block {name}: length {len} does not match config")));
            }
            level_offset.push(off);
        }
        let start = level_offset.first().copied().unwrap_or(0);
        let end = start + (0..config.levels).map(|l| config.level_entries(l) * f).sum::<usize>();
        Ok(HashGrid {
            level_res: (0..config.levels).map(|l| config.level_resolution(l)).collect(),
            level_dense: (0..config.levels).map(|l| config.level_is_dense(l)).collect(),
            config,
            level_offset,
            param_range: start..end,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn levels(&self) -> usize {
        self.config.levels
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        self.param_range.clone()
    }

    pub fn level_resolution(&self, level: usize) -> usize {
        self.level_res[level]
    }

    /// Absolute parameter offset of a vertex's feature vector.
    pub fn entry_offset(&self, level: usize, cell: [u32; 2]) -> usize {
        let t = self.config.table_size();
        let idx = if self.level_dense[level] {
            cell[0] as usize + cell[1] as usize * (self.level_res[level] + 1)
        } else {
            hash_index(cell, t)
        };
        self.level_offset[level] + idx * self.config.features_per_entry
    }

    /// Bilinear lookup at `p` over the first `active_levels` levels; inactive
    /// levels contribute zeros. With `tangents`, also records d/dx and d/dy
    /// of every feature.
    pub fn encode(&self, params: &[f64], p: [f64; 2], active_levels: usize, tangents: bool, tape: &mut EncodeTape) {
        let nl = self.config.levels;
        let f = self.config.features_per_entry;
        let dim = nl * f;
        let active = active_levels.min(nl);
        tape.features.clear();
        tape.features.resize(dim, 0.0);
        tape.has_tangents = tangents;
        tape.active_levels = active;
        if tangents {
            tape.dfdx.clear();
            tape.dfdx.resize(dim, 0.0);
            tape.dfdy.clear();
            tape.dfdy.resize(dim, 0.0);
        }
        tape.corner_offset.clear();
        tape.corner_w.clear();
        tape.corner_dwx.clear();
        tape.corner_dwy.clear();

        let b = &self.config.bounds;
        let mut u = [0.0; 2];
        let mut du = [0.0; 2];
        for a in 0..2 {
            let ext = b.max[a] - b.min[a];
            let raw = (p[a] - b.min[a]) / ext;
            if raw <= 0.0 {
                u[a] = 0.0;
            } else if raw >= 1.0 {
                u[a] = 1.0;
            } else {
                u[a] = raw;
                du[a] = 1.0 / ext;
            }
        }

        for l in 0..active {
            let res = self.level_res[l];
            let resf = res as f64;
            let mut cell = [0u32; 2];
            let mut frac = [0.0; 2];
            let mut dfrac = [0.0; 2];
            for a in 0..2 {
                let pos = u[a] * resf;
                let c = (pos.floor() as usize).min(res - 1);
                cell[a] = c as u32;
                frac[a] = pos - c as f64;
                dfrac[a] = du[a] * resf;
            }
            let (fx, fy) = (frac[0], frac[1]);
            let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            let dw_dfx = [-(1.0 - fy), 1.0 - fy, -fy, fy];
            let dw_dfy = [-(1.0 - fx), -fx, 1.0 - fx, fx];
            let corners = [
                [cell[0], cell[1]],
                [cell[0] + 1, cell[1]],
                [cell[0], cell[1] + 1],
                [cell[0] + 1, cell[1] + 1],
            ];
            let out = &mut tape.features[l * f..(l + 1) * f];
            for c in 0..4 {
                let off = self.entry_offset(l, corners[c]);
                let entry = &params[off..off + f];
                for k in 0..f {
                    out[k] += w[c] * entry[k];
                }
                tape.corner_offset.push(off);
                tape.corner_w.push(w[c]);
                let dwx = dw_dfx[c] * dfrac[0];
                let dwy = dw_dfy[c] * dfrac[1];
                tape.corner_dwx.push(dwx);
                tape.corner_dwy.push(dwy);
                if tangents {
                    for k in 0..f {
                        tape.dfdx[l * f + k] += dwx * entry[k];
                        tape.dfdy[l * f + k] += dwy * entry[k];
                    }
                }
            }
        }
    }

    /// Accumulates table gradients given upstream gradients on the features
    /// and, when the tape carries tangents, on their x/y derivatives.
    pub fn backward(&self, tape: &EncodeTape, gf: &[f64], gfx: Option<&[f64]>, gfy: Option<&[f64]>, grads: &mut [f64]) {
        let f = self.config.features_per_entry;
        for l in 0..tape.active_levels {
            for c in 0..4 {
                let i = l * 4 + c;
                let off = tape.corner_offset[i];
                let w = tape.corner_w[i];
                let g = &mut grads[off..off + f];
                for k in 0..f {
                    g[k] += w * gf[l * f + k];
                }
                if let Some(gfx) = gfx {
                    let dwx = tape.corner_dwx[i];
                    for k in 0..f {
                        g[k] += dwx * gfx[l * f + k];
                    }
                }
                if let Some(gfy) = gfy {
                    let dwy = tape.corner_dwy[i];
                    for k in 0..f {
                        g[k] += dwy * gfy[l * f + k];
                    }
                }
            }
        }
    }

    /// d(gf . features)/d(p) from the interpolation-weight derivatives.
    pub fn position_gradient(&self, params: &[f64], tape: &EncodeTape, gf: &[f64]) -> [f64; 2] {
        let f = self.config.features_per_entry;
        let mut g = [0.0; 2];
        for l in 0..tape.active_levels {
            for c in 0..4 {
                let i = l * 4 + c;
                let off = tape.corner_offset[i];
                for k in 0..f {
                    let e = params[off + k] * gf[l * f + k];
                    g[0] += tape.corner_dwx[i] * e;
                    g[1] += tape.corner_dwy[i] * e;
                }
            }
        }
        g
    }

    /// Sparse view of the touched entries: (absolute offset, weight).
    pub fn touched(&self, tape: &EncodeTape) -> Vec<(usize, f64)> {
        tape.corner_offset.iter().copied().zip(tape.corner_w.iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_grid(levels: usize, log2_t: u32) -> (HashGrid, ParamStore) {
        let cfg = HashGridConfig {
            levels,
            log2_table_size: log2_t,
            features_per_entry: 2,
            n_min: 4,
            n_max: 64,
            bounds: Bounds2::new(-2.0, -1.0, 6.0, 7.0),
        };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = HashGrid::new(cfg, &mut store, "g", 1.0, &mut rng).unwrap();
        (grid, store)
    }

    #[test]
    fn hash_index_fixed_points() {
        assert_eq!(hash_index([0, 0], 1 << 15), 0);
        assert_eq!(hash_index([1, 0], 1 << 15), 1);
        assert_eq!(hash_index([7, 3], 1 << 15), hash_index([7, 3], 1 << 15));
    }

    #[test]
    fn hash_bucket_occupancy_is_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let t = 1usize << 10;
        let mut hist = vec![0usize; t];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        for _ in 0..n {
            let c = [rng.gen_range(0..1u32 << 20), rng.gen_range(0..1u32 << 20)];
            hist[hash_index(c, t)] += 1;
        }
        let expected = n as f64 / t as f64;
        let chi2: f64 = hist.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((t - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2={chi2} p={p}");
    }

    #[test]
    fn resolution_schedule() {
        let cfg = HashGridConfig::default();
        assert_eq!(cfg.level_resolution(0), 16);
        assert_eq!(cfg.level_resolution(14), 1024);
        assert!(cfg.growth_factor() > 1.0);
        assert!(cfg.level_is_dense(0));
        assert!(!cfg.level_is_dense(14));
        for l in 1..cfg.levels {
            assert!(cfg.level_resolution(l) > cfg.level_resolution(l - 1));
        }
    }

    #[test]
    fn exact_at_vertices_and_mean_at_centers() {
        let (grid, store) = small_grid(3, 6);
        let mut tape = EncodeTape::new();
        let b = grid.config.bounds;
        for l in 0..3 {
            let res = grid.level_resolution(l);
            let cellw = b.width() / res as f64;
            let cellh = b.height() / res as f64;
            // vertex (2, 1)
            let p = [b.min[0] + 2.0 * cellw, b.min[1] + cellh];
            grid.encode(&store.values, p, 3, false, &mut tape);
            let off = grid.entry_offset(l, [2, 1]);
            for k in 0..2 {
                assert!((tape.features[l * 2 + k] - store.values[off + k]).abs() < 1e-12);
            }
            // center of cell (2, 1)
            let p = [b.min[0] + 2.5 * cellw, b.min[1] + 1.5 * cellh];
            grid.encode(&store.values, p, 3, false, &mut tape);
            for k in 0..2 {
                let mean: f64 = [[2, 1], [3, 1], [2, 2], [3, 2]]
                    .iter()
                    .map(|c| store.values[grid.entry_offset(l, *c) + k])
                    .sum::<f64>()
                    / 4.0;
                assert!((tape.features[l * 2 + k] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inactive_levels_are_zero() {
        let (grid, store) = small_grid(4, 8);
        let mut tape = EncodeTape::new();
        grid.encode(&store.values, [1.3, 2.2], 2, true, &mut tape);
        assert!(tape.features[4..].iter().all(|&v| v == 0.0));
        assert!(tape.features[..4].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn continuous_across_cell_boundaries() {
        let (grid, store) = small_grid(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut t0, mut t1) = (EncodeTape::new(), EncodeTape::new());
        let b = grid.config.bounds;
        for _ in 0..100 {
            let a = [rng.gen_range(b.min[0]..b.max[0]), rng.gen_range(b.min[1]..b.max[1])];
            let dir = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            // walk the segment in small steps; every step's jump must be tiny
            let mut prev: Option<Vec<f64>> = None;
            for i in 0..=2000 {
                let s = i as f64 * 1e-3;
                let p = [a[0] + s * dir[0], a[1] + s * dir[1]];
                grid.encode(&store.values, p, 4, false, &mut t0);
                if let Some(pv) = &prev {
                    let jump = pv.iter().zip(&t0.features).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    assert!(jump < 0.2, "jump {jump}");
                }
                prev = Some(t0.features.clone());
            }
            // shrinking epsilon shrinks the difference
            grid.encode(&store.values, a, 4, false, &mut t0);
            let mut last = f64::INFINITY;
            for eps in [1e-2, 1e-4, 1e-6] {
                grid.encode(&store.values, [a[0] + eps * dir[0], a[1] + eps * dir[1]], 4, false, &mut t1);
                let d = t0.features.iter().zip(&t1.features).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(d <= last + 1e-15);
                last = d;
            }
            assert!(last < 1e-3);
        }
    }

    #[test]
    fn clamps_outside_domain() {
        let (grid, store) = small_grid(3, 8);
        let (mut t0, mut t1) = (EncodeTape::new(), EncodeTape::new());
        grid.encode(&store.values, [100.0, 3.0], 3, true, &mut t0);
        grid.encode(&store.values, [6.0, 3.0], 3, true, &mut t1);
        assert_eq!(t0.features, t1.features);
        assert!(t0.dfdx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let (grid, store) = small_grid(3, 8);
        let mut tape = EncodeTape::new();
        grid.encode(&store.values, [1.0, 1.0], 3, true, &mut tape);
        let mut grads = vec![0.0; store.len()];
        let zeros = vec![0.0; grid.output_dim()];
        grid.backward(&tape, &zeros, Some(&zeros), Some(&zeros), &mut grads);
        assert!(grads.iter().all(|&g| g == 0.0));
        assert_eq!(grid.position_gradient(&store.values, &tape, &zeros), [0.0, 0.0]);
    }

    #[test]
    fn vertex_query_puts_gradient_on_that_entry_only() {
        let (grid, store) = small_grid(1, 8);
        let b = grid.config.bounds;
        let res = grid.level_resolution(0) as f64;
        let p = [b.min[0] + 3.0 * b.width() / res, b.min[1] + 2.0 * b.height() / res];
        let mut tape = EncodeTape::new();
        grid.encode(&store.values, p, 1, false, &mut tape);
        let mut grads = vec![0.0; store.len()];
        grid.backward(&tape, &[1.0, 1.0], None, None, &mut grads);
        let off = grid.entry_offset(0, [3, 2]);
        assert!((grads[off] - 1.0).abs() < 1e-12 && (grads[off + 1] - 1.0).abs() < 1e-12);
        let total: f64 = grads.iter().map(|g| g.abs()).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    /// Loss = a.f + b.df/dx + c.df/dy; checks table and position gradients
    /// against central differences.
    #[test]
    fn backward_matches_finite_differences() {
        let (grid, mut store) = small_grid(3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = grid.output_dim();
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bx: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let by: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |params: &[f64], p: [f64; 2]| {
            let mut t = EncodeTape::new();
            grid.encode(params, p, 3, true, &mut t);
            (0..dim).map(|k| a[k] * t.features[k] + bx[k] * t.dfdx[k] + by[k] * t.dfdy[k]).sum::<f64>()
        };
        for _ in 0..20 {
            let p = [rng.gen_range(-1.9..5.9), rng.gen_range(-0.9..6.9)];
            let mut tape = EncodeTape::new();
            grid.encode(&store.values, p, 3, true, &mut tape);
            let mut grads = vec![0.0; store.len()];
            grid.backward(&tape, &a, Some(&bx), Some(&by), &mut grads);
            let h = 1e-4;
            let mut worst = 0.0f64;
            for (off, _) in grid.touched(&tape) {
                for k in 0..2 {
                    let i = off + k;
                    let orig = store.values[i];
                    store.values[i] = orig + h;
                    let lp = loss(&store.values, p);
                    store.values[i] = orig - h;
                    let lm = loss(&store.values, p);
                    store.values[i] = orig;
                    let fd = (lp - lm) / (2.0 * h);
                    let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-8);
                    worst = worst.max(rel);
                }
            }
            assert!(worst < 1e-5, "table gradient rel err {worst}");

            // position gradient of a.f (smooth inside a cell)
            let pg = grid.position_gradient(&store.values, &tape, &a);
            let lin = |q: [f64; 2]| {
                let mut t = EncodeTape::new();
                grid.encode(&store.values, q, 3, false, &mut t);
                a.iter().zip(&t.features).map(|(x, y)| x * y).sum::<f64>()
            };
            let hp = 1e-7;
            let fdx = (lin([p[0] + hp, p[1]]) - lin([p[0] - hp, p[1]])) / (2.0 * hp);
            let fdy = (lin([p[0], p[1] + hp]) - lin([p[0], p[1] - hp])) / (2.0 * hp);
            assert!((fdx - pg[0]).abs() < 1e-4 * fdx.abs().max(1.0));
            assert!((fdy - pg[1]).abs() < 1e-4 * fdy.abs().max(1.0));
        }
    }
}
