use std::io::Write;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::encoding::Bounds2;
use crate::error::{Error, Result};
use crate::geometry::{local_to_polar, Vec3};
use crate::model::SonarModel;
use crate::raster::HeightRaster;
use crate::trainer::GroundBand;

/// Model heights at the cell centres of a `resolution` raster over `bounds`.
pub fn grid_heightfield(model: &SonarModel, bounds: &Bounds2, resolution: f64) -> Result<HeightRaster> {
    let mut r = HeightRaster::covering(bounds, resolution)?;
    let nx = r.nx;
    let layout = r.clone();
    r.values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = model.query_height(layout.cell_center(i, j));
        }
    });
    Ok(r)
}

const BAND_PROBES: usize = 5;

/// Number of frames whose field of view covers each cell of `layout`,
/// with the seabed taken anywhere inside `band`.
pub fn ensonification_count(dataset: &Dataset, layout: &HeightRaster, band: &GroundBand) -> Result<Vec<u32>> {
    if dataset.poses.is_empty() {
        return Ok(vec![0; layout.len()]);
    }
    let intr = dataset.intrinsics()?;
    let nx = layout.nx;
    let mut counts = vec![0u32; layout.len()];
    counts.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, c) in row.iter_mut().enumerate() {
            let [x, y] = layout.cell_center(i, j);
            for sp in &dataset.poses {
                let t = sp.pose.translation;
                if (x - t.x).abs() > intr.r_max || (y - t.y).abs() > intr.r_max {
                    continue;
                }
                let seen = (0..BAND_PROBES).any(|k| {
                    let z = band.z_lo + (band.z_hi - band.z_lo) * k as f64 / (BAND_PROBES - 1) as f64;
                    intr.contains(&local_to_polar(&sp.pose.world_to_local(&Vec3::new(x, y, z))))
                });
                *c += u32::from(seen);
            }
        }
    });
    Ok(counts)
}

/// Invalidates cells seen by fewer than `min_count` frames and stores the
/// counts on the raster.
pub fn apply_ensonification_mask(raster: &mut HeightRaster, counts: Vec<u32>, min_count: u32) -> Result<()> {
    if counts.len() != raster.len() {
        return Err(Error::Dimension { expected: raster.len(), got: counts.len() });
    }
    for (v, &c) in raster.valid.iter_mut().zip(&counts) {
        *v = *v && c >= min_count;
    }
    raster.counts = counts;
    Ok(())
}

/// Horizontal height gradients on a raster layout: exact (from the
/// network's forward-mode tangents) and central differences of the
/// gridded heights (one-sided at the edges).
#[derive(Clone, Debug)]
pub struct GradientMaps {
    pub heights: HeightRaster,
    pub exact: [HeightRaster; 2],
    pub fd: [HeightRaster; 2],
}

pub fn gradient_maps(model: &SonarModel, bounds: &Bounds2, resolution: f64) -> Result<GradientMaps> {
    let heights = grid_heightfield(model, bounds, resolution)?;
    let mut gx = heights.clone();
    let mut gy = heights.clone();
    for j in 0..heights.ny {
        for i in 0..heights.nx {
            let (_, g) = model.query_gradient(heights.cell_center(i, j));
            let k = heights.index(i, j);
            gx.values[k] = g[0];
            gy.values[k] = g[1];
        }
    }
    let fd = finite_difference_gradient(&heights);
    Ok(GradientMaps { heights, exact: [gx, gy], fd })
}

pub fn finite_difference_gradient(r: &HeightRaster) -> [HeightRaster; 2] {
    let mut gx = r.clone();
    let mut gy = r.clone();
    let span = |a: usize, n: usize| (a.saturating_sub(1), (a + 1).min(n - 1));
    let v = |i: usize, j: usize| r.values[r.index(i, j)];
    for j in 0..r.ny {
        for i in 0..r.nx {
            let k = r.index(i, j);
            let (i0, i1) = span(i, r.nx);
            let (j0, j1) = span(j, r.ny);
            gx.values[k] = if i1 > i0 { (v(i1, j) - v(i0, j)) / ((i1 - i0) as f64 * r.cell) } else { 0.0 };
            gy.values[k] = if j1 > j0 { (v(i, j1) - v(i, j0)) / ((j1 - j0) as f64 * r.cell) } else { 0.0 };
        }
    }
    [gx, gy]
}

pub fn write_gradient_csv(mut w: impl Write, maps: &GradientMaps) -> Result<()> {
    writeln!(w, "x,y,height,gx_exact,gy_exact,gx_fd,gy_fd")?;
    let h = &maps.heights;
    for j in 0..h.ny {
        for i in 0..h.nx {
            let [x, y] = h.cell_center(i, j);
            let k = h.index(i, j);
            writeln!(
                w,
                "{x},{y},{},{},{},{},{}",
                h.values[k], maps.exact[0].values[k], maps.exact[1].values[k], maps.fd[0].values[k], maps.fd[1].values[k]
            )?;
        }
    }
    Ok(())
}

/// Beam pattern factors sampled every degree over each axis' range.
pub fn beam_pattern_rows(model: &SonarModel) -> Vec<(&'static str, f64, f64)> {
    let c = &model.beam.config;
    let p = model.params();
    let mut out = Vec::new();
    let mut sweep = |axis: &'static str, lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| {
        let (a, b) = (lo.to_degrees().ceil() as i64, hi.to_degrees().floor() as i64);
        for d in a..=b {
            out.push((axis, d as f64, f((d as f64).to_radians())));
        }
    };
    sweep("theta", c.theta_min, c.theta_max, &|t| model.beam.beta_theta(p, t));
    sweep("phi", c.phi_min, c.phi_max, &|t| model.beam.beta_phi(p, t));
    out
}

pub fn write_beam_pattern_csv(mut w: impl Write, model: &SonarModel) -> Result<()> {
    writeln!(w, "axis,angle_deg,beta")?;
    for (axis, deg, beta) in beam_pattern_rows(model) {
        writeln!(w, "{axis},{deg},{beta}")?;
    }
    Ok(())
}
