use crate::error::{Error, Result};
use crate::raster::HeightRaster;

fn check_aligned(a: &HeightRaster, b: &HeightRaster) -> Result<()> {
    if a.same_layout(b) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "rasters are not aligned: {}x{} cell {} at {:?} vs {}x{} cell {} at {:?}",
            a.nx, a.ny, a.cell, a.origin, b.nx, b.ny, b.cell, b.origin
        )))
    }
}

/// Mean absolute error and population standard deviation of the signed
/// error `est - truth` over jointly valid cells.
pub fn mae_std(est: &HeightRaster, truth: &HeightRaster) -> Result<(f64, f64)> {
    check_aligned(est, truth)?;
    let errs: Vec<f64> = (0..est.len()).filter(|&k| est.valid[k] && truth.valid[k]).map(|k| est.values[k] - truth.values[k]).collect();
    if errs.is_empty() {
        return Err(Error::Empty("no jointly valid cells"));
    }
    let n = errs.len() as f64;
    let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok((mae, var.sqrt()))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const GRAY_MAX: f64 = 65535.0;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Both rasters mapped to 16-bit gray levels using the value range of the
/// jointly valid cells of both.
pub fn to_gray16(est: &HeightRaster, truth: &HeightRaster) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    check_aligned(est, truth)?;
    let joint: Vec<bool> = (0..est.len()).map(|k| est.valid[k] && truth.valid[k]).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in (0..est.len()).filter(|&k| joint[k]) {
        lo = lo.min(est.values[k]).min(truth.values[k]);
        hi = hi.max(est.values[k]).max(truth.values[k]);
    }
    if lo > hi {
        return Err(Error::Empty("no jointly valid cells"));
    }
    let span = hi - lo;
    let map = |v: f64| if span > 0.0 { ((v - lo) / span * GRAY_MAX).round() } else { 0.0 };
    let a = est.values.iter().zip(&joint).map(|(&v, &ok)| if ok { map(v) } else { 0.0 }).collect();
    let b = truth.values.iter().zip(&joint).map(|(&v, &ok)| if ok { map(v) } else { 0.0 }).collect();
    Ok((a, b, joint))
}

/// SSIM of two equally sized gray images over every 11x11 window whose
/// cells are all valid. Uses separable Gaussian filtering.
pub fn ssim_images(a: &[f64], b: &[f64], valid: &[bool], nx: usize, ny: usize) -> Result<f64> {
    let w = SSIM_WINDOW;
    if nx < w || ny < w {
        return Err(Error::Empty("image smaller than the SSIM window"));
    }
    let taps = gaussian_taps();
    let (ox, oy) = (nx - w + 1, ny - w + 1);
    // horizontal pass then vertical pass of the five moment images
    let prod = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut h = vec![0.0; ox * ny];
        for j in 0..ny {
            for i in 0..ox {
                let mut s = 0.0;
                for (t, wt) in taps.iter().enumerate() {
                    s += wt * f(j * nx + i + t);
                }
                h[j * ox + i] = s;
            }
        }
        let mut v = vec![0.0; ox * oy];
        for j in 0..oy {
            for i in 0..ox {
                let mut s = 0.0;
                for (t, wt) in taps.iter().enumerate() {
                    s += wt * h[(j + t) * ox + i];
                }
                v[j * ox + i] = s;
            }
        }
        v
    };
    let mu_a = prod(&|k| a[k]);
    let mu_b = prod(&|k| b[k]);
    let aa = prod(&|k| a[k] * a[k]);
    let bb = prod(&|k| b[k] * b[k]);
    let ab = prod(&|k| a[k] * b[k]);
    // windows containing an invalid cell are skipped: count invalid cells per window
    let mut bad = vec![0u32; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let own = u32::from(!valid[j * nx + i]);
            let up = if j > 0 { bad[(j - 1) * nx + i] } else { 0 };
            let left = if i > 0 { bad[j * nx + i - 1] } else { 0 };
            let diag = if i > 0 && j > 0 { bad[(j - 1) * nx + i - 1] } else { 0 };
            bad[j * nx + i] = own + up + left - diag;
        }
    }
    let rect = |i: usize, j: usize| {
        let at = |x: usize, y: usize| if x == 0 || y == 0 { 0 } else { bad[(y - 1) * nx + x - 1] };
        at(i + w, j + w) + at(i, j) - at(i, j + w) - at(i + w, j)
    };
    let c1 = (SSIM_K1 * GRAY_MAX).powi(2);
    let c2 = (SSIM_K2 * GRAY_MAX).powi(2);
    let (mut sum, mut count) = (0.0, 0usize);
    for j in 0..oy {
        for i in 0..ox {
            if rect(i, j) != 0 {
                continue;
            }
            let k = j * ox + i;
            let (ma, mb) = (mu_a[k], mu_b[k]);
            let va = aa[k] - ma * ma;
            let vb = bb[k] - mb * mb;
            let cov = ab[k] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("no fully valid SSIM window"));
    }
    Ok(sum / count as f64)
}

/// Structural similarity of two aligned heightmaps treated as 16-bit
/// gray images, over the bounding box of their jointly valid cells.
pub fn ssim(est: &HeightRaster, truth: &HeightRaster) -> Result<f64> {
    let (a, b, joint) = to_gray16(est, truth)?;
    let (nx, ny) = (est.nx, est.ny);
    let (mut i0, mut i1, mut j0, mut j1) = (nx, 0, ny, 0);
    for j in 0..ny {
        for i in 0..nx {
            if joint[j * nx + i] {
                i0 = i0.min(i);
                i1 = i1.max(i + 1);
                j0 = j0.min(j);
                j1 = j1.max(j + 1);
            }
        }
    }
    let (cx, cy) = (i1 - i0, j1 - j0);
    let crop = |v: &[f64]| -> Vec<f64> { (j0..j1).flat_map(|j| (i0..i1).map(move |i| (j, i))).map(|(j, i)| v[j * nx + i]).collect() };
    let valid: Vec<bool> = (j0..j1).flat_map(|j| (i0..i1).map(move |i| (j, i))).map(|(j, i)| joint[j * nx + i]).collect();
    ssim_images(&crop(&a), &crop(&b), &valid, cx, cy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raster(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> HeightRaster {
        let mut r = HeightRaster::new([0.0, 0.0], 0.1, nx, ny).unwrap();
        for j in 0..ny {
            for i in 0..nx {
                r.values[j * nx + i] = f(i, j);
            }
        }
        r
    }

    #[test]
    fn mae_std_examples() {
        let t = raster(4, 3, |i, j| (i * j) as f64);
        assert_eq!(mae_std(&t, &t).unwrap(), (0.0, 0.0));
        let mut a = raster(2, 1, |_, _| 0.0);
        let b = a.clone();
        a.values = vec![1.0, -1.0];
        assert_eq!(mae_std(&a, &b).unwrap(), (1.0, 1.0));
        a.valid = vec![false, false];
        assert!(mae_std(&a, &b).is_err());
        let c = HeightRaster::new([0.0, 0.0], 0.2, 2, 1).unwrap();
        assert!(mae_std(&c, &b).is_err());
    }

    #[test]
    fn mae_std_matches_streaming_oracle_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = raster(30, 20, |_, _| rng.gen_range(-2.0..2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = raster(30, 20, |_, _| rng.gen_range(-2.0..2.0));
        for k in (0..b.len()).step_by(7) {
            b.valid[k] = false;
        }
        // Welford pass
        let (mut n, mut mean, mut m2, mut abs) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..a.len() {
            if !b.valid[k] {
                continue;
            }
            let e = a.values[k] - b.values[k];
            n += 1.0;
            let d = e - mean;
            mean += d / n;
            m2 += d * (e - mean);
            abs += e.abs();
        }
        let (mae, std) = mae_std(&a, &b).unwrap();
        assert!((mae - abs / n).abs() < 1e-12);
        assert!((std - (m2 / n).sqrt()).abs() < 1e-12);
        let (mae2, std2) = mae_std(&b, &a).unwrap();
        assert!((mae - mae2).abs() < 1e-12 && (std - std2).abs() < 1e-12);
    }

    /// Direct 2-D windowed SSIM written independently of the separable
    /// implementation.
    fn ssim_direct(a: &[f64], b: &[f64], nx: usize, ny: usize) -> f64 {
        let mut w2 = [[0.0; 11]; 11];
        let mut tot = 0.0;
        for (u, row) in w2.iter_mut().enumerate() {
            for (v, x) in row.iter_mut().enumerate() {
                *x = (-(((u as f64 - 5.0).powi(2) + (v as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5))).exp();
                tot += *x;
            }
        }
        let c1 = (0.01f64 * 65535.0).powi(2);
        let c2 = (0.03f64 * 65535.0).powi(2);
        let mut acc = 0.0;
        let mut n = 0;
        for j in 0..=ny - 11 {
            for i in 0..=nx - 11 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for v in 0..11 {
                    for u in 0..11 {
                        let k = (j + v) * nx + i + u;
                        ma += w2[v][u] / tot * a[k];
                        mb += w2[v][u] / tot * b[k];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for v in 0..11 {
                    for u in 0..11 {
                        let k = (j + v) * nx + i + u;
                        let wt = w2[v][u] / tot;
                        va += wt * (a[k] - ma).powi(2);
                        vb += wt * (b[k] - mb).powi(2);
                        cov += wt * (a[k] - ma) * (b[k] - mb);
                    }
                }
                acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1;
            }
        }
        acc / n as f64
    }

    #[test]
    fn ssim_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..64 * 64).map(|k| ((k % 64) as f64 * 700.0 + rng.gen_range(0.0..9000.0)).round()).collect();
        let b: Vec<f64> = a.iter().map(|v| (v * 0.8 + rng.gen_range(0.0..12000.0)).round()).collect();
        let fast = ssim_images(&a, &b, &vec![true; 64 * 64], 64, 64).unwrap();
        let slow = ssim_direct(&a, &b, 64, 64);
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        assert!(fast > 0.0 && fast < 1.0);
    }

    #[test]
    fn ssim_examples() {
        let t = raster(40, 30, |i, j| ((i as f64) * 0.3).sin() + 0.05 * j as f64);
        assert!((ssim(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let shifted = raster(40, 30, |i, j| t.values[j * 40 + i] + 0.5);
        assert!(ssim(&t, &shifted).unwrap() < 1.0);
        // each map normalized to its own range
        let own = |r: &HeightRaster| {
            let (lo, hi) = r.min_max().unwrap();
            let mut o = r.clone();
            o.values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
            o
        };
        assert!(ssim(&own(&t), &own(&shifted)).unwrap() >= 0.99);
        let c = raster(20, 20, |_, _| 3.0);
        assert_eq!(ssim(&c, &c).unwrap(), 1.0);
        assert!(ssim(&raster(5, 5, |_, _| 0.0), &raster(5, 5, |_, _| 0.0)).is_err());
    }

    #[test]
    fn ssim_ignores_windows_touching_invalid_cells() {
        let t = raster(30, 30, |i, j| (i + 2 * j) as f64);
        let mut e = raster(30, 30, |i, j| (i + 2 * j) as f64);
        // garbage under an invalid block
        for j in 0..30 {
            for i in 0..12 {
                e.values[j * 30 + i] = -100.0 * (i as f64);
                e.valid[j * 30 + i] = false;
            }
        }
        let s = ssim(&e, &t).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }
}
