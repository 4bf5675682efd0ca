use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{raycast_first_hit, Scene};
use crate::dataset::{AltimeterPoint, SonarFrame};
use crate::error::{Error, Result};
use crate::geometry::{polar_direction, SonarIntrinsics, StampedPose, Vec3};
use crate::renderer::KernelAxis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the unit-mean multiplicative speckle.
    #[serde(default)]
    pub speckle_sigma: f64,
    /// Constant added to every pixel.
    #[serde(default)]
    pub floor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { speckle_sigma: 0.0, floor: 0.0 }
    }
}

fn default_fan() -> usize {
    120
}

fn default_gain() -> f64 {
    90.0
}

fn default_normal_step() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Elevation rays per beam.
    #[serde(default = "default_fan")]
    pub fan_rays: usize,
    /// Intensity per radian of elevation at normal incidence.
    #[serde(default = "default_gain")]
    pub gain: f64,
    /// Finite-difference scale for terrain normals.
    #[serde(default = "default_normal_step")]
    pub normal_step: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { fan_rays: default_fan(), gain: default_gain(), normal_step: default_normal_step() }
    }
}

/// Ground-truth separable beam pattern: Gaussian kernel sums over the
/// azimuth and elevation ranges, or identically one when the weight list
/// of an axis is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueBeam {
    theta: Option<(KernelAxis, Vec<f64>)>,
    phi: Option<(KernelAxis, Vec<f64>)>,
}

impl TrueBeam {
    pub fn flat() -> Self {
        TrueBeam { theta: None, phi: None }
    }

    pub fn new(intr: &SonarIntrinsics, theta_weights: &[f64], phi_weights: &[f64]) -> Self {
        let axis = |lo: f64, hi: f64, w: &[f64]| (!w.is_empty()).then(|| (KernelAxis::new(lo, hi, w.len()), w.to_vec()));
        TrueBeam {
            theta: axis(-0.5 * intr.hfov, 0.5 * intr.hfov, theta_weights),
            phi: axis(intr.phi_min, intr.phi_max, phi_weights),
        }
    }

    fn axis_value(axis: &Option<(KernelAxis, Vec<f64>)>, x: f64) -> f64 {
        match axis {
            None => 1.0,
            Some((a, w)) => w.iter().enumerate().map(|(i, wi)| wi * a.kernel(i, x)).sum(),
        }
    }

    pub fn beta_theta(&self, theta: f64) -> f64 {
        Self::axis_value(&self.theta, theta)
    }

    pub fn beta_phi(&self, phi: f64) -> f64 {
        Self::axis_value(&self.phi, phi)
    }

    pub fn gain(&self, theta: f64, phi: f64) -> f64 {
        (self.beta_theta(theta) * self.beta_phi(phi)).max(0.0)
    }
}

/// Per-bin deposit bookkeeping of a noise-free frame; used by tests to
/// inspect layover and shadows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameDeposits {
    /// Row-major (bins x beams) noise-free intensity.
    pub clean: Vec<f64>,
    /// Number of distinct fan rays that deposited into each pixel.
    pub hits: Vec<u32>,
}

/// Noise-free forward image: every fan ray's first hit deposits
/// gain * cos(incidence) * reflectivity * beta_true * dphi into its range bin.
pub fn synthesize_clean(scene: &Scene, pose: &StampedPose, intr: &SonarIntrinsics, cfg: &SynthConfig, beam: &TrueBeam, rng: &mut impl Rng) -> FrameDeposits {
    let (nb, nr) = (intr.n_beams, intr.n_bins);
    let mut out = FrameDeposits { clean: vec![0.0; nb * nr], hits: vec![0; nb * nr] };
    let f = cfg.fan_rays.max(1);
    let dphi = (intr.phi_max - intr.phi_min) / f as f64;
    let origin = pose.pose.translation;
    for beam_idx in 0..nb {
        let theta = intr.beam_azimuth(beam_idx);
        let bt = beam.beta_theta(theta);
        for k in 0..f {
            let phi = intr.phi_min + (k as f64 + rng.gen::<f64>()) * dphi;
            let dir = pose.pose.direction_to_world(&polar_direction(theta, phi));
            let Some(r) = raycast_first_hit(scene, &origin, &dir, intr.r_max) else { continue };
            let Some(bin) = intr.range_to_bin(r) else { continue };
            let p = origin + dir * r;
            let n = scene.normal(p.x, p.y, cfg.normal_step);
            let cos_inc = -(dir.x * n[0] + dir.y * n[1] + dir.z * n[2]);
            let b = (bt * beam.beta_phi(phi)).max(0.0);
            let idx = bin * nb + beam_idx;
            out.clean[idx] += cfg.gain * cos_inc.max(0.0) * scene.reflectivity * b * dphi;
            out.hits[idx] += 1;
        }
    }
    out
}

/// Applies unit-mean Gamma speckle and the additive floor, then clips to [0, 1].
pub fn apply_noise(clean: &[f64], noise: &NoiseConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let speckle = if noise.speckle_sigma > 0.0 {
        let k = 1.0 / (noise.speckle_sigma * noise.speckle_sigma);
        Some(Gamma::new(k, 1.0 / k).map_err(|e| Error::Config(format!("speckle: {e}")))?)
    } else {
        None
    };
    Ok(clean
        .iter()
        .map(|&v| {
            let m = match &speckle {
                Some(g) if v > 0.0 => g.sample(rng),
                _ => 1.0,
            };
            (v * m + noise.floor).clamp(0.0, 1.0)
        })
        .collect())
}

pub fn synthesize_frame(
    scene: &Scene,
    pose: &StampedPose,
    intr: &SonarIntrinsics,
    cfg: &SynthConfig,
    noise: &NoiseConfig,
    beam: &TrueBeam,
    rng: &mut impl Rng,
) -> Result<SonarFrame> {
    let d = synthesize_clean(scene, pose, intr, cfg, beam, rng);
    SonarFrame::from_intensities(intr.n_bins, intr.n_beams, &apply_noise(&d.clean, noise, rng)?)
}

/// Synthesizes all frames in parallel; frame k uses its own stream derived
/// from (seed, k), so the output does not depend on thread scheduling.
pub fn synthesize_frames(
    scene: &Scene,
    poses: &[StampedPose],
    intr: &SonarIntrinsics,
    cfg: &SynthConfig,
    noise: &NoiseConfig,
    beam: &TrueBeam,
    seed: u64,
) -> Result<Vec<SonarFrame>> {
    poses
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            synthesize_frame(scene, p, intr, cfg, noise, beam, &mut rng)
        })
        .collect()
}

/// One nadir reading for every `every`-th pose over the scene box.
pub fn synthesize_altimeter(scene: &Scene, poses: &[StampedPose], every: usize, sigma: f64, rng: &mut impl Rng) -> Result<Vec<AltimeterPoint>> {
    let noise = if sigma > 0.0 { Some(Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("altimeter noise: {e}")))?) } else { None };
    let down = Vec3::new(0.0, 0.0, -1.0);
    let mut out = Vec::new();
    for sp in poses.iter().step_by(every.max(1)) {
        let o = sp.pose.translation;
        if !scene.bounds.contains(o.x, o.y) {
            continue;
        }
        let reach = o.z - scene.z_range().0 + 1.0;
        let Some(r) = raycast_first_hit(scene, &o, &down, reach) else { continue };
        let mut p = o + down * r;
        if let Some(n) = &noise {
            p.z += n.sample(rng);
        }
        out.push(AltimeterPoint { p, w: 1.0 });
    }
    Ok(out)
}

/// Prior-map point cloud: one point per `resolution` cell at the cell's
/// block-averaged terrain height.
pub fn export_prior_pointcloud(scene: &Scene, resolution: f64) -> Result<Vec<AltimeterPoint>> {
    let r = scene.block_average(resolution, 8)?;
    let mut out = Vec::with_capacity(r.len());
    for j in 0..r.ny {
        for i in 0..r.nx {
            let [x, y] = r.cell_center(i, j);
            out.push(AltimeterPoint { p: Vec3::new(x, y, r.values[r.index(i, j)]), w: 1.0 });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Bounds2;
    use crate::geometry::Pose;
    use crate::simulator::Primitive;

    fn intr() -> SonarIntrinsics {
        SonarIntrinsics {
            r_min: 0.5,
            r_max: 20.0,
            hfov: 60f64.to_radians(),
            phi_min: -10f64.to_radians(),
            phi_max: 10f64.to_radians(),
            n_beams: 16,
            n_bins: 200,
        }
    }

    fn pose(z: f64, pitch: f64) -> StampedPose {
        StampedPose { frame_id: 0, time: 0.0, pose: Pose::from_euler(0.0, pitch, 0.0, Vec3::new(0.0, 0.0, z)) }
    }

    #[test]
    fn flat_floor_onset_and_monotone_decay() {
        let scene = Scene::flat(Bounds2::new(-50.0, -50.0, 50.0, 50.0), 0.0);
        let i = intr();
        let pitch = 25f64.to_radians();
        let cfg = SynthConfig { fan_rays: 2000, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = synthesize_clean(&scene, &pose(4.0, pitch), &i, &cfg, &TrueBeam::flat(), &mut rng);
        // center beam: onset at the steepest ray, altitude / sin(pitch + 10 deg)
        let beam = 8;
        let onset = 4.0 / (pitch + 10f64.to_radians()).sin();
        let onset_bin = i.range_to_bin(onset).unwrap();
        for bin in 0..onset_bin.saturating_sub(1) {
            assert_eq!(d.clean[bin * i.n_beams + beam], 0.0, "bin {bin} before onset");
        }
        assert!(d.clean[(onset_bin + 2) * i.n_beams + beam] > 0.0);
        // smoothed over 8 bins the profile decreases with range (grazing cosine and shrinking dphi per bin)
        let far = i.range_to_bin(4.0 / (pitch - 10f64.to_radians()).sin()).unwrap();
        let col: Vec<f64> = (0..i.n_bins).map(|b| d.clean[b * i.n_beams + beam]).collect();
        let chunks: Vec<f64> = col[onset_bin + 2..far - 2].chunks(8).filter(|c| c.len() == 8).map(|c| c.iter().sum()).collect();
        assert!(chunks.windows(2).all(|w| w[1] <= w[0] * 1.05), "{chunks:?}");
        assert!(chunks.first().unwrap() > &(2.0 * chunks.last().unwrap()));
    }

    #[test]
    fn wall_casts_a_shadow_and_creates_layover() {
        // wall of height 2 m facing the sonar at x = 8
        let scene = Scene::analytic(
            Bounds2::new(-50.0, -50.0, 50.0, 50.0),
            vec![Primitive::Ridge { x0: 8.5, y0: -30.0, x1: 8.5, y1: 30.0, half_width: 0.5, height: 2.0 }],
            1.0,
        )
        .unwrap();
        let i = intr();
        let cfg = SynthConfig { fan_rays: 800, ..Default::default() };
        let sp = pose(4.0, 20f64.to_radians());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = synthesize_clean(&scene, &sp, &i, &cfg, &TrueBeam::flat(), &mut rng);
        let beam = 8;
        let theta = i.beam_azimuth(beam);
        // the ray grazing the ridge's far top edge (x = 9, z = 2) lands on the floor at x_s
        let (xe, ze) = (9.0 / theta.cos(), 2.0);
        let x_s = xe * 4.0 / (4.0 - ze);
        let r_edge = (xe * xe + (4.0 - ze).powi(2)).sqrt();
        let r_shadow_end = (x_s * x_s + 16.0).sqrt();
        let b0 = i.range_to_bin(r_edge).unwrap() + 2;
        let b1 = i.range_to_bin(r_shadow_end).unwrap() - 1;
        assert!(b1 > b0 + 5, "shadow too short to test");
        for b in b0..b1 {
            assert_eq!(d.clean[b * i.n_beams + beam], 0.0, "bin {b} inside shadow");
        }
        assert!(d.clean[(b1 + 3) * i.n_beams + beam] > 0.0);
        // the wall face and the floor in front of it share range bins
        let layover = (0..i.n_bins).any(|b| d.hits[b * i.n_beams + beam] >= 2);
        assert!(layover);
        let noisy = apply_noise(&d.clean, &NoiseConfig { speckle_sigma: 0.3, floor: 0.01 }, &mut rng).unwrap();
        for b in b0..b1 {
            assert_eq!(noisy[b * i.n_beams + beam], 0.01);
        }
    }

    #[test]
    fn intensity_scales_with_reflectivity() {
        let mut scene = Scene::flat(Bounds2::new(-50.0, -50.0, 50.0, 50.0), 0.0);
        let i = intr();
        let sp = pose(4.0, 0.4);
        let cfg = SynthConfig::default();
        let a = synthesize_clean(&scene, &sp, &i, &cfg, &TrueBeam::flat(), &mut ChaCha8Rng::seed_from_u64(3));
        scene.reflectivity = 0.5;
        let b = synthesize_clean(&scene, &sp, &i, &cfg, &TrueBeam::flat(), &mut ChaCha8Rng::seed_from_u64(3));
        let (sa, sb): (f64, f64) = (a.clean.iter().sum(), b.clean.iter().sum());
        assert!(sa > 0.0 && (sb - 0.5 * sa).abs() < 1e-9 * sa);
    }

    #[test]
    fn speckle_has_unit_mean() {
        let clean = vec![0.1; 200_000];
        let noisy = apply_noise(&clean, &NoiseConfig { speckle_sigma: 0.5, floor: 0.0 }, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
        assert!((mean - 0.1).abs() < 0.001, "{mean}");
    }

    #[test]
    fn altimeter_points_lie_on_the_surface() {
        let scene = Scene::flat(Bounds2::new(-10.0, -10.0, 10.0, 10.0), 0.0);
        let poses: Vec<StampedPose> = (0..10)
            .map(|k| StampedPose { frame_id: k, time: k as f64, pose: Pose::from_euler(0.0, 0.3, 0.0, Vec3::new(k as f64, 1.0, 5.0)) })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = synthesize_altimeter(&scene, &poses, 2, 0.0, &mut rng).unwrap();
        assert_eq!(pts.len(), 5);
        assert!((pts[1].p - Vec3::new(2.0, 1.0, 0.0)).norm() < 1e-6);
        let bumpy = super::super::minirocks(&Default::default());
        let pts = synthesize_altimeter(&bumpy, &poses, 1, 0.0, &mut rng).unwrap();
        for p in pts {
            assert!((p.p.z - bumpy.height(p.p.x, p.p.y)).abs() < 1e-6);
        }
    }

    #[test]
    fn prior_pointcloud_counts() {
        let scene = Scene::flat(Bounds2::new(0.0, 0.0, 10.0, 10.0), 2.0);
        let pts = export_prior_pointcloud(&scene, 1.0).unwrap();
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|p| (p.p.z - 2.0).abs() < 1e-12));
    }

    #[test]
    fn true_beam_layout() {
        let i = intr();
        let b = TrueBeam::new(&i, &[], &[1.0]);
        assert_eq!(b.beta_theta(0.3), 1.0);
        assert_eq!(b.gain(0.0, 0.0), 1.0);
        assert!(b.gain(0.0, i.phi_max) < 1.0);
    }
}
