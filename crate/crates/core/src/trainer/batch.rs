use std::ops::Range;

use rand::Rng;

use crate::dataset::AltimeterPoint;
use crate::geometry::{polar_direction, Pose, SonarIntrinsics};

/// One frame/beam pair; its range column supplies the pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchItem {
    pub frame: usize,
    pub beam: usize,
}

/// `count` frames drawn uniformly with replacement, one uniform beam each.
pub fn sample_batch(n_frames: usize, n_beams: usize, count: usize, rng: &mut impl Rng) -> Vec<BatchItem> {
    if n_frames == 0 || n_beams == 0 {
        return Vec::new();
    }
    (0..count).map(|_| BatchItem { frame: rng.gen_range(0..n_frames), beam: rng.gen_range(0..n_beams) }).collect()
}

/// Vertical band that must contain the seabed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundBand {
    pub z_lo: f64,
    pub z_hi: f64,
}

impl GroundBand {
    pub fn from_altimeter(points: &[AltimeterPoint], margin: f64) -> Option<Self> {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.p.z), hi.max(p.p.z)));
        (lo <= hi).then(|| GroundBand { z_lo: lo - margin, z_hi: hi + margin })
    }
}

const ELEVATION_PROBES: usize = 33;

/// Range bins of `beam` whose elevation arc can reach the ground band:
/// nearer bins only see water, farther ones lie past every possible return.
pub fn valid_bins(intr: &SonarIntrinsics, pose: &Pose, beam: usize, band: Option<&GroundBand>) -> Range<usize> {
    let Some(band) = band else { return 0..intr.n_bins };
    let theta = intr.beam_azimuth(beam);
    let z = pose.translation.z;
    let (mut near, mut far) = (f64::INFINITY, 0.0f64);
    for k in 0..ELEVATION_PROBES {
        let phi = intr.phi_min + (intr.phi_max - intr.phi_min) * k as f64 / (ELEVATION_PROBES - 1) as f64;
        let dz = pose.direction_to_world(&polar_direction(theta, phi)).z;
        if z <= band.z_hi {
            near = 0.0;
        } else if dz < 0.0 {
            near = near.min((z - band.z_hi) / -dz);
        }
        if dz >= 0.0 || z <= band.z_lo {
            far = f64::INFINITY;
        } else {
            far = far.max((z - band.z_lo) / -dz);
        }
    }
    let bw = intr.bin_width();
    let lo = if near.is_finite() { ((near - intr.r_min) / bw - 1.0).floor().max(0.0) as usize } else { intr.n_bins };
    let hi = if far.is_finite() { (((far - intr.r_min) / bw).ceil() as usize + 1).min(intr.n_bins) } else { intr.n_bins };
    lo.min(hi)..hi
}
