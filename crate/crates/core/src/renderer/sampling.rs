use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolarPoint;

/// Numerically stable logistic of s * delta.
pub fn sigmoid_phi(delta: f64, s: f64) -> f64 {
    let x = s * delta;
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of `sigmoid_phi` with respect to delta.
pub fn s_density(delta: f64, s: f64) -> f64 {
    let e = (-s * delta.abs()).exp();
    s * e / ((1.0 + e) * (1.0 + e))
}

pub const OPACITY_FLOOR: f64 = 1e-12;

/// Clamped relative drop of the sigmoid between two consecutive samples.
pub fn opacity_from_phi(phi_i: f64, phi_next: f64) -> f64 {
    (1.0 - phi_next / phi_i.max(OPACITY_FLOOR)).max(0.0)
}

pub fn opacity(delta_i: f64, delta_next: f64, s: f64) -> f64 {
    opacity_from_phi(sigmoid_phi(delta_i, s), sigmoid_phi(delta_next, s))
}

/// Partial derivatives of `opacity_from_phi` with respect to (phi_i, phi_next).
pub fn opacity_grad(phi_i: f64, phi_next: f64) -> (f64, f64) {
    let d = phi_i.max(OPACITY_FLOOR);
    if 1.0 - phi_next / d <= 0.0 {
        return (0.0, 0.0);
    }
    let di = if phi_i >= OPACITY_FLOOR { phi_next / (d * d) } else { 0.0 };
    (di, -1.0 / d)
}

pub fn transmittance(alphas: &[f64]) -> f64 {
    alphas.iter().map(|a| 1.0 - a).product()
}

fn default_n_stratified() -> usize {
    15
}

fn default_n_ray() -> usize {
    60
}

/// Sample counts along the elevation arc and along each ray. The arc
/// limits are radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    #[serde(default = "default_n_stratified")]
    pub n_arc_stratified: usize,
    #[serde(default = "default_n_stratified")]
    pub n_arc_importance: usize,
    #[serde(default = "default_n_ray")]
    pub n_ray: usize,
    #[serde(default)]
    pub phi_min: f64,
    #[serde(default)]
    pub phi_max: f64,
}

impl SamplingConfig {
    pub fn new(n_arc_stratified: usize, n_arc_importance: usize, n_ray: usize, phi_min: f64, phi_max: f64) -> Self {
        SamplingConfig { n_arc_stratified, n_arc_importance, n_ray, phi_min, phi_max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_arc_stratified == 0 || self.n_arc_importance == 0 {
            return Err(Error::Config("arc sample counts must be at least 1".into()));
        }
        if self.n_ray < 2 {
            return Err(Error::Config("n_ray must be at least 2".into()));
        }
        if !(self.phi_max > self.phi_min) {
            return Err(Error::Config("empty elevation interval".into()));
        }
        Ok(())
    }

    pub fn arc_len(&self) -> usize {
        self.n_arc_stratified + self.n_arc_importance
    }
}

/// One uniform draw per equal sub-interval of [lo, hi].
pub fn stratified(lo: f64, hi: f64, n: usize, rng: &mut (impl Rng + ?Sized), out: &mut Vec<f64>) {
    let w = (hi - lo) / n as f64;
    out.clear();
    out.extend((0..n).map(|k| lo + (k as f64 + rng.gen::<f64>()) * w));
}

/// Midpoints of n equal sub-intervals of [lo, hi].
pub fn stratum_midpoints(lo: f64, hi: f64, n: usize, out: &mut Vec<f64>) {
    let w = (hi - lo) / n as f64;
    out.clear();
    out.extend((0..n).map(|k| lo + (k as f64 + 0.5) * w));
}

pub fn sample_arc_stratified(cfg: &SamplingConfig, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::new();
    stratified(cfg.phi_min, cfg.phi_max, cfg.n_arc_stratified, rng, &mut out);
    out
}

/// Bin edges around sorted coarse samples: midpoints between neighbours,
/// closed by the arc limits.
pub fn coarse_bin_edges(coarse: &[f64], lo: f64, hi: f64, edges: &mut Vec<f64>) {
    edges.clear();
    edges.push(lo);
    edges.extend(coarse.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(hi);
}

/// Maps sorted uniforms in [0, 1) through the inverse CDF of the piecewise
/// constant density taking value `weights[k]` (unnormalized) on bin k.
/// Falls back to uniform over [edges[0], edges[last]] when the weights are
/// all negligible.
pub fn inverse_cdf(edges: &[f64], weights: &[f64], us: &[f64], out: &mut Vec<f64>) {
    debug_assert_eq!(edges.len(), weights.len() + 1);
    out.clear();
    let lo = edges[0];
    let hi = edges[edges.len() - 1];
    if weights.iter().all(|w| *w < 1e-12) {
        out.extend(us.iter().map(|u| lo + u * (hi - lo)));
        return;
    }
    let masses: Vec<f64> = weights.iter().zip(edges.windows(2)).map(|(w, e)| w.max(0.0) * (e[1] - e[0])).collect();
    let total: f64 = masses.iter().sum();
    let mut bin = 0;
    let mut cum = 0.0;
    for &u in us {
        let target = u * total;
        while bin + 1 < masses.len() && cum + masses[bin] <= target {
            cum += masses[bin];
            bin += 1;
        }
        // skip zero-mass bins reached by rounding
        while bin + 1 < masses.len() && masses[bin] == 0.0 {
            bin += 1;
        }
        let frac = if masses[bin] > 0.0 { ((target - cum) / masses[bin]).clamp(0.0, 1.0) } else { 0.5 };
        let x = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
        out.push(x.min(hi).max(lo));
    }
}

/// Importance samples over the arc from the S-density of coarse deltas.
/// Returns `cfg.n_arc_importance` sorted elevations.
pub fn sample_arc_importance(cfg: &SamplingConfig, coarse_phis: &[f64], coarse_deltas: &[f64], s: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut edges = Vec::new();
    coarse_bin_edges(coarse_phis, cfg.phi_min, cfg.phi_max, &mut edges);
    let weights: Vec<f64> = coarse_deltas.iter().map(|d| s_density(*d, s)).collect();
    let mut us: Vec<f64> = (0..cfg.n_arc_importance).map(|_| rng.gen::<f64>()).collect();
    us.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    inverse_cdf(&edges, &weights, &us, &mut out);
    out
}

/// Ranges of the interior ray samples: n uniform draws (or fixed stratum
/// midpoints without an rng) over [lo, hi), strictly increasing.
pub fn ray_ranges(lo: f64, hi: f64, n: usize, rng: Option<&mut dyn RngCore>, out: &mut Vec<f64>) {
    match rng {
        Some(rng) => stratified(lo, hi, n, rng, out),
        None => stratum_midpoints(lo, hi, n, out),
    }
}

/// Samples along the ray ending at `arc_point`: n-1 points over
/// [r_min, r_end) with the arc point itself last.
pub fn sample_ray(arc_point: PolarPoint, n: usize, r_min: f64, r_end: f64, rng: Option<&mut dyn RngCore>) -> Vec<PolarPoint> {
    assert!(n >= 2, "a ray needs at least one interior sample");
    let hi = r_end.min(arc_point.r);
    let lo = r_min.min(0.5 * hi);
    let mut ranges = Vec::new();
    ray_ranges(lo, hi, n - 1, rng, &mut ranges);
    let mut out: Vec<PolarPoint> = ranges.into_iter().map(|r| PolarPoint { r, ..arc_point }).collect();
    out.push(arc_point);
    out
}
