use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::sampling::{
    coarse_bin_edges, inverse_cdf, opacity_from_phi, opacity_grad, ray_ranges, s_density, sigmoid_phi, stratified, stratum_midpoints,
    SamplingConfig,
};
use crate::field::{FieldQuery, HeightTape, RadianceTape};
use crate::geometry::{polar_direction, polar_to_local, PolarPoint, Pose, SonarIntrinsics, Vec3};
use crate::model::SonarModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    /// Random arc and ray samples.
    Train,
    /// Stratum midpoints and quantile importance samples; no randomness.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    pub sampling: SamplingConfig,
    /// Ray samples start here, skipping the transducer near field.
    pub r_min_render: f64,
    /// Radial extent of the section an arc point's opacity is measured over.
    pub bin_width: f64,
    pub active_levels: usize,
    pub mode: RenderMode,
}

impl RenderSettings {
    pub fn new(intrinsics: &SonarIntrinsics, counts: (usize, usize, usize), active_levels: usize, mode: RenderMode) -> Self {
        RenderSettings {
            sampling: SamplingConfig::new(counts.0, counts.1, counts.2, intrinsics.phi_min, intrinsics.phi_max),
            r_min_render: 0.5,
            bin_width: intrinsics.bin_width(),
            active_levels,
            mode,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct ArcState {
    phi: f64,
    world: Vec3,
    transmittance: f64,
    alpha: f64,
    radiance: f64,
    beta: f64,
    h: f64,
    normal: [f64; 3],
}

/// Everything one pixel render keeps for its backward pass. Reused across
/// pixels to avoid reallocating tapes.
#[derive(Clone, Debug, Default)]
pub struct PixelWorkspace {
    r: f64,
    theta: f64,
    intensity: f64,
    n_ray: usize,
    arc: Vec<ArcState>,
    /// Per arc point, n_ray + 1 samples: interior, section start, section end.
    deltas: Vec<f64>,
    sig: Vec<f64>,
    alphas: Vec<f64>,
    sample_tapes: Vec<HeightTape>,
    point_tapes: Vec<HeightTape>,
    rad_tapes: Vec<RadianceTape>,
    coarse: Vec<f64>,
    coarse_weights: Vec<f64>,
    fine: Vec<f64>,
    edges: Vec<f64>,
    us: Vec<f64>,
    ranges: Vec<f64>,
    g_sig: Vec<f64>,
    scratch: HeightTape,
}

/// Per arc point record of a rendered pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcPointRecord {
    pub phi: f64,
    pub world: Vec3,
    pub query: FieldQuery,
    pub transmittance: f64,
    pub alpha: f64,
    pub radiance: f64,
    pub beta: f64,
}

impl ArcPointRecord {
    pub fn contribution(&self) -> f64 {
        self.beta * self.transmittance * self.alpha * self.radiance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArcRenderBundle {
    pub r: f64,
    pub theta: f64,
    pub points: Vec<ArcPointRecord>,
    pub intensity: f64,
}

impl ArcRenderBundle {
    pub fn phis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.phi).collect()
    }
}

impl PixelWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn arc_len(&self) -> usize {
        self.arc.len()
    }

    /// Raw normals (-dN/dx, -dN/dy, 1) at the arc points of the last render.
    pub fn normals(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.arc.iter().map(|a| a.normal)
    }

    /// Interior ray opacities of arc point `m`, followed by the section
    /// opacity of the arc point itself.
    pub fn ray_alphas(&self, m: usize) -> (Vec<f64>, f64) {
        let k = self.n_ray - 1;
        (self.alphas[m * k..(m + 1) * k].to_vec(), self.arc[m].alpha)
    }

    /// Elevations of the arc used by the last render.
    pub fn arc_phis(&self) -> Vec<f64> {
        self.arc.iter().map(|a| a.phi).collect()
    }

    pub fn bundle(&self) -> ArcRenderBundle {
        let points = self
            .arc
            .iter()
            .zip(&self.point_tapes)
            .map(|(a, tape)| ArcPointRecord {
                phi: a.phi,
                world: a.world,
                query: FieldQuery { point: a.world, h: a.h, delta: a.world.z - a.h, normal: a.normal, features: tape.features().to_vec() },
                transmittance: a.transmittance,
                alpha: a.alpha,
                radiance: a.radiance,
                beta: a.beta,
            })
            .collect();
        ArcRenderBundle { r: self.r, theta: self.theta, points, intensity: self.intensity }
    }
}

fn world_point(pose: &Pose, r: f64, theta: f64, phi: f64) -> Vec3 {
    pose.local_to_world(&polar_to_local(&PolarPoint { r, theta, phi }))
}

/// Elevations of the merged arc (coarse then importance samples, sorted).
#[allow(clippy::too_many_arguments)]
fn sample_arc(model: &SonarModel, settings: &RenderSettings, pose: &Pose, r: f64, theta: f64, s: f64, rng: &mut dyn RngCore, ws: &mut PixelWorkspace) {
    let cfg = &settings.sampling;
    let params = model.params();
    match settings.mode {
        RenderMode::Train => stratified(cfg.phi_min, cfg.phi_max, cfg.n_arc_stratified, rng, &mut ws.coarse),
        RenderMode::Eval => stratum_midpoints(cfg.phi_min, cfg.phi_max, cfg.n_arc_stratified, &mut ws.coarse),
    }
    ws.coarse_weights.clear();
    for &phi in &ws.coarse {
        let p = world_point(pose, r, theta, phi);
        let (h, _, _) = model.height.forward(params, [p.x, p.y], settings.active_levels, false, &mut ws.scratch);
        ws.coarse_weights.push(s_density(p.z - h, s));
    }
    coarse_bin_edges(&ws.coarse, cfg.phi_min, cfg.phi_max, &mut ws.edges);
    let n = cfg.n_arc_importance;
    ws.us.clear();
    match settings.mode {
        RenderMode::Train => {
            ws.us.extend((0..n).map(|_| rng.gen::<f64>()));
            ws.us.sort_by(f64::total_cmp);
        }
        RenderMode::Eval => ws.us.extend((0..n).map(|k| (k as f64 + 0.5) / n as f64)),
    }
    inverse_cdf(&ws.edges, &ws.coarse_weights, &ws.us, &mut ws.fine);
    let PixelWorkspace { coarse, fine, arc, .. } = ws;
    let mut merged: Vec<f64> = coarse.iter().chain(fine.iter()).copied().collect();
    merged.sort_by(f64::total_cmp);
    arc.clear();
    arc.extend(merged.into_iter().map(|phi| ArcState { phi, ..Default::default() }));
}

/// Renders pixel (r, theta) seen from `pose`, keeping all intermediates in
/// `ws` for [`render_pixel_backward`]. Returns the predicted intensity.
pub fn render_pixel_into(
    model: &SonarModel,
    settings: &RenderSettings,
    pose: &Pose,
    r: f64,
    theta: f64,
    rng: &mut dyn RngCore,
    ws: &mut PixelWorkspace,
) -> f64 {
    sample_arc(model, settings, pose, r, theta, model.sharpness(), rng, ws);
    shade_arc(model, settings, pose, r, theta, rng, ws)
}

/// Like [`render_pixel_into`] with a caller-supplied arc (sorted elevations).
#[allow(clippy::too_many_arguments)]
pub fn render_pixel_on_arc(
    model: &SonarModel,
    settings: &RenderSettings,
    pose: &Pose,
    r: f64,
    theta: f64,
    phis: &[f64],
    rng: &mut dyn RngCore,
    ws: &mut PixelWorkspace,
) -> f64 {
    ws.arc.clear();
    ws.arc.extend(phis.iter().map(|&phi| ArcState { phi, ..Default::default() }));
    shade_arc(model, settings, pose, r, theta, rng, ws)
}

fn shade_arc(model: &SonarModel, settings: &RenderSettings, pose: &Pose, r: f64, theta: f64, rng: &mut dyn RngCore, ws: &mut PixelWorkspace) -> f64 {
    let params = model.params();
    let s = model.sharpness();
    let n = settings.sampling.n_ray;
    let levels = settings.active_levels;
    let m_count = ws.arc.len();
    let per = n + 1;
    ws.r = r;
    ws.theta = theta;
    ws.n_ray = n;
    ws.deltas.resize(m_count * per, 0.0);
    ws.sig.resize(m_count * per, 0.0);
    ws.alphas.resize(m_count * (n - 1), 0.0);
    ws.sample_tapes.resize_with(m_count * per, HeightTape::new);
    ws.point_tapes.resize_with(m_count, HeightTape::new);
    ws.rad_tapes.resize_with(m_count, RadianceTape::new);

    let half = 0.5 * settings.bin_width;
    let hi = (r - half).max(1e-6);
    let lo = settings.r_min_render.min(0.5 * hi);
    let origin = pose.translation;
    let mut total = 0.0;
    for m in 0..m_count {
        let phi = ws.arc[m].phi;
        match settings.mode {
            RenderMode::Train => ray_ranges(lo, hi, n - 1, Some(&mut *rng), &mut ws.ranges),
            RenderMode::Eval => ray_ranges(lo, hi, n - 1, None, &mut ws.ranges),
        }
        ws.ranges.push(r - half);
        ws.ranges.push(r + half);
        let dir = pose.direction_to_world(&polar_direction(theta, phi));
        for j in 0..per {
            let p = origin + dir * ws.ranges[j];
            let (h, _, _) = model.height.forward(params, [p.x, p.y], levels, false, &mut ws.sample_tapes[m * per + j]);
            let d = p.z - h;
            ws.deltas[m * per + j] = d;
            ws.sig[m * per + j] = sigmoid_phi(d, s);
        }
        let sig = &ws.sig[m * per..(m + 1) * per];
        let mut t = 1.0;
        for j in 0..n - 1 {
            let a = opacity_from_phi(sig[j], sig[j + 1]);
            ws.alphas[m * (n - 1) + j] = a;
            t *= 1.0 - a;
        }
        let alpha = opacity_from_phi(sig[n - 1], sig[n]);

        let world = origin + dir * r;
        let tape = &mut ws.point_tapes[m];
        let (h, hx, hy) = model.height.forward(params, [world.x, world.y], levels, true, tape);
        let normal = [-hx, -hy, 1.0];
        let radiance = model.radiance.forward(params, &world, tape.features(), normal, [dir.x, dir.y, dir.z], &mut ws.rad_tapes[m]);
        let beta = model.beam.gain(params, theta, phi);
        total += beta * t * alpha * radiance;
        ws.arc[m] = ArcState { phi, world, transmittance: t, alpha, radiance, beta, h, normal };
    }
    ws.intensity = total;
    total
}

pub fn render_pixel(model: &SonarModel, settings: &RenderSettings, pose: &Pose, r: f64, theta: f64, rng: &mut dyn RngCore) -> ArcRenderBundle {
    let mut ws = PixelWorkspace::new();
    render_pixel_into(model, settings, pose, r, theta, rng, &mut ws);
    ws.bundle()
}

/// Accumulates into `grads` the gradient of `upstream * I` plus, when
/// given, the sum over arc points of `normal_upstream[m] . n_m` (raw
/// normals). Sample positions are treated as constants.
pub fn render_pixel_backward(model: &SonarModel, ws: &mut PixelWorkspace, upstream: f64, normal_upstream: Option<&[[f64; 3]]>, grads: &mut [f64]) {
    let params = model.params();
    let s = model.sharpness();
    let n = ws.n_ray;
    let per = n + 1;
    let train_beam = model.beam.config.trainable;
    let mut g_log_s = 0.0;
    let PixelWorkspace { arc, deltas, sig, alphas, sample_tapes, point_tapes, rad_tapes, g_sig, theta, .. } = ws;
    for m in 0..arc.len() {
        let a = &arc[m];
        let (t, alpha, l, beta) = (a.transmittance, a.alpha, a.radiance, a.beta);
        let g_l = upstream * beta * t * alpha;
        let g_t = upstream * beta * alpha * l;
        let g_alpha = upstream * beta * t * l;
        if train_beam {
            model.beam.gain_backward(params, *theta, a.phi, upstream * t * alpha * l, grads);
        }

        let mut g_n = normal_upstream.map(|g| g[m]).unwrap_or([0.0; 3]);
        let mut g_feat = None;
        if g_l != 0.0 {
            let rg = model.radiance.backward(params, &mut rad_tapes[m], g_l, grads);
            for k in 0..3 {
                g_n[k] += rg.normal[k];
            }
            g_feat = Some(rg.features);
        }
        if g_feat.is_some() || g_n[0] != 0.0 || g_n[1] != 0.0 {
            model.height.backward(params, &mut point_tapes[m], 0.0, Some([-g_n[0], -g_n[1]]), g_feat.as_deref(), grads);
        }

        g_sig.clear();
        g_sig.resize(per, 0.0);
        let sg = &sig[m * per..(m + 1) * per];
        if g_alpha != 0.0 {
            let (di, dn) = opacity_grad(sg[n - 1], sg[n]);
            g_sig[n - 1] += g_alpha * di;
            g_sig[n] += g_alpha * dn;
        }
        if g_t != 0.0 {
            let al = &alphas[m * (n - 1)..(m + 1) * (n - 1)];
            // d T / d alpha_j = -prod_{i != j} (1 - alpha_i), via prefix and suffix products
            let mut suffix = vec![1.0; al.len() + 1];
            for j in (0..al.len()).rev() {
                suffix[j] = suffix[j + 1] * (1.0 - al[j]);
            }
            let mut prefix = 1.0;
            for j in 0..al.len() {
                let ga = -g_t * prefix * suffix[j + 1];
                prefix *= 1.0 - al[j];
                if ga == 0.0 {
                    continue;
                }
                let (di, dn) = opacity_grad(sg[j], sg[j + 1]);
                g_sig[j] += ga * di;
                g_sig[j + 1] += ga * dn;
            }
        }
        for j in 0..per {
            let gs = g_sig[j];
            if gs == 0.0 {
                continue;
            }
            let d = deltas[m * per + j];
            let dens = s_density(d, s);
            g_log_s += gs * d * dens;
            let g_delta = gs * dens;
            if dens > DENSITY_CUTOFF * s {
                model.height.backward(params, &mut sample_tapes[m * per + j], -g_delta, None, None, grads);
            }
        }
    }
    if model.config.network.train_s {
        grads[model.log_s_index()] += g_log_s;
    }
}

/// Ray samples whose S-density is below this fraction of its peak (s/4)
/// are more than about 23/s from the surface; their height gradients are
/// negligible and skipped.
const DENSITY_CUTOFF: f64 = 1e-10;

/// Renders a full image (row-major, rows = range bins) in eval mode.
pub fn render_frame(model: &SonarModel, settings: &RenderSettings, intrinsics: &SonarIntrinsics, pose: &Pose) -> Vec<f64> {
    let mut eval = settings.clone();
    eval.mode = RenderMode::Eval;
    let columns: Vec<Vec<f64>> = (0..intrinsics.n_beams)
        .into_par_iter()
        .map_init(
            || (PixelWorkspace::new(), rand::rngs::mock::StepRng::new(0, 0)),
            |(ws, rng), beam| {
                let theta = intrinsics.beam_azimuth(beam);
                (0..intrinsics.n_bins).map(|bin| render_pixel_into(model, &eval, pose, intrinsics.bin_range(bin), theta, rng, ws)).collect()
            },
        )
        .collect();
    let mut img = vec![0.0; intrinsics.n_bins * intrinsics.n_beams];
    for (beam, col) in columns.iter().enumerate() {
        for (bin, v) in col.iter().enumerate() {
            img[bin * intrinsics.n_beams + beam] = *v;
        }
    }
    img
}
