//! Differentiable sonar volume rendering over the neural fields: S-density
//! opacities, hierarchical arc sampling, beam pattern, per-pixel intensity
//! and its exact gradient.

mod beam;
mod render;
mod sampling;

pub use beam::{BeamConfig, BeamPattern, KernelAxis, BEAM_PHI_BLOCK, BEAM_THETA_BLOCK};
pub use render::{
    render_frame, render_pixel, render_pixel_backward, render_pixel_into, render_pixel_on_arc, ArcPointRecord, ArcRenderBundle,
    PixelWorkspace, RenderMode, RenderSettings,
};
pub use sampling::{
    coarse_bin_edges, inverse_cdf, opacity, opacity_from_phi, opacity_grad, s_density, sample_arc_importance, sample_arc_stratified,
    sample_ray, sigmoid_phi, stratified, stratum_midpoints, transmittance, SamplingConfig, OPACITY_FLOOR,
};
