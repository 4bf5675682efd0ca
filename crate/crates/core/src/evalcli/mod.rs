//! Evaluation metrics, heightmap gridding with ensonification masks, and
//! the command-line front end.

mod cli;
mod grid;
mod metrics;

pub use cli::{run, RunConfig};
pub use grid::{
    apply_ensonification_mask, beam_pattern_rows, ensonification_count, finite_difference_gradient, gradient_maps, grid_heightfield,
    write_beam_pattern_csv, write_gradient_csv, GradientMaps,
};
pub use metrics::{gaussian_taps, mae_std, ssim, ssim_images, to_gray16, GRAY_MAX, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
