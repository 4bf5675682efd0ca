//! Ground-truth data: analytic or gridded seabed scenes, lawn-mower
//! surveys, ray-cast sonar images with shadows and speckle, altimeter
//! readings and prior-map point clouds.

mod pipeline;
mod raycast;
mod scene;
mod survey;
mod synth;

pub use pipeline::{
    simulate, AltimeterSection, PriorSection, SceneSpec, SimulateConfig, Simulation, SonarSection, SurveySection, TrueBeamSection,
};
pub use raycast::{raycast_first_hit, raycast_with_step, MAX_MARCH_STEP};
pub use scene::{minirocks, MinirocksConfig, Primitive, Scene, Terrain};
pub use survey::{make_lawnmower, SurveyPlan};
pub use synth::{
    apply_noise, export_prior_pointcloud, synthesize_altimeter, synthesize_clean, synthesize_frame, synthesize_frames, FrameDeposits,
    NoiseConfig, SynthConfig, TrueBeam,
};
