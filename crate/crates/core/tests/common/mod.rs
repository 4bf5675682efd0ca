#![allow(dead_code)]

use flsbathy::encoding::Bounds2;
use flsbathy::model::NetworkConfig;
use flsbathy::simulator::{simulate, NoiseConfig, Primitive, SceneSpec, SimulateConfig, Simulation, SonarSection, SurveySection};
use flsbathy::trainer::{BeamSection, EncodingSection, LossConfig, SamplingSection, TrainConfig, TrainerConfig};

pub fn small_sim(primitives: Vec<Primitive>) -> Simulation {
    simulate(&small_sim_config(primitives)).unwrap()
}

pub fn small_sim_config(primitives: Vec<Primitive>) -> SimulateConfig {
    SimulateConfig {
        sonar: SonarSection { r_max: 10.0, n_beams: 16, n_bins: 32, ..Default::default() },
        scene: SceneSpec::Primitives { bounds: Bounds2::new(0.0, 0.0, 8.0, 8.0), primitives, reflectivity: 1.0 },
        survey: SurveySection { spacing: 4.0, altitude: 3.0, frame_rate: 1.0, ..Default::default() },
        noise: NoiseConfig::default(),
        ..Default::default()
    }
}

pub fn tiny_config() -> TrainerConfig {
    TrainerConfig {
        sampling: SamplingSection { n_arc_stratified: 4, n_arc_importance: 4, n_ray: 8, r_min_render: 0.5 },
        encoding: EncodingSection { levels: 4, log2_table_size: 8, n_min: 4, n_max: 16, padding: Some(6.0), ..Default::default() },
        network: NetworkConfig { height_width: 16, radiance_width: 16, ..Default::default() },
        beam: BeamSection { k_theta: 4, k_phi: 3, trainable: true, softplus: false },
        losses: LossConfig::default(),
        train: TrainConfig { total_steps: 5, batch_frames: 2, seed: 4, checkpoint_every: 0, ..Default::default() },
    }
}
