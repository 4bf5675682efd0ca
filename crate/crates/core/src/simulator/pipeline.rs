use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    export_prior_pointcloud, make_lawnmower, minirocks, synthesize_altimeter, synthesize_frames, MinirocksConfig, NoiseConfig, Primitive, Scene,
    SurveyPlan, SynthConfig, TrueBeam,
};
use crate::dataset::{save_altimeter, AltimeterPoint, Dataset};
use crate::encoding::Bounds2;
use crate::error::{Error, Result};
use crate::geometry::SonarIntrinsics;
use crate::raster::HeightRaster;

/// Sonar geometry with angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SonarSection {
    pub r_min: f64,
    pub r_max: f64,
    pub hfov_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub n_beams: usize,
    pub n_bins: usize,
}

impl Default for SonarSection {
    fn default() -> Self {
        SonarSection { r_min: 0.5, r_max: 30.0, hfov_deg: 120.0, phi_min_deg: -10.0, phi_max_deg: 10.0, n_beams: 256, n_bins: 256 }
    }
}

impl SonarSection {
    pub fn intrinsics(&self) -> Result<SonarIntrinsics> {
        let i = SonarIntrinsics {
            r_min: self.r_min,
            r_max: self.r_max,
            hfov: self.hfov_deg.to_radians(),
            phi_min: self.phi_min_deg.to_radians(),
            phi_max: self.phi_max_deg.to_radians(),
            n_beams: self.n_beams,
            n_bins: self.n_bins,
        };
        i.validate()?;
        Ok(i)
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    Minirocks(MinirocksConfig),
    Primitives {
        bounds: Bounds2,
        primitives: Vec<Primitive>,
        #[serde(default = "one")]
        reflectivity: f64,
    },
    /// A `.grid` heightmap file.
    Raster {
        path: PathBuf,
        #[serde(default = "one")]
        reflectivity: f64,
    },
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec::Minirocks(MinirocksConfig::default())
    }
}

impl SceneSpec {
    pub fn build(&self) -> Result<Scene> {
        match self {
            SceneSpec::Minirocks(c) => Ok(minirocks(c)),
            SceneSpec::Primitives { bounds, primitives, reflectivity } => Scene::analytic(*bounds, primitives.clone(), *reflectivity),
            SceneSpec::Raster { path, reflectivity } => Scene::raster(HeightRaster::load(path)?, *reflectivity),
        }
    }
}

/// Lawn-mower survey with angles in degrees; the box defaults to the
/// scene box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveySection {
    pub bounds: Option<Bounds2>,
    pub spacing: f64,
    pub altitude: f64,
    pub speed: f64,
    pub frame_rate: f64,
    pub pitch_deg: f64,
    pub roll_wobble_deg: f64,
    pub pitch_wobble_deg: f64,
    pub wobble_period: f64,
}

impl Default for SurveySection {
    fn default() -> Self {
        SurveySection {
            bounds: None,
            spacing: 5.0,
            altitude: 4.0,
            speed: 1.0,
            frame_rate: 2.0,
            pitch_deg: 25.0,
            roll_wobble_deg: 0.0,
            pitch_wobble_deg: 0.0,
            wobble_period: 7.0,
        }
    }
}

impl SurveySection {
    pub fn plan(&self, scene: &Scene) -> SurveyPlan {
        SurveyPlan {
            bounds: self.bounds.unwrap_or(scene.bounds),
            spacing: self.spacing,
            altitude: self.altitude,
            speed: self.speed,
            frame_rate: self.frame_rate,
            pitch: self.pitch_deg.to_radians(),
            roll_wobble: self.roll_wobble_deg.to_radians(),
            pitch_wobble: self.pitch_wobble_deg.to_radians(),
            wobble_period: self.wobble_period,
        }
    }
}

/// Kernel weights of the true beam pattern; an empty list means flat.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrueBeamSection {
    pub theta_weights: Vec<f64>,
    pub phi_weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltimeterSection {
    pub enabled: bool,
    /// One reading every this many poses.
    pub every: usize,
    pub sigma: f64,
}

impl Default for AltimeterSection {
    fn default() -> Self {
        AltimeterSection { enabled: true, every: 1, sigma: 0.0 }
    }
}

/// Coarse prior map exported as a point cloud; optionally fed to training
/// through the altimeter loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSection {
    pub enabled: bool,
    pub resolution: f64,
    pub as_altimeter: bool,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection { enabled: false, resolution: 1.0, as_altimeter: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub seed: u64,
    /// Resolution of the exported ground-truth raster.
    pub truth_cell: f64,
    pub sonar: SonarSection,
    pub scene: SceneSpec,
    pub survey: SurveySection,
    pub synth: SynthConfig,
    pub noise: NoiseConfig,
    pub beam_true: TrueBeamSection,
    pub altimeter: AltimeterSection,
    pub prior: PriorSection,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            seed: 1,
            truth_cell: 0.1,
            sonar: SonarSection::default(),
            scene: SceneSpec::default(),
            survey: SurveySection::default(),
            synth: SynthConfig::default(),
            noise: NoiseConfig::default(),
            beam_true: TrueBeamSection::default(),
            altimeter: AltimeterSection::default(),
            prior: PriorSection::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub scene: Scene,
    pub dataset: Dataset,
    pub truth: HeightRaster,
    pub prior: Vec<AltimeterPoint>,
    pub beam: TrueBeam,
}

impl Simulation {
    /// Writes the dataset plus `truth.grid` and, when present, `prior.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.dataset.save(dir)?;
        self.truth.save(&dir.join("truth.grid"))?;
        if !self.prior.is_empty() {
            save_altimeter(&dir.join("prior.txt"), &self.prior)?;
        }
        Ok(())
    }
}

pub fn simulate(cfg: &SimulateConfig) -> Result<Simulation> {
    let intr = cfg.sonar.intrinsics()?;
    let scene = cfg.scene.build()?;
    let poses = make_lawnmower(&cfg.survey.plan(&scene), &scene)?;
    if poses.is_empty() {
        return Err(Error::Empty("survey produced no poses"));
    }
    let beam = TrueBeam::new(&intr, &cfg.beam_true.theta_weights, &cfg.beam_true.phi_weights);
    let frames = synthesize_frames(&scene, &poses, &intr, &cfg.synth, &cfg.noise, &beam, cfg.seed)?;
    let mut altimeter = Vec::new();
    if cfg.altimeter.enabled {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        altimeter = synthesize_altimeter(&scene, &poses, cfg.altimeter.every, cfg.altimeter.sigma, &mut rng)?;
    }
    let prior = if cfg.prior.enabled { export_prior_pointcloud(&scene, cfg.prior.resolution)? } else { Vec::new() };
    if cfg.prior.as_altimeter {
        altimeter.extend(prior.iter().cloned());
    }
    let truth = scene.to_raster(cfg.truth_cell)?;
    let dataset = Dataset { intrinsics: Some(intr), poses, frames, altimeter };
    Ok(Simulation { scene, dataset, truth, prior, beam })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_from_toml() {
        let c: SimulateConfig = toml::from_str(
            r#"
            seed = 3
            [sonar]
            n_beams = 32
            n_bins = 48
            [scene]
            kind = "primitives"
            bounds = { min = [0.0, 0.0], max = [10.0, 10.0] }
            primitives = [{ kind = "plane", z0 = -1.0, sx = 0.0, sy = 0.0 }, { kind = "bump", x = 5.0, y = 5.0, amplitude = 1.0, sigma = 1.0 }]
            [survey]
            spacing = 10.0
            frame_rate = 0.5
            [beam_true]
            phi_weights = [0.5, 1.0, 0.5]
            "#,
        )
        .unwrap();
        assert_eq!(c.sonar.n_beams, 32);
        assert_eq!(c.sonar.r_max, 30.0);
        let s = c.scene.build().unwrap();
        assert_eq!(s.height(5.0, 5.0), 0.0);
        let m: SimulateConfig = toml::from_str("[scene]\nkind = \"minirocks\"\nn_bumps = 2\n").unwrap();
        assert_eq!(m.scene, SceneSpec::Minirocks(MinirocksConfig { n_bumps: 2, ..Default::default() }));
    }

    #[test]
    fn small_simulation_writes_a_dataset() {
        let cfg = SimulateConfig {
            sonar: SonarSection { r_max: 12.0, n_beams: 16, n_bins: 24, ..Default::default() },
            scene: SceneSpec::Primitives { bounds: Bounds2::new(0.0, 0.0, 8.0, 8.0), primitives: vec![Primitive::Plane { z0: -2.0, sx: 0.0, sy: 0.0 }], reflectivity: 1.0 },
            survey: SurveySection { spacing: 8.0, frame_rate: 0.5, ..Default::default() },
            prior: PriorSection { enabled: true, resolution: 2.0, as_altimeter: true },
            ..Default::default()
        };
        let sim = simulate(&cfg).unwrap();
        assert_eq!(sim.dataset.len(), sim.dataset.poses.len());
        assert_eq!(sim.prior.len(), 16);
        // poses per line readings plus the prior points
        assert_eq!(sim.dataset.altimeter.len(), sim.dataset.poses.len() + 16);
        assert!(sim.dataset.altimeter.iter().all(|p| (p.p.z + 2.0).abs() < 1e-6));
        assert!(sim.dataset.frames.iter().any(|f| f.intensities().iter().any(|&v| v > 0.0)));
        let dir = tempfile::tempdir().unwrap();
        sim.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.frames, sim.dataset.frames);
        assert!(dir.path().join("truth.grid").exists() && dir.path().join("prior.txt").exists());
        assert_eq!(simulate(&cfg).unwrap().dataset.frames, sim.dataset.frames);
    }
}
