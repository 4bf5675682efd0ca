//! The full trainable model: heightmap, radiance network, beam pattern and
//! S-density sharpness, all sharing one parameter store.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::HashGridConfig;
use crate::error::{Error, Result};
use crate::field::{CoordFrame, FieldQuery, HeightField, RadianceField};
use crate::gradnet::{load_checkpoint, save_checkpoint, ParamStore};
use crate::renderer::{BeamConfig, BeamPattern};

fn two() -> usize {
    2
}

fn sixty_four() -> usize {
    64
}

fn three() -> usize {
    3
}

fn table_init() -> f64 {
    1e-4
}

fn init_s() -> f64 {
    20.0
}

fn yes() -> bool {
    true
}

/// Network sizes. Serialized into the checkpoint header, so everything
/// needed to rebuild the model from a checkpoint lives here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "two")]
    pub height_hidden_layers: usize,
    #[serde(default = "sixty_four")]
    pub height_width: usize,
    #[serde(default = "two")]
    pub radiance_hidden_layers: usize,
    #[serde(default = "sixty_four")]
    pub radiance_width: usize,
    #[serde(default = "three")]
    pub sh_degree: usize,
    #[serde(default = "table_init")]
    pub table_init: f64,
    #[serde(default = "init_s")]
    pub init_s: f64,
    #[serde(default = "yes")]
    pub train_s: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoding: HashGridConfig,
    pub network: NetworkConfig,
    pub beam: BeamConfig,
    pub frame: CoordFrame,
    pub init_height: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.beam.validate()?;
        let n = &self.network;
        if n.height_width == 0 || n.radiance_width == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if n.sh_degree > 3 {
            return Err(Error::Config("spherical harmonics degree must be at most 3".into()));
        }
        if !(n.init_s > 0.0) {
            return Err(Error::Config("initial sharpness must be positive".into()));
        }
        if !(self.frame.half_extent > 0.0) {
            return Err(Error::Config("coordinate frame extent must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("model description: {e}")))
    }
}

pub const LOG_S_BLOCK: &str = "sharpness.log_s";

#[derive(Clone, Debug)]
pub struct SonarModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub height: HeightField,
    pub radiance: RadianceField,
    pub beam: BeamPattern,
    log_s: usize,
}

impl SonarModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let n = &config.network;
        let height = HeightField::new(
            config.encoding.clone(),
            n.height_hidden_layers,
            n.height_width,
            n.table_init,
            config.init_height,
            &mut store,
            &mut rng,
        )?;
        let radiance = RadianceField::new(
            height.feature_dim(),
            n.sh_degree,
            n.radiance_hidden_layers,
            n.radiance_width,
            config.frame,
            &mut store,
            &mut rng,
        );
        let beam = BeamPattern::new(config.beam.clone(), &mut store)?;
        let log_s = store.add_block(LOG_S_BLOCK, 1);
        store.values[log_s] = n.init_s.ln();
        store.set_frozen(LOG_S_BLOCK, !n.train_s);
        Ok(SonarModel { config, store, height, radiance, beam, log_s })
    }

    /// Rebuilds the model around an existing parameter store (e.g. one read
    /// from a checkpoint).
    pub fn from_store(config: ModelConfig, mut store: ParamStore) -> Result<Self> {
        config.validate()?;
        let n = &config.network;
        let height = HeightField::attach(config.encoding.clone(), n.height_hidden_layers, n.height_width, &store)?;
        let radiance = RadianceField::attach(
            height.feature_dim(),
            n.sh_degree,
            n.radiance_hidden_layers,
            n.radiance_width,
            config.frame,
            &store,
        )?;
        let beam = BeamPattern::attach(config.beam.clone(), &store)?;
        let log_s = match store.block(LOG_S_BLOCK) {
            Some((off, 1)) => off,
            _ => return Err(Error::Format(format!("missing parameter block {LOG_S_BLOCK}"))),
        };
        store.set_frozen("beam.", !config.beam.trainable);
        store.set_frozen(LOG_S_BLOCK, !n.train_s);
        Ok(SonarModel { config, store, height, radiance, beam, log_s })
    }

    pub fn params(&self) -> &[f64] {
        &self.store.values
    }

    pub fn log_s_index(&self) -> usize {
        self.log_s
    }

    pub fn sharpness(&self) -> f64 {
        self.store.values[self.log_s].exp()
    }

    pub fn levels(&self) -> usize {
        self.config.encoding.levels
    }

    pub fn query_height(&self, xy: [f64; 2]) -> f64 {
        self.height.query_height(&self.store.values, xy, self.levels())
    }

    pub fn query_gradient(&self, xy: [f64; 2]) -> (f64, [f64; 2]) {
        self.height.query_gradient(&self.store.values, xy, self.levels())
    }

    pub fn query(&self, p: &crate::geometry::Vec3) -> FieldQuery {
        self.height.query_delta_normal(&self.store.values, p, self.levels())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.config.to_toml(), &self.store)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        crate::gradnet::write_checkpoint(&mut buf, &self.config.to_toml(), &self.store).expect("writing to memory");
        buf
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, store) = load_checkpoint(path)?;
        Self::from_store(ModelConfig::from_toml(&meta)?, store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Bounds2;

    pub(crate) fn small_config() -> ModelConfig {
        ModelConfig {
            encoding: HashGridConfig {
                levels: 4,
                log2_table_size: 8,
                features_per_entry: 2,
                n_min: 4,
                n_max: 32,
                bounds: Bounds2::new(-5.0, -5.0, 5.0, 5.0),
            },
            network: NetworkConfig { height_width: 16, radiance_width: 16, ..Default::default() },
            beam: BeamConfig::new(6, 4, (-1.0, 1.0), (-0.6, -0.2)),
            frame: CoordFrame { center: [0.0, 0.0, 0.0], half_extent: 5.0 },
            init_height: -2.0,
        }
    }

    #[test]
    fn network_defaults() {
        let n = NetworkConfig::default();
        assert_eq!((n.height_hidden_layers, n.height_width, n.sh_degree), (2, 64, 3));
        assert_eq!(n.init_s, 20.0);
    }

    #[test]
    fn fresh_model_state() {
        let m = SonarModel::new(small_config(), 1).unwrap();
        assert!((m.sharpness() - 20.0).abs() < 1e-12);
        assert!((m.query_height([1.0, 2.0]) + 2.0).abs() < 0.01);
    }

    #[test]
    fn checkpoint_roundtrip_rebuilds_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = SonarModel::new(small_config(), 2).unwrap();
        m.save(&path).unwrap();
        let back = SonarModel::load(&path).unwrap();
        assert_eq!(back.config, m.config);
        let a = m.query_height([0.3, -1.2]);
        let b = back.query_height([0.3, -1.2]);
        assert!((a - b).abs() < 1e-5);
        let again = SonarModel::load(&path).unwrap();
        assert_eq!(again.to_bytes(), back.to_bytes());
    }
}
