use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::grid::{apply_ensonification_mask, ensonification_count, gradient_maps, grid_heightfield, write_beam_pattern_csv, write_gradient_csv};
use super::metrics::{mae_std, ssim};
use crate::dataset::{Dataset, SonarFrame};
use crate::encoding::Bounds2;
use crate::error::{Error, Result};
use crate::model::SonarModel;
use crate::raster::HeightRaster;
use crate::renderer::{render_frame, RenderMode, RenderSettings};
use crate::simulator::{simulate, SimulateConfig};
use crate::trainer::{train, GroundBand, TrainerConfig};

/// One configuration file drives both `simulate` and `train`; each verb
/// reads the sections it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub simulate: SimulateConfig,
    #[serde(flatten)]
    pub trainer: TrainerConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        c.trainer.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Parser)]
#[command(name = "flsbathy", version, about = "Bathymetry from forward-looking sonar with a neural heightmap")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Simulate a survey and write a dataset directory.
    Simulate { config: PathBuf, out_dir: PathBuf },
    /// Train a model on a dataset.
    Train { config: PathBuf, dataset: PathBuf, out_dir: PathBuf },
    /// Render the predicted image of one frame.
    Render {
        checkpoint: PathBuf,
        dataset: PathBuf,
        frame_id: u64,
        out: PathBuf,
        /// Config whose [sampling] section sets the sample counts.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Grid the learned heightmap.
    Grid {
        checkpoint: PathBuf,
        /// xmin,ymin,xmax,ymax
        #[arg(allow_hyphen_values = true)]
        bounds: String,
        res: f64,
        out: PathBuf,
        /// Mask cells ensonified by fewer than --min-count frames of this dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        min_count: u32,
        /// Half-height of the seabed band around the altimeter depths.
        #[arg(long, default_value_t = 0.5)]
        band_margin: f64,
    },
    /// Compare two rasters: prints MAE, STD and SSIM.
    Eval {
        est: PathBuf,
        truth: PathBuf,
        /// Evaluate only the box shrunk by this margin (m).
        #[arg(long)]
        inner: Option<f64>,
    },
    /// Dump the beam pattern factors at 1 degree spacing as CSV.
    Beampattern { checkpoint: PathBuf, out: PathBuf },
    /// Dump exact and finite-difference heightmap gradients as CSV.
    Gradmap {
        checkpoint: PathBuf,
        #[arg(allow_hyphen_values = true)]
        bounds: String,
        res: f64,
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn existing(p: &Path) -> std::result::Result<&Path, Failure> {
    if p.exists() {
        Ok(p)
    } else {
        Err(Failure::Usage(format!("{}: no such file or directory", p.display())))
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

/// Runs the command line; returns the process exit code (0 success,
/// 2 usage or configuration error, 1 runtime failure).
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.verb, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_model(path: &Path) -> std::result::Result<SonarModel, Failure> {
    SonarModel::load(existing(path)?).map_err(usage)
}

fn dispatch(verb: Verb, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    match verb {
        Verb::Simulate { config, out_dir } => {
            let cfg = RunConfig::load(existing(&config)?).map_err(usage)?;
            let sim = simulate(&cfg.simulate)?;
            sim.save(&out_dir)?;
            writeln!(out, "wrote {} frames to {}", sim.dataset.len(), out_dir.display()).map_err(Error::from)?;
        }
        Verb::Train { config, dataset, out_dir } => {
            let cfg = RunConfig::load(existing(&config)?).map_err(usage)?;
            let ds = Dataset::load(existing(&dataset)?).map_err(usage)?;
            let summary = train(&ds, &cfg.trainer, &out_dir)?;
            let last = summary.last.map(|r| r.terms.total).unwrap_or(f64::NAN);
            writeln!(out, "trained {} steps, final loss {last:e}, checkpoint {}", summary.steps, summary.checkpoint.display()).map_err(Error::from)?;
        }
        Verb::Render { checkpoint, dataset, frame_id, out: path, config } => {
            let model = load_model(&checkpoint)?;
            let ds = Dataset::load_meta(existing(&dataset)?).map_err(usage)?;
            let sampling = match config {
                Some(c) => RunConfig::load(existing(&c)?).map_err(usage)?.trainer.sampling,
                None => Default::default(),
            };
            let k = ds.frame_index(frame_id).ok_or_else(|| usage(format!("frame {frame_id} is not in the dataset")))?;
            let intr = ds.intrinsics()?;
            let mut settings = RenderSettings::new(intr, (sampling.n_arc_stratified, sampling.n_arc_importance, sampling.n_ray), model.levels(), RenderMode::Eval);
            settings.r_min_render = sampling.r_min_render;
            settings.sampling.validate().map_err(usage)?;
            let img = render_frame(&model, &settings, intr, &ds.poses[k].pose);
            SonarFrame::from_intensities(intr.n_bins, intr.n_beams, &img)?.save(&path)?;
        }
        Verb::Grid { checkpoint, bounds, res, out: path, dataset, min_count, band_margin } => {
            let model = load_model(&checkpoint)?;
            let b = Bounds2::parse(&bounds).map_err(usage)?;
            if !(res > 0.0) {
                return Err(usage("resolution must be positive"));
            }
            let mut r = grid_heightfield(&model, &b, res)?;
            if let Some(d) = dataset {
                let ds = Dataset::load_meta(existing(&d)?).map_err(usage)?;
                let band = GroundBand::from_altimeter(&ds.altimeter, band_margin)
                    .ok_or_else(|| usage("the dataset has no altimeter readings to place the seabed band"))?;
                let counts = ensonification_count(&ds, &r, &band)?;
                apply_ensonification_mask(&mut r, counts, min_count)?;
            }
            r.save(&path)?;
        }
        Verb::Eval { est, truth, inner } => {
            let mut e = HeightRaster::load(existing(&est)?).map_err(usage)?;
            let mut t = HeightRaster::load(existing(&truth)?).map_err(usage)?;
            if let Some(m) = inner {
                let b = t.bounds().inner(m);
                if !b.is_valid() {
                    return Err(usage(format!("inner margin {m} leaves an empty box")));
                }
                e = e.crop(&b)?;
                t = t.crop(&b)?;
            }
            let (mae, std) = mae_std(&e, &t)?;
            let s = ssim(&e, &t)?;
            writeln!(out, "MAE\tSTD\tSSIM\n{mae}\t{std}\t{s}").map_err(Error::from)?;
        }
        Verb::Beampattern { checkpoint, out: path } => {
            let model = load_model(&checkpoint)?;
            let mut w = create(&path)?;
            write_beam_pattern_csv(&mut w, &model)?;
            w.flush().map_err(Error::from)?;
        }
        Verb::Gradmap { checkpoint, bounds, res, out: path } => {
            let model = load_model(&checkpoint)?;
            let b = Bounds2::parse(&bounds).map_err(usage)?;
            if !(res > 0.0) {
                return Err(usage("resolution must be positive"));
            }
            let maps = gradient_maps(&model, &b, res)?;
            let mut w = create(&path)?;
            write_gradient_csv(&mut w, &maps)?;
            w.flush().map_err(Error::from)?;
        }
    }
    Ok(())
}
