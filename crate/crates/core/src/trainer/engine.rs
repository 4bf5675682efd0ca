use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::batch::{sample_batch, valid_bins, BatchItem, GroundBand};
use super::config::{progressive_mask, TrainerConfig};
use super::loss::{altimeter_terms, loss_intensity_grad, normal_penalty, normal_penalty_grad};
use crate::dataset::Dataset;
use crate::encoding::Bounds2;
use crate::error::{Error, Result};
use crate::field::CoordFrame;
use crate::geometry::SonarIntrinsics;
use crate::gradnet::adam_step;
use crate::model::{ModelConfig, SonarModel};
use crate::renderer::{render_pixel_backward, render_pixel_into, render_pixel_on_arc, BeamConfig, PixelWorkspace, RenderMode, RenderSettings};

/// Pixels of a batch are split into this many contiguous chunks whose
/// gradients are summed in order, so results do not depend on the thread
/// count.
pub const GRAD_CHUNKS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub l_int: f64,
    pub l_reg: f64,
    pub l_alt: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pixel {
    pub frame: usize,
    pub beam: usize,
    pub bin: usize,
}

/// Loss values and, optionally, gradients for one batch. `arcs` holds the
/// elevation samples used for each pixel so a batch can be re-evaluated
/// on the same arcs.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub terms: LossTerms,
    pub grads: Option<Vec<f64>>,
    pub predictions: Vec<f64>,
    pub arcs: Vec<Vec<f64>>,
}

/// Fixed inputs shared by every step.
#[derive(Clone, Debug)]
pub struct TrainContext<'a> {
    pub dataset: &'a Dataset,
    pub intrinsics: SonarIntrinsics,
    pub settings: RenderSettings,
    pub config: TrainerConfig,
    pub band: Option<GroundBand>,
}

impl<'a> TrainContext<'a> {
    pub fn new(dataset: &'a Dataset, config: &TrainerConfig) -> Result<Self> {
        config.validate()?;
        let intrinsics = dataset.intrinsics()?.clone();
        if dataset.is_empty() || dataset.frames.len() != dataset.poses.len() {
            return Err(Error::Empty("training needs frames with matching poses"));
        }
        let s = &config.sampling;
        let mut settings = RenderSettings::new(&intrinsics, (s.n_arc_stratified, s.n_arc_importance, s.n_ray), 1, RenderMode::Train);
        settings.r_min_render = s.r_min_render;
        settings.sampling.validate()?;
        let band = GroundBand::from_altimeter(&dataset.altimeter, config.losses.mask_margin);
        Ok(TrainContext { dataset, intrinsics, settings, config: config.clone(), band })
    }

    pub fn pixels(&self, batch: &[BatchItem]) -> Vec<Pixel> {
        let mut out = Vec::new();
        for item in batch {
            let pose = &self.dataset.poses[item.frame].pose;
            for bin in valid_bins(&self.intrinsics, pose, item.beam, self.band.as_ref()) {
                out.push(Pixel { frame: item.frame, beam: item.beam, bin });
            }
        }
        out
    }

    fn altimeter_active(&self) -> bool {
        self.config.losses.altimeter_enabled && !self.dataset.altimeter.is_empty()
    }
}

/// Independent random stream for pixel `index` of step `step`.
pub fn pixel_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"fls-pixl");
    ChaCha8Rng::from_seed(key)
}

struct ChunkOut {
    preds: Vec<f64>,
    reg_sum: f64,
    arcs: Vec<Vec<f64>>,
    grads: Option<Vec<f64>>,
}

/// Evaluates the weighted loss of `pixels` at `step` (which also selects
/// the random streams). With `arcs`, the given elevation samples are used
/// instead of sampling new ones. Rendering is skipped when both image
/// terms have zero weight; they are then reported as 0.
pub fn evaluate_batch(
    model: &SonarModel,
    ctx: &TrainContext,
    pixels: &[Pixel],
    step: usize,
    active_levels: usize,
    arcs: Option<&[Vec<f64>]>,
    want_grads: bool,
) -> Result<BatchResult> {
    let lc = &ctx.config.losses;
    let seed = ctx.config.train.seed;
    let n_params = model.params().len();
    let mut settings = ctx.settings.clone();
    settings.active_levels = active_levels;
    let mut terms = LossTerms::default();
    let mut grads = want_grads.then(|| vec![0.0; n_params]);
    let mut predictions = Vec::new();
    let mut used_arcs = Vec::new();

    let render = lc.w_int > 0.0 || lc.w_reg > 0.0;
    if render {
        if pixels.is_empty() {
            return Err(Error::Empty("batch has no valid pixels"));
        }
        if let Some(a) = arcs {
            if a.len() != pixels.len() {
                return Err(Error::Dimension { expected: pixels.len(), got: a.len() });
            }
        }
        let n_pix = pixels.len();
        let n_normals: usize = match arcs {
            Some(a) => a.iter().map(Vec::len).sum(),
            None => n_pix * settings.sampling.arc_len(),
        };
        let chunk = n_pix.div_ceil(GRAD_CHUNKS);
        let outs: Vec<ChunkOut> = (0..GRAD_CHUNKS)
            .into_par_iter()
            .map(|c| {
                let range = (c * chunk).min(n_pix)..((c + 1) * chunk).min(n_pix);
                let mut ws = PixelWorkspace::new();
                let mut g = want_grads.then(|| vec![0.0; n_params]);
                let mut out = ChunkOut { preds: Vec::with_capacity(range.len()), reg_sum: 0.0, arcs: Vec::with_capacity(range.len()), grads: None };
                let mut g_normals = Vec::new();
                for k in range {
                    let px = pixels[k];
                    let pose = &ctx.dataset.poses[px.frame].pose;
                    let r = ctx.intrinsics.bin_range(px.bin);
                    let theta = ctx.intrinsics.beam_azimuth(px.beam);
                    let mut rng = pixel_rng(seed, step as u64, k as u64);
                    let pred = match arcs {
                        Some(a) => render_pixel_on_arc(model, &settings, pose, r, theta, &a[k], &mut rng, &mut ws),
                        None => render_pixel_into(model, &settings, pose, r, theta, &mut rng, &mut ws),
                    };
                    out.reg_sum += ws.normals().map(|n| normal_penalty(&n)).sum::<f64>();
                    out.arcs.push(ws.arc_phis());
                    if let Some(g) = g.as_deref_mut() {
                        let meas = ctx.dataset.frames[px.frame].get(px.bin, px.beam);
                        let up = lc.w_int * loss_intensity_grad(pred, meas, n_pix);
                        let normal_up = if lc.w_reg > 0.0 {
                            g_normals.clear();
                            g_normals.extend(ws.normals().map(|n| normal_penalty_grad(&n, n_normals).map(|v| lc.w_reg * v)));
                            Some(g_normals.as_slice())
                        } else {
                            None
                        };
                        render_pixel_backward(model, &mut ws, up, normal_up, g);
                    }
                    out.preds.push(pred);
                }
                out.grads = g;
                out
            })
            .collect();
        let mut reg = 0.0;
        for o in outs {
            reg += o.reg_sum;
            predictions.extend(o.preds);
            used_arcs.extend(o.arcs);
            if let (Some(total), Some(g)) = (grads.as_deref_mut(), o.grads) {
                for (a, b) in total.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        let mut l1 = 0.0;
        for (px, pred) in pixels.iter().zip(&predictions) {
            l1 += (pred - ctx.dataset.frames[px.frame].get(px.bin, px.beam)).abs();
        }
        terms.l_int = l1 / n_pix as f64;
        terms.l_reg = reg / n_normals as f64;
    }
    if ctx.altimeter_active() {
        terms.l_alt =
            altimeter_terms(&ctx.dataset.altimeter, &model.height, model.params(), active_levels, lc.w_alt, if lc.w_alt > 0.0 { grads.as_deref_mut() } else { None })?;
    }
    terms.total = lc.w_int * terms.l_int + lc.w_reg * terms.l_reg + lc.w_alt * terms.l_alt;
    Ok(BatchResult { terms, grads, predictions, arcs: used_arcs })
}

/// Hash grid domain: sonar positions padded by `padding` (default r_max).
pub fn survey_domain(dataset: &Dataset, config: &TrainerConfig) -> Result<Bounds2> {
    if let Some(b) = config.encoding.bounds {
        return Ok(b);
    }
    let intr = dataset.intrinsics()?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &dataset.poses {
        let t = p.pose.translation;
        lo = [lo[0].min(t.x), lo[1].min(t.y)];
        hi = [hi[0].max(t.x), hi[1].max(t.y)];
    }
    if dataset.poses.is_empty() {
        return Err(Error::Empty("dataset has no poses"));
    }
    let pad = config.encoding.padding.unwrap_or(intr.r_max);
    Ok(Bounds2::new(lo[0], lo[1], hi[0], hi[1]).padded(pad))
}

/// Fresh model sized for the dataset. The height bias starts at the median
/// altimeter depth when readings exist.
pub fn build_model(dataset: &Dataset, config: &TrainerConfig) -> Result<SonarModel> {
    config.validate()?;
    let intr = dataset.intrinsics()?;
    let bounds = survey_domain(dataset, config)?;
    let init_height = if dataset.altimeter.is_empty() {
        config.train.init_height
    } else {
        let mut z: Vec<f64> = dataset.altimeter.iter().map(|p| p.p.z).collect();
        z.sort_by(f64::total_cmp);
        z[z.len() / 2]
    };
    let c = bounds.center();
    let mut beam = BeamConfig::new(config.beam.k_theta, config.beam.k_phi, (-0.5 * intr.hfov, 0.5 * intr.hfov), (intr.phi_min, intr.phi_max));
    beam.trainable = config.beam.trainable;
    beam.softplus = config.beam.softplus;
    let model_cfg = ModelConfig {
        encoding: config.encoding.grid(bounds),
        network: config.network.clone(),
        beam,
        frame: CoordFrame { center: [c[0], c[1], init_height], half_extent: 0.5 * bounds.width().max(bounds.height()) },
        init_height,
    };
    SonarModel::new(model_cfg, config.train.seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub terms: LossTerms,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,lr,L_int,L_reg,L_alt,total";

    pub fn csv_row(&self) -> String {
        let t = &self.terms;
        format!("{},{:e},{:e},{:e},{:e},{:e}", self.step, self.lr, t.l_int, t.l_reg, t.l_alt, t.total)
    }
}

pub struct Trainer<'a> {
    pub model: SonarModel,
    pub ctx: TrainContext<'a>,
    step: usize,
    batch_rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(model: SonarModel, dataset: &'a Dataset, config: &TrainerConfig) -> Result<Self> {
        let ctx = TrainContext::new(dataset, config)?;
        let batch_rng = ChaCha8Rng::seed_from_u64(config.train.seed ^ 0x5eed_ba7c);
        Ok(Trainer { model, ctx, step: 0, batch_rng })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn active_levels(&self) -> usize {
        progressive_mask(self.step, &self.ctx.config.train.progressive, self.model.levels())
    }

    pub fn next_batch(&mut self) -> Vec<BatchItem> {
        let ds = self.ctx.dataset;
        sample_batch(ds.len(), self.ctx.intrinsics.n_beams, self.ctx.config.train.batch_frames, &mut self.batch_rng)
    }

    /// One optimizer step on a freshly sampled batch.
    pub fn step(&mut self) -> Result<StepRecord> {
        let batch = self.next_batch();
        self.step_on(&batch)
    }

    /// One optimizer step on the given batch.
    pub fn step_on(&mut self, batch: &[BatchItem]) -> Result<StepRecord> {
        let active = self.active_levels();
        let pixels = self.ctx.pixels(batch);
        let res = evaluate_batch(&self.model, &self.ctx, &pixels, self.step, active, None, true)?;
        let grads = res.grads.expect("gradients requested");
        if !res.terms.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            let ids: Vec<String> =
                batch.iter().map(|b| format!("{}:{}", self.ctx.dataset.poses[b.frame].frame_id, b.beam)).collect();
            let pnorm = self.model.params().iter().map(|v| v * v).sum::<f64>().sqrt();
            let gnorm = grads.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(Error::NonFinite {
                step: self.step,
                detail: format!("terms {:?}, batch (frame:beam) [{}], |params| {pnorm:e}, |grads| {gnorm:e}", res.terms, ids.join(" ")),
            });
        }
        let cfg = &self.ctx.config.train;
        let lr = cfg.lr.lr(self.step as u64);
        self.model.store.grads.copy_from_slice(&grads);
        adam_step(&mut self.model.store, &cfg.adam, lr, self.step as u64 + 1);
        let rec = StepRecord { step: self.step, lr, terms: res.terms };
        self.step += 1;
        Ok(rec)
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub steps: usize,
    pub last: Option<StepRecord>,
    pub checkpoint: PathBuf,
}

/// Runs the configured number of steps, writing `loss.csv`, periodic
/// `checkpoints/step_NNNNNN.ckpt` and the final `model.ckpt` to `out_dir`.
pub fn train(dataset: &Dataset, config: &TrainerConfig, out_dir: &Path) -> Result<TrainSummary> {
    let model = build_model(dataset, config)?;
    let mut trainer = Trainer::new(model, dataset, config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("loss.csv");
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    writeln!(log, "{}", StepRecord::CSV_HEADER)?;
    let tc = config.train.clone();
    let mut last = None;
    for _ in 0..tc.total_steps {
        let rec = trainer.step()?;
        if tc.log_every > 0 && (rec.step % tc.log_every == 0 || rec.step + 1 == tc.total_steps) {
            writeln!(log, "{}", rec.csv_row())?;
        }
        if tc.checkpoint_every > 0 && (rec.step + 1) % tc.checkpoint_every == 0 {
            let dir = out_dir.join("checkpoints");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            trainer.model.save(&dir.join(format!("step_{:06}.ckpt", rec.step + 1)))?;
        }
        last = Some(rec);
    }
    log.flush()?;
    let checkpoint = out_dir.join("model.ckpt");
    trainer.model.save(&checkpoint)?;
    Ok(TrainSummary { steps: tc.total_steps, last, checkpoint })
}
