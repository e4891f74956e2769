//! Hard-label and distillation training loops with cosine-annealed Adam,
//! holdout-based checkpoint selection and exact resume.
//!
//! Outputs written to the run directory:
//!
//! * `metrics.jsonl`: one [`EpochMetrics`] object per line;
//! * `last.ckpt`: model after the most recent epoch;
//! * `best.ckpt`: model with the lowest holdout MAE so far (only with a holdout);
//! * `trainer_state.bin`: optimizer moments, epoch counter and history, used by
//!   [`Trainer::resume`].
//!
//! Shuffling and augmentation draw from generators derived from
//! `(seed, epoch, sample)`, so a resumed run replays the same batches.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use headpose_nn::{Adam, AdamConfig, Param, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{LrSchedule, Optimizer, PseudoMode, TrainConfig, TrainMode};

use crate::data::{augment_detailed, sample_rng, AugmentationConfig, PoseDataset, PseudoLabelStore};
use crate::error::{Error, Result};
use crate::geometry::{EulerPose, Image};
use crate::losses::{distillation_loss_with_grad, ensemble, total_loss_with_grad, PoseLogits, PseudoLabel};
use crate::model::{container, images_to_tensor, logits_from_tensor, PoseModel};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const STATE_FILE: &str = "trainer_state.bin";
const STATE_MAGIC: &[u8; 4] = b"HPTS";
const STATE_VERSION: u32 = 1;
const EVAL_BATCH: usize = 64;

/// Where training targets come from.
pub enum Targets<'a> {
    /// Ground-truth poses of the dataset.
    Hard,
    /// Frozen teachers evaluated on every (augmented) batch.
    Teachers(&'a [PoseModel]),
    /// Stored soft labels aligned with the dataset order.
    Store(&'a PseudoLabelStore),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample objective over the epoch.
    pub loss: f64,
    pub classification: f64,
    pub regression: f64,
    pub distillation: f64,
    /// Holdout MAE in degrees, when a holdout exists.
    pub val_mae: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Sums {
    loss: f64,
    classification: f64,
    regression: f64,
    distillation: f64,
}

pub struct Trainer<'a> {
    cfg: TrainConfig,
    augmentation: Option<AugmentationConfig>,
    model: PoseModel,
    optimizer: Adam,
    data: &'a dyn PoseDataset,
    targets: Targets<'a>,
    train_idx: Vec<usize>,
    holdout_idx: Vec<usize>,
    epoch: usize,
    history: Vec<EpochMetrics>,
    best_val: Option<f64>,
    out_dir: Option<PathBuf>,
}

/// Splits `0..n` into (train, holdout) deterministically from `seed`.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let k = (fraction * n as f64).round() as usize;
    if k == 0 || k >= n {
        return ((0..n).collect(), Vec::new());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x484f_4c44_4f55_5421));
    let mut holdout = idx.split_off(n - k);
    idx.sort_unstable();
    holdout.sort_unstable();
    (idx, holdout)
}

/// Ensemble of tempered teacher softmax outputs for a batch of images.
pub fn teacher_targets(teachers: &[PoseModel], images: &Tensor, temperature: f64) -> Result<Vec<PseudoLabel>> {
    let per_teacher: Vec<Vec<PoseLogits>> = teachers.iter().map(|t| t.forward(images)).collect::<Result<_>>()?;
    (0..images.batch())
        .map(|i| {
            let dists: Vec<_> = per_teacher.iter().map(|l| l[i].softmax(temperature)).collect();
            ensemble(&dists)
        })
        .collect()
}

/// Mirrors a soft label to match a horizontally flipped image.
fn mirror_label(label: &PseudoLabel) -> PseudoLabel {
    let mut out = label.clone();
    out.rows[0].reverse();
    out.rows[2].reverse();
    out
}

fn check_grids(model: &PoseModel, targets: &Targets<'_>, data: &dyn PoseDataset, cfg: &TrainConfig) -> Result<()> {
    let grid = model.grid();
    match targets {
        Targets::Hard => {
            if cfg.mode != TrainMode::Hard {
                return Err(Error::config("distillation mode needs teacher or pseudo-label targets"));
            }
        }
        Targets::Teachers(teachers) => {
            if teachers.is_empty() {
                return Err(Error::config("no teachers given"));
            }
            for (i, t) in teachers.iter().enumerate() {
                if t.grid() != grid {
                    return Err(Error::config(format!("teacher {i} bin grid {:?} differs from the student's {grid:?}", t.grid())));
                }
                if t.input_size() != model.input_size() {
                    return Err(Error::config(format!("teacher {i} input size {} differs from the student's {}", t.input_size(), model.input_size())));
                }
            }
        }
        Targets::Store(store) => {
            if store.num_bins() != grid.num_bins() {
                return Err(Error::config(format!("pseudo-labels have {} bins, the student has {}", store.num_bins(), grid.num_bins())));
            }
            if store.labels.len() != data.len() {
                return Err(Error::config(format!("{} pseudo-labels for {} samples", store.labels.len(), data.len())));
            }
            if let Some(i) = (0..data.len()).find(|&i| store.ids[i] != data.id(i)) {
                return Err(Error::config(format!("pseudo-label {i} belongs to `{}`, dataset has `{}`", store.ids[i], data.id(i))));
            }
        }
    }
    if !matches!(targets, Targets::Hard) && cfg.mode != TrainMode::Distill {
        return Err(Error::config("teacher targets given but train.mode is hard"));
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: PoseModel,
        cfg: TrainConfig,
        augmentation: Option<AugmentationConfig>,
        data: &'a dyn PoseDataset,
        targets: Targets<'a>,
    ) -> Result<Self> {
        cfg.validate()?;
        if let Some(a) = &augmentation {
            a.validate()?;
        }
        if data.is_empty() {
            return Err(Error::invalid("train", "training set is empty"));
        }
        check_grids(&model, &targets, data, &cfg)?;
        let (train_idx, holdout_idx) = holdout_split(data.len(), cfg.holdout_fraction, cfg.seed);
        let optimizer = Adam::new(AdamConfig {
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        });
        Ok(Self {
            cfg,
            augmentation,
            model,
            optimizer,
            data,
            targets,
            train_idx,
            holdout_idx,
            epoch: 0,
            history: Vec::new(),
            best_val: None,
            out_dir: None,
        })
    }

    /// Writes metrics and checkpoints under `dir` after every epoch.
    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.out_dir = Some(dir);
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &PoseModel {
        &self.model
    }

    pub fn into_model(self) -> PoseModel {
        self.model
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn holdout_indices(&self) -> &[usize] {
        &self.holdout_idx
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.cfg.epochs()
    }

    /// Runs every remaining epoch.
    pub fn fit(&mut self) -> Result<()> {
        self.fit_until(self.cfg.epochs())
    }

    /// Runs epochs until `stop_after` have completed (or the schedule ends).
    pub fn fit_until(&mut self, stop_after: usize) -> Result<()> {
        while self.epoch < stop_after.min(self.cfg.epochs()) {
            self.run_epoch()?;
        }
        Ok(())
    }

    fn load_batch(&self, indices: &[usize], epoch: usize, augment: bool) -> Result<(Vec<Image>, Vec<EulerPose>, Vec<bool>)> {
        let aug = if augment && self.cfg.augment { self.augmentation } else { None };
        let seed = self.cfg.seed;
        let items: Vec<(Image, EulerPose, bool)> = indices
            .par_iter()
            .map(|&i| {
                let crop = self.data.crop(i)?;
                let pose = self.data.pose(i);
                Ok(match &aug {
                    Some(a) => {
                        let mut rng = sample_rng(seed ^ a.seed.rotate_left(32), epoch as u64, i as u64);
                        let out = augment_detailed(&crop, &pose, a, &mut rng);
                        (out.image, out.pose, out.flipped)
                    }
                    None => (crop, pose, false),
                })
            })
            .collect::<Result<_>>()?;
        let mut images = Vec::with_capacity(items.len());
        let mut poses = Vec::with_capacity(items.len());
        let mut flips = Vec::with_capacity(items.len());
        for (im, p, f) in items {
            images.push(im);
            poses.push(p);
            flips.push(f);
        }
        Ok((images, poses, flips))
    }

    fn soft_targets(&self, indices: &[usize], images: &Tensor, flips: &[bool]) -> Result<Option<Vec<PseudoLabel>>> {
        Ok(match &self.targets {
            Targets::Hard => None,
            Targets::Teachers(teachers) => Some(teacher_targets(teachers, images, self.cfg.temperature)?),
            Targets::Store(store) => Some(
                indices
                    .iter()
                    .zip(flips)
                    .map(|(&i, &f)| if f { mirror_label(&store.labels[i]) } else { store.labels[i].clone() })
                    .collect(),
            ),
        })
    }

    /// Per-sample objective and logit gradients.
    fn objective(&self, logits: &[PoseLogits], poses: &[EulerPose], soft: Option<&[PseudoLabel]>) -> Result<Vec<(Sums, [Vec<f64>; 3])>> {
        let grid = self.model.grid();
        logits
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut sums = Sums::default();
                let mut grads: [Vec<f64>; 3] = Default::default();
                let hard_weight = match soft {
                    None => 1.0,
                    Some(_) => self.cfg.hard_weight,
                };
                if let Some(soft) = soft {
                    let (kl, g) = distillation_loss_with_grad(l, &soft[i], grid, self.cfg.temperature)?;
                    sums.distillation = kl;
                    sums.loss += kl;
                    grads = g;
                }
                if hard_weight > 0.0 {
                    let (t, g) = total_loss_with_grad(l, &poses[i], grid, self.cfg.reg_weight)?;
                    sums.classification = t.per_angle.iter().map(|a| a.classification).sum();
                    sums.regression = t.per_angle.iter().map(|a| a.regression).sum();
                    sums.loss += hard_weight * t.total;
                    for (acc, gi) in grads.iter_mut().zip(g) {
                        if acc.is_empty() {
                            *acc = gi.iter().map(|v| hard_weight * v).collect();
                        } else {
                            acc.iter_mut().zip(gi).for_each(|(a, v)| *a += hard_weight * v);
                        }
                    }
                }
                Ok((sums, grads))
            })
            .collect()
    }

    fn clip_gradients(&mut self) {
        let Some(max_norm) = self.cfg.grad_clip else { return };
        let mut params = self.model.named_params_mut();
        let norm: f64 = params
            .iter()
            .filter(|(_, p)| p.is_trainable())
            .map(|(_, p)| p.grad().iter().map(|g| (*g as f64).powi(2)).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if norm > max_norm {
            let scale = (max_norm / norm) as f32;
            for (_, p) in params.iter_mut().filter(|(_, p)| p.is_trainable()) {
                p.grad_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
    }

    /// One pass over the (shuffled) training indices.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let start = Instant::now();
        let epoch = self.epoch;
        let lr = self.cfg.lr_at(epoch);
        let mut order = self.train_idx.clone();
        order.shuffle(&mut sample_rng(self.cfg.seed, epoch as u64, u64::MAX));
        let bins = self.model.grid().num_bins();
        let mut totals = Sums::default();

        for batch in order.chunks(self.cfg.batch_size) {
            let (images, poses, flips) = self.load_batch(batch, epoch, true)?;
            let refs: Vec<&Image> = images.iter().collect();
            let x = images_to_tensor(&refs)?;
            let soft = self.soft_targets(batch, &x, &flips)?;
            let out = self.model.forward_train(&x)?;
            let logits = logits_from_tensor(&out);
            let per_sample = match self.objective(&logits, &poses, soft.as_deref()) {
                Ok(v) => v,
                Err(e) => {
                    self.model.clear_cache();
                    return Err(e);
                }
            };
            if per_sample.iter().any(|(s, g)| !s.loss.is_finite() || g.iter().flatten().any(|v| !v.is_finite())) {
                self.model.clear_cache();
                return Err(Error::NonFiniteLoss {
                    epoch,
                    sample_ids: batch.iter().map(|&i| self.data.id(i).to_string()).collect(),
                });
            }
            let n = batch.len() as f64;
            let mut grad = Tensor::zeros([batch.len(), 3, bins, 1]);
            for (i, (s, g)) in per_sample.iter().enumerate() {
                let item = grad.item_mut(i);
                for (a, row) in g.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        item[a * bins + j] = (v / n) as f32;
                    }
                }
                totals.loss += s.loss;
                totals.classification += s.classification;
                totals.regression += s.regression;
                totals.distillation += s.distillation;
            }
            self.model.backward(&grad);
            self.clip_gradients();
            let mut params: Vec<(String, &mut Param)> = self.model.named_params_mut();
            let mut refs: Vec<&mut Param> = params.iter_mut().map(|(_, p)| &mut **p).collect();
            self.optimizer.step(&mut refs, lr);
            refs.iter_mut().for_each(|p| p.zero_grad());
            if !self.model.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    sample_ids: batch.iter().map(|&i| self.data.id(i).to_string()).collect(),
                });
            }
        }

        let n = order.len() as f64;
        let val_mae = if self.holdout_idx.is_empty() {
            None
        } else {
            Some(mean_absolute_error(&self.model, self.data, &self.holdout_idx)?)
        };
        let metrics = EpochMetrics {
            epoch,
            lr,
            loss: totals.loss / n,
            classification: totals.classification / n,
            regression: totals.regression / n,
            distillation: totals.distillation / n,
            val_mae,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: lr {lr:.3e} loss {:.5}{}",
            metrics.loss,
            val_mae.map(|v| format!(" val_mae {v:.3}")).unwrap_or_default()
        );
        self.epoch += 1;
        self.history.push(metrics.clone());
        let improved = match (val_mae, self.best_val) {
            (Some(v), Some(b)) => v < b,
            (Some(_), None) => true,
            _ => false,
        };
        if improved {
            self.best_val = val_mae;
        }
        if let Some(dir) = self.out_dir.clone() {
            self.write_epoch_outputs(&dir, &metrics, improved)?;
        }
        Ok(metrics)
    }

    fn write_epoch_outputs(&self, dir: &Path, metrics: &EpochMetrics, improved: bool) -> Result<()> {
        let path = dir.join(METRICS_FILE);
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{}", serde_json::to_string(metrics).expect("metrics serialize")).map_err(|e| Error::io(&path, e))?;
        self.model.save(&dir.join(LAST_CHECKPOINT))?;
        if improved {
            self.model.save(&dir.join(BEST_CHECKPOINT))?;
        }
        self.save_state(&dir.join(STATE_FILE))
    }

    /// Mean inference-mode objective over the training indices, without augmentation.
    pub fn evaluate_objective(&self) -> Result<f64> {
        let mut total = 0.0;
        for batch in self.train_idx.chunks(EVAL_BATCH) {
            let (images, poses, flips) = self.load_batch(batch, 0, false)?;
            let refs: Vec<&Image> = images.iter().collect();
            let x = images_to_tensor(&refs)?;
            let soft = self.soft_targets(batch, &x, &flips)?;
            let logits = self.model.forward(&x)?;
            total += self.objective(&logits, &poses, soft.as_deref())?.iter().map(|(s, _)| s.loss).sum::<f64>();
        }
        Ok(total / self.train_idx.len() as f64)
    }

    pub fn save_state(&self, path: &Path) -> Result<()> {
        let (steps, first, second) = self.optimizer.state();
        let lens: Vec<usize> = first.iter().map(Vec::len).collect();
        let header = json!({
            "format_version": STATE_VERSION,
            "kind": "trainer-state",
            "epochs_completed": self.epoch,
            "optimizer_steps": steps,
            "moment_lengths": lens,
            "best_val": self.best_val,
            "config": self.cfg,
            "augmentation": self.augmentation,
            "model_checksum": self.model.checksum(),
            "history": self.history,
        });
        let blobs: Vec<&[f32]> = first.iter().chain(second).map(Vec::as_slice).collect();
        container::write_file(path, &container::encode(STATE_MAGIC, &header, &blobs))
    }

    /// Continues the run stored in `dir` (`last.ckpt` plus `trainer_state.bin`).
    ///
    /// `cfg` and `augmentation` must equal the stored ones, except that the
    /// epoch count may grow.
    pub fn resume(
        dir: &Path,
        cfg: TrainConfig,
        augmentation: Option<AugmentationConfig>,
        data: &'a dyn PoseDataset,
        targets: Targets<'a>,
    ) -> Result<Self> {
        let state_path = dir.join(STATE_FILE);
        let err = |field: &str, message: String| Error::Checkpoint {
            path: state_path.clone(),
            field: field.to_string(),
            message,
        };
        let c = container::decode(&container::read_file(&state_path)?, STATE_MAGIC, &err)?;
        let version: u32 = container::field(&c.header, "format_version", &err)?;
        if version != STATE_VERSION {
            return Err(err("format_version", format!("unsupported version {version}")));
        }
        let stored_cfg: TrainConfig = container::field(&c.header, "config", &err)?;
        let comparable = TrainConfig {
            epochs: cfg.epochs,
            ..stored_cfg.clone()
        };
        if comparable != cfg {
            return Err(Error::config(format!("resume config differs from the stored run in {}", state_path.display())));
        }
        let stored_aug: Option<AugmentationConfig> = container::field(&c.header, "augmentation", &err)?;
        if stored_aug != augmentation {
            return Err(Error::config("resume augmentation settings differ from the stored run"));
        }
        let model = PoseModel::load(&dir.join(LAST_CHECKPOINT))?;
        let checksum: String = container::field(&c.header, "model_checksum", &err)?;
        if checksum != model.checksum() {
            return Err(err("model_checksum", format!("{} does not match the saved state", LAST_CHECKPOINT)));
        }
        let lens: Vec<usize> = container::field(&c.header, "moment_lengths", &err)?;
        if 2 * lens.iter().sum::<usize>() != c.payload.len() {
            return Err(err("payload", "moment buffers do not match their lengths".into()));
        }
        let mut offset = 0;
        let mut take = |n: usize| {
            let v = c.payload[offset..offset + n].to_vec();
            offset += n;
            v
        };
        let first: Vec<Vec<f32>> = lens.iter().map(|&n| take(n)).collect();
        let second: Vec<Vec<f32>> = lens.iter().map(|&n| take(n)).collect();
        let steps: u64 = container::field(&c.header, "optimizer_steps", &err)?;

        let mut trainer = Self::new(model, cfg, augmentation, data, targets)?;
        trainer.optimizer = Adam::restore(
            AdamConfig {
                weight_decay: trainer.cfg.weight_decay,
                ..AdamConfig::default()
            },
            steps,
            first,
            second,
        );
        trainer.epoch = container::field(&c.header, "epochs_completed", &err)?;
        trainer.history = container::field(&c.header, "history", &err)?;
        trainer.best_val = container::field(&c.header, "best_val", &err)?;
        trainer.out_dir = Some(dir.to_path_buf());
        Ok(trainer)
    }
}

/// Mean of the three per-angle MAEs over `indices`, in inference mode.
pub fn mean_absolute_error(model: &PoseModel, data: &dyn PoseDataset, indices: &[usize]) -> Result<f64> {
    let preds = predict_indices(model, data, indices)?;
    let mut sum = 0.0;
    for (&i, p) in indices.iter().zip(&preds) {
        let t = data.pose(i).to_array();
        sum += p.to_array().iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0;
    }
    Ok(sum / indices.len().max(1) as f64)
}

/// Inference-mode predictions for `indices`, in order.
pub fn predict_indices(model: &PoseModel, data: &dyn PoseDataset, indices: &[usize]) -> Result<Vec<EulerPose>> {
    let mut out = Vec::with_capacity(indices.len());
    for batch in indices.chunks(EVAL_BATCH) {
        let images: Vec<Image> = batch.par_iter().map(|&i| data.crop(i)).collect::<Result<_>>()?;
        let refs: Vec<&Image> = images.iter().collect();
        out.extend(model.predict_batch(&refs)?);
    }
    Ok(out)
}

/// Ensemble soft labels for every sample of `data`, on clean crops.
pub fn compute_pseudo_labels(teachers: &[PoseModel], teacher_names: Vec<String>, data: &dyn PoseDataset, temperature: f64) -> Result<PseudoLabelStore> {
    if teachers.is_empty() {
        return Err(Error::config("pseudo-labelling needs at least one teacher"));
    }
    let grid = teachers[0].grid();
    if let Some(i) = teachers.iter().position(|t| t.grid() != grid) {
        return Err(Error::config(format!("teacher {i} uses a different bin grid")));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut labels = Vec::with_capacity(data.len());
    for batch in indices.chunks(EVAL_BATCH) {
        let images: Vec<Image> = batch.par_iter().map(|&i| data.crop(i)).collect::<Result<_>>()?;
        let refs: Vec<&Image> = images.iter().collect();
        labels.extend(teacher_targets(teachers, &images_to_tensor(&refs)?, temperature)?);
    }
    Ok(PseudoLabelStore {
        teacher_names,
        ids: (0..data.len()).map(|i| data.id(i).to_string()).collect(),
        labels,
    })
}

/// Loads teacher checkpoints and checks they agree with `grid`.
pub fn load_teachers(paths: &[PathBuf], grid: &crate::codec::BinGrid) -> Result<Vec<PoseModel>> {
    paths
        .iter()
        .map(|p| {
            let m = PoseModel::load(p)?;
            if m.grid() != grid {
                return Err(Error::config(format!("teacher {} uses bin grid {:?}, expected {grid:?}", p.display(), m.grid())));
            }
            Ok(m)
        })
        .collect()
}

/// Result of a complete training run.
pub struct TrainOutcome {
    pub model: PoseModel,
    pub history: Vec<EpochMetrics>,
}

/// Hard-label training for the full schedule.
pub fn train_teacher(
    model: PoseModel,
    data: &dyn PoseDataset,
    cfg: TrainConfig,
    augmentation: Option<AugmentationConfig>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if cfg.mode != TrainMode::Hard {
        return Err(Error::config("train_teacher needs train.mode = hard"));
    }
    run(Trainer::new(model, cfg, augmentation, data, Targets::Hard)?, out_dir)
}

/// Distillation from frozen teachers or a pseudo-label store for the full schedule.
pub fn distill_student(
    student: PoseModel,
    targets: Targets<'_>,
    data: &dyn PoseDataset,
    cfg: TrainConfig,
    augmentation: Option<AugmentationConfig>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if cfg.mode != TrainMode::Distill {
        return Err(Error::config("distill_student needs train.mode = distill"));
    }
    run(Trainer::new(student, cfg, augmentation, data, targets)?, out_dir)
}

fn run(trainer: Trainer<'_>, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = match out_dir {
        Some(d) => trainer.with_output_dir(d)?,
        None => trainer,
    };
    trainer.fit()?;
    let history = trainer.history.clone();
    Ok(TrainOutcome {
        model: trainer.into_model(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_split_is_a_partition() {
        let (t, h) = holdout_split(100, 0.1, 3);
        assert_eq!(h.len(), 10);
        let mut all: Vec<usize> = t.iter().chain(&h).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(holdout_split(100, 0.1, 3), (t, h));
        assert!(holdout_split(10, 0.02, 0).1.is_empty());
    }

    #[test]
    fn mirrored_label_decodes_to_mirrored_pose() {
        let g = crate::codec::BinGrid::default();
        let row = |b: usize| {
            let mut r = vec![0.0; 62];
            r[b] = 0.75;
            r[b + 1] = 0.25;
            r
        };
        let label = PseudoLabel::new([row(40), row(10), row(20)]);
        let p = label.decode(&g).unwrap();
        let m = mirror_label(&label).decode(&g).unwrap();
        assert!((m.yaw + p.yaw).abs() < 1e-12);
        assert_eq!(m.pitch, p.pitch);
        assert!((m.roll + p.roll).abs() < 1e-12);
    }
}
