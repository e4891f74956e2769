//! Pose network: a swappable feature extractor followed by three independent
//! linear heads, one per angle, each emitting one logit per bin.
//!
//! # Checkpoint layout
//!
//! ```text
//! b"HPCK"  u32 LE header length  JSON header  f32 LE tensor data
//! ```
//!
//! The header holds `format_version`, `kind = "pose-model"`, `backbone`
//! (`name`, `feature_dim`, `params`), `grid` (`num_bins`, `lo`, `hi`),
//! `normalization` (`mean`, `std`), `input_size` and `tensors`, a list of
//! `{name, shape, trainable}` in payload order. Running batch-norm statistics
//! are stored as non-trainable tensors.

pub(crate) mod container;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use headpose_nn::backbone::{self, BOTTLENECK_FEATURES, RESNET18_FEATURES, TINY_CNN_FEATURES};
use headpose_nn::layers::{Linear, Sequential};
use headpose_nn::{Module, Param, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::codec::{softmax, BinGrid};
use crate::error::{Error, Result};
use crate::geometry::{EulerPose, Image};
use crate::losses::PoseLogits;

const MODULE: &str = "model";

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HPCK";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_KIND: &str = "pose-model";
pub const DEFAULT_INPUT_SIZE: usize = 112;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackboneName {
    #[serde(rename = "resnet18")]
    Resnet18,
    #[serde(rename = "resnet101")]
    Resnet101,
    #[serde(rename = "botnet101")]
    Botnet101,
    #[serde(rename = "res2net101")]
    Res2net101,
    #[serde(rename = "tiny-cnn")]
    TinyCnn,
}

impl BackboneName {
    pub const ALL: [BackboneName; 5] = [Self::Resnet18, Self::Resnet101, Self::Botnet101, Self::Res2net101, Self::TinyCnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Resnet18 => "resnet18",
            Self::Resnet101 => "resnet101",
            Self::Botnet101 => "botnet101",
            Self::Res2net101 => "res2net101",
            Self::TinyCnn => "tiny-cnn",
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            Self::Resnet18 => RESNET18_FEATURES,
            Self::TinyCnn => TINY_CNN_FEATURES,
            Self::Resnet101 | Self::Botnet101 | Self::Res2net101 => BOTTLENECK_FEATURES,
        }
    }
}

impl fmt::Display for BackboneName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BackboneName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::invalid(MODULE, format!("unknown backbone `{s}` (expected one of resnet18, resnet101, botnet101, res2net101, tiny-cnn)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: BackboneName,
    pub feature_dim: usize,
    /// Free-form settings carried through checkpoints untouched.
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl BackboneSpec {
    pub fn new(name: BackboneName) -> Self {
        Self {
            name,
            feature_dim: name.feature_dim(),
            params: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim != self.name.feature_dim() {
            return Err(Error::invalid(
                MODULE,
                format!("{} produces {} features, spec says {}", self.name, self.name.feature_dim(), self.feature_dim),
            ));
        }
        Ok(())
    }

    fn build(&self, input_size: usize, rng: &mut ChaCha8Rng) -> Result<Sequential> {
        self.validate()?;
        Ok(match self.name {
            BackboneName::TinyCnn => backbone::tiny_cnn(input_size, rng),
            BackboneName::Resnet18 => backbone::resnet18(rng),
            BackboneName::Resnet101 => backbone::resnet101(rng),
            BackboneName::Botnet101 => backbone::botnet101(input_size, rng),
            BackboneName::Res2net101 => backbone::res2net101(rng),
        })
    }
}

/// Per-channel input standardisation applied inside the model to `[0, 1]` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    /// ImageNet statistics.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

/// Stacks `[0, 1]` RGB images into an `[n, 3, h, w]` tensor.
pub fn images_to_tensor(images: &[&Image]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::invalid(MODULE, "empty image batch"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(Error::invalid(MODULE, "images in a batch must share one size"));
        }
        for c in 0..3 {
            data.extend(img.data().chunks_exact(3).map(|px| px[c]));
        }
    }
    Ok(Tensor::from_vec([images.len(), 3, h, w], data))
}

pub struct PoseModel {
    spec: BackboneSpec,
    grid: BinGrid,
    normalization: Normalization,
    input_size: usize,
    backbone: Sequential,
    heads: [Linear; 3],
}

impl std::fmt::Debug for PoseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoseModel")
            .field("backbone", &self.spec.name)
            .field("grid", &self.grid)
            .field("input_size", &self.input_size)
            .field("parameters", &self.trainable_parameter_count())
            .finish()
    }
}

impl PoseModel {
    /// Fresh model with He-normal weights drawn from `seed`.
    pub fn new(spec: BackboneSpec, grid: BinGrid, input_size: usize, seed: u64) -> Result<Self> {
        if input_size == 0 {
            return Err(Error::invalid(MODULE, "input size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = spec.build(input_size, &mut rng)?;
        let heads = std::array::from_fn(|_| Linear::new(spec.feature_dim, grid.num_bins(), &mut rng));
        Ok(Self {
            spec,
            grid,
            normalization: Normalization::default(),
            input_size,
            backbone,
            heads,
        })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn heads_mut(&mut self) -> &mut [Linear; 3] {
        &mut self.heads
    }

    fn normalize(&self, images: &Tensor) -> Result<Tensor> {
        let [_, c, h, w] = images.shape();
        if c != 3 || h != self.input_size || w != self.input_size {
            return Err(Error::invalid(
                MODULE,
                format!("expected 3x{0}x{0} input, got {c}x{h}x{w}", self.input_size),
            ));
        }
        let mut x = images.clone();
        let plane = h * w;
        for (i, chunk) in x.data_mut().chunks_mut(plane).enumerate() {
            let (m, s) = (self.normalization.mean[i % 3], self.normalization.std[i % 3]);
            chunk.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(x)
    }

    fn stack_heads(&self, outs: [Tensor; 3]) -> Tensor {
        let n = outs[0].batch();
        let bins = self.grid.num_bins();
        let mut data = Vec::with_capacity(n * 3 * bins);
        for i in 0..n {
            for o in &outs {
                data.extend_from_slice(o.item(i));
            }
        }
        Tensor::from_vec([n, 3, bins, 1], data)
    }

    /// Inference-mode logits shaped `[n, 3, num_bins, 1]` from `[0, 1]` images.
    pub fn forward_tensor(&self, images: &Tensor) -> Result<Tensor> {
        let features = self.backbone.forward(&self.normalize(images)?);
        Ok(self.stack_heads(self.heads.each_ref().map(|h| h.forward(&features))))
    }

    pub fn forward(&self, images: &Tensor) -> Result<Vec<PoseLogits>> {
        Ok(logits_from_tensor(&self.forward_tensor(images)?))
    }

    /// Training-mode forward; caches activations for [`PoseModel::backward`].
    pub fn forward_train(&mut self, images: &Tensor) -> Result<Tensor> {
        let x = self.normalize(images)?;
        let features = self.backbone.forward_train(&x);
        let outs = [
            self.heads[0].forward_train(&features),
            self.heads[1].forward_train(&features),
            self.heads[2].forward_train(&features),
        ];
        Ok(self.stack_heads(outs))
    }

    /// Accumulates parameter gradients from `d loss / d logits` shaped like the
    /// output of [`PoseModel::forward_train`].
    pub fn backward(&mut self, grad_logits: &Tensor) {
        let n = grad_logits.batch();
        let bins = self.grid.num_bins();
        let mut grad_features: Option<Tensor> = None;
        for (a, head) in self.heads.iter_mut().enumerate() {
            let mut g = Tensor::zeros([n, bins, 1, 1]);
            for i in 0..n {
                g.item_mut(i).copy_from_slice(&grad_logits.item(i)[a * bins..(a + 1) * bins]);
            }
            let gf = head.backward(&g);
            match grad_features.as_mut() {
                Some(acc) => acc.add_assign(&gf),
                None => grad_features = Some(gf),
            }
        }
        self.backbone.backward(&grad_features.expect("three heads"));
    }

    pub fn clear_cache(&mut self) {
        self.backbone.clear_cache();
        self.heads.iter_mut().for_each(|h| h.clear_cache());
    }

    pub fn predict_batch(&self, images: &[&Image]) -> Result<Vec<EulerPose>> {
        let logits = self.forward(&images_to_tensor(images)?)?;
        logits.iter().map(|l| self.decode_logits(l)).collect()
    }

    pub fn predict_pose(&self, image: &Image) -> Result<EulerPose> {
        Ok(self.predict_batch(&[image])?[0])
    }

    pub fn decode_logits(&self, logits: &PoseLogits) -> Result<EulerPose> {
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&logits.rows) {
            *o = crate::codec::decode(&softmax(row), &self.grid)?;
        }
        Ok(EulerPose::from_array(out))
    }

    /// Every tensor in checkpoint order, buffers included.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.backbone.collect_params("backbone", &mut out);
        for (name, head) in ["head_yaw", "head_pitch", "head_roll"].iter().zip(&self.heads) {
            head.collect_params(name, &mut out);
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        self.backbone.collect_params_mut("backbone", &mut out);
        for (name, head) in ["head_yaw", "head_pitch", "head_roll"].iter().zip(self.heads.iter_mut()) {
            head.collect_params_mut(name, &mut out);
        }
        out
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.named_params().iter().filter(|(_, p)| p.is_trainable()).map(|(_, p)| p.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, p)| p.value().iter().all(|v| v.is_finite()))
    }

    /// SHA-256 over tensor names, shapes and values, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in self.named_params() {
            h.update(name.as_bytes());
            for d in p.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.named_params();
        let tensors: Vec<_> = params
            .iter()
            .map(|(n, p)| json!({"name": n, "shape": p.shape(), "trainable": p.is_trainable()}))
            .collect();
        let header = json!({
            "format_version": CHECKPOINT_VERSION,
            "kind": CHECKPOINT_KIND,
            "backbone": self.spec,
            "grid": self.grid,
            "normalization": self.normalization,
            "input_size": self.input_size,
            "tensors": tensors,
        });
        let blobs: Vec<&[f32]> = params.iter().map(|(_, p)| p.value()).collect();
        container::encode(CHECKPOINT_MAGIC, &header, &blobs)
    }

    /// `origin` only labels errors.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let err = |field: &str, message: String| Error::Checkpoint {
            path: origin.to_path_buf(),
            field: field.to_string(),
            message,
        };
        let c = container::decode(bytes, CHECKPOINT_MAGIC, &err)?;
        let version: u32 = container::field(&c.header, "format_version", &err)?;
        if version != CHECKPOINT_VERSION {
            return Err(err("format_version", format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let kind: String = container::field(&c.header, "kind", &err)?;
        if kind != CHECKPOINT_KIND {
            return Err(err("kind", format!("`{kind}` is not a pose model")));
        }
        let spec: BackboneSpec = container::field(&c.header, "backbone", &err)?;
        let grid: BinGrid = container::field(&c.header, "grid", &err)?;
        BinGrid::new(grid.num_bins(), grid.lo(), grid.hi()).map_err(|e| err("grid", e.to_string()))?;
        let normalization: Normalization = container::field(&c.header, "normalization", &err)?;
        let input_size: usize = container::field(&c.header, "input_size", &err)?;
        #[derive(Deserialize)]
        struct Entry {
            name: String,
            shape: Vec<usize>,
        }
        let entries: Vec<Entry> = container::field(&c.header, "tensors", &err)?;

        let mut model = Self::new(spec, grid, input_size, 0).map_err(|e| err("backbone", e.to_string()))?;
        model.normalization = normalization;
        let mut params = model.named_params_mut();
        if params.len() != entries.len() {
            return Err(err("tensors", format!("{} tensors stored, architecture has {}", entries.len(), params.len())));
        }
        let expected: usize = entries.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if expected != c.payload.len() {
            return Err(err("payload", format!("header describes {expected} values, payload holds {}", c.payload.len())));
        }
        let mut offset = 0;
        for ((name, p), e) in params.iter_mut().zip(&entries) {
            if *name != e.name || p.shape() != e.shape.as_slice() {
                return Err(err("tensors", format!("stored `{}` {:?} does not match `{name}` {:?}", e.name, e.shape, p.shape())));
            }
            let n = p.len();
            p.value_mut().copy_from_slice(&c.payload[offset..offset + n]);
            offset += n;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?, path)
    }

    /// Loads and checks the stored backbone against `expected`.
    pub fn load_expecting(path: &Path, expected: BackboneName) -> Result<Self> {
        let model = Self::load(path)?;
        if model.spec.name != expected {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                field: "backbone".into(),
                message: format!("file holds {}, expected {expected}", model.spec.name),
            });
        }
        Ok(model)
    }

    /// Independent copy with identical weights.
    pub fn duplicate(&self) -> Self {
        Self::from_bytes(&self.to_bytes(), Path::new("<memory>")).expect("in-memory roundtrip")
    }
}

/// Splits `[n, 3, bins, 1]` logits into per-sample rows.
pub fn logits_from_tensor(t: &Tensor) -> Vec<PoseLogits> {
    let bins = t.height();
    (0..t.batch())
        .map(|i| {
            let item = t.item(i);
            PoseLogits::new(std::array::from_fn(|a| item[a * bins..(a + 1) * bins].iter().map(|&v| v as f64).collect()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> PoseModel {
        PoseModel::new(BackboneSpec::new(BackboneName::TinyCnn), BinGrid::default(), DEFAULT_INPUT_SIZE, seed).unwrap()
    }

    fn batch(n: usize, seed: u32) -> Tensor {
        let len = n * 3 * 112 * 112;
        Tensor::from_vec([n, 3, 112, 112], (0..len).map(|i| ((i as u32).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f32 / 1000.0).collect())
    }

    #[test]
    fn output_shape() {
        let m = tiny(0);
        let out = m.forward(&batch(4, 1)).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|l| l.rows.iter().all(|r| r.len() == 62)));
    }

    #[test]
    fn wrong_size_is_rejected() {
        let m = tiny(0);
        let x = Tensor::zeros([1, 3, 64, 64]);
        assert!(matches!(m.forward(&x), Err(Error::InvalidInput { .. })));
    }

    #[test]
    fn batch_independence_and_duplicates() {
        let m = tiny(3);
        let x = batch(8, 5);
        let all = m.forward(&x).unwrap();
        let single = m.forward(&Tensor::from_vec([1, 3, 112, 112], x.item(2).to_vec())).unwrap();
        for (a, b) in all[2].rows.iter().zip(&single[0].rows) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-5);
            }
        }
        let mut dup = x.item(6).to_vec();
        dup.extend_from_slice(x.item(6));
        let d = m.forward(&Tensor::from_vec([2, 3, 112, 112], dup)).unwrap();
        assert_eq!(d[0], d[1]);
    }

    #[test]
    fn zero_heads_predict_zero_pose() {
        let mut m = tiny(1);
        for h in m.heads_mut() {
            h.weight_mut().value_mut().fill(0.0);
            h.bias_mut().value_mut().fill(0.0);
        }
        let img = Image::filled(112, 112, [0.3, 0.6, 0.9]);
        let p = m.predict_pose(&img).unwrap();
        assert!(p.max_abs() < 1e-9);
    }

    #[test]
    fn one_hot_heads_decode_to_bin_centers() {
        let mut m = tiny(1);
        for (h, bin) in m.heads_mut().iter_mut().zip([31, 0, 61]) {
            h.weight_mut().value_mut().fill(0.0);
            h.bias_mut().value_mut().fill(0.0);
            h.bias_mut().value_mut()[bin] = 60.0;
        }
        let p = m.predict_pose(&Image::new(112, 112)).unwrap();
        assert!((p.yaw - 1.5).abs() < 1e-9);
        assert!((p.pitch + 91.5).abs() < 1e-9);
        assert!((p.roll - 91.5).abs() < 1e-9);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let m = tiny(9);
        let x = batch(2, 3);
        let copy = PoseModel::from_bytes(&m.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(m.forward_tensor(&x).unwrap(), copy.forward_tensor(&x).unwrap());
        assert_eq!(m.checksum(), copy.checksum());
    }

    fn header_of(bytes: &[u8]) -> (serde_json::Value, Vec<u8>) {
        let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        (serde_json::from_slice(&bytes[8..8 + len]).unwrap(), bytes[8 + len..].to_vec())
    }

    fn reframe(header: &serde_json::Value, payload: &[u8]) -> Vec<u8> {
        let json = serde_json::to_vec(header).unwrap();
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(payload);
        out
    }

    fn field_of(e: Error) -> String {
        match e {
            Error::Checkpoint { field, .. } => field,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn checkpoint_errors_name_the_field() {
        let bytes = tiny(0).to_bytes();
        let (header, payload) = header_of(&bytes);

        let mut h = header.clone();
        h.as_object_mut().unwrap().remove("grid");
        assert_eq!(field_of(PoseModel::from_bytes(&reframe(&h, &payload), Path::new("x")).err().unwrap()), "grid");

        let mut h = header.clone();
        h["format_version"] = json!(99);
        assert_eq!(field_of(PoseModel::from_bytes(&reframe(&h, &payload), Path::new("x")).err().unwrap()), "format_version");

        let truncated = &bytes[..bytes.len() - 4];
        assert_eq!(field_of(PoseModel::from_bytes(truncated, Path::new("x")).err().unwrap()), "payload");

        assert_eq!(field_of(PoseModel::from_bytes(b"nope", Path::new("x")).err().unwrap()), "magic");
    }

    #[test]
    fn backbone_expectation_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        tiny(0).save(&path).unwrap();
        assert!(PoseModel::load_expecting(&path, BackboneName::TinyCnn).is_ok());
        assert_eq!(field_of(PoseModel::load_expecting(&path, BackboneName::Resnet18).err().unwrap()), "backbone");
    }

    #[test]
    fn backbone_names_parse() {
        for b in BackboneName::ALL {
            assert_eq!(b.as_str().parse::<BackboneName>().unwrap(), b);
            assert_eq!(serde_json::to_value(b).unwrap(), json!(b.as_str()));
        }
        assert!("vgg".parse::<BackboneName>().is_err());
    }
}
