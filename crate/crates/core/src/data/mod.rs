//! Annotation ingestion, datasets, augmentation, pseudo-label storage and the
//! procedural synthetic dataset.

mod annotations;
mod augment;
mod pseudo_store;
mod synthetic;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{crop_and_resize, square_box, BoundingBox, EulerPose, Image};

pub use annotations::{load_annotations, validate_images, write_annotations, AnnotationFormat, Annotations, RejectedRow};
pub use augment::{augment, augment_detailed, sample_rng, Augmented, AugmentationConfig};
pub use pseudo_store::{PseudoLabelStore, PSEUDO_MAGIC, PSEUDO_VERSION};
pub use synthetic::{
    decode_synthetic, export_synthetic, make_synthetic_dataset, render_synthetic, SYNTHETIC_ANGLE_LIMIT, SYNTHETIC_BAR_HALF_WIDTH, SYNTHETIC_CENTER,
    SYNTHETIC_HAND_LENGTH, SYNTHETIC_PIXELS_PER_DEGREE, SYNTHETIC_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train or test)")),
        }
    }
}

/// One annotated face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// The `image` field as written in the annotation file.
    pub id: String,
    /// `id` resolved against the annotation file's directory.
    pub image_path: PathBuf,
    pub bbox: BoundingBox,
    pub pose: EulerPose,
    pub split: Split,
    pub source: String,
}

/// Keeps records whose angles all lie within `limit` degrees.
pub fn filter_pose_range(records: Vec<SampleRecord>, limit: f64) -> (Vec<SampleRecord>, usize) {
    let before = records.len();
    let kept: Vec<_> = records.into_iter().filter(|r| r.pose.max_abs() <= limit).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Indexed access to model-ready crops (`size x size`, values in `[0, 1]`).
pub trait PoseDataset: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn id(&self, index: usize) -> &str;

    fn pose(&self, index: usize) -> EulerPose;

    fn crop(&self, index: usize) -> Result<Image>;
}

/// Crops held in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemoryDataset {
    ids: Vec<String>,
    images: Vec<Image>,
    poses: Vec<EulerPose>,
}

impl InMemoryDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, image: Image, pose: EulerPose) {
        self.ids.push(id.into());
        self.images.push(image);
        self.poses.push(pose);
    }

    pub fn image(&self, index: usize) -> &Image {
        &self.images[index]
    }

    /// Copies the samples at `indices`, in that order.
    pub fn subset(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut out = Self::new();
        for i in indices {
            out.push(self.ids[i].clone(), self.images[i].clone(), self.poses[i]);
        }
        out
    }

    /// Crops every record of `dataset` once and keeps the result.
    pub fn materialize(dataset: &dyn PoseDataset) -> Result<Self> {
        let mut out = Self::new();
        for i in 0..dataset.len() {
            out.push(dataset.id(i), dataset.crop(i)?, dataset.pose(i));
        }
        Ok(out)
    }
}

impl PoseDataset for InMemoryDataset {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    fn pose(&self, index: usize) -> EulerPose {
        self.poses[index]
    }

    fn crop(&self, index: usize) -> Result<Image> {
        Ok(self.images[index].clone())
    }
}

/// Reads, squares and crops annotated images on demand.
#[derive(Debug, Clone)]
pub struct RecordDataset {
    records: Vec<SampleRecord>,
    size: usize,
}

impl RecordDataset {
    pub fn new(records: Vec<SampleRecord>, size: usize) -> Self {
        Self { records, size }
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }
}

/// Squares `record.bbox`, crops it from `image` and resizes to `size`.
pub fn crop_record(image: &Image, record: &SampleRecord, size: usize) -> Result<Image> {
    let squared = square_box(&record.bbox)?;
    let crop = crop_and_resize(image, &squared, size)?;
    if crop.empty_intersection {
        log::warn!("{}: face box lies outside the image", record.id);
    }
    Ok(crop.image)
}

impl PoseDataset for RecordDataset {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn id(&self, index: usize) -> &str {
        &self.records[index].id
    }

    fn pose(&self, index: usize) -> EulerPose {
        self.records[index].pose
    }

    fn crop(&self, index: usize) -> Result<Image> {
        let r = &self.records[index];
        crop_record(&Image::open(&r.image_path)?, r, self.size)
    }
}

pub(crate) fn resolve(base: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
