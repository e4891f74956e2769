use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use headpose::codec::BinGrid;
use headpose::data::AugmentationConfig;
use headpose::model::{BackboneName, BackboneSpec, PoseModel, DEFAULT_INPUT_SIZE};
use headpose::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::Usage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: BackboneName,
    pub input_size: usize,
    pub num_bins: usize,
    pub range: [f64; 2],
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            backbone: BackboneName::Resnet18,
            input_size: DEFAULT_INPUT_SIZE,
            num_bins: headpose::codec::NUM_BINS,
            range: [headpose::codec::RANGE_LO, headpose::codec::RANGE_HI],
        }
    }
}

impl ModelSection {
    pub fn grid(&self) -> headpose::Result<BinGrid> {
        BinGrid::new(self.num_bins, self.range[0], self.range[1])
    }

    pub fn build(&self, seed: u64) -> headpose::Result<PoseModel> {
        PoseModel::new(BackboneSpec::new(self.backbone), self.grid()?, self.input_size, seed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Training annotations (csv or jsonl).
    pub train: Option<PathBuf>,
    /// Evaluation annotations.
    pub test: Option<PathBuf>,
    /// Drop samples with any angle outside the bin range.
    pub filter_range: bool,
    /// Decode and crop every image once before training.
    pub preload: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub data: DataSection,
    pub train: TrainConfig,
    pub augment: AugmentationConfig,
}

impl Config {
    /// Reads `path` (if any), applies `key=value` overrides and the seed, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cli: cannot read config {}", p.display()))?;
                text.parse::<toml::Table>().map_err(|e| Usage(format!("cli: config {} does not parse: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Config = Config::deserialize(toml::Value::Table(table)).map_err(|e| Usage(format!("cli: invalid config: {e}")))?;
        if let Some(s) = seed {
            cfg.train.seed = s;
            cfg.augment.seed = s;
        }
        if let Some(base) = path.and_then(Path::parent) {
            cfg.resolve_paths(base);
        }
        cfg.train.validate()?;
        cfg.augment.validate()?;
        cfg.model.grid()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.data.train.as_mut().map(fix);
        self.data.test.as_mut().map(fix);
        self.train.pseudo_store.as_mut().map(fix);
        self.train.teacher_checkpoints.iter_mut().for_each(fix);
    }

    pub fn augmentation(&self) -> Option<AugmentationConfig> {
        self.train.augment.then_some(self.augment)
    }
}

/// `section.key=value`; the value is read as TOML and falls back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!(Usage(format!("cli: override `{spec}` is not of the form key=value")));
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!(Usage(format!("cli: override key `{key}` is malformed")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, sections) = parts.split_last().expect("nonempty key");
    let mut cur = table;
    for s in sections {
        cur = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Usage(format!("cli: override `{key}`: `{s}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
