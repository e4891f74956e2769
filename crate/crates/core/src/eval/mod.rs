//! Per-angle mean absolute error, prediction files, reference tables and
//! figure exports.

mod overlay;
mod reference;
mod scatter;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PoseDataset;
use crate::error::{Error, Result};
use crate::geometry::EulerPose;
use crate::model::PoseModel;
use crate::train::predict_indices;

pub use overlay::{axis_lines, draw_axes, rotation_matrix, AxisLines};
pub use reference::{ReferenceResults, ReferenceRow, ReferenceTable, REFERENCE_RESULTS_JSON};
pub use scatter::{scatter_export, ScatterFiles};

const MODULE: &str = "eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Angle {
    Yaw,
    Pitch,
    Roll,
}

impl Angle {
    pub const ALL: [Angle; 3] = [Angle::Yaw, Angle::Pitch, Angle::Roll];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Angle::Yaw => "yaw",
            Angle::Pitch => "pitch",
            Angle::Roll => "roll",
        }
    }
}

impl std::str::FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Angle::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(MODULE, format!("unknown angle `{s}` (expected yaw, pitch or roll)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub id: String,
    pub truth: EulerPose,
    pub pred: EulerPose,
    /// `|pred - truth|` per angle, no wrap-around.
    pub abs_err: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Yaw, pitch, roll MAE in degrees.
    pub per_angle_mae: [f64; 3],
    pub mae: f64,
    pub count: usize,
    pub per_sample: Vec<SampleError>,
}

impl EvalReport {
    pub fn from_predictions(samples: impl IntoIterator<Item = (String, EulerPose, EulerPose)>) -> Result<Self> {
        let per_sample: Vec<SampleError> = samples
            .into_iter()
            .map(|(id, truth, pred)| {
                let (t, p) = (truth.to_array(), pred.to_array());
                SampleError {
                    id,
                    truth,
                    pred,
                    abs_err: std::array::from_fn(|a| (p[a] - t[a]).abs()),
                }
            })
            .collect();
        if per_sample.is_empty() {
            return Err(Error::invalid(MODULE, "nothing to evaluate"));
        }
        if let Some(s) = per_sample.iter().find(|s| s.abs_err.iter().any(|e| !e.is_finite())) {
            return Err(Error::invalid(MODULE, format!("sample {} has a non-finite angle", s.id)));
        }
        let n = per_sample.len() as f64;
        let per_angle_mae: [f64; 3] = std::array::from_fn(|a| per_sample.iter().map(|s| s.abs_err[a]).sum::<f64>() / n);
        Ok(Self {
            mae: per_angle_mae.iter().sum::<f64>() / 3.0,
            per_angle_mae,
            count: per_sample.len(),
            per_sample,
        })
    }

    /// One-line-per-metric text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>10}", "angle", "MAE (deg)");
        for a in Angle::ALL {
            let _ = writeln!(s, "{:<8} {:>10.4}", a.name(), self.per_angle_mae[a.index()]);
        }
        let _ = writeln!(s, "{:<8} {:>10.4}", "mean", self.mae);
        let _ = writeln!(s, "{:<8} {:>10}", "count", self.count);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Inference over every sample of `data`.
pub fn evaluate(model: &PoseModel, data: &dyn PoseDataset) -> Result<EvalReport> {
    let indices: Vec<usize> = (0..data.len()).collect();
    evaluate_indices(model, data, &indices)
}

pub fn evaluate_indices(model: &PoseModel, data: &dyn PoseDataset, indices: &[usize]) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::invalid(MODULE, "nothing to evaluate"));
    }
    let preds = predict_indices(model, data, indices)?;
    EvalReport::from_predictions(indices.iter().zip(preds).map(|(&i, p)| (data.id(i).to_string(), data.pose(i), p)))
}

pub const PREDICTION_COLUMNS: [&str; 7] = ["id", "yaw", "pitch", "roll", "pred_yaw", "pred_pitch", "pred_roll"];

/// Reads `id, yaw, pitch, roll, pred_yaw, pred_pitch, pred_roll` rows.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, EulerPose, EulerPose)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let bad = |line: usize, message: String| Error::Annotation {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(PREDICTION_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })?;
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.position().map(|p| p.line() as usize).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut v = [0.0f64; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            let raw = &rec[cols[k + 1]];
            *slot = raw.parse().map_err(|_| bad(line, format!("{} `{raw}` is not a number", PREDICTION_COLUMNS[k + 1])))?;
            if !slot.is_finite() {
                return Err(bad(line, format!("{} is not finite", PREDICTION_COLUMNS[k + 1])));
            }
        }
        out.push((rec[cols[0]].to_string(), EulerPose::new(v[0], v[1], v[2]), EulerPose::new(v[3], v[4], v[5])));
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, report: &EvalReport) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(PREDICTION_COLUMNS).map_err(io)?;
    for s in &report.per_sample {
        let (t, p) = (s.truth.to_array(), s.pred.to_array());
        w.write_record([s.id.clone(), t[0].to_string(), t[1].to_string(), t[2].to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(a: [f64; 3]) -> EulerPose {
        EulerPose::from_array(a)
    }

    #[test]
    fn perfect_predictions() {
        let r = EvalReport::from_predictions(vec![("a".into(), pose([1.0, 2.0, 3.0]), pose([1.0, 2.0, 3.0]))]).unwrap();
        assert_eq!(r.per_angle_mae, [0.0; 3]);
        assert_eq!(r.mae, 0.0);
    }

    #[test]
    fn two_yaw_errors_average() {
        let r = EvalReport::from_predictions(vec![
            ("a".into(), pose([0.0; 3]), pose([2.0, 0.0, 0.0])),
            ("b".into(), pose([0.0; 3]), pose([-4.0, 0.0, 0.0])),
        ])
        .unwrap();
        assert_eq!(r.per_angle_mae[0], 3.0);
        assert_eq!(r.count, 2);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(EvalReport::from_predictions(Vec::new()).is_err());
    }

    #[test]
    fn predictions_roundtrip_through_csv() {
        let r = EvalReport::from_predictions(vec![("x".into(), pose([1.25, -2.5, 3.0]), pose([0.5, 0.0, -1.75]))]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_predictions(&p, &r).unwrap();
        let back = EvalReport::from_predictions(read_predictions(&p).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn missing_prediction_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        std::fs::write(&p, "id,yaw,pitch,roll,pred_yaw,pred_pitch\na,0,0,0,0,0\n").unwrap();
        match read_predictions(&p) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "pred_roll"),
            other => panic!("{other:?}"),
        }
    }

    fn samples() -> impl Strategy<Value = Vec<([f64; 3], [f64; 3])>> {
        prop::collection::vec((prop::array::uniform3(-93.0f64..93.0), prop::array::uniform3(-93.0f64..93.0)), 1..30)
    }

    proptest! {
        #[test]
        fn report_invariants(s in samples(), rot in 0usize..30) {
            let rows: Vec<_> = s.iter().enumerate().map(|(i, (t, p))| (i.to_string(), pose(*t), pose(*p))).collect();
            let r = EvalReport::from_predictions(rows.clone()).unwrap();
            prop_assert!((r.mae - r.per_angle_mae.iter().sum::<f64>() / 3.0).abs() < 1e-9);
            prop_assert!(r.per_angle_mae.iter().all(|m| *m >= 0.0));
            let mut shuffled = rows.clone();
            shuffled.rotate_left(rot % rows.len());
            let r2 = EvalReport::from_predictions(shuffled).unwrap();
            for a in 0..3 {
                prop_assert!((r.per_angle_mae[a] - r2.per_angle_mae[a]).abs() < 1e-9);
            }
            let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
            prop_assert_eq!(back, r);
        }

        #[test]
        fn zero_iff_exact(s in samples()) {
            let exact = EvalReport::from_predictions(s.iter().enumerate().map(|(i, (t, _))| (i.to_string(), pose(*t), pose(*t)))).unwrap();
            prop_assert_eq!(exact.mae, 0.0);
            let r = EvalReport::from_predictions(s.iter().enumerate().map(|(i, (t, p))| (i.to_string(), pose(*t), pose(*p)))).unwrap();
            prop_assert_eq!(r.mae == 0.0, s.iter().all(|(t, p)| t == p));
        }
    }
}
