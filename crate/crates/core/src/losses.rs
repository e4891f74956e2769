//! Training objectives over the three angle heads.
//!
//! Every function works in `f64`. Functions taking logits also return the
//! gradient with respect to those logits; functions taking probabilities are
//! value-only and guard their logarithms with [`LOG_EPSILON`].

use serde::{Deserialize, Serialize};

use crate::codec::{encode, expectation, log_softmax_with_temperature, softmax, softmax_with_temperature, BinGrid, BinOneHot};
use crate::error::{Error, Result};
use crate::geometry::EulerPose;

const MODULE: &str = "losses";

/// Lower clamp applied to probabilities before taking logarithms.
pub const LOG_EPSILON: f64 = 1e-12;

pub const ANGLES: [&str; 3] = ["yaw", "pitch", "roll"];

/// Counts how often a probability had to be clamped before a logarithm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub clamped: usize,
}

impl Diagnostics {
    fn guarded_ln(&mut self, p: f64) -> f64 {
        if p < LOG_EPSILON {
            self.clamped += 1;
            LOG_EPSILON.ln()
        } else {
            p.ln()
        }
    }
}

/// Raw head output: one row of logits per angle, in yaw, pitch, roll order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseLogits {
    pub rows: [Vec<f64>; 3],
}

/// One probability row per angle. Used both for model outputs and for soft targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDistribution {
    pub rows: [Vec<f64>; 3],
}

/// Teacher-ensemble soft target for one sample.
pub type PseudoLabel = PoseDistribution;

impl PoseLogits {
    pub fn new(rows: [Vec<f64>; 3]) -> Self {
        Self { rows }
    }

    pub fn zeros(num_bins: usize) -> Self {
        Self::new([vec![0.0; num_bins], vec![0.0; num_bins], vec![0.0; num_bins]])
    }

    pub fn softmax(&self, temperature: f64) -> PoseDistribution {
        PoseDistribution {
            rows: self.rows.each_ref().map(|r| softmax_with_temperature(r, temperature)),
        }
    }

    fn check(&self, grid: &BinGrid) -> Result<()> {
        for (name, row) in ANGLES.iter().zip(&self.rows) {
            if row.len() != grid.num_bins() {
                return Err(Error::invalid(MODULE, format!("{name} logits have {} entries, expected {}", row.len(), grid.num_bins())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(MODULE, format!("{name} logits are not finite")));
            }
        }
        Ok(())
    }
}

impl PoseDistribution {
    pub fn new(rows: [Vec<f64>; 3]) -> Self {
        Self { rows }
    }

    /// Expected pose of the three rows.
    pub fn decode(&self, grid: &BinGrid) -> Result<EulerPose> {
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = crate::codec::decode(row, grid)?;
        }
        Ok(EulerPose::from_array(out))
    }

    fn check(&self, grid: &BinGrid, what: &str) -> Result<()> {
        for (name, row) in ANGLES.iter().zip(&self.rows) {
            if row.len() != grid.num_bins() {
                return Err(Error::invalid(MODULE, format!("{what} {name} row has {} entries, expected {}", row.len(), grid.num_bins())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > crate::codec::DECODE_SUM_TOLERANCE {
                return Err(Error::invalid(MODULE, format!("{what} {name} row is not a probability distribution (sum {sum})")));
            }
        }
        Ok(())
    }
}

/// Cross-entropy `-ln p[target]` of one angle.
pub fn classification_loss(probs: &[f64], target: BinOneHot, diag: &mut Diagnostics) -> f64 {
    -diag.guarded_ln(probs[target.bin_index])
}

/// Mean cross-entropy over a batch.
pub fn batch_classification_loss(samples: &[(&[f64], BinOneHot)], diag: &mut Diagnostics) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid(MODULE, "empty batch"));
    }
    let sum: f64 = samples.iter().map(|(p, t)| classification_loss(p, *t, diag)).sum();
    Ok(sum / samples.len() as f64)
}

/// Squared error of one decoded angle.
pub fn regression_loss(pred: f64, truth: f64) -> f64 {
    (pred - truth).powi(2)
}

/// Mean squared error over `(pred, truth)` pairs.
pub fn batch_regression_loss(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid(MODULE, "empty batch"));
    }
    Ok(pairs.iter().map(|(p, t)| regression_loss(*p, *t)).sum::<f64>() / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleTerms {
    pub classification: f64,
    /// Unweighted squared error.
    pub regression: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalLoss {
    pub total: f64,
    pub per_angle: [AngleTerms; 3],
}

/// Hard-label objective and its gradient with respect to the logits.
///
/// For each angle with `p = softmax(z)` and `r = sum_j p_j c_j`:
/// `L = -ln p_t + w (r - y)^2`, `dL/dz_j = p_j - [j = t] + 2w (r - y) p_j (c_j - r)`.
/// The target angle is clamped to the grid range before encoding and regression.
pub fn total_loss_with_grad(logits: &PoseLogits, target: &EulerPose, grid: &BinGrid, reg_weight: f64) -> Result<(TotalLoss, [Vec<f64>; 3])> {
    logits.check(grid)?;
    if !target.is_finite() {
        return Err(Error::invalid(MODULE, format!("target pose {target:?} is not finite")));
    }
    let centers = grid.centers();
    let mut per_angle = [AngleTerms {
        classification: 0.0,
        regression: 0.0,
    }; 3];
    let mut grads: [Vec<f64>; 3] = Default::default();
    for (a, y) in target.to_array().into_iter().enumerate() {
        let y = grid.clamp(y);
        let bin = encode(y, grid)?.bin_index;
        let logp = log_softmax_with_temperature(&logits.rows[a], 1.0);
        let p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
        let r = expectation(&p, grid);
        per_angle[a] = AngleTerms {
            classification: -logp[bin],
            regression: regression_loss(r, y),
        };
        let scale = 2.0 * reg_weight * (r - y);
        grads[a] = p
            .iter()
            .zip(&centers)
            .enumerate()
            .map(|(j, (pj, cj))| pj - f64::from(j == bin) + scale * pj * (cj - r))
            .collect();
    }
    let total = per_angle.iter().map(|t| t.classification + reg_weight * t.regression).sum();
    Ok((TotalLoss { total, per_angle }, grads))
}

pub fn total_loss(logits: &PoseLogits, target: &EulerPose, grid: &BinGrid, reg_weight: f64) -> Result<TotalLoss> {
    total_loss_with_grad(logits, target, grid, reg_weight).map(|(l, _)| l)
}

/// Uniform mean of teacher distributions.
pub fn ensemble(teachers: &[PoseDistribution]) -> Result<PseudoLabel> {
    let first = teachers.first().ok_or_else(|| Error::invalid(MODULE, "ensemble of zero teachers"))?;
    let n = teachers.len() as f64;
    let mut rows = first.rows.clone();
    for (a, row) in rows.iter_mut().enumerate() {
        for t in &teachers[1..] {
            if t.rows[a].len() != row.len() {
                return Err(Error::invalid(MODULE, "teachers disagree on the number of bins"));
            }
            row.iter_mut().zip(&t.rows[a]).for_each(|(acc, v)| *acc += v);
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(PoseDistribution { rows })
}

/// `sum over angles of KL(pseudo || student)` on probabilities.
pub fn distillation_loss(student: &PoseDistribution, pseudo: &PseudoLabel, grid: &BinGrid, diag: &mut Diagnostics) -> Result<f64> {
    student.check(grid, "student")?;
    pseudo.check(grid, "pseudo-label")?;
    let mut total = 0.0;
    for (s, q) in student.rows.iter().zip(&pseudo.rows) {
        for (sj, qj) in s.iter().zip(q) {
            let qj = qj.max(LOG_EPSILON);
            total += qj * (qj.ln() - diag.guarded_ln(*sj));
        }
    }
    Ok(total)
}

/// Distillation objective on student logits softened by `temperature`, with
/// its gradient: `dL/dz_j = (p_j sum_i q_i - q_j) / T`.
pub fn distillation_loss_with_grad(student: &PoseLogits, pseudo: &PseudoLabel, grid: &BinGrid, temperature: f64) -> Result<(f64, [Vec<f64>; 3])> {
    student.check(grid)?;
    pseudo.check(grid, "pseudo-label")?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(MODULE, format!("temperature must be positive, got {temperature}")));
    }
    let mut total = 0.0;
    let mut grads: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        let logp = log_softmax_with_temperature(&student.rows[a], temperature);
        let q: Vec<f64> = pseudo.rows[a].iter().map(|v| v.max(LOG_EPSILON)).collect();
        let mass: f64 = q.iter().sum();
        total += q.iter().zip(&logp).map(|(qj, lp)| qj * (qj.ln() - lp)).sum::<f64>();
        grads[a] = logp.iter().zip(&q).map(|(lp, qj)| (lp.exp() * mass - qj) / temperature).collect();
    }
    Ok((total, grads))
}

/// Uniform distribution on every angle, as produced by all-zero logits.
pub fn uniform_pose_distribution(grid: &BinGrid) -> PoseDistribution {
    let row = softmax(&vec![0.0; grid.num_bins()]);
    PoseDistribution::new([row.clone(), row.clone(), row])
}
