//! The loss functions against a plain scalar reimplementation, and their
//! analytic gradients against central finite differences.

use headpose::codec::BinGrid;
use headpose::geometry::EulerPose;
use headpose::losses::{distillation_loss_with_grad, total_loss, total_loss_with_grad, PoseDistribution, PoseLogits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BINS: usize = 62;

fn scalar_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn scalar_hard(rows: &[Vec<f64>; 3], target: [f64; 3], w: f64) -> f64 {
    let mut total = 0.0;
    for a in 0..3 {
        let y = target[a].clamp(-93.0, 93.0);
        let mut bin = ((y + 93.0) / 3.0).floor() as usize;
        if bin > BINS - 1 {
            bin = BINS - 1;
        }
        let p = scalar_softmax(&rows[a], 1.0);
        let mut r = 0.0;
        for j in 0..BINS {
            r += p[j] * (-93.0 + 3.0 * j as f64 + 1.5);
        }
        total += -p[bin].ln() + w * (r - y) * (r - y);
    }
    total
}

fn scalar_kl(rows: &[Vec<f64>; 3], q: &[Vec<f64>; 3], t: f64) -> f64 {
    let mut total = 0.0;
    for a in 0..3 {
        let p = scalar_softmax(&rows[a], t);
        for j in 0..BINS {
            total += q[a][j] * (q[a][j] / p[j]).ln();
        }
    }
    total
}

fn random_rows(rng: &mut ChaCha8Rng, scale: f64) -> [Vec<f64>; 3] {
    std::array::from_fn(|_| (0..BINS).map(|_| rng.random_range(-scale..scale)).collect())
}

fn random_target(rng: &mut ChaCha8Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.random_range(-93.0..93.0))
}

#[test]
fn values_match_scalar_reimplementation() {
    let grid = BinGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let rows = random_rows(&mut rng, 5.0);
        let target = random_target(&mut rng);
        let w = rng.random_range(0.0..2.0);
        let got = total_loss(&PoseLogits::new(rows.clone()), &EulerPose::from_array(target), &grid, w).unwrap().total;
        let want = scalar_hard(&rows, target, w);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "hard {got} vs {want}");

        let q: [Vec<f64>; 3] = random_rows(&mut rng, 3.0).map(|r| scalar_softmax(&r, 1.0));
        let t = rng.random_range(0.5..4.0);
        let (got, _) = distillation_loss_with_grad(&PoseLogits::new(rows.clone()), &PoseDistribution::new(q.clone()), &grid, t).unwrap();
        let want = scalar_kl(&rows, &q, t);
        assert!((got - want).abs() <= 1e-10, "kl {got} vs {want}");
    }
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-2)
}

#[test]
fn gradients_match_central_differences() {
    let grid = BinGrid::default();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..12 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, 4.0);
        let target = random_target(&mut rng);
        let q: [Vec<f64>; 3] = random_rows(&mut rng, 3.0).map(|r| scalar_softmax(&r, 1.0));
        let t = rng.random_range(0.5..3.0);
        let (_, g_hard) = total_loss_with_grad(&PoseLogits::new(rows.clone()), &EulerPose::from_array(target), &grid, 1.0).unwrap();
        let (_, g_kl) = distillation_loss_with_grad(&PoseLogits::new(rows.clone()), &PoseDistribution::new(q.clone()), &grid, t).unwrap();
        for a in 0..3 {
            for j in 0..BINS {
                let shifted = |d: f64| {
                    let mut r = rows.clone();
                    r[a][j] += d;
                    r
                };
                let n_hard = (scalar_hard(&shifted(h), target, 1.0) - scalar_hard(&shifted(-h), target, 1.0)) / (2.0 * h);
                let n_kl = (scalar_kl(&shifted(h), &q, t) - scalar_kl(&shifted(-h), &q, t)) / (2.0 * h);
                worst = worst.max(rel(g_hard[a][j], n_hard)).max(rel(g_kl[a][j], n_kl));
            }
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}
