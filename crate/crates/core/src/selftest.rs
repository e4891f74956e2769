//! Fast invariant checks runnable from a fresh checkout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{decode, encode, softmax, BinGrid};
use crate::geometry::{flip_horizontal, square_box, BoundingBox, EulerPose, Image};
use crate::losses::{distillation_loss_with_grad, ensemble, total_loss_with_grad, PoseDistribution, PoseLogits};

/// Finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;
/// Relative error below which an analytic gradient coordinate is accepted.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Runs every check. Deterministic for a given seed.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        codec_roundtrip(),
        gradient_check(seed, 10),
        ensemble_oracle(seed),
        geometry_properties(seed, 10_000),
    ]
}

/// Worst `|decode(onehot(encode(a))) - a|` over the 0.1 degree lattice of the grid.
pub fn codec_roundtrip() -> CheckResult {
    let grid = BinGrid::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in -930..930 {
        let a = i as f64 / 10.0;
        let probs = encode(a, &grid).and_then(|b| decode(&b.to_probs(&grid), &grid));
        match probs {
            Ok(r) => worst = worst.max((r - a).abs()),
            Err(_) => worst = f64::INFINITY,
        }
        count += 1;
    }
    CheckResult::new("codec roundtrip", worst <= 1.5, format!("{count} angles, max error {worst:.4} deg (bound 1.5)"))
}

/// `|a - n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

pub fn random_logits(rng: &mut impl Rng, num_bins: usize, scale: f64) -> PoseLogits {
    PoseLogits::new(std::array::from_fn(|_| (0..num_bins).map(|_| rng.random_range(-scale..scale)).collect()))
}

pub fn random_distribution(rng: &mut impl Rng, num_bins: usize) -> PoseDistribution {
    let logits = random_logits(rng, num_bins, 3.0);
    PoseDistribution::new(logits.rows.map(|r| softmax(&r)))
}

type Objective<'a> = dyn Fn(&PoseLogits) -> crate::Result<(f64, [Vec<f64>; 3])> + 'a;

/// Central differences on both objectives over every logit coordinate.
pub fn gradient_check(seed: u64, seeds: u64) -> CheckResult {
    let grid = BinGrid::default();
    let mut worst: f64 = 0.0;
    let mut coords = 0usize;
    for s in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s));
        let logits = random_logits(&mut rng, grid.num_bins(), 4.0);
        let target = EulerPose::new(rng.random_range(-99.0..99.0), rng.random_range(-99.0..99.0), rng.random_range(-99.0..99.0));
        let pseudo = random_distribution(&mut rng, grid.num_bins());
        let temperature = rng.random_range(0.5..3.0);

        let hard = |l: &PoseLogits| total_loss_with_grad(l, &target, &grid, 1.0).map(|(v, g)| (v.total, g));
        let soft = |l: &PoseLogits| distillation_loss_with_grad(l, &pseudo, &grid, temperature);
        let objectives: [&Objective; 2] = [&hard, &soft];
        for f in objectives {
            let Ok((_, grad)) = f(&logits) else {
                return CheckResult::new("gradient check", false, format!("seed {s}: objective failed"));
            };
            for a in 0..3 {
                for j in 0..grid.num_bins() {
                    let mut plus = logits.clone();
                    plus.rows[a][j] += FD_STEP;
                    let mut minus = logits.clone();
                    minus.rows[a][j] -= FD_STEP;
                    let (Ok((lp, _)), Ok((lm, _))) = (f(&plus), f(&minus)) else {
                        return CheckResult::new("gradient check", false, format!("seed {s}: objective failed"));
                    };
                    let numeric = (lp - lm) / (2.0 * FD_STEP);
                    worst = worst.max(relative_error(grad[a][j], numeric));
                    coords += 1;
                }
            }
        }
    }
    CheckResult::new(
        "gradient check",
        worst < GRADIENT_TOLERANCE,
        format!("{coords} coordinates over {seeds} seeds, max relative error {worst:.2e} (bound {GRADIENT_TOLERANCE:.0e})"),
    )
}

/// Ensemble against an elementwise mean, and decode linearity, for 1 to 3 teachers.
pub fn ensemble_oracle(seed: u64) -> CheckResult {
    let grid = BinGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean_err, mut decode_err): (f64, f64) = (0.0, 0.0);
    for n in 1..=3 {
        let teachers: Vec<PoseDistribution> = (0..n).map(|_| random_distribution(&mut rng, grid.num_bins())).collect();
        let Ok(pseudo) = ensemble(&teachers) else {
            return CheckResult::new("ensemble oracle", false, format!("ensemble of {n} failed"));
        };
        for a in 0..3 {
            for j in 0..grid.num_bins() {
                let brute = teachers.iter().map(|t| t.rows[a][j]).sum::<f64>() / n as f64;
                mean_err = mean_err.max((pseudo.rows[a][j] - brute).abs());
            }
            let decoded = decode(&pseudo.rows[a], &grid).unwrap_or(f64::NAN);
            let per_teacher = teachers.iter().map(|t| decode(&t.rows[a], &grid).unwrap_or(f64::NAN)).sum::<f64>() / n as f64;
            decode_err = decode_err.max((decoded - per_teacher).abs()).max(if decoded.is_nan() { f64::INFINITY } else { 0.0 });
        }
    }
    CheckResult::new(
        "ensemble oracle",
        mean_err <= 1e-12 && decode_err <= 1e-9,
        format!("max mean error {mean_err:.1e} (bound 1e-12), max decode error {decode_err:.1e} (bound 1e-9)"),
    )
}

/// Squaring is square, containing and idempotent on random boxes; flipping twice is the identity.
pub fn geometry_properties(seed: u64, boxes: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    for _ in 0..boxes {
        let x1 = rng.random_range(-500..500);
        let y1 = rng.random_range(-500..500);
        let b = BoundingBox::new(x1, y1, x1 + rng.random_range(1..400), y1 + rng.random_range(1..400));
        let ok = b.and_then(|b| {
            let s = square_box(&b)?;
            Ok(s.is_square() && s.contains(&b) && square_box(&s)? == s)
        });
        if !matches!(ok, Ok(true)) {
            failures += 1;
        }
    }
    let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
    let data: Vec<f32> = (0..w * h * 3).map(|_| rng.random()).collect();
    let image = Image::from_vec(w, h, data).expect("sized buffer");
    let pose = EulerPose::new(rng.random_range(-90.0..90.0), rng.random_range(-90.0..90.0), rng.random_range(-90.0..90.0));
    let (once, p1) = flip_horizontal(&image, &pose);
    let (twice, p2) = flip_horizontal(&once, &p1);
    let involution = twice.data() == image.data() && p2 == pose;
    CheckResult::new(
        "geometry properties",
        failures == 0 && involution,
        format!("{boxes} boxes, {failures} failures, flip involution {}", if involution { "exact" } else { "broken" }),
    )
}
