use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, InputShape};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Eight isotropic Gaussians on a circle, 45° apart.
    EightGaussianRing,
    /// Two interleaved half circles.
    TwoMoons,
    /// Uniform on the dark squares of a 4×4 board.
    Checkerboard,
}

pub const RING_CENTER: (f64, f64) = (0.5, 0.5);
pub const RING_RADIUS: f64 = 0.35;
pub const RING_STD: f64 = 0.02;

/// Seeded 2-D benchmark inside the unit square.
pub fn synth_dataset(kind: SynthKind, n: usize, seed: u64) -> Dataset {
    let mut rng = crate::seeded_rng(seed);
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (x, y) = match kind {
            SynthKind::EightGaussianRing => {
                let mode = rng.random_range(0..8) as f64;
                let a = mode * std::f64::consts::FRAC_PI_4;
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                (
                    RING_CENTER.0 + RING_RADIUS * a.cos() + RING_STD * nx,
                    RING_CENTER.1 + RING_RADIUS * a.sin() + RING_STD * ny,
                )
            }
            SynthKind::TwoMoons => {
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let (mx, my) = if rng.random_bool(0.5) {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                // moons span x in [-1, 2], y in [-0.5, 1]
                (
                    (mx + 0.05 * nx + 1.25) / 3.5,
                    (my + 0.05 * ny + 0.75) / 2.0,
                )
            }
            SynthKind::Checkerboard => loop {
                let x: f64 = rng.random();
                let y: f64 = rng.random();
                let (cx, cy) = ((x * 4.0) as usize, (y * 4.0) as usize);
                if (cx + cy) % 2 == 0 {
                    break (x, y);
                }
            },
        };
        data.push(x.clamp(0.0, 1.0));
        data.push(y.clamp(0.0, 1.0));
    }
    let name = match kind {
        SynthKind::EightGaussianRing => "eight_gaussian_ring",
        SynthKind::TwoMoons => "two_moons",
        SynthKind::Checkerboard => "checkerboard",
    };
    Dataset::new(
        Tensor::matrix(n, 2, data).expect("2n values"),
        InputShape::Flat { dims: 2 },
        name,
        None,
    )
    .expect("points clamped into the unit square")
}
