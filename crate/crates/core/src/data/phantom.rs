//! Synthetic cardiac-like cine phantoms.
//!
//! Each sequence contains a static torso ellipse, a myocardium ellipse and a
//! nested blood-pool ellipse whose radii oscillate sinusoidally across the
//! frames, and a fixed low-amplitude texture. Geometry and intensities are
//! drawn from a seeded generator so every seed names one sequence.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CineSequence, ImageTensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
}

impl Ellipse {
    /// Signed coverage in `[0, 1]` with a one-pixel soft edge.
    fn coverage(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let rho = ((u / self.rx).powi(2) + (v / self.ry).powi(2)).sqrt();
        // distance to the boundary, approximately in pixels
        let edge = (1.0 - rho) * self.rx.min(self.ry);
        (edge + 0.5).clamp(0.0, 1.0)
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            ry: self.ry * factor,
            rx: self.rx * factor,
            ..*self
        }
    }
}

struct TextureWave {
    ky: f64,
    kx: f64,
    phase: f64,
    amplitude: f64,
}

/// Generates a deterministic cine sequence of `num_frames` frames of
/// `size`x`size` pixels with intensities in `[0, 1]`.
pub fn generate_phantom_cine(seed: u64, num_frames: usize, size: usize) -> Result<CineSequence> {
    if num_frames < 3 {
        return Err(Error::arg(format!(
            "phantom needs at least 3 frames, got {num_frames}"
        )));
    }
    if size < 32 {
        return Err(Error::arg(format!(
            "phantom size must be at least 32, got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size as f64;
    let mid = n / 2.0;

    let torso = Ellipse {
        cy: mid + rng.random_range(-0.04..0.04) * n,
        cx: mid + rng.random_range(-0.04..0.04) * n,
        ry: rng.random_range(0.30..0.38) * n,
        rx: rng.random_range(0.38..0.46) * n,
        angle: rng.random_range(-0.2..0.2),
    };
    let heart = Ellipse {
        cy: torso.cy + rng.random_range(-0.08..0.04) * n,
        cx: torso.cx + rng.random_range(-0.10..0.10) * n,
        ry: rng.random_range(0.12..0.17) * n,
        rx: rng.random_range(0.13..0.19) * n,
        angle: rng.random_range(-PI..PI),
    };
    let pool_ratio = rng.random_range(0.55..0.72);
    let torso_level = rng.random_range(0.25..0.40);
    let muscle_level = rng.random_range(0.50..0.65);
    let blood_level = rng.random_range(0.85..1.0);
    let amplitude = rng.random_range(0.10..0.20);
    let pool_amplitude = rng.random_range(0.15..0.28);
    let phase = rng.random_range(0.0..2.0 * PI);

    let waves: Vec<TextureWave> = (0..4)
        .map(|_| TextureWave {
            ky: rng.random_range(0.05..0.6),
            kx: rng.random_range(0.05..0.6),
            phase: rng.random_range(0.0..2.0 * PI),
            amplitude: rng.random_range(0.005..0.02),
        })
        .collect();

    let texture: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            waves
                .iter()
                .map(|w| w.amplitude * (w.ky * y + w.kx * x + w.phase).sin())
                .sum()
        })
        .collect();

    let frames = (0..num_frames)
        .map(|t| {
            let beat = (2.0 * PI * t as f64 / num_frames as f64 + phase).sin();
            let outer = heart.scaled(1.0 + amplitude * beat);
            let inner = heart.scaled(pool_ratio * (1.0 + pool_amplitude * beat));
            ImageTensor::from_fn(size, size, |r, c| {
                let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
                let body = torso.coverage(y, x);
                let wall = outer.coverage(y, x);
                let pool = inner.coverage(y, x);
                let mut v = torso_level * body;
                v += (muscle_level - torso_level) * wall * body;
                v += (blood_level - muscle_level) * pool * wall * body;
                v += texture[r * size + c] * body;
                v.clamp(0.0, 1.0) as f32
            })
        })
        .collect();

    CineSequence::new(frames, num_frames / 2)
}
