use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fraction of phase-encode lines in the always-sampled central band.
pub const CENTER_FRACTION: f64 = 0.04;
/// Minimum number of lines in the central band.
pub const MIN_CENTER_LINES: usize = 4;

/// A Cartesian line mask: phase-encode lines (rows) are either fully kept
/// or fully dropped. Lines are indexed in centered order, DC at `height / 2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CartesianMask {
    lines: Vec<bool>,
    width: usize,
    acceleration: usize,
}

impl CartesianMask {
    pub fn from_lines(lines: Vec<bool>, width: usize, acceleration: usize) -> Self {
        Self {
            lines,
            width,
            acceleration,
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::from_lines(vec![true; height], width, 1)
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self::from_lines(vec![false; height], width, 0)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.lines.len(), self.width)
    }

    pub fn acceleration(&self) -> usize {
        self.acceleration
    }

    /// Keep flags per line, centered order.
    pub fn lines(&self) -> &[bool] {
        &self.lines
    }

    pub fn kept_lines(&self) -> usize {
        self.lines.iter().filter(|&&k| k).count()
    }

    /// Mask value at centered coordinates.
    pub fn get(&self, row: usize, _col: usize) -> bool {
        self.lines[row]
    }

    /// Keep flag for an unshifted (FFT-order) line index.
    pub fn keeps_unshifted(&self, line: usize) -> bool {
        let n = self.lines.len();
        // unshifted u corresponds to centered (u + n/2) mod n
        self.lines[(line + n / 2) % n]
    }

    /// Dense `[H, W]` binary array in centered order.
    pub fn to_dense(&self) -> Vec<u8> {
        self.lines
            .iter()
            .flat_map(|&k| std::iter::repeat_n(k as u8, self.width))
            .collect()
    }
}

/// Number of lines in the always-kept central band for `n` lines.
pub fn center_lines(n: usize) -> usize {
    ((CENTER_FRACTION * n as f64).round() as usize)
        .max(MIN_CENTER_LINES)
        .min(n)
}

/// Random Cartesian mask keeping `round(H / acceleration)` lines, including
/// a central band, with the remaining lines drawn uniformly from `seed`.
pub fn make_cartesian_mask(shape: (usize, usize), acceleration: usize, seed: u64) -> Result<CartesianMask> {
    let (n, width) = shape;
    if acceleration < 2 {
        return Err(Error::arg(format!(
            "acceleration must be >= 2, got {acceleration}"
        )));
    }
    if acceleration >= n {
        return Err(Error::arg(format!(
            "acceleration {acceleration} must be below the line count {n}"
        )));
    }
    let band = center_lines(n);
    let start = n / 2 - band / 2;
    let target = ((n as f64 / acceleration as f64).round() as usize).max(band);

    let mut lines = vec![false; n];
    lines[start..start + band].fill(true);
    let outside: Vec<usize> = (0..n).filter(|&i| !lines[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pick in sample(&mut rng, outside.len(), target - band) {
        lines[outside[pick]] = true;
    }
    Ok(CartesianMask::from_lines(lines, width, acceleration))
}
