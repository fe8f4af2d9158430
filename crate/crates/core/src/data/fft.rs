use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::ImageTensor;
use crate::error::{Error, Result};

/// Complex 2D spectrum in unshifted (DC at index 0) layout.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpace {
    height: usize,
    width: usize,
    coeffs: Vec<Complex64>,
}

impl KSpace {
    pub fn new(height: usize, width: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != height * width {
            return Err(Error::arg(format!(
                "k-space buffer has {} coefficients, expected {}",
                coeffs.len(),
                height * width
            )));
        }
        Ok(Self {
            height,
            width,
            coeffs,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.coeffs[r * self.width..(r + 1) * self.width]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.coeffs[r * self.width..(r + 1) * self.width]
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Maps a centered (DC at `n / 2`) line index to the unshifted FFT index.
pub fn centered_to_unshifted(centered: usize, n: usize) -> usize {
    (centered + n - n / 2) % n
}

fn transform_2d(data: &mut [Complex64], height: usize, width: usize, direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(width, direction);
    let col_fft = planner.plan_fft(height, direction);

    run_rows(row_fft.as_ref(), data, width);

    let mut column = vec![Complex64::default(); height];
    let mut scratch = vec![Complex64::default(); col_fft.get_inplace_scratch_len()];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }

    let scale = 1.0 / ((height * width) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

fn run_rows(fft: &dyn Fft<f64>, data: &mut [Complex64], width: usize) {
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width) {
        fft.process_with_scratch(row, &mut scratch);
    }
}

/// Unitary forward 2D DFT of a real image.
pub fn fft2(image: &ImageTensor) -> KSpace {
    let (h, w) = image.shape();
    let mut data: Vec<Complex64> = image
        .pixels()
        .iter()
        .map(|&p| Complex64::new(p as f64, 0.0))
        .collect();
    transform_2d(&mut data, h, w, FftDirection::Forward);
    KSpace {
        height: h,
        width: w,
        coeffs: data,
    }
}

/// Unitary inverse 2D DFT; returns the complex image.
pub fn ifft2(kspace: &KSpace) -> Vec<Complex64> {
    let mut data = kspace.coeffs.clone();
    transform_2d(&mut data, kspace.height, kspace.width, FftDirection::Inverse);
    data
}

/// Inverse transform followed by magnitude and clipping to `[0, 1]`.
pub fn ifft2_magnitude(kspace: &KSpace) -> ImageTensor {
    let image = ifft2(kspace);
    let magnitude: Vec<f64> = image.iter().map(|c| c.norm()).collect();
    ImageTensor::from_f64_clipped(kspace.height, kspace.width, &magnitude)
}
