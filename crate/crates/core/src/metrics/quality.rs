use crate::data::ImageTensor;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shapes(pred: &ImageTensor, target: &ImageTensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::arg(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

pub fn mse(pred: &ImageTensor, target: &ImageTensor) -> Result<f64> {
    check_shapes(pred, target)?;
    let sum: f64 = pred
        .pixels()
        .iter()
        .zip(target.pixels())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Peak signal-to-noise ratio in dB. Identical images give `f64::INFINITY`.
pub fn psnr(pred: &ImageTensor, target: &ImageTensor, data_range: f64) -> Result<f64> {
    if data_range.is_nan() || data_range <= 0.0 {
        return Err(Error::arg(format!(
            "data range must be positive, got {data_range}"
        )));
    }
    let err = mse(pred, target)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / err).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable "valid" Gaussian filtering.
fn filter_valid(values: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let oh = h - SSIM_WINDOW + 1;
    let ow = w - SSIM_WINDOW + 1;
    let mut horizontal = vec![0.0; h * ow];
    for r in 0..h {
        let row = &values[r * w..(r + 1) * w];
        for c in 0..ow {
            horizontal[r * ow + c] = win.iter().zip(&row[c..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = win
                .iter()
                .enumerate()
                .map(|(k, a)| a * horizontal[(r + k) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// evaluated over the fully-covered ("valid") region.
pub fn ssim(pred: &ImageTensor, target: &ImageTensor, data_range: f64) -> Result<f64> {
    check_shapes(pred, target)?;
    let (h, w) = pred.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::arg(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let x = pred.to_f64();
    let y = target.to_f64();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(&x, h, w, &win);
    let mu_y = filter_valid(&y, h, w, &win);
    let e_xx = filter_valid(&xx, h, w, &win);
    let e_yy = filter_valid(&yy, h, w, &win);
    let e_xy = filter_valid(&xy, h, w, &win);

    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}

/// Absolute error image `|pred - target|`.
pub fn residue(pred: &ImageTensor, target: &ImageTensor) -> Result<ImageTensor> {
    check_shapes(pred, target)?;
    let values = pred
        .pixels()
        .iter()
        .zip(target.pixels())
        .map(|(a, b)| (a - b).abs())
        .collect();
    ImageTensor::new(pred.height(), pred.width(), values)
}
