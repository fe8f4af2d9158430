/// Keys cubic convolution kernel with `a = -0.5`.
fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-sample taps `(first source index, weights[4])`, half-pixel
/// aligned with replicated borders.
fn taps(input: usize, output: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut wts = [0.0; 4];
            for k in 0..4 {
                let offset = k as f64 - 1.0;
                let i = (base + offset).clamp(0.0, (input - 1) as f64);
                idx[k] = i as usize;
                wts[k] = cubic(offset - frac);
            }
            let sum: f64 = wts.iter().sum();
            for w in &mut wts {
                *w /= sum;
            }
            (idx, wts)
        })
        .collect()
}

/// Separable bicubic resize of a row-major `from.0 x from.1` array.
pub(crate) fn resize_bicubic(values: &[f64], from: (usize, usize), to: (usize, usize)) -> Vec<f64> {
    let (ih, iw) = from;
    let (oh, ow) = to;
    let col_taps = taps(iw, ow);
    let row_taps = taps(ih, oh);

    let mut horizontal = vec![0.0; ih * ow];
    for r in 0..ih {
        let src = &values[r * iw..(r + 1) * iw];
        for (c, (idx, wts)) in col_taps.iter().enumerate() {
            horizontal[r * ow + c] = (0..4).map(|k| wts[k] * src[idx[k]]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (r, (idx, wts)) in row_taps.iter().enumerate() {
        for c in 0..ow {
            out[r * ow + c] = (0..4).map(|k| wts[k] * horizontal[idx[k] * ow + c]).sum();
        }
    }
    out
}
