//! PNG figures from an evaluation directory: SSIM box plots and
//! target/input/prediction panels with residue maps.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cmaml::data::{load_tensor, Tensor, TensorData};
use cmaml::metrics::{parse_per_image_csv, read_text, EvalRecord, INPUT_METHOD};
use cmaml::Error;
use image::{ImageFormat, Rgb, RgbImage};

use crate::corpus::prepare_out_dir;
use crate::evaluate::{DEGRADED_PANEL, METHODS_FILE, PANEL_DIR, PER_IMAGE_FILE, TARGET_PANEL};

/// Residues at or above this value saturate the colour scale.
pub const RESIDUE_MAX: f32 = 0.25;
const GAP: u32 = 2;
const PLOT_TOP: u32 = 20;
const PLOT_HEIGHT: u32 = 220;
const LEFT: u32 = 30;
const SLOT: u32 = 50;
const BOX_HALF: u32 = 14;

const PALETTE: [[u8; 3]; 6] = [
    [128, 128, 128],
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
];
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const INK: Rgb<u8> = Rgb([20, 20, 20]);
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary with Tukey whiskers, plus the outliers beyond them.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let reach = 1.5 * (q3 - q1);
    let inside: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|v| *v >= q1 - reach && *v <= q3 + reach)
        .collect();
    Some(BoxStats {
        q1,
        median: quantile(&sorted, 0.5),
        q3,
        whisker_lo: inside[0],
        whisker_hi: inside[inside.len() - 1],
        outliers: sorted
            .iter()
            .copied()
            .filter(|v| *v < q1 - reach || *v > q3 + reach)
            .collect(),
    })
}

fn hline(img: &mut RgbImage, x0: u32, x1: u32, y: u32, color: Rgb<u8>) {
    for x in x0..=x1.min(img.width() - 1) {
        img.put_pixel(x, y.min(img.height() - 1), color);
    }
}

fn vline(img: &mut RgbImage, x: u32, y0: u32, y1: u32, color: Rgb<u8>) {
    let (a, b) = (y0.min(y1), y0.max(y1));
    for y in a..=b.min(img.height() - 1) {
        img.put_pixel(x.min(img.width() - 1), y, color);
    }
}

/// One box per method, SSIM on the vertical axis with grid lines every 0.1.
pub fn render_box_plot(series: &[(String, Vec<f64>)]) -> RgbImage {
    let min = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold(1.0_f64, f64::min);
    let lo = ((min * 10.0).floor() / 10.0).clamp(-1.0, 0.9);
    let width = 2 * LEFT + SLOT * series.len() as u32;
    let height = PLOT_TOP * 2 + PLOT_HEIGHT;
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    let to_y = |v: f64| -> u32 {
        let t = ((v - lo) / (1.0 - lo)).clamp(0.0, 1.0);
        PLOT_TOP + ((1.0 - t) * PLOT_HEIGHT as f64).round() as u32
    };
    let ticks = ((1.0 - lo) * 10.0).round() as i32;
    for k in 0..=ticks {
        hline(&mut img, LEFT, width - LEFT, to_y(lo + k as f64 / 10.0), GRID);
    }
    vline(&mut img, LEFT, PLOT_TOP, PLOT_TOP + PLOT_HEIGHT, INK);
    hline(&mut img, LEFT, width - LEFT, PLOT_TOP + PLOT_HEIGHT, INK);

    for (j, (_, values)) in series.iter().enumerate() {
        let Some(stats) = box_stats(values) else { continue };
        let color = Rgb(PALETTE[j % PALETTE.len()]);
        let cx = LEFT + SLOT * j as u32 + SLOT / 2;
        let (x0, x1) = (cx - BOX_HALF, cx + BOX_HALF);
        let (top, bottom) = (to_y(stats.q3), to_y(stats.q1));
        for y in top..=bottom {
            hline(&mut img, x0, x1, y, color);
        }
        hline(&mut img, x0, x1, top, INK);
        hline(&mut img, x0, x1, bottom, INK);
        vline(&mut img, x0, top, bottom, INK);
        vline(&mut img, x1, top, bottom, INK);
        hline(&mut img, x0, x1, to_y(stats.median), INK);
        vline(&mut img, cx, to_y(stats.whisker_hi), top, INK);
        vline(&mut img, cx, bottom, to_y(stats.whisker_lo), INK);
        hline(
            &mut img,
            cx - BOX_HALF / 2,
            cx + BOX_HALF / 2,
            to_y(stats.whisker_hi),
            INK,
        );
        hline(
            &mut img,
            cx - BOX_HALF / 2,
            cx + BOX_HALF / 2,
            to_y(stats.whisker_lo),
            INK,
        );
        for v in &stats.outliers {
            let y = to_y(*v);
            hline(&mut img, cx - 1, cx + 1, y, INK);
            vline(&mut img, cx, y.saturating_sub(1), y + 1, INK);
        }
    }
    img
}

fn gray(v: f32) -> Rgb<u8> {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([g, g, g])
}

/// Black through red and yellow to white over `[0, RESIDUE_MAX]`.
pub fn heat(v: f32) -> Rgb<u8> {
    let t = (v / RESIDUE_MAX).clamp(0.0, 1.0) * 3.0;
    let channel = |x: f32| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([channel(t), channel(t - 1.0), channel(t - 2.0)])
}

/// Grid of equally sized tiles; `None` leaves a tile black.
fn tile_grid(rows: &[Vec<Option<Vec<Rgb<u8>>>>], h: u32, w: u32) -> RgbImage {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let width = cols * w + cols.saturating_sub(1) * GAP;
    let height = rows.len() as u32 * h + (rows.len() as u32).saturating_sub(1) * GAP;
    let mut img = RgbImage::from_pixel(width.max(1), height.max(1), WHITE);
    for (r, row) in rows.iter().enumerate() {
        for (c, tile) in row.iter().enumerate() {
            let (ox, oy) = (c as u32 * (w + GAP), r as u32 * (h + GAP));
            for y in 0..h {
                for x in 0..w {
                    let px = tile
                        .as_ref()
                        .map(|t| t[(y * w + x) as usize])
                        .unwrap_or(Rgb([0, 0, 0]));
                    img.put_pixel(ox + x, oy + y, px);
                }
            }
        }
    }
    img
}

/// Top row: target, input and each prediction. Bottom row: residue maps of
/// the input and of each prediction, under a blank tile for the target.
pub fn render_panel(target: &[f32], columns: &[&[f32]], h: u32, w: u32) -> RgbImage {
    let mut top = vec![Some(target.iter().map(|&v| gray(v)).collect())];
    let mut bottom = vec![None];
    for col in columns {
        top.push(Some(col.iter().map(|&v| gray(v)).collect()));
        bottom.push(Some(
            col.iter().zip(target).map(|(p, t)| heat((p - t).abs())).collect(),
        ));
    }
    tile_grid(&[top, bottom], h, w)
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

struct Stack {
    n: usize,
    h: usize,
    w: usize,
    values: Vec<f32>,
}

impl Stack {
    fn image(&self, i: usize) -> &[f32] {
        &self.values[i * self.h * self.w..(i + 1) * self.h * self.w]
    }
}

fn load_stack(path: &Path) -> Result<Stack> {
    let Tensor { shape, data } = load_tensor(path)?;
    match (&shape[..], data) {
        (&[n, h, w], TensorData::F32(values)) => Ok(Stack { n, h, w, values }),
        _ => Err(Error::Data(format!("{} is not an f32 [N, H, W] stack", path.display())).into()),
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Per-method SSIM values of one artifact.
type Series = Vec<(String, Vec<f64>)>;

fn grouped_ssim(records: &[EvalRecord]) -> Vec<(String, Series)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Series> = BTreeMap::new();
    for r in records {
        if !groups.contains_key(&r.artifact) {
            order.push(r.artifact.clone());
        }
        groups
            .entry(r.artifact.clone())
            .or_default()
            .push((r.method.clone(), r.ssim.clone()));
    }
    order
        .into_iter()
        .map(|a| {
            let series = groups.remove(&a).unwrap_or_default();
            (a, series)
        })
        .collect()
}

/// Renders box plots for every artifact in the per-image scores of
/// `eval_dir` and a panel for every stored panel image.
pub fn report(eval_dir: &Path, out: &Path, force: bool) -> Result<usize> {
    let records = parse_per_image_csv(&read_text(&eval_dir.join(PER_IMAGE_FILE))?)?;
    let methods: Vec<String> = {
        let path = eval_dir.join(METHODS_FILE);
        let text = read_text(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("malformed {}: {e}", path.display())))?
    };
    prepare_out_dir(out, force)?;
    let mut written = 0;

    let box_dir = out.join("boxplots");
    fs::create_dir_all(&box_dir).with_context(|| format!("creating {}", box_dir.display()))?;
    for (artifact, series) in grouped_ssim(&records) {
        save_png(
            &render_box_plot(&series),
            &box_dir.join(format!("{}.png", file_safe(&artifact))),
        )?;
        written += 1;
    }

    let panel_root = eval_dir.join(PANEL_DIR);
    if panel_root.is_dir() {
        let mut groups: Vec<_> = fs::read_dir(&panel_root)?.collect::<Result<_, _>>()?;
        groups.sort_by_key(|e| e.file_name());
        for group in groups {
            let mut artifacts: Vec<_> = fs::read_dir(group.path())?.collect::<Result<_, _>>()?;
            artifacts.sort_by_key(|e| e.file_name());
            let dest = out.join("panels").join(group.file_name());
            fs::create_dir_all(&dest).with_context(|| format!("creating {}", dest.display()))?;
            for artifact in artifacts {
                let dir = artifact.path();
                let target = load_stack(&dir.join(format!("{TARGET_PANEL}.mrt")))?;
                let mut columns = vec![load_stack(&dir.join(format!("{DEGRADED_PANEL}.mrt")))?];
                for m in methods.iter().filter(|m| m.as_str() != INPUT_METHOD) {
                    columns.push(load_stack(&dir.join(format!("{m}.mrt")))?);
                }
                if columns
                    .iter()
                    .any(|c| (c.n, c.h, c.w) != (target.n, target.h, target.w))
                {
                    return Err(
                        Error::Data(format!("panel stacks in {} differ in shape", dir.display())).into(),
                    );
                }
                let name = file_safe(&artifact.file_name().to_string_lossy());
                for i in 0..target.n {
                    let cols: Vec<&[f32]> = columns.iter().map(|c| c.image(i)).collect();
                    let img = render_panel(target.image(i), &cols, target.h as u32, target.w as u32);
                    save_png(&img, &dest.join(format!("{name}_{i}.png")))?;
                    written += 1;
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_stats_of_one_to_nine() {
        let values: Vec<f64> = (1..=9).map(f64::from).collect();
        let stats = box_stats(&values).unwrap();
        assert_eq!((stats.q1, stats.median, stats.q3), (3.0, 5.0, 7.0));
        assert_eq!((stats.whisker_lo, stats.whisker_hi), (1.0, 9.0));
        assert!(stats.outliers.is_empty());
    }

    #[test]
    fn far_values_become_outliers() {
        let stats = box_stats(&[0.5, 0.51, 0.52, 0.53, 0.54, 0.1]).unwrap();
        assert_eq!(stats.outliers, [0.1]);
        assert_eq!(stats.whisker_lo, 0.5);
        assert!(box_stats(&[f64::NAN]).is_none());
    }

    #[test]
    fn heat_scale_endpoints() {
        assert_eq!(heat(0.0), Rgb([0, 0, 0]));
        assert_eq!(heat(RESIDUE_MAX), Rgb([255, 255, 255]));
        assert_eq!(heat(10.0), Rgb([255, 255, 255]));
        assert_eq!(heat(RESIDUE_MAX / 3.0), Rgb([255, 0, 0]));
    }

    #[test]
    fn panel_layout() {
        let target = vec![0.5; 4];
        let pred = vec![0.5; 4];
        let img = render_panel(&target, &[&pred, &pred, &pred], 2, 2);
        assert_eq!((img.width(), img.height()), (4 * 2 + 3 * GAP, 2 * 2 + GAP));
        // blank tile under the target, zero residue elsewhere
        assert_eq!(*img.get_pixel(0, 2 + GAP), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(0, 0), Rgb([128, 128, 128]));
        assert_eq!(*img.get_pixel(2 + GAP, 2 + GAP), Rgb([0, 0, 0]));
    }
}
