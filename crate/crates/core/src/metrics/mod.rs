//! Restoration quality metrics, significance testing and evaluation tables.

mod eval;
mod quality;
mod stats;

pub use eval::{
    evaluate_suite, format_cell, parse_per_image_csv, parse_summaries_csv, per_image_csv, read_text,
    render_table, score_pairs, summaries_to_csv, write_text, EvalCase, EvalRecord, EvalSummary, CSV_HEADER,
    INPUT_METHOD, PER_IMAGE_HEADER,
};
pub use quality::{mse, psnr, residue, ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use stats::{paired_significance, Significance, MIN_PAIRS};
