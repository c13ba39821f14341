//! Caption similarity metrics and the two localization/captioning
//! evaluation protocols.

mod bleu;
mod cider;
mod dense;
mod meteor;
mod proposals;

pub use bleu::bleu;
pub use cider::{cider_d, CiderD};
pub use dense::{dense_caption_map, CaptionMetric, DenseCaption, DenseCaptionSet, DenseReport, DENSE_THRESHOLDS};
pub use meteor::{align as meteor_align, meteor_lite};
pub use proposals::{ar_an_curve, average_recall, recall_thresholds, ArAnCurve};

/// Slack on `tIoU ≥ τ` tests so that boundaries landing exactly on a
/// threshold are not lost to rounding in the normalized times.
pub const TIOU_SLACK: f64 = 1e-9;

/// Lowercases, replaces punctuation with spaces and splits on whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
pub(crate) fn tokens(s: &str) -> Vec<String> {
    tokenize(s)
}
