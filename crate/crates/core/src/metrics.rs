use serde::{Deserialize, Serialize};

/// Precision, recall and F1 together with the counts they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    /// `P = matched/predicted`, `R = matched/gold`, `F1 = 2PR/(P+R)`; each is
    /// 0 when its denominator is 0.
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        Prf {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            matched,
            predicted,
            gold,
        }
    }
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}
