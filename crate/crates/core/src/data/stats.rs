use serde::Serialize;

use crate::numerics::Matrix;

/// Per-column summary. `std` is the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Single-pass (Welford) column statistics.
pub fn column_stats(view: &Matrix) -> Vec<ColumnSummary> {
    let cols = view.cols();
    let mut mean = vec![0.0; cols];
    let mut m2 = vec![0.0; cols];
    let mut min = vec![f64::INFINITY; cols];
    let mut max = vec![f64::NEG_INFINITY; cols];
    for r in 0..view.rows() {
        let count = (r + 1) as f64;
        for (c, &x) in view.row(r).iter().enumerate() {
            let delta = x - mean[c];
            mean[c] += delta / count;
            m2[c] += delta * (x - mean[c]);
            min[c] = min[c].min(x);
            max[c] = max[c].max(x);
        }
    }
    let n = view.rows().max(1) as f64;
    (0..cols)
        .map(|c| ColumnSummary {
            mean: mean[c],
            std: (m2[c] / n).max(0.0).sqrt(),
            min: min[c],
            max: max[c],
        })
        .collect()
}
