use serde::{Deserialize, Serialize};

use super::ClusterError;

/// Pair counts over all `N(N−1)/2` unordered sample pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Together in both labelings.
    pub n1: u64,
    /// Apart in both.
    pub n2: u64,
    /// Together in the truth, apart in the prediction.
    pub n3: u64,
    /// Apart in the truth, together in the prediction.
    pub n4: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.n1 + self.n2 + self.n3 + self.n4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Kind {
    /// Over same-cluster sample pairs.
    #[default]
    Pairwise,
    /// Per-class F1 after Hungarian relabeling, averaged over true classes.
    Macro,
}

impl std::str::FromStr for F1Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pairwise" => Ok(F1Kind::Pairwise),
            "macro" => Ok(F1Kind::Macro),
            other => Err(format!("unknown F1 variant {other:?} (pairwise|macro)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    pub n4: u64,
    /// `(predicted, true)` label pairs of the optimal matching.
    pub mapping: Vec<(usize, usize)>,
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<(), ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `table[t][p]` counts samples with true label `t` and predicted label `p`.
fn contingency(y_true: &[usize], y_pred: &[usize]) -> Vec<Vec<u64>> {
    let rows = y_true.iter().max().map_or(0, |m| m + 1);
    let cols = y_pred.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; cols]; rows];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        table[t][p] += 1;
    }
    table
}

/// Minimum-cost perfect matching on a square cost matrix; `result[row] = col`.
fn solve_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // Potentials-based O(n³) method with 1-based sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost[r - 1][c - 1] - u[r] - v[c];
                if reduced < min_v[c] {
                    min_v[c] = reduced;
                    way[c] = col0;
                }
                if min_v[c] < delta {
                    delta = min_v[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_v[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for c in 1..=n {
        if owner[c] > 0 {
            result[owner[c] - 1] = c - 1;
        }
    }
    result
}

/// Optimal one-to-one mapping from predicted to true labels, maximizing
/// the number of matched samples. Predicted labels left without a true
/// partner (more clusters than classes) are omitted.
pub fn hungarian_map(
    y_true: &[usize],
    y_pred: &[usize],
) -> Result<Vec<(usize, usize)>, ClusterError> {
    check_lengths(y_true, y_pred)?;
    let table = contingency(y_true, y_pred);
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    let m = rows.max(cols);
    let cost: Vec<Vec<f64>> = (0..m)
        .map(|p| {
            (0..m)
                .map(|t| {
                    if t < rows && p < cols {
                        -(table[t][p] as f64)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let assignment = solve_assignment(&cost);
    let mut present = vec![false; cols];
    for &p in y_pred {
        present[p] = true;
    }
    Ok((0..cols)
        .filter(|&p| present[p] && assignment[p] < rows)
        .map(|p| (p, assignment[p]))
        .collect())
}

fn matched(y_true: &[usize], y_pred: &[usize], mapping: &[(usize, usize)]) -> usize {
    let cols = y_pred.iter().max().map_or(0, |m| m + 1);
    let mut to_true = vec![usize::MAX; cols];
    for &(p, t) in mapping {
        to_true[p] = t;
    }
    y_true
        .iter()
        .zip(y_pred)
        .filter(|&(&t, &p)| to_true[p] == t)
        .count()
}

pub fn acc(y_true: &[usize], y_pred: &[usize]) -> Result<f64, ClusterError> {
    let mapping = hungarian_map(y_true, y_pred)?;
    if y_true.is_empty() {
        return Ok(0.0);
    }
    Ok(matched(y_true, y_pred, &mapping) as f64 / y_true.len() as f64)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies
/// (natural log). 0 when both entropies vanish.
pub fn nmi(y_true: &[usize], y_pred: &[usize]) -> Result<f64, ClusterError> {
    check_lengths(y_true, y_pred)?;
    let n = y_true.len() as f64;
    if y_true.is_empty() {
        return Ok(0.0);
    }
    let table = contingency(y_true, y_pred);
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols = table[0].len();
    let col_sums: Vec<u64> = (0..cols)
        .map(|p| table.iter().map(|r| r[p]).sum())
        .collect();
    let mut mi = 0.0;
    for (t, row) in table.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (row_sums[t] as f64 * col_sums[p] as f64)).ln();
            }
        }
    }
    let denom = 0.5 * (entropy(row_sums.into_iter(), n) + entropy(col_sums.into_iter(), n));
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn comb2(x: u64) -> u64 {
    x * x.saturating_sub(1) / 2
}

pub fn pair_counts(y_true: &[usize], y_pred: &[usize]) -> Result<PairCounts, ClusterError> {
    check_lengths(y_true, y_pred)?;
    let table = contingency(y_true, y_pred);
    let n = y_true.len() as u64;
    let both: u64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let same_true: u64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let cols = table.first().map_or(0, Vec::len);
    let same_pred: u64 = (0..cols)
        .map(|p| comb2(table.iter().map(|r| r[p]).sum()))
        .sum();
    let n3 = same_true - both;
    let n4 = same_pred - both;
    Ok(PairCounts {
        n1: both,
        n2: comb2(n) - both - n3 - n4,
        n3,
        n4,
    })
}

/// Adjusted Rand index via the contingency-table closed form, with the pair
/// counts it is built from.
pub fn ari(y_true: &[usize], y_pred: &[usize]) -> Result<(f64, PairCounts), ClusterError> {
    if y_true.len() < 2 {
        return Err(ClusterError::TooFewSamples {
            needed: 2,
            got: y_true.len(),
        });
    }
    let pc = pair_counts(y_true, y_pred)?;
    let total = pc.total() as f64;
    let index = pc.n1 as f64;
    let sum_true = (pc.n1 + pc.n3) as f64;
    let sum_pred = (pc.n1 + pc.n4) as f64;
    let expected = sum_true * sum_pred / total;
    let max = 0.5 * (sum_true + sum_pred);
    if max == expected {
        return Ok((1.0, pc));
    }
    Ok(((index - expected) / (max - expected), pc))
}

fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_pairwise(y_true: &[usize], y_pred: &[usize]) -> Result<f64, ClusterError> {
    let pc = pair_counts(y_true, y_pred)?;
    let precision = ratio(pc.n1, pc.n1 + pc.n4);
    let recall = ratio(pc.n1, pc.n1 + pc.n3);
    if pc.n1 + pc.n4 == 0 || pc.n1 + pc.n3 == 0 {
        return Ok(0.0);
    }
    Ok(harmonic(precision, recall))
}

pub fn f1_macro(y_true: &[usize], y_pred: &[usize]) -> Result<f64, ClusterError> {
    let mapping = hungarian_map(y_true, y_pred)?;
    let classes = y_true.iter().max().map_or(0, |m| m + 1);
    if classes == 0 {
        return Ok(0.0);
    }
    let mut to_true = vec![usize::MAX; y_pred.iter().max().map_or(0, |m| m + 1)];
    for &(p, t) in &mapping {
        to_true[p] = t;
    }
    let mut tp = vec![0u64; classes];
    let mut predicted = vec![0u64; classes];
    let mut actual = vec![0u64; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        actual[t] += 1;
        let mapped = to_true[p];
        if mapped < classes {
            predicted[mapped] += 1;
            if mapped == t {
                tp[t] += 1;
            }
        }
    }
    let present: Vec<usize> = (0..classes).filter(|&c| actual[c] > 0).collect();
    let sum: f64 = present
        .iter()
        .map(|&c| harmonic(ratio(tp[c], predicted[c]), ratio(tp[c], actual[c])))
        .sum();
    Ok(sum / present.len() as f64)
}

pub fn evaluate(
    y_true: &[usize],
    y_pred: &[usize],
    f1: F1Kind,
) -> Result<MetricReport, ClusterError> {
    let mapping = hungarian_map(y_true, y_pred)?;
    let acc = if y_true.is_empty() {
        0.0
    } else {
        matched(y_true, y_pred, &mapping) as f64 / y_true.len() as f64
    };
    let (ari, pc) = ari(y_true, y_pred)?;
    let f1 = match f1 {
        F1Kind::Pairwise => f1_pairwise(y_true, y_pred)?,
        F1Kind::Macro => f1_macro(y_true, y_pred)?,
    };
    Ok(MetricReport {
        acc,
        nmi: nmi(y_true, y_pred)?,
        ari,
        f1,
        n1: pc.n1,
        n2: pc.n2,
        n3: pc.n3,
        n4: pc.n4,
        mapping,
    })
}
