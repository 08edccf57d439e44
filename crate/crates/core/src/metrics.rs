//! Evaluation metrics. Scores are oriented so that higher means more OOD,
//! and `+inf` is a valid score (no containing cone).

use crate::error::{Error, Result};
use crate::geometry::{self, EmbeddingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub tpr_target: f64,
    pub fpr_at_tpr: f64,
    pub auroc: f64,
    pub threshold_used: f64,
    pub id_count: usize,
    pub ood_count: usize,
    pub id_sentinels: usize,
    pub ood_sentinels: usize,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "tpr_target,fpr_at_tpr,auroc,threshold,id_count,ood_count,id_sentinels,ood_sentinels";

    pub fn to_key_values(&self) -> String {
        format!(
            "tpr_target={}\nfpr_at_tpr={}\nauroc={}\nthreshold={}\nid_count={}\nood_count={}\nid_sentinels={}\nood_sentinels={}\n",
            self.tpr_target,
            self.fpr_at_tpr,
            self.auroc,
            self.threshold_used,
            self.id_count,
            self.ood_count,
            self.id_sentinels,
            self.ood_sentinels
        )
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.tpr_target,
            self.fpr_at_tpr,
            self.auroc,
            self.threshold_used,
            self.id_count,
            self.ood_count,
            self.id_sentinels,
            self.ood_sentinels
        )
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {i} is NaN")));
    }
    Ok(())
}

/// 1-based nearest rank `ceil(q * n)`, robust to `q * n` landing a hair above an integer.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let x = q * n as f64;
    let r = x.round();
    let rank = if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (rank as usize).clamp(1, n)
}

/// Smallest ID score threshold accepting at least a `tpr` fraction of `id_scores`.
pub fn threshold_at_tpr(id_scores: &[f64], tpr: f64) -> Result<f64> {
    check_scores(id_scores)?;
    if !(tpr > 0.0 && tpr <= 1.0) {
        return Err(Error::InvalidConfig(format!("tpr must lie in (0, 1], got {tpr}")));
    }
    let mut sorted = id_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(tpr, sorted.len()) - 1])
}

/// Fraction of OOD scores accepted (score <= threshold) at the ID threshold for `tpr`.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr: f64) -> Result<f64> {
    check_scores(ood_scores)?;
    let t = threshold_at_tpr(id_scores, tpr)?;
    Ok(ood_scores.iter().filter(|&&s| s <= t).count() as f64 / ood_scores.len() as f64)
}

/// Probability that an OOD score exceeds an ID score, ties counted one half.
///
/// Computed from midranks. The smaller of the two Mann-Whitney statistics is
/// divided out and the other orientation is `1 - x`, so that
/// `auroc(a, b) + auroc(b, a) == 1.0` holds exactly in floating point.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores)?;
    check_scores(ood_scores)?;
    let (n, m) = (id_scores.len(), ood_scores.len());
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the OOD rank sum, kept integral.
    let mut ood_rank2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Midrank of positions i..=j (1-based) doubled: (i+1) + (j+1).
        let mid2 = (i + 1 + j + 1) as u128;
        let oods = all[i..=j].iter().filter(|e| e.1).count() as u128;
        ood_rank2 += mid2 * oods;
        i = j + 1;
    }
    let (n, m) = (n as u128, m as u128);
    let u_ood2 = ood_rank2 - m * (m + 1);
    let u_id2 = 2 * n * m - u_ood2;
    let total = (2 * n * m) as f64;
    Ok(if u_ood2 <= u_id2 {
        u_ood2 as f64 / total
    } else {
        1.0 - u_id2 as f64 / total
    })
}

pub fn evaluate(id_scores: &[f64], ood_scores: &[f64], tpr: f64) -> Result<EvalReport> {
    let threshold = threshold_at_tpr(id_scores, tpr)?;
    Ok(EvalReport {
        tpr_target: tpr,
        fpr_at_tpr: fpr_at_tpr(id_scores, ood_scores, tpr)?,
        auroc: auroc(id_scores, ood_scores)?,
        threshold_used: threshold,
        id_count: id_scores.len(),
        ood_count: ood_scores.len(),
        id_sentinels: id_scores.iter().filter(|s| s.is_infinite()).count(),
        ood_sentinels: ood_scores.iter().filter(|s| s.is_infinite()).count(),
    })
}

/// Cosine distance from `z` to its k-th nearest training embedding, classes pooled.
///
/// When `z` equals a training row exactly, that one row (the lowest such
/// index) is left out, so a training point is not its own neighbour.
pub fn knn_baseline_score(train: &EmbeddingSet, z: &[f64], k: usize) -> Result<f64> {
    if z.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: z.len(),
        });
    }
    let zu = geometry::unit(z).ok_or(Error::ZeroVector)?;
    let self_match = train.rows().position(|r| r == z);
    let available = train.len() - usize::from(self_match.is_some());
    if k == 0 || k > available || k >= train.len() {
        return Err(Error::KTooLarge { k, available });
    }
    let mut dists = Vec::with_capacity(train.len());
    for (i, row) in train.rows().enumerate() {
        if Some(i) == self_match {
            continue;
        }
        let ru = geometry::unit(row).ok_or(Error::ZeroVector)?;
        let cos = geometry::dot(&zu, &ru).clamp(-1.0, 1.0);
        dists.push(1.0 - cos);
    }
    let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}
