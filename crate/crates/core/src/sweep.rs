//! Fixed-k sweeps: rebuild the contours per k and evaluate FPR/AUROC.

use crate::contour::{build_contours, BuildConfig, KMode};
use crate::error::{Error, Result};
use crate::geometry::EmbeddingSet;
use crate::metrics::{self, EvalReport};
use crate::scoring;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub k_mode: KMode,
    /// k actually used per class, in label order.
    pub class_k: Vec<usize>,
    pub report: EvalReport,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "k,class_k,fpr_at_tpr,auroc,threshold,id_sentinels,ood_sentinels";

    pub fn to_csv_row(&self) -> String {
        let k = match self.k_mode {
            KMode::Fixed(k) => k.to_string(),
            KMode::Adaptive => "adaptive".into(),
        };
        let ks: Vec<String> = self.class_k.iter().map(usize::to_string).collect();
        format!(
            "{k},{},{},{},{},{},{}",
            ks.join(";"),
            self.report.fpr_at_tpr,
            self.report.auroc,
            self.report.threshold_used,
            self.report.id_sentinels,
            self.report.ood_sentinels
        )
    }
}

/// Powers of two `1, 2, 4, ...` up to `floor(n / 4)` for the smallest class size `n`.
pub fn power_of_two_grid(min_class_size: usize) -> Vec<usize> {
    let top = (min_class_size / 4).max(1);
    std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k <= top)
        .collect()
}

/// Builds contours with `k_mode` (other settings from `base`) and evaluates
/// held-out ID embeddings against OOD embeddings at `base.tpr_target`.
pub fn evaluate_k(
    train: &EmbeddingSet,
    calibration: Option<&EmbeddingSet>,
    id_eval: &EmbeddingSet,
    ood: &EmbeddingSet,
    base: &BuildConfig,
    k_mode: KMode,
) -> Result<SweepRow> {
    let config = BuildConfig {
        k_mode,
        ..base.clone()
    };
    let built = build_contours(train, calibration, &config)?;
    let id_scores = scoring::score_contours(&built.contours, id_eval)?;
    let ood_scores = scoring::score_contours(&built.contours, ood)?;
    Ok(SweepRow {
        k_mode,
        class_k: built.classes.iter().map(|c| c.k).collect(),
        report: metrics::evaluate(&id_scores, &ood_scores, base.tpr_target)?,
    })
}

pub fn sweep(
    train: &EmbeddingSet,
    calibration: Option<&EmbeddingSet>,
    id_eval: &EmbeddingSet,
    ood: &EmbeddingSet,
    base: &BuildConfig,
    k_modes: &[KMode],
) -> Result<Vec<SweepRow>> {
    if k_modes.is_empty() {
        return Err(Error::InvalidConfig("empty k list".into()));
    }
    k_modes
        .iter()
        .map(|&k| evaluate_k(train, calibration, id_eval, ood, base, k))
        .collect()
}
