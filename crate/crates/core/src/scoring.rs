//! Scores and ID/OOD decisions for new embeddings.
//!
//! A sample is centered at every class centroid in turn. Its score is the
//! smallest `distance / radial_boundary` over all cones whose angular
//! boundary contains it, or `+inf` when none does; it is in-distribution
//! when the score is at most the model's `lambda`.

use rayon::prelude::*;

use crate::contour::{axis_cos, inside_angular, ClassContour, ContourModel};
use crate::error::{Error, Result};
use crate::geometry::{norm, EmbeddingSet, EPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreResult {
    /// Normalized distance, `+inf` when no cone contains the sample.
    pub score: f64,
    pub is_id: bool,
    pub best_label: Option<u32>,
    /// Index of the minimizing cone within its class. `None` for apex hits,
    /// which are inside every cone of the class.
    pub best_cone: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Best {
    pub score: f64,
    pub label: Option<u32>,
    pub cone: Option<usize>,
}

fn center_into(buf: &mut Vec<f64>, z: &[f64], c: &[f64]) {
    buf.clear();
    buf.extend(z.iter().zip(c).map(|(x, y)| x - y));
}

/// Best (lowest) normalized distance of `z` over one class' cones, if it is
/// at most `bound`.
///
/// Cones are visited in order of decreasing radial boundary, so the first
/// containing cone attains the minimum; later cones with an equal quotient
/// are still checked for the lower-index tie-break.
fn class_best(contour: &ClassContour, centered: &[f64], n: f64, bound: f64) -> Option<(f64, Option<usize>)> {
    if n <= EPS {
        return Some((0.0, None));
    }
    let cones = contour.cones();
    let mut bound = bound;
    let mut found: Option<(f64, usize)> = None;
    for &j in contour.by_boundary() {
        let s = n / cones[j].radial_boundary;
        if s > bound {
            break;
        }
        if inside_angular(axis_cos(contour.unit_axis(j), centered, n), cones[j].cos_opening) {
            match found {
                Some((best, idx)) if s == best && j > idx => {}
                _ => {
                    found = Some((s, j));
                    bound = s;
                }
            }
        }
    }
    found.map(|(s, j)| (s, Some(j)))
}

/// Lower bound of a class' score for a sample at distance `n` from its apex.
fn lower_bound(contour: &ClassContour, n: f64) -> f64 {
    if n <= EPS {
        return 0.0;
    }
    match contour.by_boundary().first() {
        Some(&j) => n / contour.cones()[j].radial_boundary,
        None => f64::INFINITY,
    }
}

pub(crate) fn best_cone(contours: &[ClassContour], z: &[f64]) -> Best {
    let mut best = Best {
        score: f64::INFINITY,
        label: None,
        cone: None,
    };
    // Classes in order of their lower bound, so that far classes are pruned
    // by the first cone check.
    let dim = z.len();
    let mut centered = vec![0.0; contours.len() * dim];
    let mut order: Vec<(f64, usize, f64)> = contours
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let buf = &mut centered[i * dim..(i + 1) * dim];
            for ((o, x), y) in buf.iter_mut().zip(z).zip(c.centroid()) {
                *o = x - y;
            }
            let n = norm(buf);
            (lower_bound(c, n), i, n)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (lb, i, n) in order {
        if lb > best.score {
            break;
        }
        let contour = &contours[i];
        if let Some((s, cone)) = class_best(contour, &centered[i * dim..(i + 1) * dim], n, best.score) {
            let better = match best.label {
                None => true,
                Some(l) => s < best.score || (s == best.score && contour.label() < l),
            };
            if better {
                best = Best {
                    score: s,
                    label: Some(contour.label()),
                    cone,
                };
            }
        }
    }
    best
}

fn check_dim(model: &ContourModel, actual: usize) -> Result<()> {
    if actual != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual,
        });
    }
    Ok(())
}

pub fn score_sample(model: &ContourModel, z: &[f64]) -> Result<ScoreResult> {
    check_dim(model, z.len())?;
    let b = best_cone(model.contours(), z);
    Ok(ScoreResult {
        score: b.score,
        is_id: b.score <= model.lambda(),
        best_label: b.label,
        best_cone: b.cone,
    })
}

pub fn score_batch(model: &ContourModel, set: &EmbeddingSet) -> Result<Vec<ScoreResult>> {
    check_dim(model, set.dim())?;
    let rows: Vec<&[f64]> = set.rows().collect();
    rows.par_iter().map(|z| score_sample(model, z)).collect()
}

/// Scores against bare contours, before any threshold is calibrated.
pub fn score_contours(contours: &[ClassContour], set: &EmbeddingSet) -> Result<Vec<f64>> {
    if let Some(c) = contours.first() {
        if c.dim() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: c.dim(),
                actual: set.dim(),
            });
        }
    }
    let rows: Vec<&[f64]> = set.rows().collect();
    Ok(rows.par_iter().map(|z| best_cone(contours, z).score).collect())
}

/// Raw scores only.
pub fn scores(model: &ContourModel, set: &EmbeddingSet) -> Result<Vec<f64>> {
    Ok(score_batch(model, set)?.into_iter().map(|r| r.score).collect())
}

fn is_id_early_exit(model: &ContourModel, z: &[f64], centered: &mut Vec<f64>) -> bool {
    let lambda = model.lambda();
    for contour in model.contours() {
        center_into(centered, z, contour.centroid());
        let n = norm(centered);
        if n <= EPS {
            return true;
        }
        let cones = contour.cones();
        for &j in contour.by_boundary() {
            // Boundaries only shrink from here on.
            if n / cones[j].radial_boundary > lambda {
                break;
            }
            if inside_angular(axis_cos(contour.unit_axis(j), centered, n), cones[j].cos_opening) {
                return true;
            }
        }
    }
    false
}

/// ID decisions that stop at the first cone accepting the sample.
pub fn decide_batch(model: &ContourModel, set: &EmbeddingSet) -> Result<Vec<bool>> {
    check_dim(model, set.dim())?;
    let rows: Vec<&[f64]> = set.rows().collect();
    Ok(rows
        .par_iter()
        .map_init(Vec::new, |buf, z| is_id_early_exit(model, z, buf))
        .collect())
}
