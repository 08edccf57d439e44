//! Per-class choice of k without access to OOD data.
//!
//! Starting from the upper bound `floor(n / 4)`, k is scaled by the
//! regularizer `zeta(n, d) = 1 / (1 + ln(n / d))` and by the ratio of mean
//! angular neighbour distances between the class and a uniform reference
//! class of the same size drawn over the class' value range.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, dot, EmbeddingSet, EPS};
use crate::synth;

/// Smallest class size the heuristic accepts.
pub const MIN_CLASS_SIZE: usize = 8;

/// Neighbour fractions 0.05, 0.10, ..., 1.00 of the base k.
pub const FRACTIONS: [f64; 20] = {
    let mut f = [0.0; 20];
    let mut i = 0;
    while i < 20 {
        f[i] = (i + 1) as f64 * 0.05;
        i += 1;
    }
    f
};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassKRecord {
    pub label: u32,
    pub n: usize,
    pub d: usize,
    pub k_upper: usize,
    pub zeta: f64,
    pub density_ratio: f64,
    pub k_final: usize,
    /// Points at a centroid, skipped in the angular statistics (class, uniform).
    pub skipped: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveKReport {
    pub seed: u64,
    pub classes: Vec<ClassKRecord>,
}

impl AdaptiveKReport {
    pub const CSV_HEADER: &'static str =
        "label,n,d,k_upper,zeta,density_ratio,k_final,skipped_class,skipped_uniform";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.classes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.label, r.n, r.d, r.k_upper, r.zeta, r.density_ratio, r.k_final, r.skipped.0, r.skipped.1
            ));
        }
        out
    }
}

/// `1 / (1 + ln(n / d))`, clamped to at most 1.
pub fn zeta(n: usize, d: usize) -> f64 {
    let z = 1.0 / (1.0 + (n as f64 / d as f64).ln());
    if z > 1.0 || z <= 0.0 {
        // n < d: ln is negative (or the denominator flips sign for n << d).
        1.0
    } else {
        z
    }
}

/// Uniform draws on `[min, max]` of all class entries, same shape as the class.
pub fn uniform_reference(class_points: &[f64], dim: usize, seed: u64) -> Result<Vec<f64>> {
    let n = class_points.len() / dim;
    if n < 2 {
        return Err(Error::EmptySet);
    }
    let lo = class_points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = class_points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::DegenerateRange(lo));
    }
    let mut rng = synth::rng(seed);
    Ok((0..n * dim).map(|_| rng.random_range(lo..=hi)).collect())
}

/// Neighbour rank for each fraction of `k_base`: `max(1, round(f * k_base))`.
pub fn fraction_ranks(k_base: usize) -> [usize; 20] {
    FRACTIONS.map(|f| ((f * k_base as f64).round() as usize).max(1))
}

/// Mean over points of the cosine distance to the i-th neighbour, averaged over the ranks.
///
/// Points are centered at the set's centroid (or its nearest row when
/// `centroid_snap`); points at the centroid are skipped. Returns the mean and
/// the number skipped.
fn mean_neighbor_distance(points: &[f64], dim: usize, ranks: &[usize; 20], centroid_snap: bool) -> Result<(f64, usize)> {
    let mut c = geometry::centroid(points, dim)?;
    if centroid_snap {
        let i = geometry::nearest_row(points, &c)?;
        c = points[i * dim..(i + 1) * dim].to_vec();
    }
    let centered = geometry::center(points, &c)?;
    let units: Vec<Vec<f64>> = centered.chunks_exact(dim).filter_map(geometry::unit).collect();
    let skipped = centered.len() / dim - units.len();
    let m = units.len();
    if m < 2 {
        return Err(Error::ZeroVector);
    }
    let max_rank = ranks.iter().copied().max().unwrap_or(1).min(m - 1);

    let per_point: Vec<[f64; 20]> = (0..m)
        .into_par_iter()
        .map(|p| {
            let mut dists: Vec<f64> = (0..m)
                .filter(|&q| q != p)
                .map(|q| 1.0 - dot(&units[p], &units[q]).clamp(-1.0, 1.0))
                .collect();
            dists.select_nth_unstable_by(max_rank - 1, f64::total_cmp);
            dists[..max_rank].sort_by(f64::total_cmp);
            ranks.map(|r| dists[r.min(max_rank) - 1])
        })
        .collect();

    let mut means = [0.0f64; 20];
    for row in &per_point {
        for (acc, v) in means.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let avg = means.iter().map(|s| s / m as f64).sum::<f64>() / 20.0;
    Ok((avg, skipped))
}

/// Ratio of averaged neighbour cosine distances, class over uniform reference.
pub fn density_ratio(class_points: &[f64], uniform_points: &[f64], dim: usize, centroid_snap: bool) -> Result<f64> {
    density_ratio_detail(class_points, uniform_points, dim, centroid_snap).map(|(r, _)| r)
}

fn density_ratio_detail(
    class_points: &[f64],
    uniform_points: &[f64],
    dim: usize,
    centroid_snap: bool,
) -> Result<(f64, (usize, usize))> {
    let n = class_points.len() / dim;
    if n < MIN_CLASS_SIZE {
        return Err(Error::ClassTooSmall {
            label: 0,
            size: n,
            required: MIN_CLASS_SIZE,
        });
    }
    let ranks = fraction_ranks(n / 4);
    let (class_mean, sc) = mean_neighbor_distance(class_points, dim, &ranks, centroid_snap)?;
    let (uniform_mean, su) = mean_neighbor_distance(uniform_points, dim, &ranks, centroid_snap)?;
    if uniform_mean <= EPS {
        return Err(Error::ZeroVector);
    }
    Ok((class_mean / uniform_mean, (sc, su)))
}

/// Chooses k for one class: `clamp(round(floor(n/4) * zeta * ratio), 1, n - 1)`.
pub fn adaptive_k(label: u32, class_points: &[f64], dim: usize, seed: u64, centroid_snap: bool) -> Result<ClassKRecord> {
    let n = class_points.len() / dim;
    if n < MIN_CLASS_SIZE {
        return Err(Error::ClassTooSmall {
            label,
            size: n,
            required: MIN_CLASS_SIZE,
        });
    }
    let uniform = uniform_reference(class_points, dim, seed)?;
    let (ratio, skipped) = density_ratio_detail(class_points, &uniform, dim, centroid_snap)?;
    let k_upper = n / 4;
    let z = zeta(n, dim);
    let k_final = ((k_upper as f64 * z * ratio).round() as usize).clamp(1, n - 1);
    Ok(ClassKRecord {
        label,
        n,
        d: dim,
        k_upper,
        zeta: z,
        density_ratio: ratio,
        k_final,
        skipped,
    })
}

/// Runs the heuristic for every class of a labeled set. Class `l` uses the
/// sub-seed `derive_seed(seed, l)` for its uniform reference, as the builder does.
pub fn report(train: &EmbeddingSet, seed: u64, centroid_snap: bool) -> Result<AdaptiveKReport> {
    let groups = train.class_indices()?;
    let classes = groups
        .par_iter()
        .map(|(&label, idx)| {
            let rows = train.gather(idx);
            adaptive_k(label, &rows, train.dim(), synth::derive_seed(seed, label as u64), centroid_snap)
        })
        .collect::<Result<_>>()?;
    Ok(AdaptiveKReport { seed, classes })
}
