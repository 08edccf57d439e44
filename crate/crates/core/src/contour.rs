//! Hypercone construction and threshold calibration.
//!
//! For every class the centroid is the common apex. Each (centered) training
//! observation becomes a cone axis; the cone's opening is the cosine to the
//! axis' k-th nearest neighbour among the other observations of the class.
//! Members are the training and calibration observations strictly inside the
//! angular boundary. The radial boundary is `mean + sigma_multiplier * std`
//! of member distances to the apex, and each member contributes the
//! normalized distance `distance / boundary`.
//!
//! Axes are rounded to `f32` precision at build time. The model file stores
//! axes as `f32`, so this keeps a saved and reloaded model bit-identical to
//! the one that was built.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::adaptive_k;
use crate::error::{Error, Result};
use crate::geometry::{self, dot, norm, EmbeddingSet, EPS};
use crate::metrics;
use crate::scoring;
use crate::synth;

/// Cosine at or above which a point is treated as lying on the axis ray.
///
/// The axis observation itself is always a member of its own cone, even
/// when rounding leaves its cosine a few ulps below 1 or the k-th neighbour
/// is a collinear duplicate.
pub const ON_AXIS_COS: f64 = 1.0 - 1e-12;

/// Angular membership test on cosines: `tau < theta`, plus the on-axis rule.
///
/// A cone with `cos_opening = -1` (opening angle pi) spans the whole space,
/// antipodal ray included.
#[inline]
pub fn inside_angular(cos: f64, cos_opening: f64) -> bool {
    cos > cos_opening || cos >= ON_AXIS_COS || cos_opening <= -1.0
}

/// Cosine between a unit axis and a centered point of known norm.
#[inline]
pub(crate) fn axis_cos(unit_axis: &[f64], point: &[f64], point_norm: f64) -> f64 {
    (dot(unit_axis, point) / point_norm).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KMode {
    Fixed(usize),
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaMode {
    /// Percentile over each calibration observation's best normalized distance.
    #[default]
    PerObservation,
    /// Percentile over every (cone, member) normalized distance.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisMode {
    /// Axes are the centered training observations.
    #[default]
    Data,
    /// Axes are uniform random directions (ablation), seeded from the config.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub k_mode: KMode,
    pub sigma_multiplier: f64,
    pub tpr_target: f64,
    /// Snap each class centroid to its nearest training observation.
    pub centroid_snap: bool,
    pub lambda_mode: LambdaMode,
    pub axis_mode: AxisMode,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            k_mode: KMode::Adaptive,
            sigma_multiplier: 2.0,
            tpr_target: 0.95,
            centroid_snap: false,
            lambda_mode: LambdaMode::PerObservation,
            axis_mode: AxisMode::Data,
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k_mode: KMode::Fixed(k),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tpr_target > 0.0 && self.tpr_target < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tpr_target must lie in (0, 1), got {}",
                self.tpr_target
            )));
        }
        if !(self.sigma_multiplier >= 0.0 && self.sigma_multiplier.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma_multiplier must be finite and >= 0, got {}",
                self.sigma_multiplier
            )));
        }
        if self.k_mode == KMode::Fixed(0) {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypercone {
    /// Centered axis, unnormalized.
    pub axis: Vec<f64>,
    /// Cosine of the opening angle.
    pub cos_opening: f64,
    pub radial_boundary: f64,
}

/// The union of hypercones describing one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassContour {
    label: u32,
    centroid: Vec<f64>,
    cones: Vec<Hypercone>,
    // Derived: unit axes (flat) and cone indices by boundary descending.
    unit_axes: Vec<f64>,
    by_boundary: Vec<usize>,
}

impl ClassContour {
    pub fn new(label: u32, centroid: Vec<f64>, cones: Vec<Hypercone>) -> Result<Self> {
        let dim = centroid.len();
        let mut unit_axes = Vec::with_capacity(cones.len() * dim);
        for cone in &cones {
            if cone.axis.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: cone.axis.len(),
                });
            }
            let u = geometry::unit(&cone.axis).ok_or(Error::ZeroVector)?;
            unit_axes.extend(u);
            if !(cone.radial_boundary > 0.0 && cone.radial_boundary.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "radial boundary must be positive, got {}",
                    cone.radial_boundary
                )));
            }
            if !(-1.0..=1.0).contains(&cone.cos_opening) {
                return Err(Error::InvalidConfig(format!(
                    "cos_opening out of range: {}",
                    cone.cos_opening
                )));
            }
        }
        let mut by_boundary: Vec<usize> = (0..cones.len()).collect();
        by_boundary.sort_by(|&a, &b| {
            cones[b]
                .radial_boundary
                .total_cmp(&cones[a].radial_boundary)
                .then(a.cmp(&b))
        });
        Ok(Self {
            label,
            centroid,
            cones,
            unit_axes,
            by_boundary,
        })
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn cones(&self) -> &[Hypercone] {
        &self.cones
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    pub(crate) fn unit_axis(&self, cone: usize) -> &[f64] {
        let d = self.dim();
        &self.unit_axes[cone * d..(cone + 1) * d]
    }

    /// Cone indices ordered by radial boundary, largest first (ties by index).
    pub(crate) fn by_boundary(&self) -> &[usize] {
        &self.by_boundary
    }
}

/// All class contours plus the calibrated threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourModel {
    contours: Vec<ClassContour>,
    lambda: f64,
    config: BuildConfig,
}

impl ContourModel {
    pub fn new(contours: Vec<ClassContour>, lambda: f64, config: BuildConfig) -> Result<Self> {
        if contours.is_empty() {
            return Err(Error::EmptySet);
        }
        for (i, c) in contours.iter().enumerate() {
            if c.label as usize != i {
                return Err(Error::LabelMismatch(format!(
                    "contour {i} carries label {}, expected labels 0..{}",
                    c.label,
                    contours.len()
                )));
            }
            if c.dim() != contours[0].dim() {
                return Err(Error::DimensionMismatch {
                    expected: contours[0].dim(),
                    actual: c.dim(),
                });
            }
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            contours,
            lambda,
            config,
        })
    }

    pub fn contours(&self) -> &[ClassContour] {
        &self.contours
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.contours[0].dim()
    }

    /// Same contours with a different threshold.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.contours.clone(), lambda, self.config.clone())
    }
}

fn kth_by_cos(mut cands: Vec<(f64, usize)>, k: usize) -> f64 {
    // Nearest in cosine distance = largest cosine; ties go to the lower row.
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let (_, kth, _) = cands.select_nth_unstable_by(k - 1, cmp);
    kth.0
}

/// Cosine between row `axis_index` and its k-th nearest other row.
///
/// `class_points` is a flat row-major matrix of centered rows. Nearness is
/// cosine distance; the axis row is excluded from its own neighbours.
pub fn knn_angle(axis_index: usize, class_points: &[f64], dim: usize, k: usize) -> Result<f64> {
    let m = class_points.len() / dim;
    if k == 0 || k >= m {
        return Err(Error::KTooLarge {
            k,
            available: m.saturating_sub(1),
        });
    }
    let norms: Vec<f64> = class_points.chunks_exact(dim).map(norm).collect();
    if norms.iter().any(|&n| n <= EPS) {
        return Err(Error::ZeroVector);
    }
    let axis = &class_points[axis_index * dim..(axis_index + 1) * dim];
    let unit_axis = geometry::unit(axis).ok_or(Error::ZeroVector)?;
    let cands = class_points
        .chunks_exact(dim)
        .enumerate()
        .filter(|&(i, _)| i != axis_index)
        .map(|(i, row)| (axis_cos(&unit_axis, row, norms[i]), i))
        .collect();
    Ok(kth_by_cos(cands, k))
}

/// Indices of the rows of `points` inside the cone's angular boundary.
///
/// Rows at the apex (norm at or below [`EPS`]) are always members.
pub fn cone_members(cone: &Hypercone, points: &[f64]) -> Result<Vec<usize>> {
    let dim = cone.axis.len();
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: points.len(),
        });
    }
    let unit_axis = geometry::unit(&cone.axis).ok_or(Error::ZeroVector)?;
    Ok(points
        .chunks_exact(dim)
        .enumerate()
        .filter(|(_, row)| {
            let n = norm(row);
            n <= EPS || inside_angular(axis_cos(&unit_axis, row, n), cone.cos_opening)
        })
        .map(|(i, _)| i)
        .collect())
}

/// `mean + sigma_multiplier * std` with the population (divide-by-N) deviation.
pub fn radial_boundary(distances: &[f64], sigma_multiplier: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptyCone);
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(mean + sigma_multiplier * var.sqrt())
}

/// `count` directions uniform on the unit sphere in `dim` dimensions.
///
/// Normalized standard-normal draws from a seeded ChaCha8 stream; returned
/// row-major.
pub fn sample_uniform_directions(count: usize, dim: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 || dim < 2 {
        return Err(Error::InvalidConfig(format!(
            "need count >= 1 and dim >= 2, got count={count}, dim={dim}"
        )));
    }
    let mut rng = synth::rng(seed);
    let mut out = Vec::with_capacity(count * dim);
    let mut v = vec![0.0f64; dim];
    for _ in 0..count {
        loop {
            for x in v.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            if let Some(u) = geometry::unit(&v) {
                out.extend(u);
                break;
            }
        }
    }
    Ok(out)
}

fn quantize(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

/// Output of [`build_class_contour`].
#[derive(Debug, Clone)]
pub struct ClassBuild {
    pub contour: ClassContour,
    pub k: usize,
    /// Best normalized distance per training row over this class' cones
    /// (`+inf` when no cone contains the row).
    pub train_scores: Vec<f64>,
    pub test_scores: Vec<f64>,
    /// Every (cone, member) normalized distance, cone by cone.
    pub pooled: Vec<f64>,
    /// Training rows that coincide with the apex and therefore carry no cone.
    pub apex_rows: usize,
}

/// A cone with its members and their normalized distances.
type ConeBuild = (Hypercone, Vec<(usize, f64)>);

/// Builds the hypercone contour of one class.
///
/// `train` and `test` are flat row-major matrices of uncentered rows.
pub fn build_class_contour(
    label: u32,
    train: &[f64],
    test: &[f64],
    dim: usize,
    k: usize,
    config: &BuildConfig,
) -> Result<ClassBuild> {
    let m = train.len() / dim;
    if m < 2 {
        return Err(Error::ClassTooSmall {
            label,
            size: m,
            required: 2,
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let mut apex = geometry::centroid(train, dim)?;
    if config.centroid_snap {
        let nearest = geometry::nearest_row(train, &apex)?;
        apex = train[nearest * dim..(nearest + 1) * dim].to_vec();
    }

    // Calibration rows: train first, then test.
    let rows = geometry::center(&[train, test].concat(), &apex)?;
    let n_obs = rows.len() / dim;
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];
    let norms: Vec<f64> = (0..n_obs).map(|i| norm(row(i))).collect();
    let live: Vec<usize> = (0..m).filter(|&i| norms[i] > EPS).collect();
    let apex_rows = m - live.len();

    let axes: Vec<Vec<f64>> = match config.axis_mode {
        AxisMode::Data => {
            if !live.is_empty() && k >= live.len() {
                return Err(Error::KTooLarge {
                    k,
                    available: live.len() - 1,
                });
            }
            live.iter().map(|&i| quantize(row(i))).collect()
        }
        AxisMode::Random => {
            if !live.is_empty() && k > live.len() {
                return Err(Error::KTooLarge {
                    k,
                    available: live.len(),
                });
            }
            if live.is_empty() {
                Vec::new()
            } else {
                let seed = synth::derive_seed(config.seed, label as u64);
                sample_uniform_directions(live.len(), dim, seed)?
                    .chunks_exact(dim)
                    .map(quantize)
                    .collect()
            }
        }
    };

    // Each cone: opening from the k-th neighbour, members, boundary, normalized distances.
    let built: Vec<Option<ConeBuild>> = axes
        .par_iter()
        .enumerate()
        .map(|(j, axis)| -> Result<_> {
            let unit_axis = geometry::unit(axis).ok_or(Error::ZeroVector)?;
            let own = match config.axis_mode {
                AxisMode::Data => Some(live[j]),
                AxisMode::Random => None,
            };
            let cands: Vec<(f64, usize)> = live
                .iter()
                .filter(|&&i| Some(i) != own)
                .map(|&i| (axis_cos(&unit_axis, row(i), norms[i]), i))
                .collect();
            let cos_opening = kth_by_cos(cands, k);

            let mut members = Vec::new();
            let mut distances = Vec::new();
            for (i, &n) in norms.iter().enumerate() {
                if n <= EPS {
                    members.push(i);
                    distances.push(0.0);
                } else if inside_angular(axis_cos(&unit_axis, row(i), n), cos_opening) {
                    members.push(i);
                    distances.push(n);
                }
            }
            if distances.is_empty() {
                return Ok(None);
            }
            let b = radial_boundary(&distances, config.sigma_multiplier)?;
            if b <= 0.0 {
                // Only apex members: nothing to normalize against.
                return Ok(None);
            }
            let scored = members
                .into_iter()
                .zip(distances)
                .map(|(i, d)| (i, d / b))
                .collect();
            let cone = Hypercone {
                axis: axis.clone(),
                cos_opening,
                radial_boundary: b,
            };
            Ok(Some((cone, scored)))
        })
        .collect::<Result<_>>()?;

    let mut best = vec![f64::INFINITY; n_obs];
    for (i, &n) in norms.iter().enumerate() {
        if n <= EPS {
            best[i] = 0.0;
        }
    }
    let mut pooled = Vec::new();
    let mut cones = Vec::with_capacity(built.len());
    for (cone, scored) in built.into_iter().flatten() {
        for (i, s) in scored {
            if s < best[i] {
                best[i] = s;
            }
            pooled.push(s);
        }
        cones.push(cone);
    }
    let test_scores = best.split_off(m);
    Ok(ClassBuild {
        contour: ClassContour::new(label, apex, cones)?,
        k,
        train_scores: best,
        test_scores,
        pooled,
        apex_rows,
    })
}

/// Nearest-rank threshold at the configured TPR over the mode's score list.
pub fn calibrate_lambda(
    per_observation_scores: &[f64],
    pooled_scores: &[f64],
    config: &BuildConfig,
) -> Result<f64> {
    let scores = match config.lambda_mode {
        LambdaMode::PerObservation => per_observation_scores,
        LambdaMode::Pooled => pooled_scores,
    };
    let lambda = metrics::threshold_at_tpr(scores, config.tpr_target)?;
    if lambda.is_infinite() {
        let covered = scores.iter().filter(|s| s.is_finite()).count() as f64 / scores.len() as f64;
        return Err(Error::CalibrationUnreachable {
            target: config.tpr_target,
            covered,
        });
    }
    Ok(lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub label: u32,
    pub train_count: usize,
    pub test_count: usize,
    pub k: usize,
    pub cone_count: usize,
    pub apex_rows: usize,
}

/// Contours plus calibration data, before a threshold is chosen.
#[derive(Debug, Clone)]
pub struct BuiltContours {
    pub contours: Vec<ClassContour>,
    pub classes: Vec<ClassSummary>,
    /// Each calibration observation's score against the full set of contours,
    /// train rows then test rows, in input order.
    pub calibration_scores: Vec<f64>,
    pub pooled_scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub classes: Vec<ClassSummary>,
    pub lambda: f64,
    /// Fraction of calibration observations with score at most lambda.
    pub calibration_tpr: f64,
    pub calibration_count: usize,
}

/// Per-class k from the configuration.
fn class_k(label: u32, train_rows: &[f64], dim: usize, config: &BuildConfig) -> Result<usize> {
    let n = train_rows.len() / dim;
    match config.k_mode {
        KMode::Fixed(k) => {
            if k >= n {
                return Err(Error::KTooLarge {
                    k,
                    available: n.saturating_sub(1),
                });
            }
            Ok(k)
        }
        KMode::Adaptive => {
            let seed = synth::derive_seed(config.seed, label as u64);
            Ok(adaptive_k::adaptive_k(label, train_rows, dim, seed, config.centroid_snap)?.k_final)
        }
    }
}

/// Builds every class contour and scores the calibration observations.
pub fn build_contours(
    train: &EmbeddingSet,
    test: Option<&EmbeddingSet>,
    config: &BuildConfig,
) -> Result<BuiltContours> {
    config.validate()?;
    let dim = train.dim();
    let train_groups = train.class_indices()?;
    let label_count = train_groups.keys().next_back().map_or(0, |&l| l as usize + 1);
    if train_groups.len() != label_count {
        return Err(Error::LabelMismatch(format!(
            "training labels must cover 0..{label_count} without gaps"
        )));
    }
    let test_groups = match test {
        Some(t) => {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: t.dim(),
                });
            }
            let groups = t.class_indices()?;
            if let Some(l) = groups.keys().find(|l| !train_groups.contains_key(l)) {
                return Err(Error::LabelMismatch(format!(
                    "test label {l} does not occur in the training set"
                )));
            }
            groups
        }
        None => Default::default(),
    };
    for (&label, idx) in &train_groups {
        if idx.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                size: idx.len(),
                required: 2,
            });
        }
    }

    let builds: Vec<ClassBuild> = train_groups
        .par_iter()
        .map(|(&label, idx)| {
            let train_rows = train.gather(idx);
            let test_rows = match (test, test_groups.get(&label)) {
                (Some(t), Some(ti)) => t.gather(ti),
                _ => Vec::new(),
            };
            let k = class_k(label, &train_rows, dim, config)?;
            build_class_contour(label, &train_rows, &test_rows, dim, k, config)
        })
        .collect::<Result<_>>()?;

    let classes = builds
        .iter()
        .map(|b| ClassSummary {
            label: b.contour.label(),
            train_count: b.train_scores.len(),
            test_count: b.test_scores.len(),
            k: b.k,
            cone_count: b.contour.cones().len(),
            apex_rows: b.apex_rows,
        })
        .collect();
    let pooled_scores: Vec<f64> = builds.iter().flat_map(|b| b.pooled.iter().copied()).collect();
    let contours: Vec<ClassContour> = builds.into_iter().map(|b| b.contour).collect();

    // A calibration row may sit inside another class' cones too, so its
    // observation-level score is taken against every contour.
    let mut calib_rows: Vec<&[f64]> = train.rows().collect();
    if let Some(t) = test {
        calib_rows.extend(t.rows());
    }
    let calibration_scores = calib_rows
        .par_iter()
        .map(|z| scoring::best_cone(&contours, z).score)
        .collect();

    Ok(BuiltContours {
        contours,
        classes,
        calibration_scores,
        pooled_scores,
    })
}

/// Builds the model and reports per-class statistics and the calibration TPR.
pub fn build_model_with_report(
    train: &EmbeddingSet,
    test: Option<&EmbeddingSet>,
    config: &BuildConfig,
) -> Result<(ContourModel, BuildReport)> {
    let built = build_contours(train, test, config)?;
    let lambda = calibrate_lambda(&built.calibration_scores, &built.pooled_scores, config)?;
    let accepted = built
        .calibration_scores
        .iter()
        .filter(|&&s| s <= lambda)
        .count();
    let report = BuildReport {
        classes: built.classes,
        lambda,
        calibration_tpr: accepted as f64 / built.calibration_scores.len() as f64,
        calibration_count: built.calibration_scores.len(),
    };
    Ok((ContourModel::new(built.contours, lambda, config.clone())?, report))
}

/// Builds a [`ContourModel`] from labeled training and calibration embeddings.
pub fn build_model(
    train: &EmbeddingSet,
    test: Option<&EmbeddingSet>,
    config: &BuildConfig,
) -> Result<ContourModel> {
    build_model_with_report(train, test, config).map(|(m, _)| m)
}
