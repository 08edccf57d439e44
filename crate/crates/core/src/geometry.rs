//! Dense vector primitives and the [`EmbeddingSet`] container.
//!
//! Matrices are stored row-major in flat `Vec<f64>` buffers with an explicit
//! column count. All reductions run in a fixed order so results do not
//! depend on thread scheduling.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Norm guard below which a vector is treated as the zero vector.
pub const EPS: f64 = 1e-12;

/// An `n x d` matrix of finite embeddings with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f64>,
    dim: usize,
    labels: Option<Vec<u32>>,
}

impl EmbeddingSet {
    pub fn new(data: Vec<f64>, dim: usize, labels: Option<Vec<u32>>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::ShapeMismatch(format!(
                "embedding dimension must be at least 2, got {dim}"
            )));
        }
        if data.is_empty() {
            return Err(Error::EmptySet);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        let n = data.len() / dim;
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
        }
        Ok(Self { data, dim, labels })
    }

    /// Builds a set from row vectors; convenient in tests and generators.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<u32>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptySet)?;
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch(format!(
                "row {bad} has {} columns, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), dim, labels)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Row indices grouped by label, in ascending label and row order.
    pub fn class_indices(&self) -> Result<BTreeMap<u32, Vec<usize>>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::LabelMismatch("embedding set has no labels".into()))?;
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        Ok(groups)
    }

    /// Flat row-major copy of the selected rows.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    /// Applies `f` to every entry, keeping labels.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.data.iter().map(|&v| f(v)).collect(),
            self.dim,
            self.labels.clone(),
        )
    }

    /// Appends the rows of `other` (labels must be present on both or neither).
    pub fn concat(&self, other: &EmbeddingSet) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some([a.as_slice(), b.as_slice()].concat()),
            (None, None) => None,
            _ => {
                return Err(Error::LabelMismatch(
                    "cannot concatenate labeled and unlabeled sets".into(),
                ))
            }
        };
        Self::new([self.data.as_slice(), &other.data].concat(), self.dim, labels)
    }

    pub fn with_labels(self, labels: Option<Vec<u32>>) -> Result<Self> {
        Self::new(self.data, self.dim, labels)
    }
}

/// Dot product with a fixed 4-lane accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(())
}

/// Cosine of the angle between `u` and `v`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    let (nu, nv) = (norm(u), norm(v));
    if nu <= EPS || nv <= EPS {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Angle between `u` and `v` in radians, in `[0, pi]`.
///
/// Evaluated as `2 atan2(|u' - v'|, |u' + v'|)` on the unit vectors, which
/// equals the arccos of the clamped cosine but stays accurate near 0 and pi.
pub fn angle_between(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    let (nu, nv) = (norm(u), norm(v));
    if nu <= EPS || nv <= EPS {
        return Err(Error::ZeroVector);
    }
    let (mut diff, mut sum) = (0.0f64, 0.0f64);
    for (a, b) in u.iter().zip(v) {
        let (x, y) = (a / nu, b / nv);
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Unit vector along `v`, or `None` for a zero vector.
pub fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > EPS).then(|| v.iter().map(|x| x / n).collect())
}

/// Column means of a row-major `m x dim` matrix, with Neumaier-compensated sums.
pub fn centroid(points: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || points.is_empty() {
        return Err(Error::EmptySet);
    }
    if !points.len().is_multiple_of(dim) {
        return Err(Error::ShapeMismatch(format!(
            "{} values do not divide into rows of {dim}",
            points.len()
        )));
    }
    let m = points.len() / dim;
    let mut sum = vec![0.0f64; dim];
    let mut comp = vec![0.0f64; dim];
    for row in points.chunks_exact(dim) {
        for j in 0..dim {
            let x = row[j];
            let t = sum[j] + x;
            if sum[j].abs() >= x.abs() {
                comp[j] += (sum[j] - t) + x;
            } else {
                comp[j] += (x - t) + sum[j];
            }
            sum[j] = t;
        }
    }
    Ok(sum
        .iter()
        .zip(&comp)
        .map(|(s, c)| (s + c) / m as f64)
        .collect())
}

/// Subtracts `c` from every row.
pub fn center(points: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let dim = c.len();
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: if dim == 0 { points.len() } else { points.len() % dim },
        });
    }
    let mut out = Vec::with_capacity(points.len());
    for row in points.chunks_exact(dim) {
        out.extend(row.iter().zip(c).map(|(x, y)| x - y));
    }
    Ok(out)
}

/// Index of the row nearest to `target` in Euclidean distance; lower index wins ties.
pub fn nearest_row(points: &[f64], target: &[f64]) -> Result<usize> {
    let dim = target.len();
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in points.chunks_exact(dim).enumerate() {
        let d2: f64 = row.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptySet)
}
