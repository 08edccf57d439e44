//! Seeded synthetic data: Gaussian mixtures, uniform boxes and OOD shells.
//!
//! Every generator draws from a ChaCha8 stream seeded with `seed_from_u64`,
//! so outputs are bit-identical across platforms for a given seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::contour::sample_uniform_directions;
use crate::error::{Error, Result};
use crate::geometry::EmbeddingSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-seed for stream `stream` of `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    /// Shared isotropic standard deviation.
    pub std: f64,
    pub n: usize,
    pub seed: u64,
    pub label: u32,
}

/// Draws `spec.n` points, assigned round-robin to the mixture components.
pub fn gaussian_mixture(spec: &MixtureSpec) -> Result<EmbeddingSet> {
    let dim = spec.means.first().map(Vec::len).unwrap_or(0);
    if spec.means.is_empty() {
        return Err(Error::InvalidSpec("at least one component required".into()));
    }
    if spec.means.iter().any(|m| m.len() != dim) {
        return Err(Error::InvalidSpec("component means differ in dimension".into()));
    }
    if spec.n < spec.means.len() {
        return Err(Error::InvalidSpec(format!(
            "n = {} is smaller than the {} components",
            spec.n,
            spec.means.len()
        )));
    }
    if !(spec.std >= 0.0 && spec.std.is_finite()) {
        return Err(Error::InvalidSpec(format!("invalid std {}", spec.std)));
    }
    let mut rng = rng(spec.seed);
    let mut data = Vec::with_capacity(spec.n * dim);
    for i in 0..spec.n {
        let mean = &spec.means[i % spec.means.len()];
        for &mu in mean {
            let z: f64 = rng.sample(StandardNormal);
            data.push(mu + spec.std * z);
        }
    }
    EmbeddingSet::new(data, dim, Some(vec![spec.label; spec.n]))
}

/// Five means evenly spaced on a ring of radius 1.5 around `center`.
pub fn ring_means(center: [f64; 2]) -> Vec<Vec<f64>> {
    (0..5)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 5.0;
            vec![center[0] + 1.5 * a.cos(), center[1] + 1.5 * a.sin()]
        })
        .collect()
}

/// The single irregular 2D class: five close Gaussian lobes (std 0.5) at the origin.
pub fn fig_a2_mixture(n: usize, seed: u64) -> Result<EmbeddingSet> {
    gaussian_mixture(&MixtureSpec {
        means: ring_means([0.0, 0.0]),
        std: 0.5,
        n,
        seed,
        label: 0,
    })
}

/// One five-lobe class per center, labeled 0.., `n_per_class` rows each.
pub fn multi_lobe_classes(centers: &[[f64; 2]], n_per_class: usize, seed: u64) -> Result<EmbeddingSet> {
    let mut out: Option<EmbeddingSet> = None;
    for (label, c) in centers.iter().enumerate() {
        let set = gaussian_mixture(&MixtureSpec {
            means: ring_means(*c),
            std: 0.5,
            n: n_per_class,
            seed: derive_seed(seed, label as u64),
            label: label as u32,
        })?;
        out = Some(match out {
            None => set,
            Some(prev) => prev.concat(&set)?,
        });
    }
    out.ok_or_else(|| Error::InvalidSpec("no class centers".into()))
}

/// `n x dim` i.i.d. uniform entries on `[lo, hi]`.
pub fn uniform_box(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<EmbeddingSet> {
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidRange(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    let mut rng = rng(seed);
    let data = (0..n * dim).map(|_| rng.random_range(lo..=hi)).collect();
    EmbeddingSet::new(data, dim, None)
}

/// Points with uniform directions and radii uniform on `[inner, outer]` around `center`.
pub fn shell_ood(
    n: usize,
    dim: usize,
    center: &[f64],
    inner_radius: f64,
    outer_radius: f64,
    seed: u64,
) -> Result<EmbeddingSet> {
    if !(inner_radius > 0.0 && inner_radius < outer_radius && outer_radius.is_finite()) {
        return Err(Error::InvalidRange(format!(
            "need 0 < inner < outer, got {inner_radius}, {outer_radius}"
        )));
    }
    if center.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: center.len(),
        });
    }
    let dirs = sample_uniform_directions(n, dim, derive_seed(seed, 0))?;
    let mut rng = rng(derive_seed(seed, 1));
    let mut data = Vec::with_capacity(n * dim);
    for dir in dirs.chunks_exact(dim) {
        let r = rng.random_range(inner_radius..=outer_radius);
        data.extend(dir.iter().zip(center).map(|(u, c)| c + r * u));
    }
    EmbeddingSet::new(data, dim, None)
}

/// Zero-mean Gaussian with per-axis standard deviations `scales`, offset by `mean`.
pub fn anisotropic_gaussian(n: usize, mean: &[f64], scales: &[f64], seed: u64, label: u32) -> Result<EmbeddingSet> {
    if mean.len() != scales.len() {
        return Err(Error::InvalidSpec("mean and scales differ in length".into()));
    }
    let mut rng = rng(seed);
    let mut data = Vec::with_capacity(n * mean.len());
    for _ in 0..n {
        for (mu, s) in mean.iter().zip(scales) {
            let z: f64 = rng.sample(StandardNormal);
            data.push(mu + s * z);
        }
    }
    EmbeddingSet::new(data, mean.len(), Some(vec![label; n]))
}
