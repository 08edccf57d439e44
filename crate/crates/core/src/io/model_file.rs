//! Binary model file, all fields little-endian:
//!
//! ```text
//! magic            4 bytes  "HCK1"
//! format_version   u32      1
//! label_count      u32
//! dim              u32
//! lambda           f64
//! config:
//!   k_mode         u8       0 = fixed, 1 = adaptive
//!   k              u32      0 when adaptive
//!   sigma_mult     f64
//!   tpr_target     f64
//!   lambda_mode    u8       0 = per-observation, 1 = pooled
//!   centroid_snap  u8       0 / 1
//!   axis_mode      u8       0 = data, 1 = random
//!   seed           u64
//! per class (label_count times):
//!   label          u32
//!   centroid       dim x f64
//!   cone_count     u32
//!   per cone:
//!     axis         dim x f32
//!     cos_opening  f64
//!     radial_bound f64
//! ```

use std::path::Path;

use crate::contour::{AxisMode, BuildConfig, ClassContour, ContourModel, Hypercone, KMode, LambdaMode};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HCK1";
pub const FORMAT_VERSION: u32 = 1;

pub fn model_to_bytes(model: &ContourModel) -> Vec<u8> {
    let dim = model.dim();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.contours().len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&model.lambda().to_le_bytes());

    let cfg = model.config();
    let (k_tag, k) = match cfg.k_mode {
        KMode::Fixed(k) => (0u8, k as u32),
        KMode::Adaptive => (1u8, 0u32),
    };
    out.push(k_tag);
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&cfg.sigma_multiplier.to_le_bytes());
    out.extend_from_slice(&cfg.tpr_target.to_le_bytes());
    out.push(match cfg.lambda_mode {
        LambdaMode::PerObservation => 0,
        LambdaMode::Pooled => 1,
    });
    out.push(u8::from(cfg.centroid_snap));
    out.push(match cfg.axis_mode {
        AxisMode::Data => 0,
        AxisMode::Random => 1,
    });
    out.extend_from_slice(&cfg.seed.to_le_bytes());

    for c in model.contours() {
        out.extend_from_slice(&c.label().to_le_bytes());
        for v in c.centroid() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(c.cones().len() as u32).to_le_bytes());
        for cone in c.cones() {
            for &v in &cone.axis {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
            out.extend_from_slice(&cone.cos_opening.to_le_bytes());
            out.extend_from_slice(&cone.radial_boundary.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn corrupt(&self, what: &str) -> Error {
        Error::BadHeader {
            offset: self.pos as u64,
            reason: what.into(),
        }
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ContourModel> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { offset: 0 });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let label_count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let lambda = r.f64()?;

    let k_mode = match (r.u8()?, r.u32()?) {
        (0, k) => KMode::Fixed(k as usize),
        (1, _) => KMode::Adaptive,
        _ => return Err(r.corrupt("unknown k_mode")),
    };
    let sigma_multiplier = r.f64()?;
    let tpr_target = r.f64()?;
    let lambda_mode = match r.u8()? {
        0 => LambdaMode::PerObservation,
        1 => LambdaMode::Pooled,
        _ => return Err(r.corrupt("unknown lambda_mode")),
    };
    let centroid_snap = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(r.corrupt("bad centroid_snap flag")),
    };
    let axis_mode = match r.u8()? {
        0 => AxisMode::Data,
        1 => AxisMode::Random,
        _ => return Err(r.corrupt("unknown axis_mode")),
    };
    let seed = r.u64()?;
    let config = BuildConfig {
        k_mode,
        sigma_multiplier,
        tpr_target,
        centroid_snap,
        lambda_mode,
        axis_mode,
        seed,
    };

    let mut contours = Vec::with_capacity(label_count.min(1 << 16));
    for _ in 0..label_count {
        let label = r.u32()?;
        let centroid = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let cone_count = r.u32()? as usize;
        // Each cone needs at least this many bytes; guards huge bogus counts.
        if cone_count.saturating_mul(dim * 4 + 16) > bytes.len() - r.pos {
            return Err(Error::Truncated {
                offset: bytes.len() as u64,
            });
        }
        let mut cones = Vec::with_capacity(cone_count);
        for _ in 0..cone_count {
            let axis = (0..dim)
                .map(|_| r.f32().map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            let cos_opening = r.f64()?;
            let radial_boundary = r.f64()?;
            cones.push(Hypercone {
                axis,
                cos_opening,
                radial_boundary,
            });
        }
        contours.push(ClassContour::new(label, centroid, cones)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} trailing bytes at offset {}",
            bytes.len() - r.pos,
            r.pos
        )));
    }
    ContourModel::new(contours, lambda, config)
}

pub fn save_model(path: &Path, model: &ContourModel) -> Result<()> {
    super::write_atomic(path, &model_to_bytes(model))
}

pub fn load_model(path: &Path) -> Result<ContourModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::build_model;
    use crate::scoring::score_batch;
    use crate::synth;

    fn model() -> ContourModel {
        let train = synth::multi_lobe_classes(&[[0.0, 0.0], [8.0, 0.0]], 150, 4).unwrap();
        build_model(&train, None, &BuildConfig::with_k(6)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = model_to_bytes(&m);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_bytes(&back), bytes);
        let probe = synth::uniform_box(100, 2, -5.0, 12.0, 1).unwrap();
        assert_eq!(score_batch(&m, &probe).unwrap(), score_batch(&back, &probe).unwrap());
    }

    #[test]
    fn truncation_rejected_everywhere() {
        let bytes = model_to_bytes(&model());
        for cut in [5, 20, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(model_from_bytes(&bytes[..cut]), Err(Error::Truncated { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn magic_and_version_checked() {
        let mut bytes = model_to_bytes(&model());
        bytes[3] = b'2';
        assert!(matches!(model_from_bytes(&bytes), Err(Error::BadMagic { .. })));
        bytes[3] = b'1';
        bytes[4..8].copy_from_slice(&999u32.to_le_bytes());
        assert!(matches!(
            model_from_bytes(&bytes),
            Err(Error::VersionUnsupported(999))
        ));
    }

    #[test]
    fn save_load_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.hck");
        let m = model();
        save_model(&p, &m).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
    }
}
