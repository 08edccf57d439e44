//! Minimal NPY (format version 1.0/2.0) reader and writer.
//!
//! Only what embedding dumps need: little-endian `f4`/`f8` matrices and
//! integer label vectors, C order. Fortran order, big-endian and object
//! dtypes are rejected.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
    /// Byte offset of the `'descr'` key.
    pub descr_offset: usize,
    /// Byte offset of the first data byte.
    pub data_offset: usize,
}

pub fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
        });
    }
    if &bytes[..6] != MAGIC {
        return Err(Error::BadMagic { offset: 0 });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (len_bytes, start) = match major {
        1 => (2, 10),
        2 | 3 => (4, 12),
        _ => return Err(Error::VersionUnsupported(u32::from(major) << 8 | u32::from(minor))),
    };
    if bytes.len() < start {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
        });
    }
    let hlen = if len_bytes == 2 {
        u16::from_le_bytes([bytes[8], bytes[9]]) as usize
    } else {
        u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize
    };
    let end = start + hlen;
    if bytes.len() < end {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
        });
    }
    let text = std::str::from_utf8(&bytes[start..end]).map_err(|_| Error::BadHeader {
        offset: start as u64,
        reason: "header is not valid text".into(),
    })?;
    let bad = |reason: &str| Error::BadHeader {
        offset: start as u64,
        reason: reason.into(),
    };

    let descr = dict_value(text, "descr")
        .and_then(|v| v.strip_prefix('\'').and_then(|v| v.split('\'').next()))
        .ok_or_else(|| bad("missing 'descr'"))?
        .to_string();
    let fortran_order = match dict_value(text, "fortran_order") {
        Some(v) if v.starts_with("False") => false,
        Some(v) if v.starts_with("True") => true,
        _ => return Err(bad("missing 'fortran_order'")),
    };
    let shape_src = dict_value(text, "shape")
        .and_then(|v| v.strip_prefix('('))
        .and_then(|v| v.split(')').next())
        .ok_or_else(|| bad("missing 'shape'"))?;
    let shape = shape_src
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('L').parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad("unparseable 'shape'"))?;
    Ok(Header {
        descr,
        fortran_order,
        shape,
        descr_offset: start + text.find("'descr'").unwrap_or(0),
        data_offset: end,
    })
}

/// Text following `'key':` in a Python dict literal, leading whitespace trimmed.
fn dict_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}'");
    let at = text.find(&pat)? + pat.len();
    let rest = text[at..].trim_start().strip_prefix(':')?;
    Some(rest.trim_start())
}

fn data_slice<'a>(bytes: &'a [u8], header: &Header, elem: usize) -> Result<&'a [u8]> {
    let count: usize = header.shape.iter().product();
    let need = count * elem;
    let have = bytes.len() - header.data_offset;
    if have < need {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
        });
    }
    if have > need {
        return Err(Error::ShapeMismatch(format!(
            "{} trailing bytes after data at offset {}",
            have - need,
            header.data_offset + need
        )));
    }
    Ok(&bytes[header.data_offset..])
}

/// Reads a 2-D float matrix; returns `(values, rows, cols)` as `f64`.
pub fn read_matrix(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let h = parse_header(bytes)?;
    if h.fortran_order {
        return Err(Error::ShapeMismatch(
            "Fortran-order arrays are not supported".into(),
        ));
    }
    let (rows, cols) = match h.shape[..] {
        [r, c] => (r, c),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "expected a 2-D array, got shape {:?}",
                h.shape
            )))
        }
    };
    let values = match h.descr.as_str() {
        "<f4" => data_slice(bytes, &h, 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect::<Vec<_>>(),
        "<f8" => data_slice(bytes, &h, 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
        other => {
            return Err(Error::UnsupportedDtype {
                descr: other.into(),
                offset: h.descr_offset as u64,
            })
        }
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        let elem = if h.descr == "<f4" { 4 } else { 8 };
        return Err(Error::NonFinite(format!(
            "row {}, column {} (byte offset {})",
            i / cols.max(1),
            i % cols.max(1),
            h.data_offset + i * elem
        )));
    }
    Ok((values, rows, cols))
}

/// Reads a 1-D (or `n x 1`) non-negative integer vector.
pub fn read_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    let h = parse_header(bytes)?;
    if h.fortran_order && h.shape.len() > 1 {
        return Err(Error::ShapeMismatch(
            "Fortran-order arrays are not supported".into(),
        ));
    }
    match h.shape[..] {
        [_] | [_, 1] => {}
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "expected a 1-D label array, got shape {:?}",
                h.shape
            )))
        }
    }
    let elem = match h.descr.as_str() {
        "|i1" | "|u1" => 1,
        "<i2" | "<u2" => 2,
        "<i4" | "<u4" => 4,
        "<i8" | "<u8" => 8,
        other => {
            return Err(Error::UnsupportedDtype {
                descr: other.into(),
                offset: h.descr_offset as u64,
            })
        }
    };
    let signed = h.descr.as_bytes()[1] == b'i';
    let data = data_slice(bytes, &h, elem)?;
    data.chunks_exact(elem)
        .enumerate()
        .map(|(i, b)| {
            let mut buf = [0u8; 8];
            buf[..elem].copy_from_slice(b);
            if signed && b[elem - 1] & 0x80 != 0 {
                buf[elem..].fill(0xff);
            }
            let v = i64::from_le_bytes(buf);
            let v = if signed { v as i128 } else { u64::from_le_bytes(buf) as i128 };
            u32::try_from(v).map_err(|_| {
                Error::ShapeMismatch(format!(
                    "label {v} at index {i} (byte offset {}) is not a non-negative 32-bit class id",
                    h.data_offset + i * elem
                ))
            })
        })
        .collect()
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_txt = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_txt}, }}");
    // Pad so the data starts on a 64-byte boundary; the header ends in '\n'.
    let total = 10 + dict.len() + 1;
    dict.push_str(&" ".repeat((64 - total % 64) % 64));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn write_matrix_f8(values: &[f64], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = header_bytes("<f8", &[rows, cols]);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_matrix_f4(values: &[f64], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = header_bytes("<f4", &[rows, cols]);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_labels_i8(labels: &[u32]) -> Vec<u8> {
    let mut out = header_bytes("<i8", &[labels.len()]);
    for &l in labels {
        out.extend_from_slice(&i64::from(l).to_le_bytes());
    }
    out
}
