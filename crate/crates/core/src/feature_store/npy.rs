//! Reader and writer for the subset of the NumPy `.npy` v1.0 format used by
//! feature archives: 2-D, C-ordered, little-endian `f4` or `f8` arrays.
//!
//! Layout of a v1.0 file:
//!
//! ```text
//! \x93NUMPY  0x01 0x00  <u16 LE header_len>  <ASCII dict, space padded, '\n'>  <payload>
//! ```
//!
//! The header dict looks like `{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }`.

use thiserror::Error;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const HEADER_ALIGN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NpyError {
    #[error("not an NPY file (bad magic)")]
    BadMagic,
    #[error("unsupported NPY version {major}.{minor}; only 1.0 is accepted")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("malformed NPY header: {0}")]
    BadHeader(String),
    #[error("unsupported dtype {0:?}; expected '<f4' or '<f8'")]
    UnsupportedDtype(String),
    #[error("array is stored in Fortran (column-major) order")]
    FortranOrder,
    #[error("unsupported shape {0:?}; expected two non-zero dimensions")]
    BadShape(Vec<usize>),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{extra} unexpected bytes after payload")]
    TrailingData { extra: usize },
}

/// Element type of the stored payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

/// A dense row-major matrix decoded from an array file, always in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayData {
    pub rows: usize,
    pub cols: usize,
    pub dtype: Dtype,
    pub values: Vec<f64>,
}

impl ArrayData {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Decodes a complete `.npy` byte buffer.
pub fn parse_array_file(bytes: &[u8]) -> Result<ArrayData, NpyError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(NpyError::BadHeader("file ends inside the preamble".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion { major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(NpyError::BadHeader("file ends inside the header".into()));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .map_err(|_| NpyError::BadHeader("header is not ASCII".into()))?;
    let header = Header::parse(header)?;

    let dtype = match header.descr.as_str() {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    };
    if header.fortran_order {
        return Err(NpyError::FortranOrder);
    }
    let (rows, cols) = match header.shape.as_slice() {
        &[r, c] if r > 0 && c > 0 => (r, c),
        _ => return Err(NpyError::BadShape(header.shape)),
    };

    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or_else(|| NpyError::BadShape(header.shape.clone()))?;
    let payload = &bytes[data_start..];
    if payload.len() < expected {
        return Err(NpyError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(NpyError::TrailingData {
            extra: payload.len() - expected,
        });
    }

    let values = match dtype {
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(ArrayData {
        rows,
        cols,
        dtype,
        values,
    })
}

/// Encodes a row-major matrix as an `.npy` v1.0 file.
///
/// With [`Dtype::F4`] values are narrowed to `f32`.
pub fn serialize_array(rows: usize, cols: usize, values: &[f64], dtype: Dtype) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols, "values do not match shape");
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        dtype.descr(),
        rows,
        cols
    );
    // preamble + header + '\n' must land on the alignment boundary
    let unpadded = PREAMBLE_LEN + header.len() + 1;
    let pad = (HEADER_ALIGN - unpadded % HEADER_ALIGN) % HEADER_ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + values.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match dtype {
        Dtype::F4 => values
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F8 => values
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

#[derive(Debug)]
struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl Header {
    /// Parses the Python dict literal. Only the three keys numpy writes are
    /// recognised; key order is free.
    fn parse(text: &str) -> Result<Header, NpyError> {
        let bad = |msg: &str| NpyError::BadHeader(msg.to_string());
        let body = text
            .trim_end_matches(['\n', ' ', '\0'])
            .trim()
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| bad("header is not a dict literal"))?;

        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;
        let mut rest = body.trim_start();
        while !rest.is_empty() {
            let (key, after) = take_quoted(rest).ok_or_else(|| bad("expected quoted key"))?;
            let after = after
                .trim_start()
                .strip_prefix(':')
                .ok_or_else(|| bad("expected ':' after key"))?
                .trim_start();
            let after = match key {
                "descr" => {
                    let (v, a) = take_quoted(after).ok_or_else(|| bad("descr must be a string"))?;
                    descr = Some(v.to_string());
                    a
                }
                "fortran_order" => {
                    if let Some(a) = after.strip_prefix("False") {
                        fortran_order = Some(false);
                        a
                    } else if let Some(a) = after.strip_prefix("True") {
                        fortran_order = Some(true);
                        a
                    } else {
                        return Err(bad("fortran_order must be True or False"));
                    }
                }
                "shape" => {
                    let close = after
                        .strip_prefix('(')
                        .and_then(|s| s.find(')').map(|i| (&s[..i], &s[i + 1..])))
                        .ok_or_else(|| bad("shape must be a tuple"))?;
                    let dims = close
                        .0
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<usize>()
                                .map_err(|_| bad("non-integer shape entry"))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    shape = Some(dims);
                    close.1
                }
                other => return Err(NpyError::BadHeader(format!("unknown key {other:?}"))),
            };
            let after = after.trim_start();
            rest = match after.strip_prefix(',') {
                Some(a) => a.trim_start(),
                None if after.is_empty() => after,
                None => return Err(bad("expected ',' between entries")),
            };
        }
        Ok(Header {
            descr: descr.ok_or_else(|| bad("missing 'descr'"))?,
            fortran_order: fortran_order.ok_or_else(|| bad("missing 'fortran_order'"))?,
            shape: shape.ok_or_else(|| bad("missing 'shape'"))?,
        })
    }
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(quote)?;
    Some((&inner[..end], &inner[end + 1..]))
}
