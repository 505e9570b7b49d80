//! TBNF, the little-endian tensor file format.
//!
//! ```text
//! offset  size   field
//! 0       4      magic "TBNF"
//! 4       1      version (1)
//! 5       1      element type (1 = f32)
//! 6       1      rank r in 1..=4
//! 7       1      reserved (0)
//! 8       r      axis codes (T=0, H=1, W=2, C=3)
//! 8+r     4r     extents, u32
//! 8+5r    4n     payload, f32 row-major, n = product of extents
//! ```
//!
//! Anything else, including trailing bytes, is rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{fmt_axes, Axis, Tensor};

pub const MAGIC: &[u8; 4] = b"TBNF";
pub const VERSION: u8 = 1;
pub const ELEM_F32: u8 = 1;
const HEADER_LEN: usize = 8;

/// Exact encoded size of a tensor with the given extents.
pub fn encoded_len(dims: &[usize]) -> usize {
    HEADER_LEN + 5 * dims.len() + 4 * dims.iter().product::<usize>()
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(encoded_len(t.dims()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, ELEM_F32, t.rank() as u8, 0]);
    out.extend(t.axes().iter().map(|a| a.code()));
    for &d in t.dims() {
        let d = u32::try_from(d)
            .map_err(|_| Error::Dimension(format!("extent {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for (i, &v) in t.data().iter().enumerate() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::Data(format!(
                "value {v} at flat index {i} is not representable as a finite f32"
            )));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != ELEM_F32 {
        return Err(Error::Format(format!("unsupported element type {}", bytes[5])));
    }
    let rank = bytes[6] as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::Format(format!("rank {rank} outside 1..=4")));
    }
    if bytes[7] != 0 {
        return Err(Error::Format(format!("reserved byte is {}, expected 0", bytes[7])));
    }
    let dims_end = HEADER_LEN + 5 * rank;
    if bytes.len() < dims_end {
        return Err(Error::Format("file ends inside the axis/extent block".into()));
    }

    let mut axes = Vec::with_capacity(rank);
    for &code in &bytes[HEADER_LEN..HEADER_LEN + rank] {
        let axis =
            Axis::from_code(code).ok_or_else(|| Error::Format(format!("unknown axis code {code}")))?;
        if axes.contains(&axis) {
            return Err(Error::Format(format!("axis {axis} appears twice")));
        }
        axes.push(axis);
    }
    let dims: Vec<usize> = bytes[HEADER_LEN + rank..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(Error::Format(format!("zero extent in {dims:?}")));
    }

    let expected = dims.iter().try_fold(4usize, |acc, &d| acc.checked_mul(d));
    let found = bytes.len() - dims_end;
    match expected {
        Some(expected) if expected == found => {}
        Some(expected) => return Err(Error::Truncated { expected, found }),
        None => return Err(Error::Format(format!("extents {dims:?} overflow"))),
    }

    let mut data = Vec::with_capacity(found / 4);
    for (i, c) in bytes[dims_end..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite payload value at flat index {i}")));
        }
        data.push(f64::from(v));
    }

    // Layout is never transposed: out-of-order labels are reassigned in
    // canonical order over the same memory.
    if axes.windows(2).any(|w| w[0] > w[1]) {
        let mut canonical = axes.clone();
        canonical.sort_unstable();
        log::warn!(
            "tensor axes {} are not in canonical order; relabeling as {}",
            fmt_axes(&axes),
            fmt_axes(&canonical)
        );
        axes = canonical;
    }
    Tensor::new(dims, axes, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Encodes fully before touching the filesystem, so a tensor that cannot be
/// stored leaves no file behind.
pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
