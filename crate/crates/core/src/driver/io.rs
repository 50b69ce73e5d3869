//! Field dumps and PGM previews.
//!
//! A field file is a 16-byte ASCII header, `NSMS01`, the grid size as six
//! digits and a four-character kind tag, followed by `n²` little-endian
//! `f64` values in row-major order (x fastest).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

const MAGIC: &[u8; 6] = b"NSMS01";
const HEADER: usize = 16;

/// A field read back from disk. The physical side length is not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub n: usize,
    pub kind: String,
    pub values: Vec<f64>,
}

impl FieldFile {
    pub fn into_field(self, grid: Grid) -> Result<ScalarField> {
        if grid.n() != self.n {
            return Err(Error::GridMismatch);
        }
        ScalarField::from_values(grid, self.values)
    }
}

pub fn write_field(path: &Path, kind: &str, field: &ScalarField) -> Result<()> {
    if kind.len() > 4 || !kind.is_ascii() {
        return Err(Error::InvalidParameter(format!("field kind {kind:?} must be ≤ 4 ASCII bytes")));
    }
    let n = field.grid().n();
    let mut bytes = Vec::with_capacity(HEADER + 8 * n * n);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(format!("{n:06}{kind:<4}").as_bytes());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    let bytes = fs::read(path)?;
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER || &bytes[..6] != MAGIC {
        return Err(bad("missing NSMS01 header"));
    }
    let n: usize = std::str::from_utf8(&bytes[6..12])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("grid size is not a number"))?;
    let kind = std::str::from_utf8(&bytes[12..16])
        .map_err(|_| bad("kind tag is not ASCII"))?
        .trim_end()
        .to_string();
    let body = &bytes[HEADER..];
    if body.len() != 8 * n * n {
        return Err(bad(&format!("expected {} value bytes, found {}", 8 * n * n, body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(FieldFile { n, kind, values })
}

/// Binary greyscale PGM of `values` on an `n × n` grid, scaled linearly
/// from min (black) to max (white). Row 0 of the image is the top, i.e.
/// the largest `y`.
pub fn pgm_bytes(n: usize, values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for iy in (0..n).rev() {
        for ix in 0..n {
            let v = values[iy * n + ix];
            out.push((((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, file: &FieldFile) -> Result<()> {
    fs::write(path, pgm_bytes(file.n, &file.values))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(8, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x - 3.0 * y + 1e-300);
        let p = dir.path().join("f.nsf");
        write_field(&p, "mu", &f).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16 + 8 * 64);
        let back = read_field(&p).unwrap();
        assert_eq!(back.kind, "mu");
        assert_eq!(back.into_field(g).unwrap(), f);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.nsf");
        fs::write(&p, b"NSMS01000008chi 1234").unwrap();
        assert!(matches!(read_field(&p), Err(Error::Format { .. })));
        fs::write(&p, b"garbage").unwrap();
        assert!(matches!(read_field(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn pgm_scales_to_full_range() {
        let bytes = pgm_bytes(2, &[0.0, 1.0, 2.0, 4.0]);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // Top row is iy = 1.
        assert_eq!(&bytes[header.len()..], &[128, 255, 0, 64]);
    }
}
