//! Binary field (`CHF1`) and string checkpoint (`CHS1`) formats.
//!
//! `CHF1`: magic, `u32` n, `f64` side, `f64` phi, `f64` xi, then `n*n` `f64`
//! samples row-major. `CHS1`: magic, `u32` image count, the images as `CHF1`
//! records, the `f64` alpha array, then a `u64` iteration counter. All
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::torus::{Field, Grid};

pub const FIELD_MAGIC: &[u8; 4] = b"CHF1";
pub const STRING_MAGIC: &[u8; 4] = b"CHS1";

fn format_err(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}

pub fn write_field<W: Write>(w: &mut W, u: &Field) -> Result<()> {
    let g = u.grid();
    w.write_all(FIELD_MAGIC)?;
    let n = u32::try_from(g.n()).map_err(|_| format_err("CHF1", "grid too large"))?;
    w.write_all(&n.to_le_bytes())?;
    for x in [g.side(), g.phi(), g.xi()] {
        w.write_all(&x.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * g.len());
    for v in u.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R, format: &'static str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format, "truncated"),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn read_f64<R: Read>(r: &mut R, format: &'static str) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<R, 8>(r, format)?))
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Field> {
    let magic = read_exact::<R, 4>(r, "CHF1")?;
    if &magic != FIELD_MAGIC {
        return Err(format_err("CHF1", "bad magic"));
    }
    let n = u32::from_le_bytes(read_exact::<R, 4>(r, "CHF1")?) as usize;
    let side = read_f64(r, "CHF1")?;
    let phi = read_f64(r, "CHF1")?;
    let xi = read_f64(r, "CHF1")?;
    let grid = Grid::new(n, side, phi, xi).map_err(|e| format_err("CHF1", e.to_string()))?;
    let mut raw = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut raw)
        .map_err(|_| format_err("CHF1", "truncated sample block"))?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Field::new(grid, values).map_err(|e| format_err("CHF1", e.to_string()))
}

pub fn save_field(path: &Path, u: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, u)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<Field> {
    read_field(&mut BufReader::new(File::open(path)?))
}

/// Raw contents of a string checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct StringCheckpoint {
    pub images: Vec<Field>,
    pub alpha: Vec<f64>,
    pub iter: u64,
}

pub fn write_string<W: Write>(w: &mut W, images: &[Field], alpha: &[f64], iter: u64) -> Result<()> {
    if images.len() != alpha.len() {
        return Err(format_err("CHS1", "alpha length differs from image count"));
    }
    w.write_all(STRING_MAGIC)?;
    let count = u32::try_from(images.len()).map_err(|_| format_err("CHS1", "too many images"))?;
    w.write_all(&count.to_le_bytes())?;
    for u in images {
        write_field(w, u)?;
    }
    for a in alpha {
        w.write_all(&a.to_le_bytes())?;
    }
    w.write_all(&iter.to_le_bytes())?;
    Ok(())
}

pub fn read_string<R: Read>(r: &mut R) -> Result<StringCheckpoint> {
    let magic = read_exact::<R, 4>(r, "CHS1")?;
    if &magic != STRING_MAGIC {
        return Err(format_err("CHS1", "bad magic"));
    }
    let count = u32::from_le_bytes(read_exact::<R, 4>(r, "CHS1")?) as usize;
    if count < 2 {
        return Err(format_err("CHS1", "need at least two images"));
    }
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let u = read_field(r)?;
        if let Some(first) = images.first() {
            let first: &Field = first;
            if first.grid() != u.grid() {
                return Err(format_err("CHS1", "images on different grids"));
            }
        }
        images.push(u);
    }
    let alpha = (0..count)
        .map(|_| read_f64(r, "CHS1"))
        .collect::<Result<Vec<_>>>()?;
    let iter = u64::from_le_bytes(read_exact::<R, 8>(r, "CHS1")?);
    Ok(StringCheckpoint {
        images,
        alpha,
        iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field {
        let g = Grid::new(6, 2.5, 0.2, 2.3).unwrap();
        Field::from_fn(g, |x, y| (x * 3.0).sin() - y * y)
    }

    #[test]
    fn field_layout_is_bit_exact() {
        let u = sample();
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 24 + 8 * 36);
        assert_eq!(&buf[..4], b"CHF1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 6);
        assert_eq!(f64::from_le_bytes(buf[8..16].try_into().unwrap()), 2.5);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 0.2);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 2.3);
        assert_eq!(
            f64::from_le_bytes(buf[32 + 8 * 7..32 + 8 * 8].try_into().unwrap()),
            u.get(1, 1)
        );
        assert_eq!(read_field(&mut buf.as_slice()).unwrap(), u);
    }

    #[test]
    fn corrupt_fields_are_rejected() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_field(&mut bad.as_slice()).is_err());
        assert!(read_field(&mut &buf[..buf.len() - 3]).is_err());
        let mut odd = buf.clone();
        odd[4] = 5;
        assert!(read_field(&mut odd.as_slice()).is_err());
        let mut nan = buf;
        nan[40..48].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(read_field(&mut nan.as_slice()).is_err());
    }

    #[test]
    fn string_layout() {
        let a = sample();
        let b = a.scale(2.0);
        let mut buf = Vec::new();
        write_string(&mut buf, &[a.clone(), b.clone()], &[0.0, 1.0], 17).unwrap();
        let rec = 32 + 8 * 36;
        assert_eq!(buf.len(), 8 + 2 * rec + 16 + 8);
        assert_eq!(&buf[..4], b"CHS1");
        assert_eq!(&buf[8..12], b"CHF1");
        assert_eq!(u64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap()), 17);
        let back = read_string(&mut buf.as_slice()).unwrap();
        assert_eq!(back.images, vec![a, b]);
        assert_eq!(back.alpha, vec![0.0, 1.0]);
        assert_eq!(back.iter, 17);
    }
}
