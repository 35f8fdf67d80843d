//! LEFD binary field files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "LEFD" | version u32 | kind u8 | N u8 | j u8 | axes u8
//!        | axes x (count u32, spacing f64) | extent f64
//!        | values f64 (row-major, last axis fastest)
//! ```
//!
//! A JSON sidecar with the same stem carries the exponents and symmetry
//! metadata.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::field::{Field, FieldMeta};
use super::grid::{Grid, GridDescriptor, GridKind};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LEFD";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    grid: GridDescriptor,
    #[serde(flatten)]
    meta: FieldMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode_field(f: &Field) -> Vec<u8> {
    let d = f.grid().descriptor();
    let mut out = Vec::with_capacity(16 + 12 * d.counts.len() + 8 * (f.values().len() + 1));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(d.kind.code());
    out.push(d.dim as u8);
    out.push(d.blocks as u8);
    out.push(d.counts.len() as u8);
    for (c, h) in d.counts.iter().zip(&d.spacings) {
        out.extend_from_slice(&(*c as u32).to_le_bytes());
        out.extend_from_slice(&h.to_le_bytes());
    }
    out.extend_from_slice(&d.extent.to_le_bytes());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptField {
                path: self.path.to_path_buf(),
                reason: format!("truncated at byte {} (need {n} more)", self.pos),
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_field(bytes: &[u8], path: &Path) -> Result<Field> {
    let corrupt = |reason: String| Error::CorruptField {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let kind = r.u8()?;
    let kind =
        GridKind::from_code(kind).ok_or_else(|| corrupt(format!("unknown grid kind {kind}")))?;
    let dim = r.u8()? as u32;
    let blocks = r.u8()? as u32;
    let naxes = r.u8()? as usize;
    let mut counts = Vec::with_capacity(naxes);
    let mut spacings = Vec::with_capacity(naxes);
    for _ in 0..naxes {
        counts.push(r.u32()? as usize);
        spacings.push(r.f64()?);
    }
    let extent = r.f64()?;
    let desc = GridDescriptor {
        kind,
        dim,
        blocks,
        extent,
        counts,
        spacings,
    };
    let grid =
        Grid::from_descriptor(&desc).map_err(|e| corrupt(format!("bad grid header: {e}")))?;
    let n = grid.len();
    let remaining = bytes.len() - r.pos;
    if remaining != 8 * n {
        return Err(corrupt(format!(
            "expected {} value bytes, found {remaining}",
            8 * n
        )));
    }
    let values: Vec<f64> = bytes[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::new(Arc::new(grid), values).map_err(|e| corrupt(e.to_string()))
}

/// Writes the binary field and its JSON sidecar.
pub fn save_field(f: &Field, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_field(f))?;
    file.sync_all()?;
    let sidecar = Sidecar {
        format: "LEFD".into(),
        version: VERSION,
        grid: f.grid().descriptor(),
        meta: f.meta.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a field written by [`save_field`]. A missing sidecar yields empty
/// metadata; an inconsistent one is an error.
pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut field = decode_field(&bytes, path)?;
    let side = sidecar_path(path);
    if side.exists() {
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(&side)?)?;
        if sidecar.version != VERSION {
            return Err(Error::VersionMismatch {
                found: sidecar.version,
                expected: VERSION,
            });
        }
        if sidecar.grid != field.grid().descriptor() {
            return Err(Error::CorruptField {
                path: side,
                reason: "sidecar grid does not match the binary header".into(),
            });
        }
        field.meta = sidecar.meta;
    }
    Ok(field)
}

/// One row per node: grid coordinates, then the value.
pub fn write_csv<W: std::io::Write>(f: &Field, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: &[&str] = match f.grid().kind() {
        GridKind::Radial1d => &["r"],
        GridKind::Biradial2d => &["s", "t"],
        GridKind::BiradialRadial3d => &["s", "t", "r"],
        GridKind::Cartesian => &[],
    };
    let mut header: Vec<String> = if names.is_empty() {
        (0..f.grid().axes().len())
            .map(|a| format!("x{a}"))
            .collect()
    } else {
        names.iter().map(|s| s.to_string()).collect()
    };
    header.push("value".into());
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..f.grid().len() {
        let mut row: Vec<String> = f
            .grid()
            .node(k)
            .iter()
            .map(|x| format!("{x:.16e}"))
            .collect();
        row.push(format!("{:.16e}", f.values()[k]));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::build_grid;
    use crate::exponents::Exponents;

    fn sample_field() -> Field {
        let g = Arc::new(build_grid(GridKind::Biradial2d, 4, 1, 3.0, 16).unwrap());
        let mut f = Field::from_fn(g, |x| {
            (x[0] * x[0] - x[1] * x[1]) * (-x[0] * x[1]).exp() + 1e-300
        });
        f.meta.exponents = Some(Exponents::yamabe(4).unwrap());
        f
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.lefd");
        let f = sample_field();
        save_field(&f, &path).unwrap();
        let g = load_field(&path).unwrap();
        assert_eq!(g.grid().descriptor(), f.grid().descriptor());
        assert!(f
            .values()
            .iter()
            .zip(g.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(g.meta, f.meta);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.lefd");
        let bytes = encode_field(&sample_field());
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_field(&path), Err(Error::CorruptField { .. })));
        fs::write(&path, &bytes[..10]).unwrap();
        assert!(matches!(load_field(&path), Err(Error::CorruptField { .. })));
    }

    #[test]
    fn version_bump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.lefd");
        let mut bytes = encode_field(&sample_field());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_field(&path),
            Err(Error::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_field(&sample_field());
        bytes[0] = b'X';
        assert!(decode_field(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn csv_rows() {
        let f = sample_field();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), f.grid().len() + 1);
        assert!(text.starts_with("s,t,value"));
    }
}
