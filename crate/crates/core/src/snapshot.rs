//! `TDK1` binary snapshots.
//!
//! Layout, all little-endian: magic `TDK1`, `u64` grid points per axis, `f64`
//! box length, `f64` time, `u64` field count, then each field's samples as
//! `f64` in row-major order. Fields are stored as `a, v1, v2, v3, h, m, eps`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};
use crate::model::{Perturbation, PerturbationState};

pub const MAGIC: &[u8; 4] = b"TDK1";
const FIELDS: u64 = 7;

pub fn write_snapshot(path: &Path, t: f64, w: &PerturbationState) -> Result<()> {
    let grid = w.a.grid();
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(grid.n() as u64).to_le_bytes())?;
    out.write_all(&grid.length().to_le_bytes())?;
    out.write_all(&t.to_le_bytes())?;
    out.write_all(&FIELDS.to_le_bytes())?;
    for f in w.components() {
        for x in f.values() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_8(r: &mut impl Read) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_snapshot(path: &Path) -> Result<(f64, PerturbationState)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot(format!("{}: bad magic {magic:?}", path.display())));
    }
    let n = u64::from_le_bytes(read_8(&mut r)?);
    let length = f64::from_le_bytes(read_8(&mut r)?);
    let t = f64::from_le_bytes(read_8(&mut r)?);
    let count = u64::from_le_bytes(read_8(&mut r)?);
    if count != FIELDS {
        return Err(Error::Snapshot(format!("expected {FIELDS} fields, found {count}")));
    }
    let n = usize::try_from(n).map_err(|_| Error::Snapshot(format!("grid size {n} too large")))?;
    let grid = Grid::new(n, length).map_err(|e| Error::Snapshot(e.to_string()))?;
    let mut fields = Vec::with_capacity(7);
    for _ in 0..FIELDS {
        let mut data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            data.push(f64::from_le_bytes(read_8(&mut r)?));
        }
        fields.push(ScalarField::from_vec(grid, data)?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Snapshot("trailing bytes after the last field".into()));
    }
    let fields: [ScalarField; 7] = fields.try_into().expect("seven fields");
    Ok((t, Perturbation::from_components(fields)))
}
