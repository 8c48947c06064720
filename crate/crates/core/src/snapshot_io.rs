//! `PWU1` binary snapshot files.
//!
//! Layout (little endian): magic `b"PWU1"`, `n_z: u32`, `time: f64`,
//! `blocks: u32` bitmask (1 = u_pp, 2 = u_pn, 4 = u_np, 8 = u_nn), followed by
//! each present block in that order as `n_z²` row-major `(re, im)` f64 pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::evolution::{BogoliubovMatrix, BLOCK_NN, BLOCK_NP, BLOCK_PN, BLOCK_PP};

pub const MAGIC: &[u8; 4] = b"PWU1";
pub const HEADER_LEN: usize = 20;

pub fn write_snapshot<W: Write>(mut w: W, m: &BogoliubovMatrix) -> Result<()> {
    let n = u32::try_from(m.n_z).map_err(|_| Error::invalid("n_z", "exceeds u32"))?;
    w.write_all(MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&m.time.to_le_bytes())?;
    w.write_all(&m.block_mask().to_le_bytes())?;
    for block in [&m.u_pp, &m.u_pn, &m.u_np, &m.u_nn].into_iter().flatten() {
        let mut buf = Vec::with_capacity(16 * m.n_z);
        for row in block.rows() {
            buf.clear();
            for z in row {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> std::result::Result<BogoliubovMatrix, String> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)
        .map_err(|e| format!("header: {e}"))?;
    if &head[..4] != MAGIC {
        return Err("wrong magic".into());
    }
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let time = f64::from_le_bytes(head[8..16].try_into().unwrap());
    let mask = u32::from_le_bytes(head[16..20].try_into().unwrap());
    if mask & !0xF != 0 {
        return Err(format!("unknown block bits {mask:#x}"));
    }
    let mut read_block = |bit: u32| -> std::result::Result<Option<Array2<Complex64>>, String> {
        if mask & bit == 0 {
            return Ok(None);
        }
        let mut raw = vec![0u8; 16 * n * n];
        r.read_exact(&mut raw)
            .map_err(|e| format!("block {bit}: {e}"))?;
        let data = raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(Some(
            Array2::from_shape_vec((n, n), data).expect("n² elements"),
        ))
    };
    let u_pp = read_block(BLOCK_PP)?;
    let u_pn = read_block(BLOCK_PN)?;
    let u_np = read_block(BLOCK_NP)?;
    let u_nn = read_block(BLOCK_NN)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes".into());
    }
    Ok(BogoliubovMatrix {
        time,
        n_z: n,
        u_pp,
        u_pn,
        u_np,
        u_nn,
    })
}

pub fn save(path: &Path, m: &BogoliubovMatrix) -> Result<()> {
    write_snapshot(BufWriter::new(File::create(path)?), m)
}

pub fn load(path: &Path) -> Result<BogoliubovMatrix> {
    read_snapshot(BufReader::new(File::open(path)?)).map_err(|reason| Error::SnapshotFormat {
        path: path.to_path_buf(),
        reason,
    })
}

/// Where a stored snapshot lives.
#[derive(Debug)]
pub enum Stored {
    Memory(BogoliubovMatrix),
    Disk { time: f64, path: PathBuf },
}

/// Snapshot sink that keeps matrices in memory until a byte budget is
/// exhausted, then writes further snapshots to `PWU1` files in `spill_dir`.
#[derive(Debug)]
pub struct SnapshotStore {
    budget: usize,
    resident: usize,
    spill_dir: PathBuf,
    items: Vec<Stored>,
}

impl SnapshotStore {
    pub fn new(budget: usize, spill_dir: impl Into<PathBuf>) -> Self {
        Self {
            budget,
            resident: 0,
            spill_dir: spill_dir.into(),
            items: Vec::new(),
        }
    }

    pub fn push(&mut self, m: BogoliubovMatrix) -> Result<()> {
        let size = m.byte_size();
        if self.resident + size <= self.budget {
            self.resident += size;
            self.items.push(Stored::Memory(m));
        } else {
            std::fs::create_dir_all(&self.spill_dir)?;
            let path = self
                .spill_dir
                .join(format!("snapshot_{:05}.pwu", self.items.len()));
            save(&path, &m)?;
            self.items.push(Stored::Disk { time: m.time, path });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Stored] {
        &self.items
    }

    pub fn resident_bytes(&self) -> usize {
        self.resident
    }

    /// Returns snapshot `i`, loading it from disk if it was spilled.
    pub fn get(&self, i: usize) -> Result<std::borrow::Cow<'_, BogoliubovMatrix>> {
        match &self.items[i] {
            Stored::Memory(m) => Ok(std::borrow::Cow::Borrowed(m)),
            Stored::Disk { path, .. } => Ok(std::borrow::Cow::Owned(load(path)?)),
        }
    }
}
