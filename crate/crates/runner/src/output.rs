//! CSV tables with `#` provenance lines and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use pairwell_core::{GridSpec, PropagatorConfig, WellParams};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn well_line(p: &WellParams) -> String {
    format!(
        "well: v1={} c2, v2={} c2, w={} au, d={} au, c={} au",
        p.v1, p.v2, p.w, p.d, p.c
    )
}

pub fn grid_line(g: &GridSpec, cfg: &PropagatorConfig) -> String {
    format!(
        "grid: n_z={}, box_length={} au, dz={} au; dt={} au, n_steps={}, t_end={} au",
        g.n_z(),
        g.box_length(),
        g.dz(),
        cfg.dt,
        cfg.n_steps,
        cfg.total_time()
    )
}

/// Writes `rows` under a header, preceded by `# `-prefixed provenance lines.
pub fn write_table(
    path: &Path,
    provenance: &[String],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> std::io::Result<()> {
    write_table_to(
        BufWriter::new(File::create(path)?),
        provenance,
        header,
        rows,
    )
}

pub fn write_table_to<W: Write>(
    mut out: W,
    provenance: &[String],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> std::io::Result<()> {
    for line in provenance {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub code_version: String,
    pub mode: String,
    pub config: String,
    pub input_sha256: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn entries(dir: &Path, files: &[PathBuf]) -> std::io::Result<Vec<OutputEntry>> {
        files
            .iter()
            .map(|f| {
                Ok(OutputEntry {
                    path: f
                        .strip_prefix(dir)
                        .unwrap_or(f)
                        .to_string_lossy()
                        .into_owned(),
                    sha256: sha256_file(f)?,
                    bytes: std::fs::metadata(f)?.len(),
                })
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}
