//! CSV files with the generating configuration echoed as `#` comments.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use kinwave::sim::{DiagRow, Snapshot};
use serde::Serialize;

use crate::error::{Error, Result};

/// Writes `# `-prefixed lines ahead of the CSV body.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: impl AsRef<Path>, header: &str) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut buf = BufWriter::new(file);
        write_comment(&mut buf, header).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            writer: csv::Writer::from_writer(buf),
        })
    }

    pub fn row<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

fn write_comment(w: &mut impl Write, text: &str) -> std::io::Result<()> {
    for line in text.lines() {
        if line.is_empty() {
            writeln!(w, "#")?;
        } else {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

/// Comment block for several labelled configurations.
pub fn echo_configs<'a>(items: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut out = String::new();
    for (label, toml) in items {
        out.push_str(&format!("run: {label}\n"));
        out.push_str(&toml);
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SnapshotRow {
    t: f64,
    x: f64,
    rho: f64,
    u: f64,
    #[serde(rename = "M")]
    m: f64,
    #[serde(rename = "N")]
    n: f64,
}

pub fn write_snapshots(
    path: impl AsRef<Path>,
    header: &str,
    snaps: &[Snapshot],
) -> Result<PathBuf> {
    let mut out = CsvOut::create(path, header)?;
    for s in snaps {
        for j in 0..s.x.len() {
            out.row(&SnapshotRow {
                t: s.t,
                x: s.x[j],
                rho: s.rho[j],
                u: s.u[j],
                m: s.m[j],
                n: s.n[j],
            })?;
        }
    }
    out.finish()
}

pub fn write_diagnostics(
    path: impl AsRef<Path>,
    header: &str,
    rows: &[DiagRow],
) -> Result<PathBuf> {
    let mut out = CsvOut::create(path, header)?;
    for r in rows {
        out.row(r)?;
    }
    out.finish()
}
