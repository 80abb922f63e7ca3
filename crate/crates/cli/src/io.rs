//! CSV output, checksums, and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use ouu_core::fem::CsrMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A CSV cell.
pub enum Cell {
    F(f64),
    I(i64),
    U(usize),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(x) => x.to_string(),
            Cell::U(x) => x.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

/// Output directory that remembers every file written to it.
pub struct OutDir {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn track(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.track(name);
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Cell>>) -> CliResult<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(|e| CliError::io(&p, e))?;
        self.track(name);
        Ok(())
    }

    /// One value per line, no header.
    pub fn write_vector(&mut self, name: &str, v: &[f64]) -> CliResult<()> {
        let mut s = String::with_capacity(v.len() * 24);
        for x in v {
            s.push_str(&fmt_f64(*x));
            s.push('\n');
        }
        self.write_text(name, &s)
    }

    /// `row,col,value` triplets.
    pub fn write_triplets(&mut self, name: &str, a: &CsrMatrix) -> CliResult<()> {
        let rows = a.triplets().map(|(i, j, v)| vec![Cell::U(i), Cell::U(j), Cell::F(v)]).collect();
        self.write_csv(name, &["row", "col", "value"], rows)
    }

    /// Control CSV with columns `well,z`.
    pub fn write_control(&mut self, name: &str, z: &[f64]) -> CliResult<()> {
        let rows = z.iter().enumerate().map(|(i, x)| vec![Cell::U(i), Cell::F(*x)]).collect();
        self.write_csv(name, &["well", "z"], rows)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Written next to every run's outputs; covered by the config hash rather
/// than a file checksum.
pub const RESOLVED_CONFIG: &str = "config.resolved.txt";

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// What produced a run directory, and checksums of everything in it.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn build(out: &OutDir, command: &str, config_text: &str, seed: u64) -> CliResult<Self> {
        let mut files = Vec::new();
        for name in out.files().iter().filter(|n| *n != RESOLVED_CONFIG) {
            let p = out.path(name);
            let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            files.push(FileEntry {
                name: name.clone(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files,
        })
    }

    pub fn write(&self, out: &OutDir) -> CliResult<()> {
        let p = out.path("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Names of listed files whose current checksum differs.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| {
                fs::read(dir.join(&f.name))
                    .map(|b| sha256_hex(&b) != f.sha256)
                    .unwrap_or(true)
            })
            .map(|f| f.name.clone())
            .collect()
    }
}

/// Reads a control CSV (`well,z`).
pub fn read_control(path: &Path) -> CliResult<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut z = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec
            .get(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::Config(format!("{}: expected columns well,z", path.display())))?;
        z.push(v);
    }
    Ok(z)
}

/// Reads one number per line.
pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|_| CliError::Config(format!("{}: bad number {l}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn manifest_detects_changes() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(tmp.path()).unwrap();
        out.write_vector("v.csv", &[1.0, 2.0]).unwrap();
        out.write_control("z.csv", &[3.0]).unwrap();
        let m = RunManifest::build(&out, "test", "a = 1\n", 9).unwrap();
        m.write(&out).unwrap();
        let back = RunManifest::read(&out.path("manifest.json")).unwrap();
        assert_eq!(back, m);
        assert!(back.mismatches(tmp.path()).is_empty());
        assert_eq!(read_control(&out.path("z.csv")).unwrap(), vec![3.0]);
        fs::write(out.path("v.csv"), "1\n").unwrap();
        assert_eq!(back.mismatches(tmp.path()), vec!["v.csv".to_string()]);
    }
}
