//! Input/output records and their CSV form (`n,u,y`).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paired input/output samples with the declared memory bound `tau`: the
/// first `tau` samples only provide history and are never fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    u: Vec<f64>,
    y: Vec<f64>,
    tau: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>, tau: usize) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                found: y.len(),
            });
        }
        Ok(Self {
            u,
            y,
            tau,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn set_tau(&mut self, tau: usize) {
        self.tau = tau;
    }

    pub fn input(&self) -> &[f64] {
        &self.u
    }

    pub fn output(&self) -> &[f64] {
        &self.y
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    /// Outputs at the usable time indices `tau..N`.
    pub fn targets(&self) -> &[f64] {
        &self.y[self.tau.min(self.y.len())..]
    }

    /// Contiguous window `[start, start + len)` with the same `tau`.
    pub fn window(&self, start: usize, len: usize) -> Result<Dataset> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.len())
            .ok_or_else(|| {
                Error::Config(format!(
                    "window [{start}, {start}+{len}) exceeds dataset length {}",
                    self.len()
                ))
            })?;
        Ok(Dataset {
            u: self.u[start..end].to_vec(),
            y: self.y[start..end].to_vec(),
            tau: self.tau,
            source: self.source.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "u", "y"])?;
        for (n, (u, y)) in self.u.iter().zip(&self.y).enumerate() {
            w.write_record([n.to_string(), u.to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Parses a CSV with (at least) `u` and `y` columns, in row order. Other
/// columns are ignored.
pub fn read_csv<R: Read>(reader: R, tau: usize) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column {name:?}")))
    };
    let iu = col("u")?;
    let iy = col("y")?;
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Data(format!("row {line}: {e}")))?;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                Error::Data(format!("row {line}: column {name:?} is not numeric: {raw:?}"))
            })
        };
        u.push(cell(iu, "u")?);
        y.push(cell(iy, "y")?);
    }
    Dataset::new(u, y, tau)
}

pub fn ingest_csv(path: &Path, tau: usize) -> Result<Dataset> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_csv(std::io::BufReader::new(f), tau)?.with_source(path.display().to_string()))
}
