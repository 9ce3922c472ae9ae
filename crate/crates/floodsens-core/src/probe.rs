//! Points of interest where depth distributions and sensitivity indices are
//! inspected. Stored as a four-column CSV: `id,x,y,label`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RasterHeader;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("duplicate probe id {0:?}")]
    DuplicateId(String),
    #[error("probe {id:?} at ({x}, {y}) is outside the domain")]
    OutsideDomain { id: String, x: f64, y: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Probe {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
}

impl ProbeSet {
    pub fn new(probes: Vec<Probe>) -> Result<Self, ProbeError> {
        let mut seen = HashSet::new();
        for p in &probes {
            if !seen.insert(p.id.clone()) {
                return Err(ProbeError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Self { probes })
    }

    pub fn read_csv(path: &Path) -> Result<Self, ProbeError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|source| ProbeError::Csv {
                path: path.display().to_string(),
                source,
            })?;
        let mut probes = Vec::new();
        for rec in reader.deserialize() {
            let p: Probe = rec.map_err(|source| ProbeError::Csv {
                path: path.display().to_string(),
                source,
            })?;
            probes.push(p);
        }
        Self::new(probes)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ProbeError> {
        let mut writer = csv::Writer::from_path(path).map_err(|source| ProbeError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        for p in &self.probes {
            writer.serialize(p).map_err(|source| ProbeError::Csv {
                path: path.display().to_string(),
                source,
            })?;
        }
        writer.flush().map_err(|source| ProbeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    /// Check every probe falls inside the grid described by `header`.
    pub fn check_inside(&self, header: &RasterHeader) -> Result<(), ProbeError> {
        for p in &self.probes {
            if p.x < header.xll
                || p.x > header.x_right()
                || p.y < header.yll
                || p.y > header.y_top()
            {
                return Err(ProbeError::OutsideDomain {
                    id: p.id.clone(),
                    x: p.x,
                    y: p.y,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}
