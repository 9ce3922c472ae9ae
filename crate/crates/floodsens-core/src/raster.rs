//! Regular-grid rasters and their plain-text format.
//!
//! One container serves every gridded field in the pipeline: elevation
//! models, maximal-depth outputs and sensitivity maps. The on-disk format
//! is the six-line ASCII grid header (`ncols`, `nrows`, `xllcorner`,
//! `yllcorner`, `cellsize`, `NODATA_value`) followed by `nrows` lines of
//! `ncols` whitespace-separated values, row 0 being the northernmost.
//!
//! Values are written with six decimal places when that rendering parses
//! back to the identical `f64`, otherwise with the shortest exact decimal
//! representation, so `read(write(r)) == r` holds bit-exactly for every
//! finite raster while ordinary terrain files stay human-readable.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

/// Default sentinel for missing cells.
pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}:{line}: malformed header: {msg}")]
    Header {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: non-numeric token {token:?}")]
    BadToken {
        path: String,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: value count mismatch: expected {expected} values, found {found}")]
    CountMismatch {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid raster shape: {0}")]
    Shape(String),
    #[error("resample factor must be >= 1, got {0}")]
    BadFactor(i64),
    #[error("point ({x}, {y}) outside raster bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("target grid not covered by source raster")]
    ExtentMismatch,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Georeferencing and shape of a raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterHeader {
    pub ncols: usize,
    pub nrows: usize,
    /// Easting of the lower-left corner (m).
    pub xll: f64,
    /// Northing of the lower-left corner (m).
    pub yll: f64,
    /// Cell edge length (m), square cells.
    pub cellsize: f64,
    /// Sentinel marking missing cells.
    pub nodata: f64,
}

impl RasterHeader {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64) -> Self {
        Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata: DEFAULT_NODATA,
        }
    }

    fn validate(&self) -> Result<(), RasterError> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(RasterError::Shape(format!(
                "ncols and nrows must be >= 1, got {}x{}",
                self.ncols, self.nrows
            )));
        }
        if !(self.cellsize > 0.0) {
            return Err(RasterError::Shape(format!(
                "cellsize must be > 0, got {}",
                self.cellsize
            )));
        }
        Ok(())
    }

    /// Northing of the top (northern) edge.
    pub fn y_top(&self) -> f64 {
        self.yll + self.nrows as f64 * self.cellsize
    }

    /// Easting of the right (eastern) edge.
    pub fn x_right(&self) -> f64 {
        self.xll + self.ncols as f64 * self.cellsize
    }

    /// Whether two headers describe the same grid.
    pub fn same_grid(&self, other: &RasterHeader) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xll == other.xll
            && self.yll == other.yll
            && self.cellsize == other.cellsize
    }
}

/// A row-major grid of scalars. Row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub header: RasterHeader,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(header: RasterHeader, values: Vec<f64>) -> Result<Self, RasterError> {
        header.validate()?;
        if values.len() != header.ncols * header.nrows {
            return Err(RasterError::Shape(format!(
                "expected {} values for {}x{}, got {}",
                header.ncols * header.nrows,
                header.ncols,
                header.nrows,
                values.len()
            )));
        }
        Ok(Self { header, values })
    }

    /// Raster filled with a constant.
    pub fn filled(header: RasterHeader, value: f64) -> Self {
        let n = header.ncols * header.nrows;
        Self {
            header,
            values: vec![value; n],
        }
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.header.ncols
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.header.nrows
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.header.ncols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.header.ncols + col] = value;
    }

    #[inline]
    pub fn is_nodata(&self, value: f64) -> bool {
        value == self.header.nodata
    }

    /// Mean over non-nodata cells; `None` when every cell is nodata.
    pub fn mean(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &v in &self.values {
            if !self.is_nodata(v) {
                sum += v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Value of the cell containing `(x, y)`, nearest-cell without
    /// interpolation. A point exactly on a shared cell boundary belongs to
    /// the lower-index cell; both domain edges are inclusive.
    pub fn sample_at(&self, x: f64, y: f64) -> Result<f64, RasterError> {
        let (row, col) = self.cell_at(x, y)?;
        Ok(self.get(row, col))
    }

    /// Cell index `(row, col)` containing `(x, y)`; same tie-break as
    /// [`Raster::sample_at`].
    pub fn cell_at(&self, x: f64, y: f64) -> Result<(usize, usize), RasterError> {
        let h = &self.header;
        let col = lower_biased_index(x - h.xll, h.cellsize, h.ncols)
            .ok_or(RasterError::OutOfBounds { x, y })?;
        let row = lower_biased_index(h.y_top() - y, h.cellsize, h.nrows)
            .ok_or(RasterError::OutOfBounds { x, y })?;
        Ok((row, col))
    }

    /// Block-average downsampling by an integer factor.
    ///
    /// Grid extents that are not multiples of `factor` are trimmed at the
    /// high-index edges (east and south) before aggregation, which keeps the
    /// north-west corner fixed. Each coarse cell is the arithmetic mean of
    /// its `factor x factor` fine cells; a single nodata fine cell makes the
    /// whole coarse cell nodata.
    pub fn resample_average(&self, factor: usize) -> Result<Raster, RasterError> {
        if factor == 0 {
            return Err(RasterError::BadFactor(factor as i64));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let h = &self.header;
        let ncols = h.ncols / factor;
        let nrows = h.nrows / factor;
        if ncols == 0 || nrows == 0 {
            return Err(RasterError::Shape(format!(
                "grid {}x{} too small for factor {}",
                h.ncols, h.nrows, factor
            )));
        }
        // Trimming removes (nrows % factor) southern rows, so the lower-left
        // corner moves north by that many fine cells.
        let trimmed_rows = h.nrows % factor;
        let out_header = RasterHeader {
            ncols,
            nrows,
            xll: h.xll,
            yll: h.yll + trimmed_rows as f64 * h.cellsize,
            cellsize: h.cellsize * factor as f64,
            nodata: h.nodata,
        };
        let mut out = Vec::with_capacity(ncols * nrows);
        for br in 0..nrows {
            for bc in 0..ncols {
                let mut sum = 0.0;
                let mut hole = false;
                'block: for dr in 0..factor {
                    for dc in 0..factor {
                        let v = self.get(br * factor + dr, bc * factor + dc);
                        if self.is_nodata(v) {
                            hole = true;
                            break 'block;
                        }
                        sum += v;
                    }
                }
                out.push(if hole {
                    h.nodata
                } else {
                    sum / (factor * factor) as f64
                });
            }
        }
        Raster::new(out_header, out)
    }

    /// Nearest-neighbour downsampling by an integer factor: each coarse cell
    /// takes the value of the fine cell containing its centre. Trimming
    /// matches [`Raster::resample_average`].
    pub fn resample_nearest(&self, factor: usize) -> Result<Raster, RasterError> {
        if factor == 0 {
            return Err(RasterError::BadFactor(factor as i64));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let avg = self.resample_average(factor)?; // reuse header computation
        let mut out = avg;
        let off = (factor - 1) / 2; // centre cell, lower index on even ties
        for br in 0..out.header.nrows {
            for bc in 0..out.header.ncols {
                out.set(br, bc, self.get(br * factor + off, bc * factor + off));
            }
        }
        Ok(out)
    }

    /// Map this raster onto an arbitrary target grid.
    ///
    /// `Average` weights every source cell by its overlap area with the
    /// target cell (exact block mean for integer ratios); `Nearest` samples
    /// the source cell containing the target cell centre. The source must
    /// cover the full target extent.
    pub fn resample_to_grid(
        &self,
        target: &RasterHeader,
        method: ResampleMethod,
    ) -> Result<Raster, RasterError> {
        let s = &self.header;
        let eps = 1e-9 * s.cellsize;
        if target.xll < s.xll - eps
            || target.yll < s.yll - eps
            || target.x_right() > s.x_right() + eps
            || target.y_top() > s.y_top() + eps
        {
            return Err(RasterError::ExtentMismatch);
        }
        let mut out = Vec::with_capacity(target.ncols * target.nrows);
        for row in 0..target.nrows {
            let y1 = target.y_top() - row as f64 * target.cellsize;
            let y0 = y1 - target.cellsize;
            for col in 0..target.ncols {
                let x0 = target.xll + col as f64 * target.cellsize;
                let x1 = x0 + target.cellsize;
                let v = match method {
                    ResampleMethod::Average => self.overlap_mean(x0, x1, y0, y1),
                    ResampleMethod::Nearest => {
                        let v = self.sample_at(0.5 * (x0 + x1), 0.5 * (y0 + y1))?;
                        if self.is_nodata(v) {
                            None
                        } else {
                            Some(v)
                        }
                    }
                };
                out.push(v.unwrap_or(target.nodata));
            }
        }
        Raster::new(
            RasterHeader {
                nodata: target.nodata,
                ..*target
            },
            out,
        )
    }

    /// Area-weighted mean of source cells overlapping `[x0,x1) x [y0,y1)`;
    /// `None` when any materially overlapping cell is nodata.
    fn overlap_mean(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Option<f64> {
        let h = &self.header;
        let cs = h.cellsize;
        let tiny = 1e-9 * cs * cs;
        let c0 = (((x0 - h.xll) / cs).floor().max(0.0)) as usize;
        let c1 = ((((x1 - h.xll) / cs).ceil()) as usize).min(h.ncols);
        let r0 = (((h.y_top() - y1) / cs).floor().max(0.0)) as usize;
        let r1 = ((((h.y_top() - y0) / cs).ceil()) as usize).min(h.nrows);
        let mut wsum = 0.0;
        let mut vsum = 0.0;
        for row in r0..r1 {
            let cy1 = h.y_top() - row as f64 * cs;
            let cy0 = cy1 - cs;
            let oy = (y1.min(cy1) - y0.max(cy0)).max(0.0);
            if oy <= 0.0 {
                continue;
            }
            for col in c0..c1 {
                let cx0 = h.xll + col as f64 * cs;
                let cx1 = cx0 + cs;
                let ox = (x1.min(cx1) - x0.max(cx0)).max(0.0);
                let w = ox * oy;
                if w <= tiny {
                    continue;
                }
                let v = self.get(row, col);
                if self.is_nodata(v) {
                    return None;
                }
                wsum += w;
                vsum += w * v;
            }
        }
        (wsum > 0.0).then(|| vsum / wsum)
    }
}

/// Index of the 1-D cell containing offset `d` in a row of `n` cells of
/// width `cs`, with points on a shared boundary assigned to the lower-index
/// cell and both domain edges inclusive.
fn lower_biased_index(d: f64, cs: f64, n: usize) -> Option<usize> {
    if d < 0.0 || d > n as f64 * cs {
        return None;
    }
    let raw = d / cs;
    let mut idx = raw.floor();
    if idx == raw && idx > 0.0 {
        idx -= 1.0;
    }
    let idx = idx as usize;
    (idx < n).then_some(idx)
}

/// Resampling kernel for grid-to-grid alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    Average,
    Nearest,
}

impl ResampleMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ResampleMethod::Average => "average",
            ResampleMethod::Nearest => "nearest",
        }
    }
}

/// Render a value for the grid text format: six decimal places when that is
/// exact, otherwise the shortest representation that parses back identically.
pub fn format_value(v: f64) -> String {
    let fixed = format!("{v:.6}");
    if fixed.parse::<f64>() == Ok(v) {
        fixed
    } else {
        format!("{v}")
    }
}

/// Write a raster in the grid text format. Deterministic byte-for-byte for
/// identical inputs.
pub fn write_raster(r: &Raster, path: &Path) -> Result<(), RasterError> {
    let io_err = |source| RasterError::Io {
        path: path.display().to_string(),
        source,
    };
    let h = &r.header;
    let mut text = String::with_capacity(r.values.len() * 10 + 128);
    let _ = writeln!(text, "ncols {}", h.ncols);
    let _ = writeln!(text, "nrows {}", h.nrows);
    let _ = writeln!(text, "xllcorner {}", format_value(h.xll));
    let _ = writeln!(text, "yllcorner {}", format_value(h.yll));
    let _ = writeln!(text, "cellsize {}", format_value(h.cellsize));
    let _ = writeln!(text, "NODATA_value {}", format_value(h.nodata));
    for row in 0..h.nrows {
        for col in 0..h.ncols {
            if col > 0 {
                text.push(' ');
            }
            text.push_str(&format_value(r.get(row, col)));
        }
        text.push('\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(text.as_bytes()).map_err(io_err)?;
    Ok(())
}

/// Read a raster in the grid text format. Errors carry 1-based line numbers.
pub fn read_raster(path: &Path) -> Result<Raster, RasterError> {
    let text = fs::read_to_string(path).map_err(|source| RasterError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_raster(&text, &path.display().to_string())
}

/// Parse the grid text format from a string; `origin` names the source in
/// diagnostics.
pub fn parse_raster(text: &str, origin: &str) -> Result<Raster, RasterError> {
    let header_err = |line: usize, msg: String| RasterError::Header {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let mut need = |key: &str| -> Result<(usize, String), RasterError> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| header_err(0, format!("missing `{key}` line")))?;
        let mut parts = line.split_whitespace();
        let k = parts
            .next()
            .ok_or_else(|| header_err(i + 1, format!("expected `{key}`, got empty line")))?;
        if !k.eq_ignore_ascii_case(key) {
            return Err(header_err(i + 1, format!("expected `{key}`, got `{k}`")));
        }
        let v = parts
            .next()
            .ok_or_else(|| header_err(i + 1, format!("`{key}` has no value")))?;
        if parts.next().is_some() {
            return Err(header_err(i + 1, format!("trailing tokens after `{key}`")));
        }
        Ok((i + 1, v.to_string()))
    };

    let (l, v) = need("ncols")?;
    let ncols: usize = v
        .parse()
        .map_err(|_| header_err(l, format!("ncols not a positive integer: `{v}`")))?;
    let (l, v) = need("nrows")?;
    let nrows: usize = v
        .parse()
        .map_err(|_| header_err(l, format!("nrows not a positive integer: `{v}`")))?;
    let parse_f = |l: usize, key: &str, v: &str| -> Result<f64, RasterError> {
        v.parse()
            .map_err(|_| header_err(l, format!("{key} not numeric: `{v}`")))
    };
    let (l, v) = need("xllcorner")?;
    let xll = parse_f(l, "xllcorner", &v)?;
    let (l, v) = need("yllcorner")?;
    let yll = parse_f(l, "yllcorner", &v)?;
    let (l, v) = need("cellsize")?;
    let cellsize = parse_f(l, "cellsize", &v)?;
    if !(cellsize > 0.0) {
        return Err(header_err(l, format!("cellsize must be > 0, got {v}")));
    }
    let (l, v) = need("NODATA_value")?;
    let nodata = parse_f(l, "NODATA_value", &v)?;

    let expected = ncols * nrows;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 6;
    for (i, line) in lines {
        last_line = i + 1;
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| RasterError::BadToken {
                path: origin.to_string(),
                line: i + 1,
                token: token.to_string(),
            })?;
            values.push(v);
            if values.len() > expected {
                return Err(RasterError::CountMismatch {
                    path: origin.to_string(),
                    line: i + 1,
                    expected,
                    found: values.len(),
                });
            }
        }
    }
    if values.len() != expected {
        return Err(RasterError::CountMismatch {
            path: origin.to_string(),
            line: last_line,
            expected,
            found: values.len(),
        });
    }
    Raster::new(
        RasterHeader {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
        },
        values,
    )
}
