//! Uncertainty analysis and spatial sensitivity maps over a result store.
//!
//! The store's maximal-depth rasters arrive at mixed resolutions; they are
//! first mapped onto a common analysis grid, then per-cell statistics
//! (mean, variance) and per-cell first-order sensitivity indices are
//! computed, along with probe-level depth distributions and a bimodality
//! flag.

mod dip;
mod sobol;

pub use dip::{dip_statistic, dip_threshold_uniform};
pub use sobol::{
    bootstrap_ci, si_convergence, sobol_first_order, Factor, FactorCi, FactorSi, SobolEstimate,
    SobolOptions,
};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::campaign::{CampaignError, CampaignStore};
use crate::ensemble::DemSpec;
use crate::probe::ProbeSet;
use crate::raster::{Raster, RasterError, RasterHeader, ResampleMethod};

#[derive(Debug, Error)]
pub enum GsaError {
    #[error("result rasters do not share a usable common extent")]
    NoCommonExtent,
    #[error("need at least {needed} aligned samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("mask raster does not cover the analysis grid")]
    MaskExtent,
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Result rasters mapped onto one common analysis grid, with their factors.
#[derive(Debug, Clone)]
pub struct AlignedOutputs {
    pub header: RasterHeader,
    pub method: ResampleMethod,
    pub samples: Vec<(DemSpec, Vec<f64>)>,
}

impl AlignedOutputs {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_cells(&self) -> usize {
        self.header.ncols * self.header.nrows
    }

    /// Per-sample values at one cell, paired with their specs.
    pub fn cell_samples(&self, cell: usize) -> Vec<(DemSpec, f64)> {
        self.samples
            .iter()
            .map(|(spec, values)| (*spec, values[cell]))
            .collect()
    }
}

/// Map every done result onto a common grid of the requested cell size.
///
/// The analysis grid is anchored at the north-west corner of the common
/// covered extent. Samples are ordered canonically by `(s, e, r)` so every
/// downstream reduction is deterministic.
pub fn align_outputs(
    store: &CampaignStore,
    analysis_cellsize: f64,
    method: ResampleMethod,
) -> Result<AlignedOutputs, GsaError> {
    let done = store.done_records()?;
    if done.len() < 2 {
        return Err(GsaError::TooFewSamples {
            needed: 2,
            found: done.len(),
        });
    }
    let mut rasters = Vec::with_capacity(done.len());
    for record in &done {
        rasters.push((record.spec(), store.open_result(record)?));
    }
    // Intersection of covered extents.
    let mut x0 = f64::NEG_INFINITY;
    let mut x1 = f64::INFINITY;
    let mut y0 = f64::NEG_INFINITY;
    let mut y1 = f64::INFINITY;
    for (_, r) in &rasters {
        x0 = x0.max(r.header.xll);
        x1 = x1.min(r.header.x_right());
        y0 = y0.max(r.header.yll);
        y1 = y1.min(r.header.y_top());
    }
    let eps = 1e-9 * analysis_cellsize;
    let ncols = ((x1 - x0 + eps) / analysis_cellsize).floor() as usize;
    let nrows = ((y1 - y0 + eps) / analysis_cellsize).floor() as usize;
    if ncols == 0 || nrows == 0 {
        return Err(GsaError::NoCommonExtent);
    }
    let header = RasterHeader {
        ncols,
        nrows,
        xll: x0,
        yll: y1 - nrows as f64 * analysis_cellsize,
        cellsize: analysis_cellsize,
        nodata: rasters[0].1.header.nodata,
    };
    let samples: Result<Vec<(DemSpec, Vec<f64>)>, RasterError> = rasters
        .par_iter()
        .map(|(spec, r)| {
            // Pass-through when the raster already sits on the analysis grid.
            if r.header.same_grid(&header) {
                return Ok((*spec, r.values.clone()));
            }
            let aligned = r.resample_to_grid(&header, method)?;
            Ok((*spec, aligned.values))
        })
        .collect();
    Ok(AlignedOutputs {
        header,
        method,
        samples: samples?,
    })
}

/// One histogram bin `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Fixed-width histogram anchored at zero.
pub fn histogram(values: &[f64], bin_width: f64) -> Vec<HistBin> {
    if values.is_empty() || !(bin_width > 0.0) {
        return Vec::new();
    }
    let lo_edge = values.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let hi_edge = values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let first = (lo_edge / bin_width).floor() as i64;
    let last = (hi_edge / bin_width).floor() as i64;
    let mut bins: Vec<HistBin> = (first..=last)
        .map(|k| HistBin {
            lo: k as f64 * bin_width,
            hi: (k + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    let top = bins.len() - 1;
    for &v in values {
        let k = ((v / bin_width).floor() as i64 - first) as usize;
        bins[k.min(top)].count += 1;
    }
    bins
}

/// Depth distribution at one probe.
#[derive(Debug, Clone)]
pub struct ProbeDistribution {
    pub id: String,
    pub values: Vec<f64>,
    pub histogram: Vec<HistBin>,
    pub dip: f64,
    pub dip_threshold: f64,
    pub bimodal: bool,
}

/// Uncertainty-analysis summary: moment maps plus probe distributions.
#[derive(Debug, Clone)]
pub struct UaSummary {
    pub mean: Raster,
    /// Unbiased sample variance per cell (m^2).
    pub variance: Raster,
    pub probes: Vec<ProbeDistribution>,
}

/// Default histogram bin width for probe depth distributions (m).
pub const DEFAULT_HIST_BIN: f64 = 0.05;
/// Permutation replicates behind the bimodality threshold.
const DIP_CALIBRATION_DRAWS: usize = 200;
/// Seed of the threshold calibration (fixed: thresholds are a convention).
const DIP_CALIBRATION_SEED: u64 = 0x0d1b;

/// Per-cell mean and unbiased variance of the aligned outputs, plus probe
/// histograms with a dip-test bimodality flag.
///
/// Cells never wet in any sample, or aligned to nodata, are nodata in both
/// maps.
pub fn ua_stats(
    aligned: &AlignedOutputs,
    probes: &ProbeSet,
    hist_bin_width: f64,
) -> Result<UaSummary, GsaError> {
    let n = aligned.n_samples();
    if n < 2 {
        return Err(GsaError::TooFewSamples {
            needed: 2,
            found: n,
        });
    }
    let nodata = aligned.header.nodata;
    let cells = aligned.n_cells();
    let stats: Vec<(f64, f64)> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let mut sum = 0.0;
            let mut wet = false;
            for (_, values) in &aligned.samples {
                let v = values[cell];
                if v == nodata {
                    return (nodata, nodata);
                }
                wet |= v > 0.0;
                sum += v;
            }
            if !wet {
                return (nodata, nodata);
            }
            let mean = sum / n as f64;
            let ss: f64 = aligned
                .samples
                .iter()
                .map(|(_, values)| {
                    let d = values[cell] - mean;
                    d * d
                })
                .sum();
            (mean, ss / (n - 1) as f64)
        })
        .collect();
    let mean = Raster::new(aligned.header, stats.iter().map(|s| s.0).collect())?;
    let variance = Raster::new(aligned.header, stats.iter().map(|s| s.1).collect())?;

    let mut thresholds: HashMap<usize, f64> = HashMap::new();
    let mut out_probes = Vec::with_capacity(probes.len());
    let mean_raster = &mean;
    for probe in &probes.probes {
        let cell = match mean_raster.cell_at(probe.x, probe.y) {
            Ok((row, col)) => row * aligned.header.ncols + col,
            Err(_) => continue, // probe outside the analysis extent
        };
        let values: Vec<f64> = aligned
            .samples
            .iter()
            .map(|(_, v)| v[cell])
            .filter(|v| *v != nodata)
            .collect();
        if values.is_empty() {
            continue;
        }
        let dip = dip_statistic(&values);
        let threshold = *thresholds.entry(values.len()).or_insert_with(|| {
            dip_threshold_uniform(values.len(), DIP_CALIBRATION_DRAWS, DIP_CALIBRATION_SEED)
        });
        out_probes.push(ProbeDistribution {
            id: probe.id.clone(),
            histogram: histogram(&values, hist_bin_width),
            dip,
            dip_threshold: threshold,
            bimodal: dip > threshold,
            values,
        });
    }
    Ok(UaSummary {
        mean,
        variance,
        probes: out_probes,
    })
}

/// Options for sensitivity-map computation.
#[derive(Debug, Clone)]
pub struct SobolMapOptions {
    /// Minimum aligned sample count required before maps are attempted.
    pub min_samples: usize,
    /// Building-footprint indicator (any grid covering the analysis extent,
    /// nonzero = footprint). Cells with majority coverage are masked out.
    pub exclude_buildings: Option<Raster>,
    pub estimator: SobolOptions,
}

impl Default for SobolMapOptions {
    fn default() -> Self {
        Self {
            min_samples: 100,
            exclude_buildings: None,
            estimator: SobolOptions::default(),
        }
    }
}

/// Sensitivity maps over the analysis grid.
#[derive(Debug, Clone)]
pub struct SobolMaps {
    /// Raw first-order index per factor ([`Factor::index`] order); nodata
    /// where never wet, variance-free, masked or insufficient.
    pub si: [Raster; 3],
    /// Winning factor per cell: 1 = S, 2 = R, 3 = E; ties go to the lower
    /// code. Nodata where no factor could be estimated.
    pub argmax: Raster,
    /// Histograms of the valid raw index values per factor (bin 0.05).
    pub histograms: [Vec<HistBin>; 3],
    /// Share of decided cells won per factor.
    pub area_fraction: [f64; 3],
    /// Cells where a factor was insufficient, per factor.
    pub insufficient: [usize; 3],
    /// Cells dry in every sample.
    pub never_wet: usize,
    /// Cells removed by the building mask.
    pub masked: usize,
}

/// Per-cell first-order indices, the winning-factor map and area shares.
pub fn sobol_maps(
    aligned: &AlignedOutputs,
    opts: &SobolMapOptions,
) -> Result<SobolMaps, GsaError> {
    let n = aligned.n_samples();
    if n < opts.min_samples {
        return Err(GsaError::TooFewSamples {
            needed: opts.min_samples,
            found: n,
        });
    }
    let nodata = aligned.header.nodata;
    // Majority building coverage per analysis cell, when a mask is given.
    let building: Option<Vec<bool>> = match &opts.exclude_buildings {
        None => None,
        Some(mask) => {
            let indicator = Raster::new(
                mask.header,
                mask.values
                    .iter()
                    .map(|&v| {
                        if mask.is_nodata(v) || v == 0.0 {
                            0.0
                        } else {
                            1.0
                        }
                    })
                    .collect(),
            )?;
            let coverage = indicator
                .resample_to_grid(&aligned.header, ResampleMethod::Average)
                .map_err(|_| GsaError::MaskExtent)?;
            Some(coverage.values.iter().map(|&c| c > 0.5).collect())
        }
    };

    struct CellOutcome {
        si: [f64; 3],
        argmax: f64,
        insufficient: [bool; 3],
        never_wet: bool,
        masked: bool,
    }

    let cells = aligned.n_cells();
    let outcomes: Vec<CellOutcome> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let mut outcome = CellOutcome {
                si: [nodata; 3],
                argmax: nodata,
                insufficient: [false; 3],
                never_wet: false,
                masked: false,
            };
            if building.as_ref().is_some_and(|b| b[cell]) {
                outcome.masked = true;
                return outcome;
            }
            let samples = aligned.cell_samples(cell);
            if samples
                .iter()
                .all(|(_, y)| *y == 0.0 || *y == nodata)
            {
                outcome.never_wet = true;
                return outcome;
            }
            match sobol_first_order(&samples, &opts.estimator) {
                None => outcome, // zero variance: leave nodata
                Some(est) => {
                    let mut best: Option<(usize, f64)> = None;
                    for f in 0..3 {
                        match est.si[f] {
                            FactorSi::Value(v) => {
                                outcome.si[f] = v;
                                if best.map_or(true, |(_, bv)| v > bv) {
                                    best = Some((f, v));
                                }
                            }
                            FactorSi::Insufficient => outcome.insufficient[f] = true,
                        }
                    }
                    if let Some((f, _)) = best {
                        outcome.argmax = (f + 1) as f64;
                    }
                    outcome
                }
            }
        })
        .collect();

    let mut si = [
        Vec::with_capacity(cells),
        Vec::with_capacity(cells),
        Vec::with_capacity(cells),
    ];
    let mut argmax = Vec::with_capacity(cells);
    let mut insufficient = [0usize; 3];
    let mut never_wet = 0usize;
    let mut masked = 0usize;
    let mut wins = [0usize; 3];
    for o in &outcomes {
        for f in 0..3 {
            si[f].push(o.si[f]);
            if o.insufficient[f] {
                insufficient[f] += 1;
            }
        }
        argmax.push(o.argmax);
        never_wet += o.never_wet as usize;
        masked += o.masked as usize;
        if o.argmax != nodata {
            wins[o.argmax as usize - 1] += 1;
        }
    }
    let decided: usize = wins.iter().sum();
    let area_fraction = if decided == 0 {
        [0.0; 3]
    } else {
        [
            wins[0] as f64 / decided as f64,
            wins[1] as f64 / decided as f64,
            wins[2] as f64 / decided as f64,
        ]
    };
    let histograms = [
        histogram(
            &collect_valid(&si[0], nodata),
            0.05,
        ),
        histogram(&collect_valid(&si[1], nodata), 0.05),
        histogram(&collect_valid(&si[2], nodata), 0.05),
    ];
    let [s0, s1, s2] = si;
    Ok(SobolMaps {
        si: [
            Raster::new(aligned.header, s0)?,
            Raster::new(aligned.header, s1)?,
            Raster::new(aligned.header, s2)?,
        ],
        argmax: Raster::new(aligned.header, argmax)?,
        histograms,
        area_fraction,
        insufficient,
        never_wet,
        masked,
    })
}

fn collect_valid(values: &[f64], nodata: f64) -> Vec<f64> {
    values.iter().copied().filter(|v| *v != nodata).collect()
}
