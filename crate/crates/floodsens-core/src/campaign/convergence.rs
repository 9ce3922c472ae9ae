//! Running-statistics traces over the result store, used to judge when the
//! Monte-Carlo sampling has converged.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CampaignError, CampaignStore};
use crate::probe::ProbeSet;

/// Running mean and variance after `n` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance; zero for n = 1.
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeTrace {
    pub probe_id: String,
    pub points: Vec<TracePoint>,
}

/// Per-probe running mean/variance of the maximal depth over a seeded random
/// permutation of the done records.
///
/// The permutation starts from the canonical record order, so a given
/// `order_seed` reproduces the same trace regardless of how the campaign was
/// scheduled. Records whose raster does not contain a probe are skipped for
/// that probe; a probe outside every raster is an error.
pub fn convergence_trace(
    store: &CampaignStore,
    probes: &ProbeSet,
    order_seed: u64,
) -> Result<Vec<ProbeTrace>, CampaignError> {
    let done = store.done_records()?;
    if done.len() < 2 {
        return Err(CampaignError::TooFewRecords {
            needed: 2,
            found: done.len(),
        });
    }
    let mut order: Vec<usize> = (0..done.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));

    // One pass over the rasters, probes extracted in permutation order.
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(done.len()); probes.len()];
    for &idx in &order {
        let raster = store.open_result(&done[idx])?;
        for (p, probe) in probes.probes.iter().enumerate() {
            if let Ok(v) = raster.sample_at(probe.x, probe.y) {
                values[p].push(v);
            }
        }
    }

    let mut traces = Vec::with_capacity(probes.len());
    for (p, probe) in probes.probes.iter().enumerate() {
        if values[p].is_empty() {
            return Err(CampaignError::ProbeOutsideResults {
                id: probe.id.clone(),
            });
        }
        // Welford streaming update.
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut points = Vec::with_capacity(values[p].len());
        for (k, &y) in values[p].iter().enumerate() {
            let n = (k + 1) as f64;
            let delta = y - mean;
            mean += delta / n;
            m2 += delta * (y - mean);
            let variance = if k == 0 { 0.0 } else { m2 / (n - 1.0) };
            points.push(TracePoint {
                n: k + 1,
                mean,
                variance,
            });
        }
        traces.push(ProbeTrace {
            probe_id: probe.id.clone(),
            points,
        });
    }
    Ok(traces)
}

/// Smallest sample count `N` at which the running mean has stayed within
/// `tol x |final mean|` over the trailing `window` points, or `None`.
///
/// When the final mean is zero the band degenerates, so `tol` is applied as
/// an absolute tolerance instead. Traces shorter than the window yield
/// `None`.
pub fn stabilization_n(trace: &ProbeTrace, window: usize, tol: f64) -> Option<usize> {
    if window == 0 || trace.points.len() < window {
        return None;
    }
    let final_mean = trace.points.last()?.mean;
    let band = if final_mean == 0.0 {
        tol
    } else {
        tol * final_mean.abs()
    };
    let means: Vec<f64> = trace.points.iter().map(|p| p.mean).collect();
    let mut run = 0usize;
    for (k, &m) in means.iter().enumerate() {
        if (m - final_mean).abs() <= band {
            run += 1;
        } else {
            run = 0;
        }
        if run >= window {
            return Some(trace.points[k].n);
        }
    }
    None
}
