//! First-order variance-based sensitivity indices for the discrete
//! three-factor design, plus bootstrap confidence intervals.
//!
//! All factors have finitely many levels, so the index is estimated by
//! grouping: Si = (weighted between-group variance of the level means) /
//! (total variance), with plug-in (population) variances in both numerator
//! and denominator. Raw estimates may fall slightly outside [0, 1] from
//! sampling noise and are reported unclamped.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::ensemble::DemSpec;

/// The three uncertain inputs, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factor {
    /// Feature-detail level (ordinal, 4 levels).
    DetailLevel,
    /// Grid-resolution factor (ordinal, 5 levels).
    Resolution,
    /// Measurement-noise draw (categorical, one level per draw index).
    NoiseDraw,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::DetailLevel, Factor::Resolution, Factor::NoiseDraw];

    /// Single-letter code used in file names and headers.
    pub fn code(&self) -> &'static str {
        match self {
            Factor::DetailLevel => "S",
            Factor::Resolution => "R",
            Factor::NoiseDraw => "E",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Factor::DetailLevel => 0,
            Factor::Resolution => 1,
            Factor::NoiseDraw => 2,
        }
    }

    pub fn level_of(&self, spec: &DemSpec) -> u32 {
        match self {
            Factor::DetailLevel => spec.s_level as u32,
            Factor::Resolution => spec.r_factor as u32,
            Factor::NoiseDraw => spec.e_draw,
        }
    }
}

/// Index estimate for one factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorSi {
    /// Raw index value.
    Value(f64),
    /// Fewer than two levels with two or more samples each; the conditional
    /// expectations cannot be estimated.
    Insufficient,
}

impl FactorSi {
    pub fn value(&self) -> Option<f64> {
        match self {
            FactorSi::Value(v) => Some(*v),
            FactorSi::Insufficient => None,
        }
    }
}

/// Estimator switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct SobolOptions {
    /// Subtract the mean within-group variance over the group size from the
    /// between-group variance (small-sample bias correction). Off by
    /// default; the raw plug-in estimator is the reference.
    pub bias_correction: bool,
}

/// First-order indices for the three factors at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolEstimate {
    /// Indexed by [`Factor::index`].
    pub si: [FactorSi; 3],
    /// 95% bootstrap intervals, when computed.
    pub ci: [Option<(f64, f64)>; 3],
    pub n_used: usize,
    /// Plug-in variance of all samples (m^2).
    pub var_y: f64,
    /// Samples dropped per factor because their level was observed once.
    pub pooled_out: [usize; 3],
}

/// Relative threshold below which the sample variance is treated as zero
/// (pure rounding residue of identical values).
fn zero_variance_floor(max_abs_y: f64) -> f64 {
    1e-30 * max_abs_y.max(1.0) * max_abs_y.max(1.0)
}

/// Plug-in mean and variance.
fn mean_var(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Grouping estimate of one factor's index; level groups with a single
/// observation are pooled out first.
///
/// Group values are sorted before any summation, so the estimate is exactly
/// invariant under permutations of the sample order.
fn grouping_si(levels: &[u32], ys: &[f64], opts: &SobolOptions) -> (FactorSi, usize) {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (i, &level) in levels.iter().enumerate() {
        groups.entry(level).or_default().push(ys[i]);
    }
    let mut pooled_out = 0usize;
    groups.retain(|_, members| {
        if members.len() < 2 {
            pooled_out += members.len();
            false
        } else {
            true
        }
    });
    if groups.len() < 2 {
        return (FactorSi::Insufficient, pooled_out);
    }
    for members in groups.values_mut() {
        members.sort_by(f64::total_cmp);
    }
    let usable: Vec<f64> = groups.values().flatten().copied().collect();
    let (grand_mean, total_var) = mean_var(&usable);
    let max_abs = usable.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    if total_var <= zero_variance_floor(max_abs) {
        return (FactorSi::Insufficient, pooled_out);
    }
    let n_u = usable.len() as f64;
    let mut between = 0.0;
    let mut within_correction = 0.0;
    for group in groups.values() {
        let n_g = group.len() as f64;
        let (m_g, _) = mean_var(group);
        between += (n_g / n_u) * (m_g - grand_mean) * (m_g - grand_mean);
        if opts.bias_correction {
            let s2 = group.iter().map(|y| (y - m_g) * (y - m_g)).sum::<f64>() / (n_g - 1.0);
            within_correction += (n_g / n_u) * s2 / n_g;
        }
    }
    if opts.bias_correction {
        between -= within_correction;
    }
    (FactorSi::Value(between / total_var), pooled_out)
}

/// First-order Sobol indices of the three design factors.
///
/// Returns `None` when the total variance vanishes (the nodata marker for
/// map cells). A factor whose usable levels collapse below two is marked
/// [`FactorSi::Insufficient`].
pub fn sobol_first_order(
    samples: &[(DemSpec, f64)],
    opts: &SobolOptions,
) -> Option<SobolEstimate> {
    if samples.len() < 2 {
        return None;
    }
    let ys: Vec<f64> = samples.iter().map(|(_, y)| *y).collect();
    let mut sorted_ys = ys.clone();
    sorted_ys.sort_by(f64::total_cmp);
    let (_, var_y) = mean_var(&sorted_ys);
    let max_abs = ys.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    if var_y <= zero_variance_floor(max_abs) {
        return None;
    }
    let mut si = [FactorSi::Insufficient; 3];
    let mut pooled_out = [0usize; 3];
    for factor in Factor::ALL {
        let levels: Vec<u32> = samples.iter().map(|(s, _)| factor.level_of(s)).collect();
        let (est, pooled) = grouping_si(&levels, &ys, opts);
        si[factor.index()] = est;
        pooled_out[factor.index()] = pooled;
    }
    Some(SobolEstimate {
        si,
        ci: [None; 3],
        n_used: samples.len(),
        var_y,
        pooled_out,
    })
}

/// Outcome of a bootstrap for one factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorCi {
    pub lo: f64,
    pub hi: f64,
    /// Replicates dropped because the factor degenerated in the resample.
    pub dropped: usize,
    /// False when more than half the replicates were dropped.
    pub reliable: bool,
}

/// Percentile bootstrap confidence intervals for the three indices.
///
/// Draws `n_boot` resamples of size `n_sub` with replacement, recomputes the
/// index on each, and reports empirical `(1-level)/2` and `(1+level)/2`
/// quantiles. Deterministic per seed; replicates use independent derived
/// seeds.
pub fn bootstrap_ci(
    samples: &[(DemSpec, f64)],
    n_boot: usize,
    n_sub: usize,
    level: f64,
    seed: u64,
    opts: &SobolOptions,
) -> [Option<FactorCi>; 3] {
    assert!(n_sub <= samples.len(), "n_sub exceeds sample count");
    assert!(level > 0.0 && level < 1.0);
    let replicate_si: Vec<[Option<f64>; 3]> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, b as u64));
            let resample: Vec<(DemSpec, f64)> = (0..n_sub)
                .map(|_| samples[rng.gen_range(0..samples.len())])
                .collect();
            match sobol_first_order(&resample, opts) {
                Some(est) => [
                    est.si[0].value(),
                    est.si[1].value(),
                    est.si[2].value(),
                ],
                None => [None; 3],
            }
        })
        .collect();

    let mut out = [None; 3];
    for (f, slot) in out.iter_mut().enumerate() {
        let mut values: Vec<f64> = replicate_si.iter().filter_map(|r| r[f]).collect();
        if values.is_empty() {
            continue;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite si"));
        let dropped = n_boot - values.len();
        let alpha = (1.0 - level) / 2.0;
        *slot = Some(FactorCi {
            lo: percentile(&values, alpha),
            hi: percentile(&values, 1.0 - alpha),
            dropped,
            reliable: dropped * 2 <= n_boot,
        });
    }
    out
}

#[inline]
fn mix(seed: u64, b: u64) -> u64 {
    let mut z = seed ^ b.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Linear-interpolated empirical quantile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Index estimates on growing random prefixes of the samples, for
/// convergence monitoring. Emits one entry per prefix size from 2 up.
pub fn si_convergence(
    samples: &[(DemSpec, f64)],
    seed: u64,
    opts: &SobolOptions,
) -> Vec<(usize, [FactorSi; 3])> {
    use rand::seq::SliceRandom;
    let mut shuffled: Vec<(DemSpec, f64)> = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (2..=shuffled.len())
        .map(|n| {
            let si = match sobol_first_order(&shuffled[..n], opts) {
                Some(est) => est.si,
                None => [FactorSi::Insufficient; 3],
            };
            (n, si)
        })
        .collect()
}
