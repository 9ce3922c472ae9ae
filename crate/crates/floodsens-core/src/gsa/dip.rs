//! Hartigan-style dip statistic for unimodality, with a permutation-derived
//! significance threshold.
//!
//! The dip of an empirical cdf is the smallest sup-norm distance to any
//! unimodal cdf. It is computed by the classic envelope iteration: fit the
//! greatest convex minorant and least concave majorant over the current
//! modal candidate interval, measure their largest gap, accumulate the tail
//! deviations and narrow onto the modal triangle. Equal-mass two-point data
//! approaches the maximal dip 1/4; an n-point uniform sample gives 1/(2n).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dip statistic of a sample (any order). Zero for fewer than two distinct
/// values.
pub fn dip_statistic(values: &[f64]) -> f64 {
    let mut x: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    dip_sorted(&x)
}

/// Knot of an envelope: sample index plus the envelope's cdf value there.
#[derive(Debug, Clone, Copy)]
struct Knot {
    idx: usize,
    x: f64,
    y: f64,
}

fn cross(a: Knot, b: Knot, c: Knot) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Lower convex hull of `(x_j, y(j))` over `lo..=hi`, keeping the lowest
/// point at duplicate abscissae.
fn lower_hull(x: &[f64], lo: usize, hi: usize, y: impl Fn(usize) -> f64) -> Vec<Knot> {
    let mut hull: Vec<Knot> = Vec::new();
    for j in lo..=hi {
        // y is nondecreasing in j, so the first index at each x is lowest.
        if hull.last().is_some_and(|k| k.x == x[j]) {
            continue;
        }
        let p = Knot {
            idx: j,
            x: x[j],
            y: y(j),
        };
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Upper concave hull, keeping the highest point at duplicate abscissae.
fn upper_hull(x: &[f64], lo: usize, hi: usize, y: impl Fn(usize) -> f64) -> Vec<Knot> {
    let mut hull: Vec<Knot> = Vec::new();
    for j in lo..=hi {
        let p = Knot {
            idx: j,
            x: x[j],
            y: y(j),
        };
        if hull.last().is_some_and(|k| k.x == x[j]) {
            hull.pop(); // replace by the higher duplicate
        }
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Piecewise-linear envelope value at `xq` (clamped to the knot range).
fn interp(hull: &[Knot], xq: f64) -> f64 {
    if xq <= hull[0].x {
        return hull[0].y;
    }
    if xq >= hull[hull.len() - 1].x {
        return hull[hull.len() - 1].y;
    }
    let k = hull.partition_point(|k| k.x <= xq);
    let (a, b) = (hull[k - 1], hull[k]);
    a.y + (b.y - a.y) * (xq - a.x) / (b.x - a.x)
}

fn dip_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 || x[0] == x[n - 1] {
        return 0.0;
    }
    let nf = n as f64;
    let below = |j: usize| j as f64 / nf; // cdf just below the jump at x_j
    let above = |j: usize| (j + 1) as f64 / nf; // cdf at x_j

    let mut lo = 0usize;
    let mut hi = n - 1;
    let mut d = 0.0f64;
    loop {
        if x[lo] == x[hi] {
            break;
        }
        let gcm = lower_hull(x, lo, hi, below);
        let lcm = upper_hull(x, lo, hi, above);

        // Largest envelope separation, attained at a corner of one hull
        // measured against the other hull's curve.
        let mut dv = f64::NEG_INFINITY;
        let mut at_gcm = true;
        let mut corner = lo;
        for k in &gcm {
            let gap = interp(&lcm, k.x) - k.y;
            if gap > dv {
                dv = gap;
                at_gcm = true;
                corner = k.idx;
            }
        }
        for k in &lcm {
            let gap = k.y - interp(&gcm, k.x);
            if gap > dv {
                dv = gap;
                at_gcm = false;
                corner = k.idx;
            }
        }
        if dv <= d {
            break;
        }

        // Modal triangle: the maximizing corner plus the nearest opposing
        // corner on the other side of it.
        let (ix, iv) = if at_gcm {
            let iv = lcm
                .iter()
                .find(|k| k.x >= x[corner])
                .map(|k| k.idx)
                .unwrap_or(hi);
            (corner, iv)
        } else {
            let ix = gcm
                .iter()
                .rev()
                .find(|k| k.x <= x[corner])
                .map(|k| k.idx)
                .unwrap_or(lo);
            (ix, corner)
        };

        // Tail deviations of the ecdf from its envelopes outside the modal
        // interval.
        let mut dl = 0.0f64;
        for j in lo..=ix {
            dl = dl.max(above(j) - interp(&gcm, x[j]));
        }
        let mut du = 0.0f64;
        for j in iv..=hi {
            du = du.max(interp(&lcm, x[j]) - below(j));
        }
        d = d.max(dl).max(du);
        if ix <= lo && iv >= hi {
            break;
        }
        lo = ix;
        hi = iv;
    }
    (d.max(1.0 / nf)) / 2.0
}

/// 95th-percentile dip of `b` uniform samples of size `n`: the calibration
/// threshold for the bimodality flag. Deterministic per seed.
pub fn dip_threshold_uniform(n: usize, b: usize, seed: u64) -> f64 {
    let mut dips: Vec<f64> = (0..b)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let sample: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            dip_statistic(&sample)
        })
        .collect();
    dips.sort_by(|a, b| a.partial_cmp(b).expect("finite dip"));
    let k = ((0.95 * b as f64).ceil() as usize).clamp(1, b) - 1;
    dips[k]
}
