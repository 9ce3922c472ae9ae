//! Factorial DEM database: feature-detail level x noise draw x resolution.
//!
//! A [`FeatureStack`] holds a bare-earth terrain plus ordered overlay layers
//! (buildings, walls, thin structures). Each database member is identified
//! by a [`DemSpec`]: detail level `s`, noise draw `e` and resolution factor
//! `r`. Construction order is load-bearing: the surface is composed and the
//! Gaussian measurement noise added at the finest resolution, and only then
//! is the grid coarsened.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{self, Raster, RasterError, RasterHeader};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("layer {name:?} does not share the terrain header")]
    LayerHeaderMismatch { name: String },
    #[error("layer {name:?} cell ({row}, {col}) holds invalid increment {value}")]
    BadIncrement {
        name: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("detail level must be in 1..={max}, got {got}")]
    BadDetailLevel { got: u8, max: u8 },
    #[error("noise draw {draw} out of range (n_draws = {n_draws})")]
    DrawOutOfRange { draw: u32, n_draws: u32 },
    #[error("invalid noise spec: {0}")]
    BadNoiseSpec(String),
    #[error("resolution factors must be in 1..=255 and non-empty")]
    BadFactors,
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: bad manifest record: {msg}")]
    BadManifest {
        path: String,
        line: usize,
        msg: String,
    },
}

/// One overlay layer: nodata where the feature is absent, otherwise a
/// non-negative elevation increment over the bare terrain.
#[derive(Debug, Clone)]
pub struct FeatureLayer {
    pub name: String,
    pub mask: Raster,
}

/// Bare-earth terrain plus ordered feature layers.
///
/// Detail level `s` composes the terrain with the first `s - 1` layers, so
/// level 1 is the bare terrain and level `1 + layers.len()` includes
/// everything.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    pub dtm: Raster,
    pub layers: Vec<FeatureLayer>,
}

impl FeatureStack {
    pub fn new(dtm: Raster, layers: Vec<FeatureLayer>) -> Result<Self, EnsembleError> {
        for layer in &layers {
            if !layer.mask.header.same_grid(&dtm.header) {
                return Err(EnsembleError::LayerHeaderMismatch {
                    name: layer.name.clone(),
                });
            }
            for (i, &v) in layer.mask.values.iter().enumerate() {
                if !layer.mask.is_nodata(v) && !(v.is_finite() && v >= 0.0) {
                    return Err(EnsembleError::BadIncrement {
                        name: layer.name.clone(),
                        row: i / layer.mask.ncols(),
                        col: i % layer.mask.ncols(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self { dtm, layers })
    }

    /// Highest valid detail level.
    pub fn max_detail(&self) -> u8 {
        (self.layers.len() + 1) as u8
    }
}

/// Identity of one DEM in the factorial database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemSpec {
    /// Feature-detail level, 1-based ordinal.
    pub s_level: u8,
    /// Noise draw index in `0..n_draws`.
    pub e_draw: u32,
    /// Resolution coarsening factor; output cellsize = base cellsize * r.
    pub r_factor: u8,
}

impl DemSpec {
    /// Canonical file name of this member inside a database directory.
    pub fn file_name(&self) -> String {
        format!(
            "dem_s{}_e{}_r{}.asc",
            self.s_level, self.e_draw, self.r_factor
        )
    }
}

/// Gaussian measurement-noise model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of the per-cell error (m).
    pub sigma: f64,
    /// Number of independent noise draws in the design.
    pub n_draws: u32,
    pub master_seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if !(self.sigma > 0.0) {
            return Err(EnsembleError::BadNoiseSpec(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.n_draws < 2 {
            return Err(EnsembleError::BadNoiseSpec(format!(
                "n_draws must be >= 2, got {}",
                self.n_draws
            )));
        }
        Ok(())
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Counter-based key for one cell of one draw; any single cell is
/// reproducible without generating the rest of the grid.
#[inline]
fn cell_key(master_seed: u64, e_draw: u32, cell: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ e_draw as u64) ^ cell)
}

/// Overlay the first `s_level - 1` layers onto the bare terrain.
///
/// A covered cell is raised by the layer increment; where several layers
/// cover the same cell the largest increment wins. Level 1 returns the
/// terrain unchanged.
pub fn compose_surface(stack: &FeatureStack, s_level: u8) -> Result<Raster, EnsembleError> {
    if s_level < 1 || s_level > stack.max_detail() {
        return Err(EnsembleError::BadDetailLevel {
            got: s_level,
            max: stack.max_detail(),
        });
    }
    let mut out = stack.dtm.clone();
    for layer in &stack.layers[..(s_level - 1) as usize] {
        for (cell, &inc) in layer.mask.values.iter().enumerate() {
            if !layer.mask.is_nodata(inc) {
                let raised = stack.dtm.values[cell] + inc;
                if raised > out.values[cell] {
                    out.values[cell] = raised;
                }
            }
        }
    }
    Ok(out)
}

/// One grid of i.i.d. `N(0, sigma)` noise, a deterministic function of
/// `(master_seed, e_draw)`.
pub fn generate_noise(
    spec: &NoiseSpec,
    header: &RasterHeader,
    e_draw: u32,
) -> Result<Raster, EnsembleError> {
    spec.validate()?;
    if e_draw >= spec.n_draws {
        return Err(EnsembleError::DrawOutOfRange {
            draw: e_draw,
            n_draws: spec.n_draws,
        });
    }
    let normal =
        Normal::new(0.0, spec.sigma).map_err(|e| EnsembleError::BadNoiseSpec(e.to_string()))?;
    let n = header.ncols * header.nrows;
    let values: Vec<f64> = (0..n as u64)
        .map(|cell| {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_key(spec.master_seed, e_draw, cell));
            normal.sample(&mut rng)
        })
        .collect();
    Ok(Raster {
        header: *header,
        values,
    })
}

/// Manifest record for one stored DEM; `path` is relative to the database
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DemManifestEntry {
    pub s: u8,
    pub e: u32,
    pub r: u8,
    pub path: String,
    pub sha256: String,
    pub cellsize: f64,
}

impl DemManifestEntry {
    pub fn spec(&self) -> DemSpec {
        DemSpec {
            s_level: self.s,
            e_draw: self.e,
            r_factor: self.r,
        }
    }
}

/// The DEM database manifest: one JSON line per member, canonically sorted
/// by `(s, e, r)` once a build completes.
#[derive(Debug, Clone)]
pub struct DemManifest {
    /// Directory holding the manifest and the DEM files.
    pub root: PathBuf,
    pub entries: Vec<DemManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl DemManifest {
    pub fn path_of(&self, entry: &DemManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn lookup(&self, spec: DemSpec) -> Option<&DemManifestEntry> {
        self.entries.iter().find(|e| e.spec() == spec)
    }

    /// Load a manifest file; tolerates a truncated final line so interrupted
    /// builds can resume.
    pub fn read(path: &Path) -> Result<Self, EnsembleError> {
        let text = fs::read_to_string(path).map_err(|source| EnsembleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut entries = Vec::new();
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<DemManifestEntry>(line) {
                Ok(e) => entries.push(e),
                Err(err) if i + 1 == lines.len() => {
                    log::warn!(
                        "{}:{}: dropping truncated manifest tail: {err}",
                        path.display(),
                        i + 1
                    );
                }
                Err(err) => {
                    return Err(EnsembleError::BadManifest {
                        path: path.display().to_string(),
                        line: i + 1,
                        msg: err.to_string(),
                    })
                }
            }
        }
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { root, entries })
    }

    /// Rewrite the manifest sorted by `(s, e, r)`, atomically.
    pub fn write_canonical(&mut self) -> Result<(), EnsembleError> {
        self.entries.sort_by_key(|e| (e.s, e.e, e.r));
        let path = self.root.join(MANIFEST_FILE);
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        let io_err = |p: &Path, source| EnsembleError::Io {
            path: p.display().to_string(),
            source,
        };
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
            text.push('\n');
        }
        fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        Ok(())
    }
}

/// SHA-256 of a file, lowercase hex.
pub fn sha256_hex_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(sha256_hex(&bytes))
}

/// SHA-256 of a byte slice, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Build (or resume) the factorial DEM database.
///
/// For every `(s, e)` pair the surface is composed, noise added at the
/// finest grid and the result written at `r = 1`, then block-averaged to
/// each coarser factor. Members already listed in the manifest with their
/// file present are skipped, so an interrupted build resumes idempotently.
pub fn build_database(
    stack: &FeatureStack,
    noise: &NoiseSpec,
    s_levels: &[u8],
    r_factors: &[u8],
    out_dir: &Path,
) -> Result<DemManifest, EnsembleError> {
    noise.validate()?;
    if r_factors.is_empty() || r_factors.contains(&0) {
        return Err(EnsembleError::BadFactors);
    }
    for &s in s_levels {
        if s < 1 || s > stack.max_detail() {
            return Err(EnsembleError::BadDetailLevel {
                got: s,
                max: stack.max_detail(),
            });
        }
    }
    fs::create_dir_all(out_dir).map_err(|source| EnsembleError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut done: HashSet<DemSpec> = HashSet::new();
    let mut entries: Vec<DemManifestEntry> = Vec::new();
    if manifest_path.exists() {
        let prior = DemManifest::read(&manifest_path)?;
        for e in prior.entries {
            if out_dir.join(&e.path).exists() && !done.contains(&e.spec()) {
                done.insert(e.spec());
                entries.push(e);
            }
        }
    }

    let appender = Mutex::new(BufWriter::new(
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&manifest_path)
            .map_err(|source| EnsembleError::Io {
                path: manifest_path.display().to_string(),
                source,
            })?,
    ));

    let mut se_pairs: Vec<(u8, u32)> = Vec::new();
    for &s in s_levels {
        for e in 0..noise.n_draws {
            let missing = r_factors.iter().any(|&r| {
                !done.contains(&DemSpec {
                    s_level: s,
                    e_draw: e,
                    r_factor: r,
                })
            });
            if missing {
                se_pairs.push((s, e));
            }
        }
    }

    let new_entries: Result<Vec<Vec<DemManifestEntry>>, EnsembleError> = se_pairs
        .par_iter()
        .map(|&(s, e)| {
            let surface = compose_surface(stack, s)?;
            let noise_grid = generate_noise(noise, &surface.header, e)?;
            let mut fine = surface;
            for (v, n) in fine.values.iter_mut().zip(&noise_grid.values) {
                *v += n;
            }
            let mut out = Vec::new();
            for &r in r_factors {
                let spec = DemSpec {
                    s_level: s,
                    e_draw: e,
                    r_factor: r,
                };
                if done.contains(&spec) {
                    continue;
                }
                let dem = fine.resample_average(r as usize)?;
                let name = spec.file_name();
                let path = out_dir.join(&name);
                raster::write_raster(&dem, &path)?;
                let sha256 = sha256_hex_file(&path).map_err(|source| EnsembleError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let entry = DemManifestEntry {
                    s,
                    e,
                    r,
                    path: name,
                    sha256,
                    cellsize: dem.header.cellsize,
                };
                {
                    let mut w = appender.lock().expect("manifest appender poisoned");
                    let line = serde_json::to_string(&entry).expect("manifest entry serializes");
                    writeln!(w, "{line}").map_err(|source| EnsembleError::Io {
                        path: manifest_path.display().to_string(),
                        source,
                    })?;
                    w.flush().map_err(|source| EnsembleError::Io {
                        path: manifest_path.display().to_string(),
                        source,
                    })?;
                }
                out.push(entry);
            }
            Ok(out)
        })
        .collect();
    entries.extend(new_entries?.into_iter().flatten());
    drop(appender);

    let mut manifest = DemManifest {
        root: out_dir.to_path_buf(),
        entries,
    };
    manifest.write_canonical()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_stack(ncols: usize, nrows: usize, z: f64) -> FeatureStack {
        let header = RasterHeader::new(ncols, nrows, 0.0, 0.0, 1.0);
        let dtm = Raster::filled(header, z);
        let mut buildings = Raster::filled(header, raster::DEFAULT_NODATA);
        buildings.set(0, 0, 10.0);
        let mut walls = Raster::filled(header, raster::DEFAULT_NODATA);
        walls.set(0, 0, 3.0);
        walls.set(0, 1, 1.5);
        let thin = Raster::filled(header, raster::DEFAULT_NODATA);
        FeatureStack::new(
            dtm,
            vec![
                FeatureLayer {
                    name: "buildings".into(),
                    mask: buildings,
                },
                FeatureLayer {
                    name: "walls".into(),
                    mask: walls,
                },
                FeatureLayer {
                    name: "thin_structures".into(),
                    mask: thin,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn level_one_is_bare_terrain() {
        let stack = flat_stack(3, 3, 5.0);
        let out = compose_surface(&stack, 1).unwrap();
        assert_eq!(out, stack.dtm);
    }

    #[test]
    fn level_two_raises_building_cell() {
        let stack = flat_stack(3, 3, 5.0);
        let out = compose_surface(&stack, 2).unwrap();
        assert_eq!(out.get(0, 0), 15.0);
        for i in 1..9 {
            assert_eq!(out.values[i], 5.0);
        }
    }

    #[test]
    fn overlapping_layers_take_per_cell_max() {
        let stack = flat_stack(3, 3, 5.0);
        let out = compose_surface(&stack, 4).unwrap();
        // Oracle: brute-force overlay loop over all layers.
        for row in 0..3 {
            for col in 0..3 {
                let mut expected = stack.dtm.get(row, col);
                for layer in &stack.layers {
                    let inc = layer.mask.get(row, col);
                    if !layer.mask.is_nodata(inc) {
                        expected = expected.max(stack.dtm.get(row, col) + inc);
                    }
                }
                assert_eq!(out.get(row, col), expected, "cell ({row}, {col})");
            }
        }
        // Building (10) beats wall (3) on the shared cell.
        assert_eq!(out.get(0, 0), 15.0);
        assert_eq!(out.get(0, 1), 6.5);
    }

    #[test]
    fn detail_level_is_monotone() {
        let stack = flat_stack(4, 4, 2.0);
        let mut prev = compose_surface(&stack, 1).unwrap();
        for s in 2..=4 {
            let cur = compose_surface(&stack, s).unwrap();
            for (a, b) in cur.values.iter().zip(&prev.values) {
                assert!(a >= b, "raising detail lowered a cell");
            }
            prev = cur;
        }
    }

    #[test]
    fn mismatched_layer_header_rejected() {
        let dtm = Raster::filled(RasterHeader::new(3, 3, 0.0, 0.0, 1.0), 0.0);
        let bad = Raster::filled(
            RasterHeader::new(2, 3, 0.0, 0.0, 1.0),
            raster::DEFAULT_NODATA,
        );
        let err = FeatureStack::new(
            dtm,
            vec![FeatureLayer {
                name: "buildings".into(),
                mask: bad,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, EnsembleError::LayerHeaderMismatch { .. }));
    }

    #[test]
    fn noise_is_deterministic_per_draw() {
        let spec = NoiseSpec {
            sigma: 0.2,
            n_draws: 10,
            master_seed: 42,
        };
        let header = RasterHeader::new(25, 25, 0.0, 0.0, 1.0);
        let a = generate_noise(&spec, &header, 3).unwrap();
        let b = generate_noise(&spec, &header, 3).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = generate_noise(&spec, &header, 4).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn noise_draw_out_of_range() {
        let spec = NoiseSpec {
            sigma: 0.2,
            n_draws: 5,
            master_seed: 1,
        };
        let header = RasterHeader::new(2, 2, 0.0, 0.0, 1.0);
        assert!(matches!(
            generate_noise(&spec, &header, 5),
            Err(EnsembleError::DrawOutOfRange { .. })
        ));
    }

    #[test]
    fn noise_mean_and_std_match_spec() {
        // 10^6 cells: mean within 4 sigma / sqrt(n), std within 1%.
        let spec = NoiseSpec {
            sigma: 0.2,
            n_draws: 2,
            master_seed: 7,
        };
        let header = RasterHeader::new(1000, 1000, 0.0, 0.0, 1.0);
        let grid = generate_noise(&spec, &header, 0).unwrap();
        let n = grid.values.len() as f64;
        let mean = grid.values.iter().sum::<f64>() / n;
        let var = grid
            .values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0);
        let std = var.sqrt();
        assert!(mean.abs() <= 4.0 * spec.sigma / n.sqrt(), "mean {mean}");
        assert!(
            (std - spec.sigma).abs() <= 0.01 * spec.sigma,
            "std {std} vs sigma {}",
            spec.sigma
        );
    }

    #[test]
    fn distinct_draws_are_uncorrelated() {
        let spec = NoiseSpec {
            sigma: 0.2,
            n_draws: 3,
            master_seed: 99,
        };
        let header = RasterHeader::new(400, 400, 0.0, 0.0, 1.0);
        let a = generate_noise(&spec, &header, 0).unwrap();
        let b = generate_noise(&spec, &header, 1).unwrap();
        let n = a.values.len() as f64;
        let ma = a.values.iter().sum::<f64>() / n;
        let mb = b.values.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.values.iter().zip(&b.values) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        let rho = cov / (va.sqrt() * vb.sqrt());
        assert!(rho.abs() < 0.01, "rho = {rho}");
    }

    #[test]
    fn noise_then_resample_commutes_with_block_means() {
        let stack = flat_stack(8, 8, 1.0);
        let spec = NoiseSpec {
            sigma: 0.3,
            n_draws: 2,
            master_seed: 5,
        };
        let surface = compose_surface(&stack, 4).unwrap();
        let noise = generate_noise(&spec, &surface.header, 1).unwrap();
        let mut noisy = surface.clone();
        for (v, n) in noisy.values.iter_mut().zip(&noise.values) {
            *v += n;
        }
        let lhs = noisy.resample_average(2).unwrap();
        let rs = surface.resample_average(2).unwrap();
        let rn = noise.resample_average(2).unwrap();
        for ((l, s), n) in lhs.values.iter().zip(&rs.values).zip(&rn.values) {
            assert!((l - (s + n)).abs() <= 1e-12, "{l} vs {}", s + n);
        }
    }

    #[test]
    fn vanishing_sigma_makes_draws_identical() {
        // In the sigma -> 0 limit the noise disappears below f64 resolution
        // and every draw produces the same DEM.
        let stack = flat_stack(4, 4, 100.0);
        let spec = NoiseSpec {
            sigma: 1e-300,
            n_draws: 3,
            master_seed: 8,
        };
        let surface = compose_surface(&stack, 2).unwrap();
        let mut dems = Vec::new();
        for e in 0..3 {
            let noise = generate_noise(&spec, &surface.header, e).unwrap();
            let mut d = surface.clone();
            for (v, n) in d.values.iter_mut().zip(&noise.values) {
                *v += n;
            }
            dems.push(d);
        }
        assert_eq!(dems[0], dems[1]);
        assert_eq!(dems[1], dems[2]);
    }

    #[test]
    fn database_counts_and_completeness() {
        let stack = flat_stack(6, 6, 3.0);
        let noise = NoiseSpec {
            sigma: 0.1,
            n_draws: 3,
            master_seed: 21,
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_database(&stack, &noise, &[1, 2], &[1], dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 2 * 3);
        // Every spec of the factorial grid appears exactly once.
        let mut seen = HashSet::new();
        for e in &manifest.entries {
            assert!(seen.insert(e.spec()), "duplicate {:?}", e.spec());
            assert!(manifest.path_of(e).exists());
        }
        for s in [1u8, 2] {
            for e in 0..3u32 {
                assert!(seen.contains(&DemSpec {
                    s_level: s,
                    e_draw: e,
                    r_factor: 1
                }));
            }
        }
    }

    #[test]
    fn database_build_resumes_idempotently() {
        let stack = flat_stack(6, 6, 3.0);
        let noise = NoiseSpec {
            sigma: 0.1,
            n_draws: 2,
            master_seed: 21,
        };
        let dir = tempfile::tempdir().unwrap();
        let first = build_database(&stack, &noise, &[1, 2], &[1, 2], dir.path()).unwrap();
        // Delete one member; resume rebuilds exactly that file.
        let victim = first.path_of(&first.entries[0]);
        fs::remove_file(&victim).unwrap();
        let second = build_database(&stack, &noise, &[1, 2], &[1, 2], dir.path()).unwrap();
        assert_eq!(first.entries.len(), second.entries.len());
        for (a, b) in first.entries.iter().zip(&second.entries) {
            assert_eq!(a, b, "resume changed an entry");
        }
        let third = build_database(&stack, &noise, &[1, 2], &[1, 2], dir.path()).unwrap();
        assert_eq!(second.entries, third.entries);
    }
}
