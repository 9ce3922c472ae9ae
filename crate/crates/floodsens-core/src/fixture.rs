//! Procedural demo terrain: a sloped valley with an incised channel, an
//! urban district, flood walls and curbs, plus a matching hydrograph and
//! probe set.
//!
//! Stands in for real survey data so the whole pipeline can run from
//! nothing. Deterministic for a fixed seed. The small size is a 200 x 200
//! grid at 1 m; medium doubles every length.
//!
//! Layout (small, coordinates in metres from the south-west corner):
//! a north-to-south valley with a 20 m wide, 2 m deep channel at
//! x in [90, 110); plains tilted toward the channel; a raised headwall
//! across the north edge funnels the inflow into the channel. The east
//! plain carries six 20 m building blocks (detail level 2), a bank-top
//! flood wall with a gap plus a deflector wall (level 3) and street curbs
//! (level 4). The west plain carries a steep road embankment in the bare
//! terrain itself.

use std::path::{Path, PathBuf};

use crate::ensemble::{EnsembleError, FeatureLayer, FeatureStack};
use crate::probe::{Probe, ProbeSet};
use crate::raster::{self, Raster, RasterHeader, DEFAULT_NODATA};
use crate::solver::Hydrograph;

/// Fixture sizes understood by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureSize {
    /// 200 x 200 cells at 1 m.
    Small,
    /// 400 x 400 cells at 1 m.
    Medium,
}

impl FixtureSize {
    pub fn scale(&self) -> usize {
        match self {
            FixtureSize::Small => 1,
            FixtureSize::Medium => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small" => Some(FixtureSize::Small),
            "medium" => Some(FixtureSize::Medium),
            _ => None,
        }
    }
}

/// A generated fixture, in memory.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub stack: FeatureStack,
    pub hydrograph: Hydrograph,
    pub probes: ProbeSet,
}

/// Files written by [`Fixture::write_to`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub dtm: PathBuf,
    pub buildings: PathBuf,
    pub walls: PathBuf,
    pub thin_structures: PathBuf,
    pub hydrograph: PathBuf,
    pub probes: PathBuf,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform in [-1, 1], a pure function of (seed, i, j).
fn lattice_noise(seed: u64, i: i64, j: i64) -> f64 {
    let k =
        splitmix64(splitmix64(seed ^ (i as u64).wrapping_mul(0x517c_c1b7_2722_0a95)) ^ j as u64);
    (k >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Build the demo fixture. Pure function of `(size, seed)`.
pub fn generate(size: FixtureSize, seed: u64) -> Fixture {
    let s = size.scale() as f64;
    let n = 200 * size.scale();
    let header = RasterHeader::new(n, n, 0.0, 0.0, 1.0);

    let chan_lo = 90.0 * s;
    let chan_hi = 110.0 * s;
    let chan_mid = 100.0 * s;
    let domain = 200.0 * s;

    let mut dtm = Raster::filled(header, 0.0);
    let lattice = 20.0 * s;
    for row in 0..n {
        for col in 0..n {
            let x = col as f64 + 0.5;
            let y = domain - row as f64 - 0.5;
            let in_channel = x >= chan_lo && x < chan_hi;
            // Valley floor: gentle fall to the south, plains tilted toward
            // the channel.
            let mut z = 0.002 * y;
            z += 0.005 * (0.0f64).max((x - chan_mid).abs() - 10.0 * s);
            if in_channel {
                z -= 2.0;
            } else if y >= domain - 3.0 * s {
                // Headwall across the north edge funnels inflow into the
                // channel notch.
                z += 4.0;
            }
            if x < chan_lo {
                // The west plain sits a quarter metre lower, so the western
                // bank spills first.
                z -= 0.25;
                // Steep road embankment crossing the west plain.
                let d = (y - 123.0 * s).abs();
                if d <= 2.0 * s {
                    z += 1.2 * (1.0 - d / (2.0 * s));
                }
            }
            // The urban district is a terraced bowl behind the east bank.
            if x >= 115.0 * s && x < 195.0 * s && (30.0 * s..170.0 * s).contains(&y) {
                z -= 0.5;
            }
            // Bilinear micro-topography away from the channel, its bank
            // strips and the headwall, so coarser grids genuinely see
            // different terrain while the over-bank spill stays controlled
            // by the clean crest.
            let near_channel = x >= chan_lo - 6.0 * s && x < chan_hi + 6.0 * s;
            if !near_channel && y < domain - 3.0 * s {
                let gx = x / lattice;
                let gy = y / lattice;
                let (i0, j0) = (gx.floor() as i64, gy.floor() as i64);
                let (fx, fy) = (gx - i0 as f64, gy - j0 as f64);
                let v00 = lattice_noise(seed, i0, j0);
                let v10 = lattice_noise(seed, i0 + 1, j0);
                let v01 = lattice_noise(seed, i0, j0 + 1);
                let v11 = lattice_noise(seed, i0 + 1, j0 + 1);
                let v = v00 * (1.0 - fx) * (1.0 - fy)
                    + v10 * fx * (1.0 - fy)
                    + v01 * (1.0 - fx) * fy
                    + v11 * fx * fy;
                z += 0.15 * v;
            }
            dtm.set(row, col, z);
        }
    }

    let mut buildings = Raster::filled(header, DEFAULT_NODATA);
    let mut walls = Raster::filled(header, DEFAULT_NODATA);
    let mut thin = Raster::filled(header, DEFAULT_NODATA);
    let paint = |layer: &mut Raster, x0: f64, x1: f64, y0: f64, y1: f64, inc: f64| {
        for row in 0..n {
            for col in 0..n {
                let x = col as f64 + 0.5;
                let y = domain - row as f64 - 0.5;
                if x >= x0 && x < x1 && y >= y0 && y < y1 {
                    layer.set(row, col, inc);
                }
            }
        }
    };

    // Six 20 m building blocks on the east plain, snapped to the 5 m
    // analysis grid.
    for &bx in &[120.0, 150.0] {
        for &by in &[40.0, 90.0, 140.0] {
            paint(
                &mut buildings,
                bx * s,
                (bx + 20.0) * s,
                by * s,
                (by + 20.0) * s,
                8.0,
            );
        }
    }
    // Bank-top flood wall with a gap, plus a deflector wall in the district.
    paint(&mut walls, 111.0 * s, 112.0 * s, 20.0 * s, 95.0 * s, 1.2);
    paint(&mut walls, 111.0 * s, 112.0 * s, 101.0 * s, 180.0 * s, 1.2);
    paint(&mut walls, 115.0 * s, 145.0 * s, 75.0 * s, 76.0 * s, 1.2);
    // Street curbs.
    for &cx in &[118.0, 143.0] {
        paint(&mut thin, cx * s, (cx + 1.0) * s, 30.0 * s, 170.0 * s, 0.15);
    }
    for &cy in &[68.0, 129.0] {
        paint(&mut thin, 112.0 * s, 195.0 * s, cy * s, (cy + 1.0) * s, 0.15);
    }

    let stack = FeatureStack::new(
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
    .expect("fixture layers share the terrain header");

    // Trapezoidal event: base flow, rising limb, peak plateau, recession.
    let hydrograph = Hydrograph::new(vec![
        (0.0, 30.0 * s),
        (50.0 * s, 30.0 * s),
        (140.0 * s, 330.0 * s),
        (240.0 * s, 330.0 * s),
        (320.0 * s, 70.0 * s),
        (360.0 * s, 70.0 * s),
    ])
    .expect("fixture hydrograph is valid");

    let mk = |id: &str, x: f64, y: f64, label: &str| Probe {
        id: id.to_string(),
        x: x * s,
        y: y * s,
        label: label.to_string(),
    };
    let probes = ProbeSet::new(vec![
        mk("p1", 100.5, 150.5, "channel upstream"),
        mk("p2", 100.5, 60.5, "channel downstream"),
        mk("p3", 145.5, 100.5, "urban street"),
        mk("p4", 130.5, 100.5, "building pad"),
        mk("p5", 50.5, 100.5, "open floodplain"),
        mk("p6", 50.5, 118.5, "embankment toe"),
        mk("p7", 185.5, 60.5, "flood margin"),
        mk("p8", 40.5, 40.5, "lower plain"),
    ])
    .expect("fixture probe ids are unique");

    Fixture {
        stack,
        hydrograph,
        probes,
    }
}

impl Fixture {
    /// Event duration covered by the hydrograph (s).
    pub fn event_duration(&self) -> f64 {
        self.hydrograph
            .points()
            .last()
            .map(|(t, _)| *t)
            .unwrap_or(0.0)
    }

    /// Write every fixture file into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<FixturePaths, EnsembleError> {
        std::fs::create_dir_all(dir).map_err(|source| EnsembleError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let paths = FixturePaths {
            dtm: dir.join("dtm.asc"),
            buildings: dir.join("buildings.asc"),
            walls: dir.join("walls.asc"),
            thin_structures: dir.join("thin_structures.asc"),
            hydrograph: dir.join("hydrograph.csv"),
            probes: dir.join("probes.csv"),
        };
        raster::write_raster(&self.stack.dtm, &paths.dtm)?;
        raster::write_raster(&self.stack.layers[0].mask, &paths.buildings)?;
        raster::write_raster(&self.stack.layers[1].mask, &paths.walls)?;
        raster::write_raster(&self.stack.layers[2].mask, &paths.thin_structures)?;
        self.hydrograph
            .write_csv(&paths.hydrograph)
            .map_err(|e| EnsembleError::Io {
                path: paths.hydrograph.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            })?;
        self.probes
            .write_csv(&paths.probes)
            .map_err(|e| EnsembleError::Io {
                path: paths.probes.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            })?;
        Ok(paths)
    }
}
