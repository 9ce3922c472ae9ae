//! 2D shallow-water solver on a structured Cartesian grid.
//!
//! Explicit finite-volume scheme with hydrostatic interface reconstruction
//! (well-balanced: the lake-at-rest state is preserved exactly), HLL fluxes,
//! a CFL-driven variable time step and semi-implicit Manning friction.
//! First-order reconstruction is the default; a second-order MUSCL mode with
//! minmod limiting sits behind a config switch.
//!
//! The solver marches conserved variables `(h, hu, hv)` per cell and
//! produces the per-cell maximum water depth over a run, which is the
//! quantity of interest for all downstream statistics.

mod flux;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Raster, RasterError};
pub use flux::{hll_flux, hydrostatic_reconstruct, pressure, FaceFlux, FaceState};

/// Gravitational acceleration (m/s^2).
pub const GRAVITY: f64 = 9.81;

/// Model seconds between steady-state volume checkpoints during spin-up.
const SPINUP_CHECK_INTERVAL: f64 = 60.0;
/// Relative volume change per checkpoint interval below which the spin-up
/// state is frozen as the initial condition.
const SPINUP_REL_TOL: f64 = 1e-4;
/// Spin-up abort horizon (model seconds).
const SPINUP_MAX_TIME: f64 = 48.0 * 3600.0;
/// Depth scale used for the CFL fallback when the whole domain is dry.
const DRY_DT_DEPTH: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("non-finite state at cell ({row}, {col}) at t = {time} s")]
    NonFinite { row: usize, col: usize, time: f64 },
    #[error("DEM has a nodata hole at cell ({row}, {col})")]
    NodataInDem { row: usize, col: usize },
    #[error("state shape {state_cols}x{state_rows} does not match DEM {dem_cols}x{dem_rows}")]
    ShapeMismatch {
        state_cols: usize,
        state_rows: usize,
        dem_cols: usize,
        dem_rows: usize,
    },
    #[error("steady state not reached after {time} s of model time")]
    SteadyStateNotReached { time: f64 },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("invalid hydrograph: {0}")]
    BadHydrograph(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Interface reconstruction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    #[default]
    FirstOrder,
    Muscl,
}

/// Numerical parameters of a run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Manning roughness coefficient.
    pub manning_n: f64,
    /// Courant number in (0, 1].
    pub cfl: f64,
    /// Wet/dry depth threshold (m); cells below it carry no momentum.
    pub h_dry: f64,
    pub reconstruction: Reconstruction,
    /// Simulated duration of the event (s).
    pub t_end: f64,
    /// Progress-reporting cadence in model seconds.
    pub output_interval: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            manning_n: 0.015,
            cfl: 0.5,
            h_dry: 1e-6,
            reconstruction: Reconstruction::FirstOrder,
            t_end: 3600.0,
            output_interval: 60.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SolverError::BadConfig(format!(
                "cfl must be in (0, 1], got {}",
                self.cfl
            )));
        }
        if self.manning_n < 0.0 {
            return Err(SolverError::BadConfig(format!(
                "manning_n must be >= 0, got {}",
                self.manning_n
            )));
        }
        if !(self.h_dry > 0.0) {
            return Err(SolverError::BadConfig(format!(
                "h_dry must be > 0, got {}",
                self.h_dry
            )));
        }
        if !(self.t_end >= 0.0) {
            return Err(SolverError::BadConfig(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        Ok(())
    }
}

/// Condition applied along one domain edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeCondition {
    /// Total discharge (m^3/s) distributed across the edge, weighted by
    /// local conveyance `h^(5/3)` over wet cells, uniform when fully dry.
    InflowDischarge {
        #[serde(default)]
        q: f64,
    },
    /// Zero-gradient open boundary.
    NeumannOutflow,
    Wall,
}

/// Boundary condition per domain edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub north: EdgeCondition,
    pub south: EdgeCondition,
    pub east: EdgeCondition,
    pub west: EdgeCondition,
}

impl BoundarySpec {
    /// All four edges closed.
    pub fn walls() -> Self {
        Self {
            north: EdgeCondition::Wall,
            south: EdgeCondition::Wall,
            east: EdgeCondition::Wall,
            west: EdgeCondition::Wall,
        }
    }

    /// Copy with every inflow edge set to discharge `q`.
    pub fn with_inflow(&self, q: f64) -> Self {
        let patch = |e: EdgeCondition| match e {
            EdgeCondition::InflowDischarge { .. } => EdgeCondition::InflowDischarge { q },
            other => other,
        };
        Self {
            north: patch(self.north),
            south: patch(self.south),
            east: patch(self.east),
            west: patch(self.west),
        }
    }
}

/// Piecewise-linear discharge hydrograph, clamped outside its breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hydrograph {
    points: Vec<(f64, f64)>,
}

impl Hydrograph {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SolverError> {
        if points.is_empty() {
            return Err(SolverError::BadHydrograph("no breakpoints".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(SolverError::BadHydrograph(format!(
                    "breakpoint times must strictly increase: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((t, q)) = points.iter().find(|(_, q)| !(*q >= 0.0)) {
            return Err(SolverError::BadHydrograph(format!(
                "discharge must be >= 0, got {q} at t = {t}"
            )));
        }
        Ok(Self { points })
    }

    /// Constant discharge.
    pub fn constant(q: f64) -> Self {
        Self {
            points: vec![(0.0, q)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let i = pts.partition_point(|(tp, _)| *tp <= t);
        let (t0, q0) = pts[i - 1];
        let (t1, q1) = pts[i];
        q0 + (q1 - q0) * (t - t0) / (t1 - t0)
    }

    /// Read a two-column CSV `t_seconds,Q_m3s`; a non-numeric first line is
    /// treated as a header.
    pub fn read_csv(path: &std::path::Path) -> Result<Self, SolverError> {
        let text = std::fs::read_to_string(path).map_err(|source| SolverError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let a = parts.next().unwrap_or("");
            let b = parts.next().unwrap_or("");
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(t), Ok(q)) => points.push((t, q)),
                _ if i == 0 => continue, // header line
                _ => {
                    return Err(SolverError::BadHydrograph(format!(
                        "{}:{}: expected `t,Q`, got {line:?}",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Self::new(points)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), SolverError> {
        let mut text = String::from("t_seconds,Q_m3s\n");
        for (t, q) in &self.points {
            text.push_str(&format!("{t},{q}\n"));
        }
        std::fs::write(path, text).map_err(|source| SolverError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Conserved variables per cell: depth and unit-width discharges.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub ncols: usize,
    pub nrows: usize,
    pub h: Vec<f64>,
    pub hu: Vec<f64>,
    pub hv: Vec<f64>,
}

impl FlowState {
    pub fn dry(ncols: usize, nrows: usize) -> Self {
        let n = ncols * nrows;
        Self {
            ncols,
            nrows,
            h: vec![0.0; n],
            hu: vec![0.0; n],
            hv: vec![0.0; n],
        }
    }

    /// Total water volume (m^3) for a given cell size.
    pub fn volume(&self, cellsize: f64) -> f64 {
        self.h.iter().sum::<f64>() * cellsize * cellsize
    }
}

/// Initial condition of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    #[default]
    Dry,
    /// Spin up under the hydrograph's starting discharge until the total
    /// volume stabilizes, then start the event from that state.
    SteadyFromConstantQ,
}

/// Per-step diagnostics returned by [`step`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub dt: f64,
    /// Net volume gained through boundaries this step (m^3, inflow minus
    /// outflow).
    pub boundary_net_volume: f64,
    /// Volume created by clamping negative depths (m^3); zero in any healthy
    /// run.
    pub clamped_volume: f64,
}

/// Aggregate diagnostics of a full run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_mean: f64,
    pub sim_time: f64,
    pub spinup_steps: u64,
    pub spinup_time: f64,
    pub final_volume_m3: f64,
    pub clamped_volume_m3: f64,
    pub wall_seconds: f64,
}

struct Scratch {
    /// Per-axis limited slopes (MUSCL only): h, u, v, eta.
    sx: Option<[Vec<f64>; 4]>,
    sy: Option<[Vec<f64>; 4]>,
    u: Vec<f64>,
    v: Vec<f64>,
    new_h: Vec<f64>,
    new_hu: Vec<f64>,
    new_hv: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, reconstruction: Reconstruction) -> Self {
        let slopes = || match reconstruction {
            Reconstruction::FirstOrder => None,
            Reconstruction::Muscl => {
                Some([vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]])
            }
        };
        Self {
            sx: slopes(),
            sy: slopes(),
            u: vec![0.0; n],
            v: vec![0.0; n],
            new_h: vec![0.0; n],
            new_hu: vec![0.0; n],
            new_hv: vec![0.0; n],
        }
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        a.min(b)
    } else if a < 0.0 && b < 0.0 {
        a.max(b)
    } else {
        0.0
    }
}

/// Face values `(state, z)` on one side of a cell.
///
/// `axis`: 0 = x (east positive), 1 = y (north positive);
/// `side`: 0 = -axis face, 1 = +axis face.
#[inline]
fn face_state(
    i: usize,
    axis: usize,
    side: usize,
    h: &[f64],
    u: &[f64],
    v: &[f64],
    z: &[f64],
    slopes: Option<&[Vec<f64>; 4]>,
) -> (FaceState, f64) {
    match slopes {
        None => (
            FaceState {
                h: h[i],
                un: if axis == 0 { u[i] } else { v[i] },
                ut: if axis == 0 { v[i] } else { u[i] },
            },
            z[i],
        ),
        Some(s) => {
            let sgn = if side == 1 { 0.5 } else { -0.5 };
            let hf = h[i] + sgn * s[0][i];
            let uf = u[i] + sgn * s[1][i];
            let vf = v[i] + sgn * s[2][i];
            let eta = h[i] + z[i] + sgn * s[3][i];
            (
                FaceState {
                    h: hf,
                    un: if axis == 0 { uf } else { vf },
                    ut: if axis == 0 { vf } else { uf },
                },
                eta - hf,
            )
        }
    }
}

/// Advance the state by one CFL-limited step.
///
/// `dt_cap` bounds the step (pass `f64::INFINITY` for none); the returned
/// stats carry the step actually taken. The update is a pure function of its
/// inputs; identical inputs give bit-identical outputs.
pub fn step(
    state: &mut FlowState,
    dem: &Raster,
    config: &SolverConfig,
    bc: &BoundarySpec,
    t: f64,
    dt_cap: f64,
) -> Result<StepStats, SolverError> {
    let mut scratch = Scratch::new(state.h.len(), config.reconstruction);
    step_with_scratch(state, dem, config, bc, t, dt_cap, &mut scratch)
}

fn step_with_scratch(
    state: &mut FlowState,
    dem: &Raster,
    config: &SolverConfig,
    bc: &BoundarySpec,
    t: f64,
    dt_cap: f64,
    scratch: &mut Scratch,
) -> Result<StepStats, SolverError> {
    let (nx, ny) = (state.ncols, state.nrows);
    if nx != dem.ncols() || ny != dem.nrows() {
        return Err(SolverError::ShapeMismatch {
            state_cols: nx,
            state_rows: ny,
            dem_cols: dem.ncols(),
            dem_rows: dem.nrows(),
        });
    }
    let cs = dem.header.cellsize;
    let h_dry = config.h_dry;
    let z: &[f64] = &dem.values;

    // Phase 1: velocities and the CFL time step over wet cells, both axes.
    let mut dt_bound = f64::INFINITY;
    for i in 0..nx * ny {
        let hw = state.h[i];
        let (u, v) = if hw > h_dry {
            (state.hu[i] / hw, state.hv[i] / hw)
        } else {
            (0.0, 0.0)
        };
        scratch.u[i] = u;
        scratch.v[i] = v;
        if hw > h_dry {
            let c = (GRAVITY * hw).sqrt();
            dt_bound = dt_bound.min(cs / (u.abs() + c)).min(cs / (v.abs() + c));
        }
    }
    let mut dt = if dt_bound.is_finite() {
        config.cfl * dt_bound
    } else {
        config.cfl * cs / (GRAVITY * DRY_DT_DEPTH).sqrt()
    };
    if dt > dt_cap {
        dt = dt_cap;
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::BadConfig(format!(
            "non-positive time step {dt} at t = {t}"
        )));
    }
    let dtdx = dt / cs;

    // Phase 2: limited slopes (MUSCL only), zero at domain edges.
    if scratch.sx.is_some() {
        let field = |f: usize, i: usize, h: &[f64], u: &[f64], v: &[f64]| match f {
            0 => h[i],
            1 => u[i],
            2 => v[i],
            _ => h[i] + z[i],
        };
        let (h, u, v) = (&state.h, &scratch.u, &scratch.v);
        if let Some(sx) = scratch.sx.as_mut() {
            for r in 0..ny {
                for c in 0..nx {
                    let i = r * nx + c;
                    for (f, s) in sx.iter_mut().enumerate() {
                        s[i] = if c == 0 || c == nx - 1 {
                            0.0
                        } else {
                            let here = field(f, i, h, u, v);
                            minmod(
                                here - field(f, i - 1, h, u, v),
                                field(f, i + 1, h, u, v) - here,
                            )
                        };
                    }
                }
            }
        }
        if let Some(sy) = scratch.sy.as_mut() {
            for r in 0..ny {
                for c in 0..nx {
                    let i = r * nx + c;
                    for (f, s) in sy.iter_mut().enumerate() {
                        // +y points north, toward decreasing row index.
                        s[i] = if r == 0 || r == ny - 1 {
                            0.0
                        } else {
                            let here = field(f, i, h, u, v);
                            minmod(
                                here - field(f, i + nx, h, u, v),
                                field(f, i - nx, h, u, v) - here,
                            )
                        };
                    }
                }
            }
        }
    }

    // Phase 3: flux assembly into the update buffers.
    let Scratch {
        sx,
        sy,
        u,
        v,
        new_h,
        new_hu,
        new_hv,
    } = scratch;
    let sx = sx.as_ref();
    let sy = sy.as_ref();
    let u: &[f64] = u;
    let v: &[f64] = v;
    let h: &[f64] = &state.h;
    new_h.copy_from_slice(&state.h);
    new_hu.copy_from_slice(&state.hu);
    new_hv.copy_from_slice(&state.hv);

    let mut boundary_net_volume = 0.0;

    // Conveyance-weighted per-cell unit discharges (m^2/s) for an inflow
    // edge; `cells` walks the edge in grid order.
    let edge_inflow = |cells: Vec<usize>, q_total: f64| -> Vec<f64> {
        let mut weights: Vec<f64> = cells
            .iter()
            .map(|&i| {
                if h[i] > h_dry {
                    h[i].powf(5.0 / 3.0)
                } else {
                    0.0
                }
            })
            .collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let wsum: f64 = weights.iter().sum();
        weights
            .iter()
            .map(|w| q_total * w / (wsum * cs))
            .collect()
    };

    // Flux through a boundary face in +axis orientation, plus the
    // interior-side depth used by the momentum correction.
    // `interior_is_right`: the interior cell is the right (+axis) state.
    let boundary_face = |cond: EdgeCondition,
                         i: usize,
                         axis: usize,
                         interior_is_right: bool,
                         q_unit: f64|
     -> (FaceFlux, f64) {
        let side = if interior_is_right { 0 } else { 1 };
        let (fs, _) = face_state(i, axis, side, h, u, v, z, if axis == 0 { sx } else { sy });
        match cond {
            EdgeCondition::Wall => {
                let ghost = FaceState { un: -fs.un, ..fs };
                let f = if interior_is_right {
                    hll_flux(ghost, fs)
                } else {
                    hll_flux(fs, ghost)
                };
                (f, fs.h)
            }
            EdgeCondition::NeumannOutflow => (hll_flux(fs, fs), fs.h),
            EdgeCondition::InflowDischarge { .. } => {
                let s = if interior_is_right { 1.0 } else { -1.0 };
                let h_crit = (q_unit * q_unit / GRAVITY).cbrt();
                let h_eff = fs.h.max(h_crit);
                let un_abs = if h_eff > 0.0 { q_unit / h_eff } else { 0.0 };
                (
                    FaceFlux {
                        mass: s * q_unit,
                        qn: q_unit * un_abs + pressure(fs.h),
                        qt: 0.0,
                    },
                    fs.h,
                )
            }
        }
    };

    // Interior face between cells `il` (lower coordinate) and `ir`.
    let interior_face = |il: usize, ir: usize, axis: usize| -> (FaceFlux, f64, f64) {
        let slopes = if axis == 0 { sx } else { sy };
        let (l, zl) = face_state(il, axis, 1, h, u, v, z, slopes);
        let (r, zr) = face_state(ir, axis, 0, h, u, v, z, slopes);
        let rec = hydrostatic_reconstruct(l, r, zl, zr);
        let strip = |fs: FaceState| {
            if fs.h > h_dry {
                fs
            } else {
                FaceState {
                    h: fs.h,
                    un: 0.0,
                    ut: 0.0,
                }
            }
        };
        (
            hll_flux(strip(rec.left), strip(rec.right)),
            rec.left.h,
            rec.right.h,
        )
    };

    // X sweep: faces with +x (east) normals. Face c separates (r, c-1) and
    // (r, c); faces 0 and nx sit on the west/east boundaries.
    let west_q = match bc.west {
        EdgeCondition::InflowDischarge { q } => {
            edge_inflow((0..ny).map(|r| r * nx).collect(), q)
        }
        _ => Vec::new(),
    };
    let east_q = match bc.east {
        EdgeCondition::InflowDischarge { q } => {
            edge_inflow((0..ny).map(|r| r * nx + nx - 1).collect(), q)
        }
        _ => Vec::new(),
    };
    for r in 0..ny {
        let row = r * nx;
        // Boundary faces of this row.
        let q = west_q.get(r).copied().unwrap_or(0.0);
        let (f, h_int) = boundary_face(bc.west, row, 0, true, q);
        boundary_net_volume += f.mass * cs * dt;
        new_h[row] += dtdx * f.mass;
        new_hu[row] += dtdx * (f.qn - pressure(h_int));
        new_hv[row] += dtdx * f.qt;
        let q = east_q.get(r).copied().unwrap_or(0.0);
        let (f, h_int) = boundary_face(bc.east, row + nx - 1, 0, false, q);
        boundary_net_volume -= f.mass * cs * dt;
        new_h[row + nx - 1] -= dtdx * f.mass;
        new_hu[row + nx - 1] -= dtdx * (f.qn - pressure(h_int));
        new_hv[row + nx - 1] -= dtdx * f.qt;

        if sx.is_none() {
            // First-order fast path: roll the left-cell state along the row.
            let (mut lh, mut lu, mut lv, mut lz) = (h[row], u[row], v[row], z[row]);
            for c in 1..nx {
                let i = row + c;
                let (rh, ru, rv, rz) = (h[i], u[i], v[i], z[i]);
                let zf = lz.max(rz);
                let hsl = (lh + (lz - zf)).max(0.0);
                let hsr = (rh + (rz - zf)).max(0.0);
                if hsl > 0.0 || hsr > 0.0 {
                    let left = if hsl > h_dry {
                        FaceState { h: hsl, un: lu, ut: lv }
                    } else {
                        FaceState { h: hsl, un: 0.0, ut: 0.0 }
                    };
                    let right = if hsr > h_dry {
                        FaceState { h: hsr, un: ru, ut: rv }
                    } else {
                        FaceState { h: hsr, un: 0.0, ut: 0.0 }
                    };
                    let flx = hll_flux(left, right);
                    new_h[i - 1] -= dtdx * flx.mass;
                    new_hu[i - 1] -= dtdx * (flx.qn - pressure(hsl));
                    new_hv[i - 1] -= dtdx * flx.qt;
                    new_h[i] += dtdx * flx.mass;
                    new_hu[i] += dtdx * (flx.qn - pressure(hsr));
                    new_hv[i] += dtdx * flx.qt;
                }
                (lh, lu, lv, lz) = (rh, ru, rv, rz);
            }
        } else {
            for c in 1..nx {
                let (flx, h_star_l, h_star_r) = interior_face(row + c - 1, row + c, 0);
                let i = row + c;
                new_h[i - 1] -= dtdx * flx.mass;
                new_hu[i - 1] -= dtdx * (flx.qn - pressure(h_star_l));
                new_hv[i - 1] -= dtdx * flx.qt;
                new_h[i] += dtdx * flx.mass;
                new_hu[i] += dtdx * (flx.qn - pressure(h_star_r));
                new_hv[i] += dtdx * flx.qt;
            }
        }
    }

    // Y sweep: faces with +y (north) normals. Face k separates row k-1
    // (north) and row k (south); the southern cell is the left state.
    let north_q = match bc.north {
        EdgeCondition::InflowDischarge { q } => edge_inflow((0..nx).collect(), q),
        _ => Vec::new(),
    };
    let south_q = match bc.south {
        EdgeCondition::InflowDischarge { q } => {
            edge_inflow((0..nx).map(|c| (ny - 1) * nx + c).collect(), q)
        }
        _ => Vec::new(),
    };
    // Boundary faces along the north and south edges.
    for c in 0..nx {
        // Row 0 is the southern (left) state at face k = 0; ghost north.
        let q = north_q.get(c).copied().unwrap_or(0.0);
        let (f, h_int) = boundary_face(bc.north, c, 1, false, q);
        boundary_net_volume -= f.mass * cs * dt;
        new_h[c] -= dtdx * f.mass;
        new_hv[c] -= dtdx * (f.qn - pressure(h_int));
        new_hu[c] -= dtdx * f.qt;
        let i = (ny - 1) * nx + c;
        let q = south_q.get(c).copied().unwrap_or(0.0);
        let (f, h_int) = boundary_face(bc.south, i, 1, true, q);
        boundary_net_volume += f.mass * cs * dt;
        new_h[i] += dtdx * f.mass;
        new_hv[i] += dtdx * (f.qn - pressure(h_int));
        new_hu[i] += dtdx * f.qt;
    }
    // Interior y faces, walked by row pairs for memory streaming. The
    // southern cell (row k) is the left state.
    for k in 1..ny {
        let south = k * nx;
        let north = (k - 1) * nx;
        if sy.is_none() {
            for c in 0..nx {
                let (si, ni) = (south + c, north + c);
                let (lh, lz) = (h[si], z[si]);
                let (rh, rz) = (h[ni], z[ni]);
                let zf = lz.max(rz);
                let hsl = (lh + (lz - zf)).max(0.0);
                let hsr = (rh + (rz - zf)).max(0.0);
                if hsl > 0.0 || hsr > 0.0 {
                    let left = if hsl > h_dry {
                        FaceState { h: hsl, un: v[si], ut: u[si] }
                    } else {
                        FaceState { h: hsl, un: 0.0, ut: 0.0 }
                    };
                    let right = if hsr > h_dry {
                        FaceState { h: hsr, un: v[ni], ut: u[ni] }
                    } else {
                        FaceState { h: hsr, un: 0.0, ut: 0.0 }
                    };
                    let flx = hll_flux(left, right);
                    new_h[si] -= dtdx * flx.mass;
                    new_hv[si] -= dtdx * (flx.qn - pressure(hsl));
                    new_hu[si] -= dtdx * flx.qt;
                    new_h[ni] += dtdx * flx.mass;
                    new_hv[ni] += dtdx * (flx.qn - pressure(hsr));
                    new_hu[ni] += dtdx * flx.qt;
                }
            }
        } else {
            for c in 0..nx {
                let (flx, h_star_l, h_star_r) = interior_face(south + c, north + c, 1);
                new_h[south + c] -= dtdx * flx.mass;
                new_hv[south + c] -= dtdx * (flx.qn - pressure(h_star_l));
                new_hu[south + c] -= dtdx * flx.qt;
                new_h[north + c] += dtdx * flx.mass;
                new_hv[north + c] += dtdx * (flx.qn - pressure(h_star_r));
                new_hu[north + c] += dtdx * flx.qt;
            }
        }
    }

    // Second-order centred bed-slope terms.
    if sx.is_some() {
        for i in 0..nx * ny {
            let (xe, ze) = face_state(i, 0, 1, h, u, v, z, sx);
            let (xw, zw) = face_state(i, 0, 0, h, u, v, z, sx);
            let fc_x = 0.5 * GRAVITY * (xw.h + xe.h) * (zw - ze);
            new_hu[i] -= dtdx * (pressure(xe.h) - pressure(xw.h) - fc_x);
            let (yn, zn) = face_state(i, 1, 1, h, u, v, z, sy);
            let (ys, zs) = face_state(i, 1, 0, h, u, v, z, sy);
            let fc_y = 0.5 * GRAVITY * (ys.h + yn.h) * (zs - zn);
            new_hv[i] -= dtdx * (pressure(yn.h) - pressure(ys.h) - fc_y);
        }
    }

    // Phase 4: semi-implicit Manning friction, wet/dry bookkeeping and the
    // non-finite scan.
    let mut clamped_volume = 0.0;
    let n2g = GRAVITY * config.manning_n * config.manning_n;
    for i in 0..nx * ny {
        let mut hn = new_h[i];
        let mut hun = new_hu[i];
        let mut hvn = new_hv[i];
        if hn < 0.0 {
            clamped_volume += -hn * cs * cs;
            hn = 0.0;
        }
        if hn <= h_dry {
            hun = 0.0;
            hvn = 0.0;
        } else if n2g > 0.0 {
            let uu = hun / hn;
            let vv = hvn / hn;
            let speed = (uu * uu + vv * vv).sqrt();
            if speed > 0.0 {
                let h43 = (hn * hn * hn * hn).cbrt();
                let denom = 1.0 + dt * n2g * speed / h43;
                hun /= denom;
                hvn /= denom;
            }
        }
        if !(hn.is_finite() && hun.is_finite() && hvn.is_finite()) {
            return Err(SolverError::NonFinite {
                row: i / nx,
                col: i % nx,
                time: t,
            });
        }
        state.h[i] = hn;
        state.hu[i] = hun;
        state.hv[i] = hvn;
    }

    Ok(StepStats {
        dt,
        boundary_net_volume,
        clamped_volume,
    })
}

/// Run a full event and return the per-cell maximal depth raster plus run
/// diagnostics. Deterministic for fixed inputs.
pub fn run_simulation(
    dem: &Raster,
    config: &SolverConfig,
    bc: &BoundarySpec,
    hydrograph: &Hydrograph,
    initial: InitialCondition,
) -> Result<(Raster, RunSummary), SolverError> {
    config.validate()?;
    let started = Instant::now();
    for (i, &zv) in dem.values.iter().enumerate() {
        if dem.is_nodata(zv) {
            return Err(SolverError::NodataInDem {
                row: i / dem.ncols(),
                col: i % dem.ncols(),
            });
        }
    }
    let (nx, ny) = (dem.ncols(), dem.nrows());
    let cs = dem.header.cellsize;
    let mut state = FlowState::dry(nx, ny);
    let mut scratch = Scratch::new(nx * ny, config.reconstruction);

    let mut spinup_steps = 0u64;
    let mut spinup_time = 0.0;
    if initial == InitialCondition::SteadyFromConstantQ {
        let q0 = hydrograph.eval(0.0);
        let bc0 = bc.with_inflow(q0);
        let mut t = 0.0;
        let mut prev_volume = state.volume(cs);
        let mut next_check = SPINUP_CHECK_INTERVAL;
        loop {
            let stats = step_with_scratch(
                &mut state,
                dem,
                config,
                &bc0,
                t,
                next_check - t,
                &mut scratch,
            )?;
            t += stats.dt;
            spinup_steps += 1;
            if t >= next_check {
                let vol = state.volume(cs);
                let rel = (vol - prev_volume).abs() / vol.max(1e-12);
                prev_volume = vol;
                next_check += SPINUP_CHECK_INTERVAL;
                if rel < SPINUP_REL_TOL && spinup_steps > 1 {
                    break;
                }
            }
            if t > SPINUP_MAX_TIME {
                return Err(SolverError::SteadyStateNotReached { time: t });
            }
        }
        spinup_time = t;
        log::debug!(
            "spin-up frozen after {spinup_steps} steps ({spinup_time:.1} s model time), volume {:.3} m^3",
            state.volume(cs)
        );
    }

    let mut max_depth: Vec<f64> = state.h.clone();
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut dt_min = f64::INFINITY;
    let mut dt_max: f64 = 0.0;
    let mut dt_sum = 0.0;
    let mut clamped = 0.0;
    let mut next_report = config.output_interval.max(1e-9);
    while t < config.t_end {
        let bc_t = bc.with_inflow(hydrograph.eval(t));
        let stats = step_with_scratch(
            &mut state,
            dem,
            config,
            &bc_t,
            t,
            config.t_end - t,
            &mut scratch,
        )?;
        t += stats.dt;
        steps += 1;
        dt_min = dt_min.min(stats.dt);
        dt_max = dt_max.max(stats.dt);
        dt_sum += stats.dt;
        clamped += stats.clamped_volume;
        for (m, &hv) in max_depth.iter_mut().zip(&state.h) {
            if hv > *m {
                *m = hv;
            }
        }
        if t >= next_report {
            log::debug!(
                "t = {t:.1} s, dt = {:.4} s, volume = {:.3} m^3",
                stats.dt,
                state.volume(cs)
            );
            next_report += config.output_interval.max(1e-9);
        }
    }

    let summary = RunSummary {
        steps,
        dt_min: if steps == 0 { 0.0 } else { dt_min },
        dt_max,
        dt_mean: if steps == 0 { 0.0 } else { dt_sum / steps as f64 },
        sim_time: t,
        spinup_steps,
        spinup_time,
        final_volume_m3: state.volume(cs),
        clamped_volume_m3: clamped,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let raster = Raster::new(dem.header, max_depth)?;
    Ok((raster, summary))
}
