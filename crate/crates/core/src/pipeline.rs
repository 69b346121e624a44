//! Request types and end-to-end runs shared by the CLI and the HTTP
//! service, so both produce identical results for identical inputs.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::circular::{
    optimize_circular, optimize_cover_oriented, CircularGeofence, CircularParams, CircularSolution,
    COVER_ORIENTED_EPSILON,
};
use crate::error::{Error, Result};
use crate::eval::{coverage_report, CoverageReport, Region};
use crate::ingest::{
    discretize, filter_min_points, filter_region, normalize, parse_trajectories, poi_to_cell, BBox, CellMatrix,
    CsvOptions, DensityNorm, GridSpec, LocalProjection, NormalizedData, PoiCell, TimeFormat, TrajectorySet,
};
use crate::model::{build_model, AreaWindow, ModelFlags, QuadraticModel, Weights};
use crate::solver::{solve_hierarchical, solve_model, EXACT_LIMIT, HierarchicalParams, SolveResult, SolverKind};
use crate::synth::{build_dataset, SynthConfig};

/// Preprocessing applied after parsing, in order: projection, region
/// filter, minimum points per user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    pub has_header: Option<bool>,
    pub iso_time: bool,
    /// Treat `x, y` as longitude and latitude and project them to metres.
    pub latlon: bool,
    /// Region center in input units (longitude, latitude with `latlon`).
    pub region_center: Option<[f64; 2]>,
    /// Region radius in projected units.
    pub region_radius: Option<f64>,
    pub min_points: Option<usize>,
}

impl IngestOptions {
    fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            has_header: self.has_header.unwrap_or(true),
            time_format: if self.iso_time { TimeFormat::Iso8601 } else { TimeFormat::Seconds },
        }
    }
}

/// Parses CSV trajectories and applies [`IngestOptions`]. Fails when nothing
/// survives the filters.
pub fn ingest<R: Read>(source: R, opts: &IngestOptions) -> Result<TrajectorySet> {
    let mut data = parse_trajectories(source, &opts.csv_options())?;
    let mut center = opts.region_center.map(|[x, y]| (x, y));
    if opts.latlon {
        let proj = LocalProjection::centered_on(&data)?;
        data = proj.project_set(&data);
        center = center.map(|(lon, lat)| proj.project(lon, lat));
    }
    match (center, opts.region_radius) {
        (Some(c), Some(r)) => data = filter_region(&data, c, r)?,
        (None, None) => {}
        _ => return Err(Error::invalid("region center and radius must be given together")),
    }
    if let Some(min) = opts.min_points {
        data = filter_min_points(&data, min)?;
    }
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(data)
}

/// Trajectories in source units plus any POIs that came with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub data: TrajectorySet,
    pub pois: Vec<[f64; 2]>,
}

impl Dataset {
    pub fn from_synth(config: &SynthConfig) -> Result<Self> {
        let ds = build_dataset(config)?;
        Ok(Self { data: ds.data, pois: ds.pois.into_iter().map(|(x, y)| [x, y]).collect() })
    }

    pub fn normalized(&self) -> Result<NormalizedData> {
        normalize(&self.data)
    }
}

/// A POI given either in source units or directly as a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoiSpec {
    Point { x: f64, y: f64 },
    Cell { row: usize, col: usize },
}

impl PoiSpec {
    pub fn cell(&self, bbox: &BBox, d: u32) -> Result<PoiCell> {
        match *self {
            PoiSpec::Point { x, y } => poi_to_cell((x, y), bbox, d),
            PoiSpec::Cell { row, col } => {
                let side = 1usize << d.min(usize::BITS - 1);
                if row >= side || col >= side {
                    return Err(Error::invalid(format!("POI cell ({row}, {col}) outside a {side}x{side} grid")));
                }
                Ok(PoiCell { row, col })
            }
        }
    }

    /// Normalized coordinates; a cell maps to its center.
    pub fn unit_point(&self, bbox: &BBox, side: usize) -> Result<(f64, f64)> {
        match *self {
            PoiSpec::Point { x, y } => {
                if !bbox.contains(x, y) {
                    return Err(Error::OutsideBbox { x, y });
                }
                Ok(bbox.to_unit(x, y))
            }
            PoiSpec::Cell { row, col } => {
                if row >= side || col >= side {
                    return Err(Error::invalid(format!("POI cell ({row}, {col}) outside a {side}x{side} grid")));
                }
                let l = side as f64;
                Ok(((col as f64 + 0.5) / l, (row as f64 + 0.5) / l))
            }
        }
    }
}

/// Area window as fractions of the cell count or as absolute cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Fractions { min_frac: f64, max_frac: f64 },
    Cells { min_cells: usize, max_cells: usize },
}

impl WindowSpec {
    /// Window with `max` as given and `min = 0.8 * max`.
    pub fn from_max_fraction(max_frac: f64) -> Self {
        WindowSpec::Fractions { min_frac: 0.8 * max_frac, max_frac }
    }

    pub fn resolve(&self, n: usize) -> Result<AreaWindow> {
        match *self {
            WindowSpec::Fractions { min_frac, max_frac } => AreaWindow::from_fractions(min_frac, max_frac, n),
            WindowSpec::Cells { min_cells, max_cells } => AreaWindow::new(min_cells, max_cells, n),
        }
    }

    fn fractions(&self, n: usize) -> (f64, f64) {
        match *self {
            WindowSpec::Fractions { min_frac, max_frac } => (min_frac, max_frac),
            WindowSpec::Cells { min_cells, max_cells } => (min_cells as f64 / n as f64, max_cells as f64 / n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRequest {
    pub poi: PoiSpec,
    pub d: u32,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub window: Option<WindowSpec>,
    #[serde(default)]
    pub flags: ModelFlags,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub seed: u64,
    /// Coarse level of the hierarchical solver; defaults to `d - 2`
    /// (at least 1).
    #[serde(default)]
    pub d_coarse: Option<u32>,
    #[serde(default)]
    pub density_norm: DensityNorm,
}

impl DiscreteRequest {
    pub fn new(poi: PoiSpec, d: u32) -> Self {
        Self {
            poi,
            d,
            weights: Weights::default(),
            window: None,
            flags: ModelFlags::default(),
            solver: SolverKind::default(),
            seed: 0,
            d_coarse: None,
            density_norm: DensityNorm::default(),
        }
    }
}

/// Cheap validation of a request against its dataset: everything that can
/// be rejected without solving, including unreachable area windows.
pub fn check_discrete(data: &TrajectorySet, req: &DiscreteRequest) -> Result<()> {
    req.weights.validate()?;
    let nd = normalize(data)?;
    let spec = GridSpec::new(req.d, nd.bbox)?;
    let n = spec.cell_count();
    let poi = req.poi.cell(&nd.bbox, req.d)?;
    if req.flags.dw_directions.is_empty() {
        return Err(Error::invalid("at least one domain-wall direction is required"));
    }
    let forbidden = &req.flags.forbidden_cells;
    if let Some(&bad) = forbidden.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("forbidden cell {bad} outside the {n}-cell grid")));
    }
    if req.flags.poi_hard && forbidden.contains(&poi.index(spec.side())) {
        return Err(Error::Infeasible("the POI cell is forbidden while poi_hard is set".into()));
    }
    let ones = usize::from(req.flags.poi_hard);
    let free = n - forbidden.len() - ones;
    if let Some(w) = req.window {
        let w = w.resolve(n)?;
        if ones > w.max_cells || ones + free < w.min_cells {
            return Err(Error::Infeasible(format!(
                "area window [{}, {}] unreachable: fixed cells allow only [{ones}, {}] selected",
                w.min_cells,
                w.max_cells,
                ones + free
            )));
        }
    }
    match req.solver {
        SolverKind::Exact if free > EXACT_LIMIT => Err(Error::TooManyVariables { free, limit: EXACT_LIMIT }),
        SolverKind::Hier => match req.d_coarse {
            Some(dc) if dc == 0 || dc >= req.d => {
                Err(Error::invalid(format!("coarse level {dc} must lie in 1..{}", req.d)))
            }
            None if req.d < 2 => Err(Error::invalid("the hierarchical solver needs d >= 2")),
            _ => Ok(()),
        },
        _ => Ok(()),
    }
}

pub fn check_circular(data: &TrajectorySet, req: &CircularRequest) -> Result<()> {
    req.params.validate()?;
    if let Some(eps) = req.epsilon {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {eps}")));
        }
    }
    if let Some(r) = req.r_star {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("r_star must be positive, got {r}")));
        }
    }
    let nd = normalize(data)?;
    circular_poi(req, &nd.bbox).map(|_| ())
}

fn circular_poi(req: &CircularRequest, bbox: &BBox) -> Result<(f64, f64)> {
    let side = match (req.poi, req.d) {
        (PoiSpec::Point { .. }, _) => 1,
        (PoiSpec::Cell { .. }, Some(d)) => GridSpec::new(d, *bbox)?.side(),
        (PoiSpec::Cell { .. }, None) => return Err(Error::invalid("a cell-valued POI needs the grid level d")),
    };
    req.poi.unit_point(bbox, side)
}

#[derive(Debug, Clone)]
pub struct DiscreteOutcome {
    pub result: SolveResult,
    pub coverage: CoverageReport,
    pub density: CellMatrix,
}

/// The quadratic model a request describes, without solving it.
pub fn discrete_model(data: &TrajectorySet, req: &DiscreteRequest) -> Result<QuadraticModel> {
    req.weights.validate()?;
    let nd = normalize(data)?;
    let density = discretize(&nd, req.d, req.density_norm)?;
    let poi = req.poi.cell(&nd.bbox, req.d)?;
    let window = req.window.map(|w| w.resolve(density.spec.cell_count())).transpose()?;
    build_model(&density, poi, &req.weights, window, &req.flags)
}

/// Normalize, discretize, build the model and solve.
pub fn solve_discrete(data: &TrajectorySet, req: &DiscreteRequest) -> Result<DiscreteOutcome> {
    req.weights.validate()?;
    let nd = normalize(data)?;
    let density = discretize(&nd, req.d, req.density_norm)?;
    let poi = req.poi.cell(&nd.bbox, req.d)?;
    let n = density.spec.cell_count();
    let result = match req.solver {
        SolverKind::Hier => {
            let params = HierarchicalParams {
                d_coarse: req.d_coarse.unwrap_or(req.d.saturating_sub(2).max(1)),
                window_frac: req.window.map(|w| w.fractions(n)),
                seed: req.seed,
            };
            solve_hierarchical(&density, poi, &req.weights, &req.flags, &params)?.result
        }
        kind => {
            let window = req.window.map(|w| w.resolve(n)).transpose()?;
            let model = build_model(&density, poi, &req.weights, window, &req.flags)?;
            solve_model(&model, kind, req.seed)?
        }
    };
    let coverage = coverage_report(&Region::from(&result.geofence), &nd.set)?;
    Ok(DiscreteOutcome { result, coverage, density })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularRequest {
    pub poi: PoiSpec,
    #[serde(default)]
    pub params: CircularParams,
    /// Re-optimize for coverage with the radius held near the first
    /// solution's radius.
    #[serde(default)]
    pub cover_oriented: bool,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Radius the cover-oriented run is held near, in normalized units.
    /// Taken from a distance-optimal run when absent.
    #[serde(default)]
    pub r_star: Option<f64>,
    /// Grid level a cell-valued POI refers to.
    #[serde(default)]
    pub d: Option<u32>,
}

/// Serialized circular result. The circle is in normalized units;
/// `center_source` and `bbox` map it back to source units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularResultDoc {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub objective: f64,
    pub coverage: f64,
    pub center_source: [f64; 2],
    pub bbox: BBox,
    pub poi: [f64; 2],
    pub seed: u64,
    pub cover_oriented: bool,
}

impl CircularResultDoc {
    pub fn geofence(&self) -> Result<CircularGeofence> {
        CircularGeofence::new(self.cx, self.cy, self.r)
    }
}

#[derive(Debug, Clone)]
pub struct CircularOutcome {
    pub doc: CircularResultDoc,
    pub solution: CircularSolution,
    /// The distance-optimal circle the cover-oriented run started from.
    pub original: Option<CircularSolution>,
    pub report: CoverageReport,
}

pub fn solve_circular(data: &TrajectorySet, req: &CircularRequest) -> Result<CircularOutcome> {
    let nd = normalize(data)?;
    let poi = circular_poi(req, &nd.bbox)?;
    let eps = req.epsilon.unwrap_or(COVER_ORIENTED_EPSILON);
    let (solution, original) = match (req.cover_oriented, req.r_star) {
        (true, Some(r_star)) => (optimize_cover_oriented(&nd.set, poi, r_star, eps, &req.params)?, None),
        (true, None) => {
            let first = optimize_circular(&nd.set, poi, &req.params)?;
            (optimize_cover_oriented(&nd.set, poi, first.geofence.r, eps, &req.params)?, Some(first))
        }
        (false, _) => (optimize_circular(&nd.set, poi, &req.params)?, None),
    };
    let report = coverage_report(&Region::Circular(solution.geofence), &nd.set)?;
    let g = solution.geofence;
    let (sx, sy) = nd.bbox.from_unit(g.cx, g.cy);
    let doc = CircularResultDoc {
        cx: g.cx,
        cy: g.cy,
        r: g.r,
        objective: solution.objective,
        coverage: solution.coverage,
        center_source: [sx, sy],
        bbox: nd.bbox,
        poi: [poi.0, poi.1],
        seed: req.params.seed,
        cover_oriented: req.cover_oriented,
    };
    Ok(CircularOutcome { doc, solution, original, report })
}

/// Density matrix of a dataset at level `d`.
pub fn grid(data: &TrajectorySet, d: u32, norm: DensityNorm) -> Result<CellMatrix> {
    discretize(&normalize(data)?, d, norm)
}
