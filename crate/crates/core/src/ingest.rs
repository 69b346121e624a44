//! Trajectory ingestion: CSV parsing, spatial and per-user filtering,
//! normalization to the unit square and discretization into the density
//! matrix `V`.
//!
//! Grid convention used throughout the crate: a grid of discretization level
//! `d` has `side = 2^d` cells per axis, cells are stored row-major, `row`
//! indexes the y axis and `col` the x axis, and row 0 holds the minimum y.
//! Bins are half-open `[k/L, (k+1)/L)` except the last, which is closed at 1.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported discretization level (4^10 cells).
pub const MAX_LEVEL: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub uid: String,
    pub points: Vec<TrajectoryPoint>,
}

/// Per-user trajectories, sorted by uid, each sorted by time and non-empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectorySet {
    trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(mut trajectories: Vec<Trajectory>) -> Result<Self> {
        trajectories.sort_by(|a, b| a.uid.cmp(&b.uid));
        for pair in trajectories.windows(2) {
            if pair[0].uid == pair[1].uid {
                return Err(Error::invalid(format!("duplicate uid {:?}", pair[0].uid)));
            }
        }
        for traj in &mut trajectories {
            if traj.points.is_empty() {
                return Err(Error::invalid(format!("trajectory {:?} is empty", traj.uid)));
            }
            if let Some(p) = traj.points.iter().find(|p| !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite())) {
                return Err(Error::invalid(format!(
                    "trajectory {:?} has a non-finite point ({}, {}, {})",
                    traj.uid, p.t, p.x, p.y
                )));
            }
            traj.points.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        Ok(Self { trajectories })
    }

    /// Groups `(uid, point)` records into trajectories.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, TrajectoryPoint)>,
    {
        let mut grouped: BTreeMap<String, Vec<TrajectoryPoint>> = BTreeMap::new();
        for (uid, p) in records {
            grouped.entry(uid).or_default().push(p);
        }
        Self::new(grouped.into_iter().map(|(uid, points)| Trajectory { uid, points }).collect())
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    /// Number of users.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.points.len()).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &TrajectoryPoint> {
        self.trajectories.iter().flat_map(|t| t.points.iter())
    }

    fn map_points(&self, mut f: impl FnMut(&TrajectoryPoint) -> Option<TrajectoryPoint>) -> Self {
        let trajectories = self
            .trajectories
            .iter()
            .filter_map(|traj| {
                let points: Vec<_> = traj.points.iter().filter_map(&mut f).collect();
                (!points.is_empty()).then(|| Trajectory { uid: traj.uid.clone(), points })
            })
            .collect();
        Self { trajectories }
    }
}

impl<'a> IntoIterator for &'a TrajectorySet {
    type Item = &'a Trajectory;
    type IntoIter = std::slice::Iter<'a, Trajectory>;

    fn into_iter(self) -> Self::IntoIter {
        self.trajectories.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    #[default]
    Seconds,
    Iso8601,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub has_header: bool,
    pub time_format: TimeFormat,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { has_header: true, time_format: TimeFormat::Seconds }
    }
}

fn parse_time(raw: &str, format: TimeFormat) -> std::result::Result<f64, String> {
    match format {
        TimeFormat::Seconds => raw.parse::<f64>().map_err(|_| format!("non-numeric timestamp {raw:?}")),
        TimeFormat::Iso8601 => {
            if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
                return Ok(dt.timestamp_millis() as f64 / 1000.0);
            }
            for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, fmt) {
                    return Ok(dt.and_utc().timestamp_millis() as f64 / 1000.0);
                }
            }
            Err(format!("unparseable ISO-8601 timestamp {raw:?}"))
        }
    }
}

fn parse_coord(raw: &str, name: &str) -> std::result::Result<f64, String> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("non-numeric {name} coordinate {raw:?}")),
    }
}

/// Reads `uid,t,x,y` rows. Points are grouped by uid and sorted by time.
pub fn parse_trajectories<R: Read>(source: R, opts: &CsvOptions) -> Result<TrajectorySet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| match e.position() {
            Some(pos) => Error::Parse { line: pos.line(), message: e.to_string() },
            None => Error::Io(std::io::Error::other(e.to_string())),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        if row.len() < 4 {
            return Err(Error::Parse { line, message: format!("expected 4 columns uid,t,x,y, got {}", row.len()) });
        }
        let parsed = (|| {
            let t = parse_time(&row[1], opts.time_format)?;
            let x = parse_coord(&row[2], "x")?;
            let y = parse_coord(&row[3], "y")?;
            Ok::<_, String>(TrajectoryPoint { t, x, y })
        })()
        .map_err(|message| Error::Parse { line, message })?;
        records.push((row[0].to_string(), parsed));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    TrajectorySet::from_records(records)
}

/// Writes `uid,t,x,y` with a header row.
pub fn write_trajectories<W: Write>(set: &TrajectorySet, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    writer.write_record(["uid", "t", "x", "y"]).map_err(to_io)?;
    for traj in set {
        for p in &traj.points {
            writer
                .write_record([traj.uid.as_str(), &p.t.to_string(), &p.x.to_string(), &p.y.to_string()])
                .map_err(to_io)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Keeps points strictly closer than `radius` to `center`.
pub fn filter_region(data: &TrajectorySet, center: (f64, f64), radius: f64) -> Result<TrajectorySet> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("region radius must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    Ok(data.map_points(|p| {
        let (dx, dy) = (p.x - center.0, p.y - center.1);
        (dx * dx + dy * dy < r2).then_some(*p)
    }))
}

/// Drops users with fewer than `min_points` points.
pub fn filter_min_points(data: &TrajectorySet, min_points: usize) -> Result<TrajectorySet> {
    if min_points == 0 {
        return Err(Error::invalid("min_points must be at least 1"));
    }
    let trajectories = data.iter().filter(|t| t.points.len() >= min_points).cloned().collect();
    Ok(TrajectorySet { trajectories })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let ok = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::invalid("bounding box must be finite"));
        }
        if xmax <= xmin {
            return Err(Error::DegenerateAxis { axis: 'x' });
        }
        if ymax <= ymin {
            return Err(Error::DegenerateAxis { axis: 'y' });
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub const fn unit() -> Self {
        Self { xmin: 0.0, ymin: 0.0, xmax: 1.0, ymax: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    pub fn to_unit(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.xmin) / self.width(), (y - self.ymin) / self.height())
    }

    pub fn from_unit(&self, u: f64, v: f64) -> (f64, f64) {
        (self.xmin + u * self.width(), self.ymin + v * self.height())
    }
}

/// A trajectory set mapped onto the unit square together with the source
/// extent needed to map back.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedData {
    pub set: TrajectorySet,
    pub bbox: BBox,
}

/// Per-axis affine map of the data extent onto `[0, 1]`.
pub fn normalize(data: &TrajectorySet) -> Result<NormalizedData> {
    let mut pts = data.points();
    let first = pts.next().ok_or(Error::EmptyInput)?;
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (first.x, first.x, first.y, first.y);
    for p in pts {
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let bbox = BBox::new(xmin, ymin, xmax, ymax)?;
    Ok(normalize_with(data, bbox))
}

/// Maps `data` through `bbox`'s affine transform. Endpoints of the box land
/// on exactly 0 and 1; points outside it fall outside the unit square.
pub fn normalize_with(data: &TrajectorySet, bbox: BBox) -> NormalizedData {
    let set = data.map_points(|p| {
        let u = if p.x == bbox.xmax { 1.0 } else { (p.x - bbox.xmin) / bbox.width() };
        let v = if p.y == bbox.ymax { 1.0 } else { (p.y - bbox.ymin) / bbox.height() };
        Some(TrajectoryPoint { t: p.t, x: u, y: v })
    });
    NormalizedData { set, bbox }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: u32,
    pub bbox: BBox,
}

impl GridSpec {
    pub fn new(d: u32, bbox: BBox) -> Result<Self> {
        if d == 0 || d > MAX_LEVEL {
            return Err(Error::invalid(format!("discretization level must be in 1..={MAX_LEVEL}, got {d}")));
        }
        Ok(Self { d, bbox })
    }

    /// Cells per axis, `L = 2^d`.
    pub fn side(&self) -> usize {
        1usize << self.d
    }

    pub fn cell_count(&self) -> usize {
        self.side() * self.side()
    }

    /// Cell rectangle `(x0, y0, x1, y1)` in source units.
    pub fn cell_rect(&self, cell: PoiCell) -> (f64, f64, f64, f64) {
        let l = self.side() as f64;
        let (x0, y0) = self.bbox.from_unit(cell.col as f64 / l, cell.row as f64 / l);
        let (x1, y1) = self.bbox.from_unit((cell.col + 1) as f64 / l, (cell.row + 1) as f64 / l);
        (x0, y0, x1, y1)
    }
}

/// Bin of a unit-interval coordinate; `None` outside `[0, 1]`.
pub fn bin_index(v: f64, side: usize) -> Option<usize> {
    if !(0.0..=1.0).contains(&v) {
        return None;
    }
    Some(((v * side as f64) as usize).min(side - 1))
}

/// Cell of a normalized point; `None` outside the unit square.
pub fn cell_of(x: f64, y: f64, side: usize) -> Option<PoiCell> {
    Some(PoiCell { row: bin_index(y, side)?, col: bin_index(x, side)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoiCell {
    pub row: usize,
    pub col: usize,
}

impl PoiCell {
    pub fn index(&self, side: usize) -> usize {
        self.row * side + self.col
    }

    pub fn from_index(idx: usize, side: usize) -> Self {
        Self { row: idx / side, col: idx % side }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityNorm {
    /// Divide unique-user counts by the largest cell count.
    #[default]
    MaxCell,
    /// Divide unique-user counts by the number of users.
    UserCount,
}

/// The density matrix `V`, row-major, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMatrix {
    pub spec: GridSpec,
    values: Vec<f64>,
}

impl CellMatrix {
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(Error::ShapeMismatch { expected: spec.cell_count(), actual: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("density value {v} outside [0, 1]")));
        }
        Ok(Self { spec, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn side(&self) -> usize {
        self.spec.side()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side() + col]
    }
}

/// Number of distinct users with at least one point in each cell.
pub fn unique_user_counts(data: &TrajectorySet, side: usize) -> Result<Vec<u32>> {
    let mut counts = vec![0u32; side * side];
    let mut seen = HashSet::new();
    for traj in data {
        seen.clear();
        for p in &traj.points {
            let cell = cell_of(p.x, p.y, side).ok_or(Error::OutOfRange { x: p.x, y: p.y })?;
            seen.insert(cell.index(side));
        }
        for &idx in &seen {
            counts[idx] += 1;
        }
    }
    Ok(counts)
}

/// Counts unique users per cell and rescales into `[0, 1]`.
pub fn discretize(data: &NormalizedData, d: u32, norm: DensityNorm) -> Result<CellMatrix> {
    let spec = GridSpec::new(d, data.bbox)?;
    let counts = unique_user_counts(&data.set, spec.side())?;
    let denom = match norm {
        DensityNorm::MaxCell => counts.iter().copied().max().unwrap_or(0) as f64,
        DensityNorm::UserCount => data.set.len() as f64,
    };
    let values = counts
        .iter()
        .map(|&c| if denom > 0.0 { (c as f64 / denom).min(1.0) } else { 0.0 })
        .collect();
    CellMatrix::from_values(spec, values)
}

/// Maps a source-unit POI onto its grid cell.
pub fn poi_to_cell(poi: (f64, f64), bbox: &BBox, d: u32) -> Result<PoiCell> {
    let spec = GridSpec::new(d, *bbox)?;
    if !bbox.contains(poi.0, poi.1) {
        return Err(Error::OutsideBbox { x: poi.0, y: poi.1 });
    }
    let (u, v) = bbox.to_unit(poi.0, poi.1);
    cell_of(u.clamp(0.0, 1.0), v.clamp(0.0, 1.0), spec.side()).ok_or(Error::OutOfRange { x: u, y: v })
}

/// Equirectangular projection around a reference point, returning metres.
/// Accurate to metre level over a few kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalProjection {
    pub lon0: f64,
    pub lat0: f64,
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

impl LocalProjection {
    /// Reference point at the centroid of the data; input `x` is longitude
    /// and `y` latitude in degrees.
    pub fn centered_on(data: &TrajectorySet) -> Result<Self> {
        let n = data.point_count();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let (sx, sy) = data.points().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Ok(Self { lon0: sx / n as f64, lat0: sy / n as f64 })
    }

    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        let x = EARTH_RADIUS_M * (lon - self.lon0).to_radians() * self.lat0.to_radians().cos();
        let y = EARTH_RADIUS_M * (lat - self.lat0).to_radians();
        (x, y)
    }

    pub fn project_set(&self, data: &TrajectorySet) -> TrajectorySet {
        data.map_points(|p| {
            let (x, y) = self.project(p.x, p.y);
            Some(TrajectoryPoint { t: p.t, x, y })
        })
    }
}
