use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use dgeofence::circular::CircularParams;
use dgeofence::eval::{compare_report, coverage_report, write_scatter_csv, Geofence, Region};
use dgeofence::export::{export_circular, export_discrete, properties};
use dgeofence::ingest::{normalize, normalize_with, write_trajectories, BBox, DensityNorm, TrajectorySet};
use dgeofence::model::{Direction, ModelFlags, Weights};
use dgeofence::pipeline::{
    ingest, solve_circular, solve_discrete, CircularRequest, CircularResultDoc, Dataset, DiscreteRequest,
    IngestOptions, PoiSpec, WindowSpec,
};
use dgeofence::service;
use dgeofence::solver::{SolveResultDoc, SolverKind};
use dgeofence::synth::SynthConfig;
use dgeofence::{Error, Result};

#[derive(Parser)]
#[command(name = "dgeofence", version, about = "Design discrete and circular geofences from trajectory data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter and re-emit trajectories as CSV.
    Ingest(IngestCmd),
    /// Generate a synthetic dataset.
    Synth(SynthCmd),
    /// Optimize a circular geofence.
    SolveCircular(CircularCmd),
    /// Build and solve the discrete geofence model.
    SolveDiscrete(DiscreteCmd),
    /// UCR/UPCR of a geofence against trajectories.
    Eval(EvalCmd),
    /// Per-user coverage pairs of circular and discrete geofences as CSV.
    Compare(CompareCmd),
    /// Render a result file as GeoJSON.
    Export(ExportCmd),
    /// Run the HTTP service.
    Serve(ServeCmd),
}

#[derive(Args, Clone)]
struct IngestArgs {
    /// Trajectory CSV (uid,t,x,y); stdin when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// Timestamps are ISO-8601 rather than seconds.
    #[arg(long)]
    iso_time: bool,
    /// Coordinates are longitude/latitude; project to metres.
    #[arg(long)]
    latlon: bool,
    /// Keep points strictly within `--region-radius` of X,Y.
    #[arg(long, value_name = "X,Y", value_parser = parse_pair, requires = "region_radius")]
    region_center: Option<[f64; 2]>,
    #[arg(long, requires = "region_center")]
    region_radius: Option<f64>,
    /// Drop users with fewer points.
    #[arg(long)]
    min_points: Option<usize>,
}

impl IngestArgs {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            has_header: Some(!self.no_header),
            iso_time: self.iso_time,
            latlon: self.latlon,
            region_center: self.region_center,
            region_radius: self.region_radius,
            min_points: self.min_points,
        }
    }

    fn load(&self) -> Result<TrajectorySet> {
        match &self.data {
            Some(path) => ingest(BufReader::new(File::open(path)?), &self.options()),
            None => ingest(io::stdin().lock(), &self.options()),
        }
    }
}

#[derive(Args)]
struct IngestCmd {
    #[command(flatten)]
    input: IngestArgs,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, conflicts_with_all = ["n", "thin_p", "m", "noise", "pois"])]
    preset: Option<String>,
    #[arg(long, default_value_t = 12)]
    n: usize,
    #[arg(long, default_value_t = 0.35)]
    thin_p: f64,
    #[arg(long, default_value_t = 120)]
    m: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 2)]
    pois: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectory CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// POI list as JSON; written to stderr when absent.
    #[arg(long)]
    pois_out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("poi_arg").required(true).args(["poi", "poi_cell"])))]
struct PoiArgs {
    /// POI in source units.
    #[arg(long, value_name = "X,Y", value_parser = parse_pair)]
    poi: Option<[f64; 2]>,
    /// POI as a grid cell.
    #[arg(long, value_name = "ROW,COL", value_parser = parse_cell)]
    poi_cell: Option<[usize; 2]>,
}

impl PoiArgs {
    fn spec(&self) -> PoiSpec {
        match (self.poi, self.poi_cell) {
            (Some([x, y]), _) => PoiSpec::Point { x, y },
            (None, Some([row, col])) => PoiSpec::Cell { row, col },
            (None, None) => unreachable!("clap enforces one POI form"),
        }
    }
}

#[derive(Args)]
struct CircularCmd {
    #[command(flatten)]
    input: IngestArgs,
    #[command(flatten)]
    poi: PoiArgs,
    /// Grid level a `--poi-cell` refers to.
    #[arg(long)]
    d: Option<u32>,
    #[arg(long, default_value_t = CircularParams::default().cr_limit)]
    cr_limit: f64,
    #[arg(long, default_value_t = CircularParams::default().mu)]
    mu: f64,
    #[arg(long, default_value_t = CircularParams::default().r_min)]
    r_min: f64,
    #[arg(long, default_value_t = CircularParams::default().r_max)]
    r_max: f64,
    #[arg(long, default_value_t = CircularParams::default().population)]
    population: usize,
    #[arg(long, default_value_t = CircularParams::default().generations)]
    generations: usize,
    /// Optimize the negated objective.
    #[arg(long)]
    maximize: bool,
    /// Re-optimize for coverage with the radius held near the optimum.
    #[arg(long)]
    cover_oriented: bool,
    /// Radius to hold the cover-oriented run near, in normalized units;
    /// taken from a distance-optimal run when absent.
    #[arg(long, requires = "cover_oriented")]
    r_star: Option<f64>,
    #[arg(long, requires = "cover_oriented")]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the geofence as GeoJSON.
    #[arg(long)]
    geojson: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct DiscreteCmd {
    #[command(flatten)]
    input: IngestArgs,
    #[command(flatten)]
    poi: PoiArgs,
    #[arg(long)]
    d: u32,
    #[arg(long, default_value_t = Weights::default().a_area)]
    a_area: f64,
    #[arg(long, default_value_t = Weights::default().a_cover)]
    a_cover: f64,
    #[arg(long = "a-2dw", default_value_t = Weights::default().a_2dw)]
    a_2dw: f64,
    #[arg(long, default_value_t = Weights::default().a_ng)]
    a_ng: f64,
    #[arg(long, default_value_t = Weights::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = Weights::default().sigma)]
    sigma: f64,
    /// Largest selected fraction of cells.
    #[arg(long, conflicts_with = "window_cells")]
    window_max: Option<f64>,
    /// Smallest selected fraction of cells; defaults to 0.8 x the maximum.
    #[arg(long, requires = "window_max")]
    window_min: Option<f64>,
    /// Window as absolute cell counts.
    #[arg(long, value_name = "MIN,MAX", value_parser = parse_cell)]
    window_cells: Option<[usize; 2]>,
    /// Largest selected share of cells, in percent.
    #[arg(long, conflicts_with_all = ["window_max", "window_cells"])]
    area_max_pct: Option<f64>,
    /// Smallest selected share of cells, in percent; defaults to 0.8 x the maximum.
    #[arg(long, requires = "area_max_pct")]
    area_min_pct: Option<f64>,
    /// Force the POI cell into the geofence.
    #[arg(long)]
    poi_hard: bool,
    /// Domain-wall directions.
    #[arg(long, visible_alias = "dw-dirs", value_delimiter = ',', default_values_t = Direction::DEFAULT.to_vec())]
    dw: Vec<Direction>,
    /// Row-major cell indices excluded from the geofence.
    #[arg(long, value_delimiter = ',')]
    forbid: Vec<usize>,
    #[arg(long, default_value = "anneal")]
    solver: SolverKind,
    #[arg(long)]
    d_coarse: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Divide cell counts by the number of users instead of the peak cell.
    #[arg(long)]
    density_by_users: bool,
    /// Also write the geofence as GeoJSON.
    #[arg(long)]
    geojson: Option<PathBuf>,
    /// Also write the coverage report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

impl DiscreteCmd {
    fn request(&self) -> DiscreteRequest {
        let max = self.window_max.or(self.area_max_pct.map(|p| p / 100.0));
        let min = self.window_min.or(self.area_min_pct.map(|p| p / 100.0));
        let window = match (max, self.window_cells) {
            (Some(max_frac), _) => Some(match min {
                Some(min_frac) => WindowSpec::Fractions { min_frac, max_frac },
                None => WindowSpec::from_max_fraction(max_frac),
            }),
            (None, Some([min_cells, max_cells])) => Some(WindowSpec::Cells { min_cells, max_cells }),
            (None, None) => None,
        };
        DiscreteRequest {
            poi: self.poi.spec(),
            d: self.d,
            weights: Weights {
                a_area: self.a_area,
                a_cover: self.a_cover,
                a_2dw: self.a_2dw,
                a_ng: self.a_ng,
                alpha: self.alpha,
                sigma: self.sigma,
            },
            window,
            flags: ModelFlags {
                poi_hard: self.poi_hard,
                dw_directions: self.dw.clone(),
                forbidden_cells: self.forbid.iter().copied().collect(),
            },
            solver: self.solver,
            seed: self.seed,
            d_coarse: self.d_coarse,
            density_norm: if self.density_by_users { DensityNorm::UserCount } else { DensityNorm::MaxCell },
        }
    }
}

#[derive(Args)]
struct EvalCmd {
    /// Result file from solve-discrete or solve-circular.
    #[arg(long)]
    geofence: PathBuf,
    #[command(flatten)]
    input: IngestArgs,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct CompareCmd {
    /// Circular result files, optionally as LABEL=PATH.
    #[arg(long, required = true, num_args = 1..)]
    circular: Vec<String>,
    /// Discrete result files, optionally as LABEL=PATH.
    #[arg(long, required = true, num_args = 1..)]
    discrete: Vec<String>,
    #[command(flatten)]
    input: IngestArgs,
    /// Scatter CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the UCR/UPCR table as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct ExportCmd {
    /// Result file from solve-discrete or solve-circular.
    #[arg(long)]
    result: PathBuf,
    /// GeoJSON output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeCmd {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// State directory; defaults to $DGEOFENCE_STATE_DIR or ./dgeofence-state.
    #[arg(long)]
    state_dir: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts[..] {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?,
            b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?,
        ]),
        _ => Err(format!("expected two comma-separated numbers, got {s:?}")),
    }
}

fn parse_cell(s: &str) -> std::result::Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts[..] {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?,
            b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?,
        ]),
        _ => Err(format!("expected two comma-separated integers, got {s:?}")),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &impl Serialize, pretty: bool) -> Result<()> {
    let mut out = sink(path)?;
    if pretty {
        serde_json::to_writer_pretty(&mut out, value)?;
    } else {
        serde_json::to_writer(&mut out, value)?;
    }
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// A geofence read from a result file, with the box its coordinates are
/// normalized against when known.
struct LoadedGeofence {
    region: Region,
    bbox: Option<BBox>,
    discrete: Option<dgeofence::model::DiscreteGeofence>,
    circular: Option<dgeofence::circular::CircularGeofence>,
    metadata: serde_json::Map<String, serde_json::Value>,
}

fn load_geofence(path: &Path) -> Result<LoadedGeofence> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let obj = value.as_object().cloned().unwrap_or_default();
    if obj.contains_key("selected") && obj.contains_key("breakdown") {
        let doc: SolveResultDoc = serde_json::from_value(value)?;
        let g = doc.geofence()?;
        let metadata = properties([
            ("kind", json!("discrete")),
            ("solver_id", json!(doc.solver_id)),
            ("seed", json!(doc.seed)),
            ("d", json!(doc.d)),
            ("feasible", json!(doc.feasible)),
            ("selected_cells", json!(doc.selected.len())),
            ("objective", json!(doc.breakdown.total)),
        ]);
        return Ok(LoadedGeofence { region: Region::from(&g), bbox: Some(doc.bbox), discrete: Some(g), circular: None, metadata });
    }
    if obj.contains_key("cx") && obj.contains_key("center_source") {
        let doc: CircularResultDoc = serde_json::from_value(value)?;
        let c = doc.geofence()?;
        let metadata = properties([
            ("kind", json!("circular")),
            ("seed", json!(doc.seed)),
            ("objective", json!(doc.objective)),
            ("coverage", json!(doc.coverage)),
            ("cover_oriented", json!(doc.cover_oriented)),
        ]);
        return Ok(LoadedGeofence { region: Region::Circular(c), bbox: Some(doc.bbox), discrete: None, circular: Some(c), metadata });
    }
    let g: Geofence = serde_json::from_value(value)
        .map_err(|e| Error::InvalidArgument(format!("{}: not a geofence or result file: {e}", path.display())))?;
    let region = Region::from_geofence(&g)?;
    Ok(match g {
        Geofence::Circular(c) => LoadedGeofence {
            region,
            bbox: None,
            discrete: None,
            circular: Some(c),
            metadata: properties([("kind", json!("circular"))]),
        },
        Geofence::Discrete(doc) => {
            let dg = doc.to_geofence()?;
            LoadedGeofence {
                region,
                bbox: Some(doc.bbox),
                discrete: Some(dg),
                circular: None,
                metadata: properties([("kind", json!("discrete"))]),
            }
        }
    })
}

fn normalized_for(data: &TrajectorySet, bbox: Option<BBox>) -> Result<TrajectorySet> {
    Ok(match bbox {
        Some(b) => normalize_with(data, b).set,
        None => normalize(data)?.set,
    })
}

fn labelled(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) => (label.to_string(), PathBuf::from(path)),
        None => {
            let p = PathBuf::from(arg);
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| arg.to_string());
            (label, p)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(cmd) => {
            let data = cmd.input.load()?;
            let mut out = sink(cmd.out.as_deref())?;
            write_trajectories(&data, &mut out)?;
            out.flush()?;
            let bbox = normalize(&data)?.bbox;
            eprintln!("{}", json!({ "users": data.len(), "points": data.point_count(), "bbox": bbox }));
        }
        Command::Synth(cmd) => {
            let mut config = match &cmd.preset {
                Some(name) => SynthConfig::preset(name)?,
                None => SynthConfig { n: cmd.n, thin_p: cmd.thin_p, m: cmd.m, noise_std: cmd.noise, k_pois: cmd.pois, seed: 0 },
            };
            if let Some(seed) = cmd.seed {
                config.seed = seed;
            }
            let ds = Dataset::from_synth(&config)?;
            let mut out = sink(cmd.out.as_deref())?;
            write_trajectories(&ds.data, &mut out)?;
            out.flush()?;
            let pois = json!({ "pois": ds.pois, "config": config });
            match &cmd.pois_out {
                Some(p) => write_json(Some(p), &pois, true)?,
                None => eprintln!("{pois}"),
            }
        }
        Command::SolveCircular(cmd) => {
            let data = cmd.input.load()?;
            let req = CircularRequest {
                poi: cmd.poi.spec(),
                params: CircularParams {
                    cr_limit: cmd.cr_limit,
                    mu: cmd.mu,
                    r_min: cmd.r_min,
                    r_max: cmd.r_max,
                    population: cmd.population,
                    generations: cmd.generations,
                    seed: cmd.seed,
                    maximize: cmd.maximize,
                    ..CircularParams::default()
                },
                cover_oriented: cmd.cover_oriented,
                epsilon: cmd.epsilon,
                r_star: cmd.r_star,
                d: cmd.d,
            };
            let out = solve_circular(&data, &req)?;
            if let Some(path) = &cmd.geojson {
                let props = properties([
                    ("kind", json!("circular")),
                    ("seed", json!(cmd.seed)),
                    ("objective", json!(out.doc.objective)),
                    ("coverage", json!(out.doc.coverage)),
                ]);
                let g = out.solution.geofence;
                write_json(Some(path), &export_circular(&g, &out.doc.bbox, props), true)?;
            }
            write_json(None, &out.doc, cmd.pretty)?;
        }
        Command::SolveDiscrete(cmd) => {
            let data = cmd.input.load()?;
            let out = solve_discrete(&data, &cmd.request())?;
            if let Some(path) = &cmd.geojson {
                let r = &out.result;
                let props = properties([
                    ("kind", json!("discrete")),
                    ("solver_id", json!(r.solver_id)),
                    ("seed", json!(r.seed)),
                    ("d", json!(r.geofence.spec.d)),
                    ("feasible", json!(r.feasible)),
                    ("objective", json!(r.breakdown.total)),
                    ("ucr", json!(out.coverage.ucr)),
                    ("upcr_mean", json!(out.coverage.upcr_mean)),
                ]);
                write_json(Some(path), &export_discrete(&r.geofence, &r.geofence.spec.bbox, props)?, true)?;
            }
            if let Some(path) = &cmd.report {
                write_json(Some(path), &out.coverage, true)?;
            }
            write_json(None, &out.result, cmd.pretty)?;
        }
        Command::Eval(cmd) => {
            let g = load_geofence(&cmd.geofence)?;
            let data = normalized_for(&cmd.input.load()?, g.bbox)?;
            write_json(None, &coverage_report(&g.region, &data)?, cmd.pretty)?;
        }
        Command::Compare(cmd) => {
            let mut circular = Vec::new();
            let mut discrete = Vec::new();
            let mut bbox = None;
            for arg in &cmd.circular {
                let (label, path) = labelled(arg);
                let g = load_geofence(&path)?;
                let c = g.circular.ok_or_else(|| Error::InvalidArgument(format!("{} is not circular", path.display())))?;
                bbox = bbox.or(g.bbox);
                circular.push((label, c));
            }
            for arg in &cmd.discrete {
                let (label, path) = labelled(arg);
                let g = load_geofence(&path)?;
                let d = g.discrete.ok_or_else(|| Error::InvalidArgument(format!("{} is not discrete", path.display())))?;
                bbox = bbox.or(g.bbox);
                discrete.push((label, d));
            }
            let data = normalized_for(&cmd.input.load()?, bbox)?;
            let report = compare_report(&circular, &discrete, &data)?;
            let mut out = sink(cmd.out.as_deref())?;
            write_scatter_csv(&report, &mut out)?;
            out.flush()?;
            if let Some(path) = &cmd.summary {
                write_json(Some(path), &report.columns, true)?;
            }
        }
        Command::Export(cmd) => {
            let g = load_geofence(&cmd.result)?;
            let fc = match (&g.discrete, &g.circular) {
                (Some(d), _) => export_discrete(d, &d.spec.bbox, g.metadata)?,
                (None, Some(c)) => export_circular(c, &g.bbox.unwrap_or(BBox::unit()), g.metadata),
                (None, None) => unreachable!("a loaded geofence is circular or discrete"),
            };
            write_json(cmd.out.as_deref(), &fc, true)?;
        }
        Command::Serve(cmd) => {
            let dir = cmd.state_dir.unwrap_or_else(service::default_state_dir);
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(service::serve(cmd.addr, dir))?;
        }
    }
    Ok(())
}

/// A closed stdout, as when piping into `head`, is not a failure.
fn is_broken_pipe(e: &Error) -> bool {
    match e {
        Error::Io(io) => io.kind() == io::ErrorKind::BrokenPipe,
        Error::Json(j) => j.io_error_kind() == Some(io::ErrorKind::BrokenPipe),
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!("{}", json!({ "error": { "code": "usage", "message": message.trim_end() } }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "code": e.code(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
