//! Acceptance suite. Prints one PASS, FAIL or SKIP line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::*;
use dgeofence::circular::{optimize_circular, optimize_cover_oriented, CircularParams, COVER_ORIENTED_EPSILON};
use dgeofence::eval::{upcr, Region};
use dgeofence::ingest::{BBox, CellMatrix, GridSpec, PoiCell};
use dgeofence::model::{adjacency_coeffs, adjacency_term, domain_wall_term, Direction, ModelFlags, Selection};
use dgeofence::pipeline::{ingest, solve_discrete, Dataset, DiscreteRequest, IngestOptions, PoiSpec, WindowSpec};
use dgeofence::solver::{solve_hierarchical, solve_model, HierarchicalParams, SolveResult, SolverKind};
use dgeofence::synth::SynthConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn preset(name: &str) -> Dataset {
    Dataset::from_synth(&SynthConfig::preset(name).unwrap()).unwrap()
}

fn request(ds: &Dataset, d: u32, window: WindowSpec, seed: u64) -> DiscreteRequest {
    let [x, y] = ds.pois[0];
    DiscreteRequest { window: Some(window), seed, ..DiscreteRequest::new(PoiSpec::Point { x, y }, d) }
}

fn oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut instances: Vec<Instance> = (0..50).map(|_| random_instance(&mut rng, 1, 1)).collect();
    instances.extend((0..50).map(|_| random_instance(&mut rng, 2, 4)));
    let (mut exact_ok, mut anneal_ok) = (0, 0);
    for (i, inst) in instances.iter().enumerate() {
        let model = inst.model();
        let best = inst.brute_force().expect("generated windows are reachable");
        let exact = solve_model(&model, SolverKind::Exact, 0).unwrap();
        if (exact.breakdown.total - best).abs() <= 1e-9 && inst.allowed(exact.selection().bits()) {
            exact_ok += 1;
        }
        let anneal = solve_model(&model, SolverKind::Anneal, i as u64).unwrap();
        if anneal.feasible && (anneal.breakdown.total - best).abs() <= 1e-9 {
            anneal_ok += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let max_free = instances.iter().map(Instance::free_count).max().unwrap();
    check(
        exact_ok == 100 && anneal_ok >= 95 && secs < 10.0,
        format!("exact {exact_ok}/100, anneal {anneal_ok}/100, up to {max_free} free variables, {secs:.2} s"),
    )
}

fn term_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let inst = random_instance(&mut rng, 1 + i % 4, 3);
        let model = inst.model();
        let x = random_admissible(&mut rng, &inst);
        worst = worst.max((model.energy(x.bits()) - inst.objective(x.bits())).abs());
    }
    check(worst <= 1e-9, format!("1000 pairs at d<=4, max |compiled - direct| = {worst:.3e}"))
}

fn domain_wall_characterization() -> Verdict {
    let dirs = Direction::DEFAULT;
    let zeros = domain_wall_term(&Selection::empty(4), &dirs).unwrap();
    let ones = domain_wall_term(&Selection::full(4), &dirs).unwrap();
    let mut single = Selection::empty(4);
    single.set(2, 1, true);
    let six = domain_wall_term(&single, &dirs).unwrap();

    let spec = GridSpec::new(2, BBox::unit()).unwrap();
    let q = adjacency_coeffs(&CellMatrix::from_values(spec, vec![0.4; 16]).unwrap(), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mismatches = (0..1000)
        .filter(|_| {
            let bits = random_bits(&mut rng, 16);
            adjacency_term(&Selection::from_bits(4, bits.clone()).unwrap(), &q).unwrap() != cut_size(&bits, 4) as f64
        })
        .count();
    check(
        zeros == 0.0 && ones == 0.0 && six == 6.0 && mismatches == 0,
        format!("zeros {zeros}, ones {ones}, single interior cell {six}, cut mismatches {mismatches}/1000"),
    )
}

fn feasibility() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut checked, mut violations) = (0, 0);
    let mut tally = |inst: &Instance, res: &SolveResult| {
        if res.feasible {
            checked += 1;
            if !inst.allowed(res.selection().bits()) {
                violations += 1;
            }
        }
    };
    for i in 0..300u64 {
        let d = 1 + (i % 3) as u32;
        let inst = random_instance(&mut rng, d, 2 * d as usize * d as usize);
        let model = inst.model();
        if inst.free_count() <= 22 {
            tally(&inst, &solve_model(&model, SolverKind::Exact, i).unwrap());
        }
        tally(&inst, &solve_model(&model, SolverKind::Anneal, i).unwrap());
        if d == 3 {
            let n = inst.n() as f64;
            let params = HierarchicalParams {
                d_coarse: 1,
                window_frac: inst.window.map(|(lo, hi)| (lo as f64 / n, hi as f64 / n)),
                seed: i,
            };
            let spec = GridSpec::new(d, BBox::unit()).unwrap();
            let v = CellMatrix::from_values(spec, inst.v.clone()).unwrap();
            let flags = ModelFlags {
                poi_hard: inst.poi_hard,
                dw_directions: inst.directions.clone(),
                forbidden_cells: inst.forbidden.clone(),
            };
            let poi = PoiCell { row: inst.poi.0, col: inst.poi.1 };
            if let Ok(out) = solve_hierarchical(&v, poi, &inst.weights, &flags, &params) {
                tally(&inst, &out.result);
            }
        }
    }
    check(checked > 0 && violations == 0, format!("{violations} violations among {checked} results marked feasible"))
}

fn monotonicity_sweep() -> Verdict {
    let ds = preset("data1");
    let mut covers = Vec::new();
    for step in 0..6 {
        let max_frac = (10 + 3 * step) as f64 / 100.0;
        let out = solve_discrete(&ds.data, &request(&ds, 4, WindowSpec::from_max_fraction(max_frac), 0)).unwrap();
        covers.push(out.result.breakdown.cover);
    }
    let ok = covers.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let shown: Vec<String> = covers.iter().map(|c| format!("{c:.4}")).collect();
    check(ok, format!("cover at 10..25% max: [{}]", shown.join(", ")))
}

/// Discrete UPCR and equal-area cover-oriented circle UPCR per preset,
/// recorded from the first run.
const DOMINANCE_FIXTURE: [(&str, f64, f64); 2] = [
    ("data1", 0.38326823562428297, 0.26599918518616567),
    ("data2", 0.4966066212736439, 0.2649434693624242),
];

fn coverage_dominance() -> Verdict {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, want_discrete, want_circle) in DOMINANCE_FIXTURE {
        let ds = preset(name);
        let norm = ds.normalized().unwrap();
        let out = solve_discrete(&ds.data, &request(&ds, 4, WindowSpec::from_max_fraction(0.15), 0)).unwrap();
        let discrete = out.coverage.upcr_mean;
        let area = out.result.selection().count() as f64 / 256.0;
        let r_star = (area / std::f64::consts::PI).sqrt();
        let poi = norm.bbox.to_unit(ds.pois[0][0], ds.pois[0][1]);
        let params = CircularParams { seed: 0, ..CircularParams::default() };
        let equal = optimize_cover_oriented(&norm.set, poi, r_star, COVER_ORIENTED_EPSILON, &params).unwrap();
        let circle = upcr(&Region::Circular(equal.geofence), &norm.set).unwrap().0;
        let standard = optimize_circular(&norm.set, poi, &params).unwrap();
        let standard_upcr = upcr(&Region::Circular(standard.geofence), &norm.set).unwrap().0;
        let pinned = (discrete - want_discrete).abs() <= 1e-9 && (circle - want_circle).abs() <= 1e-9;
        ok &= discrete > circle && pinned;
        lines.push(format!(
            "{name}: discrete {discrete:.4} vs equal-area circle {circle:.4} (standard circle {standard_upcr:.4}){}",
            if pinned { "" } else { " [fixture mismatch]" }
        ));
        if !pinned {
            eprintln!("fixture {name}: ({discrete:?}, {circle:?})");
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(ok && secs < 60.0, format!("{}; {secs:.1} s", lines.join("; ")))
}

const GEOLIFE_ENV: &str = "DGEOFENCE_GEOLIFE_CSV";
const WCP: [f64; 2] = [448175.7, 4417804.3];

fn geolife_reproduction() -> Verdict {
    let Some(path) = std::env::var_os(GEOLIFE_ENV) else {
        return Verdict::Skip(format!("{GEOLIFE_ENV} not set"));
    };
    let opts = IngestOptions {
        region_center: Some(WCP),
        region_radius: Some(500.0),
        min_points: Some(100),
        ..IngestOptions::default()
    };
    let data = match std::fs::File::open(&path).map_err(dgeofence::Error::from).and_then(|f| ingest(f, &opts)) {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(format!("could not load {}: {e}", path.to_string_lossy())),
    };
    let (users, points) = (data.len(), data.point_count());
    let req = DiscreteRequest {
        window: Some(WindowSpec::from_max_fraction(0.15)),
        ..DiscreteRequest::new(PoiSpec::Point { x: WCP[0], y: WCP[1] }, 5)
    };
    let ucr = match solve_discrete(&data, &req) {
        Ok(out) => out.coverage.ucr,
        Err(e) => return Verdict::Fail(format!("solve failed: {e}")),
    };
    check(
        users == 46 && points == 22_010 && (0.92..=1.0).contains(&ucr),
        format!("{users} users, {points} points, discrete UCR {ucr:.3}"),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data1.csv");
    let bin = env!("CARGO_BIN_EXE_dgeofence");
    let synth = Command::new(bin).args(["synth", "--preset", "data1", "--out"]).arg(&csv).output().unwrap();
    if !synth.status.success() {
        return Verdict::Fail(String::from_utf8_lossy(&synth.stderr).into_owned());
    }
    let [x, y] = preset("data1").pois[0];
    let poi = format!("{x},{y}");
    let mut same = Vec::new();
    for solver in ["anneal", "hier"] {
        let outputs: Vec<Vec<u8>> = (0..2)
            .map(|_| {
                Command::new(bin)
                    .args(["solve-discrete", "--data"])
                    .arg(&csv)
                    .args(["--poi", &poi, "--d", "4", "--window-max", "0.15", "--solver", solver, "--seed", "42"])
                    .output()
                    .unwrap()
                    .stdout
            })
            .collect();
        same.push(!outputs[0].is_empty() && outputs[0] == outputs[1]);
    }
    check(same.iter().all(|&s| s), format!("byte-identical output: anneal {}, hier {}", same[0], same[1]))
}

fn runtime_budget() -> Verdict {
    let ds = preset("data1");
    let started = Instant::now();
    let big = solve_discrete(&ds.data, &request(&ds, 5, WindowSpec::from_max_fraction(0.15), 0)).unwrap();
    let anneal_secs = started.elapsed().as_secs_f64();
    let mut hier = Vec::new();
    for d in [2u32, 3] {
        let req = DiscreteRequest { solver: SolverKind::Hier, ..request(&ds, d, WindowSpec::from_max_fraction(0.15), 0) };
        let started = Instant::now();
        let out = solve_discrete(&ds.data, &req).unwrap();
        hier.push((d, started.elapsed().as_secs_f64(), out.result.feasible));
    }
    let ok = anneal_secs <= 60.0 && big.result.feasible && hier.iter().all(|&(_, s, f)| s <= 5.0 && f);
    let shown: Vec<String> = hier.iter().map(|(d, s, _)| format!("d={d} {s:.2} s")).collect();
    check(ok, format!("d=5 anneal {anneal_secs:.2} s; hierarchical {}", shown.join(", ")))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("term correctness", term_correctness),
        ("domain-wall characterization", domain_wall_characterization),
        ("feasibility", feasibility),
        ("monotonicity sweep", monotonicity_sweep),
        ("coverage dominance", coverage_dominance),
        ("GeoLife reproduction", geolife_reproduction),
        ("determinism", determinism),
        ("runtime budget", runtime_budget),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Verdict::Fail("panicked".into()));
        match verdict {
            Verdict::Pass(d) => println!("PASS {name}: {d}"),
            Verdict::Skip(d) => println!("SKIP {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
