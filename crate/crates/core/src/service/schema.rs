//! Validation bounds and defaults served at `GET /api/schema`.

use serde_json::{json, Value};

use crate::circular::{CircularParams, COVER_ORIENTED_EPSILON};
use crate::ingest::MAX_LEVEL;
use crate::model::{Direction, Weights};
use crate::solver::{AnnealSchedule, EXACT_LIMIT};

pub fn schema() -> Value {
    let w = Weights::default();
    let c = CircularParams::default();
    let directions: Vec<String> = [Direction::Rd, Direction::Lu, Direction::Ru, Direction::Ld].iter().map(|d| d.to_string()).collect();
    let default_dirs: Vec<String> = Direction::DEFAULT.iter().map(|d| d.to_string()).collect();
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "solve": {
            "d": { "type": "integer", "minimum": 1, "maximum": MAX_LEVEL, "default": 4 },
            "seed": { "type": "integer", "minimum": 0, "required": true },
            "poi": {
                "one_of": [
                    { "x": "number, source units", "y": "number, source units" },
                    { "row": "integer in [0, 2^d)", "col": "integer in [0, 2^d)" }
                ]
            },
            "weights": {
                "a_area": { "type": "number", "minimum": 0, "default": w.a_area },
                "a_cover": { "type": "number", "minimum": 0, "default": w.a_cover },
                "a_2dw": { "type": "number", "minimum": 0, "default": w.a_2dw },
                "a_ng": { "type": "number", "minimum": 0, "default": w.a_ng },
                "alpha": { "type": "number", "exclusive_minimum": 0, "default": w.alpha },
                "sigma": { "type": "number", "exclusive_minimum": 0, "default": w.sigma }
            },
            "window": {
                "one_of": [
                    {
                        "min_frac": { "type": "number", "minimum": 0, "maximum": 1 },
                        "max_frac": { "type": "number", "minimum": 0, "maximum": 1 }
                    },
                    {
                        "min_cells": { "type": "integer", "minimum": 0 },
                        "max_cells": { "type": "integer", "minimum": 0, "maximum": "4^d" }
                    }
                ],
                "constraint": "min <= max",
                "default": { "min_frac": 0.12, "max_frac": 0.15 }
            },
            "flags": {
                "poi_hard": { "type": "boolean", "default": false },
                "dw_directions": { "type": "array", "items": directions, "min_items": 1, "default": default_dirs },
                "forbidden_cells": { "type": "array", "items": "row-major cell index in [0, 4^d)", "default": [] }
            },
            "solver": { "enum": ["exact", "anneal", "hier"], "default": "anneal" },
            "exact_limit": EXACT_LIMIT,
            "d_coarse": { "type": "integer", "minimum": 1, "maximum": "d - 1", "default": "max(1, d - 2)" },
            "density_norm": { "enum": ["max_cell", "user_count"], "default": "max_cell" },
            "anneal": {
                "sweeps": AnnealSchedule::DEFAULT_SWEEPS,
                "restarts": AnnealSchedule::DEFAULT_RESTARTS,
                "t_end": AnnealSchedule::DEFAULT_T_END
            }
        },
        "solve_circular": {
            "seed": { "type": "integer", "minimum": 0, "required": true },
            "params": {
                "cr_limit": { "type": "number", "minimum": 0, "maximum": 1, "default": c.cr_limit },
                "mu": { "type": "number", "minimum": 0, "default": c.mu },
                "r_min": { "type": "number", "exclusive_minimum": 0, "default": c.r_min },
                "r_max": { "type": "number", "default": c.r_max },
                "population": { "type": "integer", "minimum": 4, "default": c.population },
                "generations": { "type": "integer", "minimum": 1, "default": c.generations },
                "f": { "type": "number", "exclusive_minimum": 0, "maximum": 2, "default": c.f },
                "cr": { "type": "number", "minimum": 0, "maximum": 1, "default": c.cr },
                "maximize": { "type": "boolean", "default": c.maximize }
            },
            "cover_oriented": { "type": "boolean", "default": false },
            "epsilon": { "type": "number", "exclusive_minimum": 0, "default": COVER_ORIENTED_EPSILON },
            "r_star": { "type": "number", "exclusive_minimum": 0, "default": "radius of a distance-optimal run" },
            "d": "grid level, required when poi is a cell"
        },
        "run_status": ["queued", "running", "done", "failed"],
        "dataset_status": ["processing", "ready", "failed"],
        "presets": ["data1", "data2"]
    })
}
