//! Solvers for [`QuadraticModel`]s.
//!
//! All solvers share [`Problem`], a flattened view of the model with
//! per-variable neighbor lists, so that single-flip energy changes can be
//! read off the local field `h_i = linear_i + sum_j w_ij x_j`.

mod anneal;
mod exact;
mod hierarchical;
mod repair;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use anneal::{anneal_single, solve_anneal, AnnealRun, AnnealSchedule};
pub use exact::{solve_exact, EXACT_LIMIT};
pub use hierarchical::{coarsen_density, dilate, solve_hierarchical, HierarchicalOutcome, HierarchicalParams};
pub use repair::{local_search, repair};

use crate::error::{Error, Result};
use crate::ingest::{BBox, GridSpec, PoiCell};
use crate::model::{AreaWindow, Breakdown, DiscreteGeofence, QuadraticModel, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    #[default]
    Anneal,
    Hier,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "anneal" => Ok(SolverKind::Anneal),
            "hier" | "hierarchical" => Ok(SolverKind::Hier),
            other => Err(Error::invalid(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub geofence: DiscreteGeofence,
    pub poi: PoiCell,
    pub breakdown: Breakdown,
    pub feasible: bool,
    /// Seconds spent in the solver. Not serialized, so results stay
    /// byte-comparable across runs.
    pub wall_time: f64,
    pub solver_id: String,
    pub seed: Option<u64>,
    pub free_variables: usize,
}

/// Serialized form of a [`SolveResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResultDoc {
    pub solver_id: String,
    pub seed: Option<u64>,
    pub feasible: bool,
    pub d: u32,
    pub side: usize,
    pub bbox: BBox,
    pub poi: PoiCell,
    pub free_variables: usize,
    pub breakdown: Breakdown,
    /// Selected cells as `[row, col]`, row 0 at minimum y.
    pub selected: Vec<[usize; 2]>,
}

impl SolveResultDoc {
    pub fn geofence(&self) -> Result<DiscreteGeofence> {
        let spec = GridSpec::new(self.d, self.bbox)?;
        let cells = self.selected.iter().map(|&[row, col]| PoiCell { row, col });
        DiscreteGeofence::new(spec, Selection::from_cells(spec.side(), cells)?)
    }
}

impl SolveResult {
    pub fn to_doc(&self) -> SolveResultDoc {
        let spec = self.geofence.spec;
        SolveResultDoc {
            solver_id: self.solver_id.clone(),
            seed: self.seed,
            feasible: self.feasible,
            d: spec.d,
            side: spec.side(),
            bbox: spec.bbox,
            poi: self.poi,
            free_variables: self.free_variables,
            breakdown: self.breakdown,
            selected: self.geofence.selection.cells().map(|c| [c.row, c.col]).collect(),
        }
    }

    pub fn selection(&self) -> &Selection {
        &self.geofence.selection
    }
}

impl Serialize for SolveResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(serializer)
    }
}

pub(crate) fn finish(
    model: &QuadraticModel,
    bits: Vec<bool>,
    solver_id: &str,
    seed: Option<u64>,
    started: Instant,
) -> Result<SolveResult> {
    let selection = Selection::from_bits(model.side(), bits)?;
    let breakdown = model.evaluate(&selection)?;
    let feasible = model.is_feasible(&selection);
    Ok(SolveResult {
        geofence: DiscreteGeofence::new(*model.spec(), selection)?,
        poi: model.poi(),
        breakdown,
        feasible,
        wall_time: started.elapsed().as_secs_f64(),
        solver_id: solver_id.to_string(),
        seed,
        free_variables: model.free_count(),
    })
}

/// Passes of [`local_search`] applied after annealing.
pub const POLISH_PASSES: usize = 200;

/// Solves with exact enumeration or annealing; annealed solutions are
/// polished with [`local_search`].
pub fn solve_model(model: &QuadraticModel, kind: SolverKind, seed: u64) -> Result<SolveResult> {
    match kind {
        SolverKind::Exact => solve_exact(model),
        SolverKind::Anneal => {
            let started = Instant::now();
            let annealed = solve_anneal(model, &AnnealSchedule::for_model(model, seed))?;
            if !annealed.feasible {
                return Ok(annealed);
            }
            let polished = local_search(annealed.selection(), model, POLISH_PASSES)?;
            finish(model, polished.into_bits(), "anneal", Some(seed), started)
        }
        SolverKind::Hier => Err(Error::invalid("the hierarchical solver works from the density matrix, not a model")),
    }
}

/// Exact enumeration when the free variables fit, polished annealing
/// otherwise.
pub fn solve_auto(model: &QuadraticModel, seed: u64) -> Result<SolveResult> {
    if model.free_count() <= EXACT_LIMIT {
        solve_model(model, SolverKind::Exact, seed)
    } else {
        solve_model(model, SolverKind::Anneal, seed)
    }
}

/// Flattened model: linear terms, symmetric neighbor lists and fixings.
pub(crate) struct Problem<'m> {
    pub model: &'m QuadraticModel,
    pub adj: Vec<Vec<(usize, f64)>>,
    pub fixed: Vec<Option<bool>>,
    pub free: Vec<usize>,
    pub window: Option<AreaWindow>,
}

impl<'m> Problem<'m> {
    pub fn new(model: &'m QuadraticModel) -> Self {
        let n = model.n();
        let mut adj = vec![Vec::new(); n];
        for (&(a, b), &w) in model.pairwise() {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        let mut fixed = vec![None; n];
        for (&i, &v) in model.fixed() {
            fixed[i] = Some(v);
        }
        let free = (0..n).filter(|&i| fixed[i].is_none()).collect();
        Self { model, adj, fixed, free, window: model.window() }
    }

    pub fn n(&self) -> usize {
        self.fixed.len()
    }

    pub fn fixed_ones(&self) -> usize {
        self.fixed.iter().filter(|f| **f == Some(true)).count()
    }

    /// Errors when no assignment can satisfy both the fixings and the window.
    pub fn check_reachable(&self) -> Result<()> {
        if let Some(w) = self.window {
            let lo = self.fixed_ones();
            let hi = lo + self.free.len();
            if lo > w.max_cells || hi < w.min_cells {
                return Err(Error::Infeasible(format!(
                    "area window [{}, {}] unreachable: fixed cells allow only [{lo}, {hi}] selected",
                    w.min_cells, w.max_cells
                )));
            }
        }
        Ok(())
    }

    /// Fixed cells at their values, free cells cleared.
    pub fn base_bits(&self) -> Vec<bool> {
        self.fixed.iter().map(|f| f.unwrap_or(false)).collect()
    }

    pub fn local_fields(&self, bits: &[bool]) -> Vec<f64> {
        let lin = self.model.linear();
        (0..self.n())
            .map(|i| lin[i] + self.adj[i].iter().filter(|(j, _)| bits[*j]).map(|(_, w)| w).sum::<f64>())
            .collect()
    }

    /// Objective change from flipping `i`.
    #[inline]
    pub fn flip_delta(&self, bits: &[bool], h: &[f64], i: usize) -> f64 {
        if bits[i] {
            -h[i]
        } else {
            h[i]
        }
    }

    /// Flips `i` and updates the local fields of its neighbors.
    #[inline]
    pub fn apply_flip(&self, bits: &mut [bool], h: &mut [f64], i: usize) {
        let sign = if bits[i] { -1.0 } else { 1.0 };
        bits[i] = !bits[i];
        for &(j, w) in &self.adj[i] {
            h[j] += sign * w;
        }
    }

    pub fn pair_weight(&self, i: usize, j: usize) -> f64 {
        self.adj[i].iter().find(|(k, _)| *k == j).map_or(0.0, |(_, w)| *w)
    }

    pub fn window_ok(&self, count: usize) -> bool {
        self.window.is_none_or(|w| w.contains(count))
    }
}

/// Strict lexicographic comparison used for tie-breaking: `false < true`
/// at the first differing cell in row-major order.
pub(crate) fn lex_less(a: &[bool], b: &[bool]) -> bool {
    a < b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lex_order_is_row_major() {
        assert!(lex_less(&[false, true], &[true, false]));
        assert!(!lex_less(&[true, false], &[true, false]));
    }
}
