use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{solve_auto, SolveResult};
use crate::error::{Error, Result};
use crate::ingest::{CellMatrix, GridSpec, PoiCell};
use crate::model::{build_model, AreaWindow, ModelFlags, Selection, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalParams {
    pub d_coarse: u32,
    /// Area window as `(min, max)` fractions of the fine cell count. The
    /// coarse level uses the same window rounded outward to whole blocks.
    pub window_frac: Option<(f64, f64)>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct HierarchicalOutcome {
    pub result: SolveResult,
    pub coarse: SolveResult,
    /// Fine cells left free after dilating the coarse solution.
    pub region: Selection,
}

/// Max-pools `v` down to level `d_coarse`.
pub fn coarsen_density(v: &CellMatrix, d_coarse: u32) -> Result<CellMatrix> {
    let d_fine = v.spec.d;
    if d_coarse == 0 || d_coarse > d_fine {
        return Err(Error::invalid(format!("coarse level {d_coarse} must lie in 1..={d_fine}")));
    }
    let spec = GridSpec::new(d_coarse, v.spec.bbox)?;
    let shift = d_fine - d_coarse;
    let side = spec.side();
    let mut values = vec![0.0f64; spec.cell_count()];
    for r in 0..v.side() {
        for c in 0..v.side() {
            let idx = (r >> shift) * side + (c >> shift);
            values[idx] = values[idx].max(v.get(r, c));
        }
    }
    CellMatrix::from_values(spec, values)
}

/// Grows a selection by one cell in all eight directions.
pub fn dilate(sel: &Selection) -> Selection {
    let side = sel.side();
    let mut out = sel.clone();
    for cell in sel.cells() {
        for r in cell.row.saturating_sub(1)..=(cell.row + 1).min(side - 1) {
            for c in cell.col.saturating_sub(1)..=(cell.col + 1).min(side - 1) {
                out.set(r, c, true);
            }
        }
    }
    out
}

/// Coarse-to-fine solve: optimize at `d_coarse`, dilate the selected region
/// by one coarse cell, then re-solve at the fine level with every cell
/// outside that region fixed to 0. Each level uses exact enumeration when
/// its free-variable count allows, annealing otherwise.
pub fn solve_hierarchical(
    v_fine: &CellMatrix,
    poi: PoiCell,
    weights: &Weights,
    flags: &ModelFlags,
    params: &HierarchicalParams,
) -> Result<HierarchicalOutcome> {
    let started = Instant::now();
    let d_fine = v_fine.spec.d;
    if params.d_coarse >= d_fine {
        return Err(Error::invalid(format!(
            "coarse level {} must be below the fine level {d_fine}",
            params.d_coarse
        )));
    }
    let shift = d_fine - params.d_coarse;
    let fine_side = v_fine.side();
    let v_coarse = coarsen_density(v_fine, params.d_coarse)?;
    let coarse_side = v_coarse.side();
    let to_coarse = |idx: usize| {
        let cell = PoiCell::from_index(idx, fine_side);
        (cell.row >> shift) * coarse_side + (cell.col >> shift)
    };

    let fine_window = params
        .window_frac
        .map(|(lo, hi)| AreaWindow::from_fractions(lo, hi, v_fine.spec.cell_count()))
        .transpose()?;
    // rounded outward, so a window too small to hold one coarse cell still
    // yields a region for the fine level
    let coarse_window = fine_window
        .map(|w| {
            let cells = v_coarse.spec.cell_count();
            let per = 1usize << (2 * shift);
            AreaWindow::new(w.min_cells / per, w.max_cells.div_ceil(per).min(cells), cells)
        })
        .transpose()?;

    // a coarse cell is forbidden only when all of its children are
    let mut child_forbidden = vec![0usize; v_coarse.spec.cell_count()];
    for &i in &flags.forbidden_cells {
        if i < v_fine.spec.cell_count() {
            child_forbidden[to_coarse(i)] += 1;
        }
    }
    let block = 1usize << (2 * shift);
    let coarse_flags = ModelFlags {
        forbidden_cells: (0..child_forbidden.len()).filter(|&i| child_forbidden[i] == block).collect(),
        ..flags.clone()
    };
    let coarse_poi = PoiCell { row: poi.row >> shift, col: poi.col >> shift };
    let coarse_model = build_model(
        &v_coarse,
        coarse_poi,
        weights,
        coarse_window,
        &coarse_flags,
    )?;
    let coarse = solve_auto(&coarse_model, params.seed)?;
    if !coarse.feasible {
        return Err(Error::Infeasible("coarse-level solve found no feasible geofence".into()));
    }

    let grown = dilate(coarse.selection());
    let region_bits: Vec<bool> = (0..v_fine.spec.cell_count()).map(|i| grown.bits()[to_coarse(i)]).collect();
    let region = Selection::from_bits(fine_side, region_bits)?;

    let fine_model = build_model(v_fine, poi, weights, fine_window, flags)?;
    let outside = region.bits().iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i);
    let restricted = fine_model.with_fixed(outside.collect::<Vec<_>>(), false)?;
    let mut result = solve_auto(&restricted, params.seed)?;
    result.solver_id = format!("hier:{}", result.solver_id);
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(HierarchicalOutcome { result, coarse, region })
}
