use super::Problem;
use crate::error::Result;
use crate::model::{QuadraticModel, Selection};

/// Improvements smaller than this are treated as zero.
const IMPROVE_EPS: f64 = 1e-12;

/// Greedily moves `x` into the area window. Over the window, the selected
/// free cell whose removal raises the objective least is dropped; under it,
/// the unselected free cell whose addition raises it least is added. Ties go
/// to the lowest cell index. Fixed cells are never touched.
pub fn repair(x: &Selection, model: &QuadraticModel) -> Result<Selection> {
    model.check_assignment(x)?;
    let problem = Problem::new(model);
    problem.check_reachable()?;
    let mut bits = x.bits().to_vec();
    repair_bits(&problem, &mut bits);
    Selection::from_bits(model.side(), bits)
}

pub(crate) fn repair_bits(problem: &Problem<'_>, bits: &mut [bool]) {
    let Some(window) = problem.window else { return };
    let mut h = problem.local_fields(bits);
    let mut count = bits.iter().filter(|&&b| b).count();
    while count != count.clamp(window.min_cells, window.max_cells) {
        let removing = count > window.max_cells;
        let candidate = problem
            .free
            .iter()
            .copied()
            .filter(|&i| bits[i] == removing)
            .map(|i| (problem.flip_delta(bits, &h, i), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, i)) = candidate else { break };
        problem.apply_flip(bits, &mut h, i);
        if removing {
            count -= 1;
        } else {
            count += 1;
        }
    }
}

/// Window-preserving descent with single flips and add/remove swaps. A move
/// is taken only when it strictly lowers the objective; stops at a local
/// optimum or after `max_passes` passes.
pub fn local_search(x: &Selection, model: &QuadraticModel, max_passes: usize) -> Result<Selection> {
    model.check_assignment(x)?;
    let problem = Problem::new(model);
    let mut bits = x.bits().to_vec();
    local_search_bits(&problem, &mut bits, max_passes);
    Selection::from_bits(model.side(), bits)
}

pub(crate) fn local_search_bits(problem: &Problem<'_>, bits: &mut [bool], max_passes: usize) {
    let mut h = problem.local_fields(bits);
    let mut count = bits.iter().filter(|&&b| b).count();
    // every move preserves the window, so an infeasible start has nowhere to go
    if !problem.window_ok(count) {
        return;
    }
    for _ in 0..max_passes {
        let mut improved = false;
        for &i in &problem.free {
            let next = if bits[i] { count - 1 } else { count + 1 };
            if problem.window_ok(next) && problem.flip_delta(bits, &h, i) < -IMPROVE_EPS {
                problem.apply_flip(bits, &mut h, i);
                count = next;
                improved = true;
            }
        }
        for &i in &problem.free {
            if !bits[i] {
                continue;
            }
            let remove = -h[i];
            let best = problem
                .free
                .iter()
                .copied()
                .filter(|&j| !bits[j])
                .map(|j| (remove + h[j] - problem.pair_weight(i, j), j))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((delta, j)) = best {
                if delta < -IMPROVE_EPS {
                    problem.apply_flip(bits, &mut h, i);
                    problem.apply_flip(bits, &mut h, j);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}
