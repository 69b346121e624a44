use std::time::Instant;

use super::{finish, Problem, SolveResult};
use crate::error::{Error, Result};
use crate::model::QuadraticModel;

/// Largest number of free variables [`solve_exact`] will enumerate.
pub const EXACT_LIMIT: usize = 22;

/// Relative tolerance under which two energies count as tied.
const TIE_TOL: f64 = 1e-9;

/// Enumerates every assignment of the free variables in Gray-code order.
///
/// Returns the feasible minimum; among tied minima the lexicographically
/// smallest bit pattern (row-major, `0 < 1`) wins.
pub fn solve_exact(model: &QuadraticModel) -> Result<SolveResult> {
    let started = Instant::now();
    let problem = Problem::new(model);
    let k = problem.free.len();
    if k > EXACT_LIMIT {
        return Err(Error::TooManyVariables { free: k, limit: EXACT_LIMIT });
    }
    problem.check_reachable()?;

    let mut bits = problem.base_bits();
    let mut h = problem.local_fields(&bits);
    let mut energy = model.energy(&bits);
    let mut count = problem.fixed_ones();

    // free variable 0 is the smallest cell index and the most significant
    // position of the lexicographic key
    let lex_key = |gray: u32| -> u32 {
        if k == 0 {
            0
        } else {
            gray.reverse_bits() >> (32 - k)
        }
    };

    let mut best: Option<(f64, u32)> = None;
    let mut consider = |energy: f64, count: usize, gray: u32| {
        if !problem.window_ok(count) {
            return;
        }
        let key = lex_key(gray);
        match best {
            None => best = Some((energy, key)),
            Some((be, bk)) => {
                let tol = TIE_TOL * be.abs().max(1.0);
                if energy < be - tol || (energy <= be + tol && key < bk) {
                    best = Some((energy, key));
                }
            }
        }
    };

    consider(energy, count, 0);
    for step in 1u32..(1u32 << k) {
        let bit = step.trailing_zeros() as usize;
        let i = problem.free[bit];
        energy += problem.flip_delta(&bits, &h, i);
        if bits[i] {
            count -= 1;
        } else {
            count += 1;
        }
        problem.apply_flip(&mut bits, &mut h, i);
        consider(energy, count, step ^ (step >> 1));
    }

    let (_, key) = best.ok_or_else(|| Error::Infeasible("no assignment satisfies the area window".into()))?;
    let mut out = problem.base_bits();
    for (pos, &i) in problem.free.iter().enumerate() {
        out[i] = key >> (k - 1 - pos) & 1 == 1;
    }
    finish(model, out, "exact", None, started)
}
