use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::repair::repair_bits;
use super::{finish, lex_less, Problem, SolveResult};
use crate::error::{Error, Result};
use crate::model::{AreaWindow, QuadraticModel};

/// Geometric cooling schedule for single-flip Metropolis annealing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    /// Full passes over the free variables per restart.
    pub sweeps: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl AnnealSchedule {
    pub const DEFAULT_SWEEPS: usize = 2000;
    pub const DEFAULT_RESTARTS: usize = 8;
    pub const DEFAULT_T_END: f64 = 1e-3;

    /// Defaults scaled to the model: `t_start` is the largest coefficient
    /// magnitude.
    pub fn for_model(model: &QuadraticModel, seed: u64) -> Self {
        let max_coef = model
            .linear()
            .iter()
            .chain(model.pairwise().values())
            .fold(0.0f64, |m, w| m.max(w.abs()));
        let t_start = max_coef.max(Self::DEFAULT_T_END);
        Self {
            sweeps: Self::DEFAULT_SWEEPS,
            t_start,
            t_end: Self::DEFAULT_T_END.min(t_start),
            restarts: Self::DEFAULT_RESTARTS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(Error::invalid("sweeps and restarts must be at least 1"));
        }
        if !(self.t_end > 0.0 && self.t_end <= self.t_start && self.t_start.is_finite()) {
            return Err(Error::invalid(format!(
                "temperatures must satisfy 0 < t_end <= t_start, got t_start={} t_end={}",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    fn temperature(&self, sweep: usize) -> f64 {
        if self.sweeps == 1 {
            return self.t_end;
        }
        let frac = sweep as f64 / (self.sweeps - 1) as f64;
        self.t_start * (self.t_end / self.t_start).powf(frac)
    }
}

/// Penalty `lambda * (shortfall^2 + excess^2)` on the selected-cell count.
#[derive(Debug, Clone, Copy)]
struct WindowPenalty {
    window: Option<AreaWindow>,
    lambda: f64,
}

impl WindowPenalty {
    fn new(problem: &Problem<'_>) -> Self {
        // larger than any single-flip change of the model energy
        let lin = problem.model.linear();
        let max_flip = (0..problem.n())
            .map(|i| lin[i].abs() + problem.adj[i].iter().map(|(_, w)| w.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        Self { window: problem.window, lambda: 1.0 + max_flip }
    }

    fn at(&self, count: usize) -> f64 {
        match self.window {
            None => 0.0,
            Some(w) => {
                let short = w.min_cells.saturating_sub(count) as f64;
                let excess = count.saturating_sub(w.max_cells) as f64;
                self.lambda * (short * short + excess * excess)
            }
        }
    }
}

/// Outcome of one annealing restart, with the bookkeeping needed to audit
/// the incremental energy updates.
#[derive(Debug, Clone)]
pub struct AnnealRun {
    /// Best window-feasible state seen, or the repaired final state.
    pub bits: Vec<bool>,
    pub energy: f64,
    /// State when the schedule ended, before repair.
    pub final_bits: Vec<bool>,
    /// Incrementally tracked penalized energy of `final_bits`.
    pub final_cached_energy: f64,
    /// Penalized energy of `final_bits` recomputed from scratch.
    pub final_full_energy: f64,
    pub accepted_moves: u64,
    /// Largest penalized energy change among accepted moves.
    pub max_accepted_delta: f64,
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn run_restart(problem: &Problem<'_>, schedule: &AnnealSchedule, restart: usize) -> AnnealRun {
    let model = problem.model;
    let penalty = WindowPenalty::new(problem);
    let mut rng = restart_rng(schedule.seed, restart);

    let density = match problem.window {
        Some(w) if problem.n() > 0 => (w.min_cells + w.max_cells) as f64 / (2 * problem.n()) as f64,
        _ => 0.5,
    };
    let mut bits = problem.base_bits();
    for &i in &problem.free {
        bits[i] = rng.gen_bool(density.clamp(0.0, 1.0));
    }
    let mut h = problem.local_fields(&bits);
    let mut count = bits.iter().filter(|&&b| b).count();
    let mut energy = model.energy(&bits);

    let mut best: Option<(f64, Vec<bool>)> = None;
    let record = |energy: f64, count: usize, bits: &[bool], best: &mut Option<(f64, Vec<bool>)>| {
        if problem.window_ok(count) && best.as_ref().is_none_or(|(e, _)| energy < *e - 1e-12) {
            *best = Some((energy, bits.to_vec()));
        }
    };
    record(energy, count, &bits, &mut best);

    let mut accepted_moves = 0u64;
    let mut max_accepted_delta = f64::NEG_INFINITY;
    for sweep in 0..schedule.sweeps {
        let temp = schedule.temperature(sweep);
        for &i in &problem.free {
            let next = if bits[i] { count - 1 } else { count + 1 };
            let d_model = problem.flip_delta(&bits, &h, i);
            let delta = d_model + penalty.at(next) - penalty.at(count);
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp() {
                problem.apply_flip(&mut bits, &mut h, i);
                energy += d_model;
                count = next;
                accepted_moves += 1;
                max_accepted_delta = max_accepted_delta.max(delta);
                record(energy, count, &bits, &mut best);
            }
        }
    }

    let final_bits = bits.clone();
    let final_cached_energy = energy + penalty.at(count);
    let final_full_energy = model.energy(&final_bits) + penalty.at(count);
    let bits = match best {
        Some((_, found)) => found,
        None => {
            let mut repaired = final_bits.clone();
            repair_bits(problem, &mut repaired);
            repaired
        }
    };
    let energy = model.energy(&bits);
    AnnealRun {
        bits,
        energy,
        final_bits,
        final_cached_energy,
        final_full_energy,
        accepted_moves,
        max_accepted_delta,
    }
}

/// Runs a single restart; exposed for diagnostics and tests.
pub fn anneal_single(model: &QuadraticModel, schedule: &AnnealSchedule, restart: usize) -> Result<AnnealRun> {
    schedule.validate()?;
    let problem = Problem::new(model);
    problem.check_reachable()?;
    Ok(run_restart(&problem, schedule, restart))
}

/// Simulated annealing with window penalties and a final repair. Restarts
/// run in parallel on independent sub-streams of `schedule.seed`; the best
/// restart wins with lexicographic tie-breaking, so the result does not
/// depend on thread scheduling.
pub fn solve_anneal(model: &QuadraticModel, schedule: &AnnealSchedule) -> Result<SolveResult> {
    let started = Instant::now();
    schedule.validate()?;
    let problem = Problem::new(model);
    problem.check_reachable()?;
    let runs: Vec<AnnealRun> = (0..schedule.restarts)
        .into_par_iter()
        .map(|r| run_restart(&problem, schedule, r))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| {
            let tol = 1e-9 * a.energy.abs().max(1.0);
            if b.energy < a.energy - tol || (b.energy <= a.energy + tol && lex_less(&b.bits, &a.bits)) {
                b
            } else {
                a
            }
        })
        .expect("at least one restart");
    finish(model, best.bits, "anneal", Some(schedule.seed), started)
}
