//! Circular geofence baseline: a circle `(cx, cy, r)` in normalized units,
//! scored by its distance objective `max(d, r)` to the POI plus a penalty
//! for falling short of a minimum user-coverage rate, and optimized with
//! differential evolution.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TrajectorySet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularGeofence {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl CircularGeofence {
    pub fn new(cx: f64, cy: f64, r: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("circle center must be finite"));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("circle radius must be positive, got {r}")));
        }
        Ok(Self { cx, cy, r })
    }

    pub fn center_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.cx).hypot(y - self.cy)
    }

    /// Strict membership: distance to the center below `r`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        dx * dx + dy * dy < self.r * self.r
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.r * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircularParams {
    pub cr_limit: f64,
    pub mu: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub population: usize,
    pub generations: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    pub seed: u64,
    /// Optimize the negated objective instead.
    pub maximize: bool,
}

impl Default for CircularParams {
    fn default() -> Self {
        Self {
            cr_limit: 0.5,
            mu: 10.0,
            r_min: 1e-4,
            r_max: 0.5 * std::f64::consts::SQRT_2,
            population: 64,
            generations: 300,
            f: 0.8,
            cr: 0.9,
            seed: 0,
            maximize: false,
        }
    }
}

impl CircularParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cr_limit) {
            return Err(Error::invalid(format!("cr_limit must lie in [0, 1], got {}", self.cr_limit)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid(format!("mu must be non-negative, got {}", self.mu)));
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return Err(Error::invalid("radius bounds must satisfy 0 < r_min <= r_max"));
        }
        if self.population < 4 || self.generations == 0 {
            return Err(Error::invalid("population must be at least 4 and generations at least 1"));
        }
        if !(self.f > 0.0 && self.f <= 2.0 && (0.0..=1.0).contains(&self.cr)) {
            return Err(Error::invalid("differential weight must lie in (0, 2] and crossover in [0, 1]"));
        }
        Ok(())
    }
}

/// `(d + r + |d - r|) / 2`, the mean of the nearest and farthest distance
/// from the POI to the circle; equal to `max(d, r)`.
pub fn distance_objective(g: &CircularGeofence, poi: (f64, f64)) -> f64 {
    let d = g.center_distance(poi.0, poi.1);
    0.5 * (d + g.r + (d - g.r).abs())
}

/// Fraction of users with at least one point strictly inside `g`.
pub fn user_coverage(g: &CircularGeofence, data: &TrajectorySet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let covered = data.iter().filter(|t| t.points.iter().any(|p| g.contains(p.x, p.y))).count();
    Ok(covered as f64 / data.len() as f64)
}

/// `mu * max(0, cr_limit - coverage)`.
pub fn min_coverage_penalty(g: &CircularGeofence, data: &TrajectorySet, cr_limit: f64, mu: f64) -> Result<f64> {
    Ok(mu * (cr_limit - user_coverage(g, data)?).max(0.0))
}

/// Distance objective plus coverage penalty, as minimized by
/// [`optimize_circular`].
pub fn circular_objective(g: &CircularGeofence, data: &TrajectorySet, poi: (f64, f64), params: &CircularParams) -> Result<f64> {
    Ok(distance_objective(g, poi) + min_coverage_penalty(g, data, params.cr_limit, params.mu)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularSolution {
    #[serde(flatten)]
    pub geofence: CircularGeofence,
    pub objective: f64,
    pub coverage: f64,
}

/// Per-user point arrays, laid out for repeated coverage queries.
struct CoverageIndex {
    users: Vec<Vec<(f64, f64)>>,
}

impl CoverageIndex {
    fn new(data: &TrajectorySet) -> Self {
        Self { users: data.iter().map(|t| t.points.iter().map(|p| (p.x, p.y)).collect()).collect() }
    }

    fn coverage(&self, cx: f64, cy: f64, r: f64) -> f64 {
        let r2 = r * r;
        let hit = self
            .users
            .iter()
            .filter(|pts| pts.iter().any(|&(x, y)| (x - cx) * (x - cx) + (y - cy) * (y - cy) < r2))
            .count();
        hit as f64 / self.users.len() as f64
    }
}

/// DE/rand/1/bin over `[lo, hi]`. Trial vectors are drawn sequentially from
/// one seeded stream per generation and only their evaluation runs in
/// parallel, so results do not depend on the thread count.
fn differential_evolution<F>(
    lo: [f64; 3],
    hi: [f64; 3],
    seeds: &[[f64; 3]],
    params: &CircularParams,
    objective: F,
) -> Result<([f64; 3], f64)>
where
    F: Fn(&[f64; 3]) -> f64 + Sync,
{
    let np = params.population;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let clip = |v: [f64; 3]| -> [f64; 3] { std::array::from_fn(|k| v[k].clamp(lo[k], hi[k])) };
    let mut pop: Vec<[f64; 3]> = (0..np)
        .map(|i| match seeds.get(i) {
            Some(s) => clip(*s),
            None => std::array::from_fn(|k| if hi[k] > lo[k] { rng.gen_range(lo[k]..=hi[k]) } else { lo[k] }),
        })
        .collect();
    let mut fit: Vec<f64> = pop.par_iter().map(&objective).collect();

    for _ in 0..params.generations {
        let trials: Vec<[f64; 3]> = (0..np)
            .map(|i| {
                let picks = loop {
                    let s = sample(&mut rng, np, 3);
                    let (a, b, c) = (s.index(0), s.index(1), s.index(2));
                    if a != i && b != i && c != i {
                        break (a, b, c);
                    }
                };
                let (a, b, c) = (pop[picks.0], pop[picks.1], pop[picks.2]);
                let forced = rng.gen_range(0..3);
                let mut trial = pop[i];
                for k in 0..3 {
                    if k == forced || rng.gen::<f64>() < params.cr {
                        trial[k] = a[k] + params.f * (b[k] - c[k]);
                    }
                }
                clip(trial)
            })
            .collect();
        let trial_fit: Vec<f64> = trials.par_iter().map(&objective).collect();
        for i in 0..np {
            if trial_fit[i].is_finite() && trial_fit[i].partial_cmp(&fit[i]) != Some(std::cmp::Ordering::Greater) {
                pop[i] = trials[i];
                fit[i] = trial_fit[i];
            }
        }
    }

    let best = (0..np)
        .filter(|&i| fit[i].is_finite())
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)))
        .ok_or(Error::NoFiniteCandidate)?;
    Ok((pop[best], fit[best]))
}

/// Minimizes `max(d, r) + mu * max(0, cr_limit - coverage)` over
/// `(cx, cy) in [0, 1]^2`, `r in [r_min, r_max]`. The population includes
/// the circle of radius `r_max` centred on the POI.
pub fn optimize_circular(data: &TrajectorySet, poi: (f64, f64), params: &CircularParams) -> Result<CircularSolution> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index = CoverageIndex::new(data);
    let sign = if params.maximize { -1.0 } else { 1.0 };
    let objective = |v: &[f64; 3]| {
        let g = CircularGeofence { cx: v[0], cy: v[1], r: v[2] };
        let cov = index.coverage(v[0], v[1], v[2]);
        sign * (distance_objective(&g, poi) + params.mu * (params.cr_limit - cov).max(0.0))
    };
    let (best, value) = differential_evolution(
        [0.0, 0.0, params.r_min],
        [1.0, 1.0, params.r_max],
        &[[poi.0, poi.1, params.r_max]],
        params,
        objective,
    )?;
    let geofence = CircularGeofence::new(best[0], best[1], best[2])?;
    Ok(CircularSolution { geofence, objective: sign * value, coverage: index.coverage(best[0], best[1], best[2]) })
}

/// Maximizes user coverage with the radius held in
/// `[r_star - epsilon, r_star + epsilon]`. The reported objective is the
/// distance objective plus coverage penalty of the returned circle, for
/// comparison with [`optimize_circular`].
pub fn optimize_cover_oriented(
    data: &TrajectorySet,
    poi: (f64, f64),
    r_star: f64,
    epsilon: f64,
    params: &CircularParams,
) -> Result<CircularSolution> {
    params.validate()?;
    if !(epsilon > 0.0 && r_star > epsilon && r_star.is_finite()) {
        return Err(Error::invalid(format!(
            "radius window needs r_star > epsilon > 0, got r_star={r_star} epsilon={epsilon}"
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index = CoverageIndex::new(data);
    let objective = |v: &[f64; 3]| -index.coverage(v[0], v[1], v[2]);
    let (best, value) = differential_evolution(
        [0.0, 0.0, r_star - epsilon],
        [1.0, 1.0, r_star + epsilon],
        &[[poi.0, poi.1, r_star]],
        params,
        objective,
    )?;
    let geofence = CircularGeofence::new(best[0], best[1], best[2])?;
    Ok(CircularSolution { geofence, objective: circular_objective(&geofence, data, poi, params)?, coverage: -value })
}

/// Default `epsilon` for [`optimize_cover_oriented`].
pub const COVER_ORIENTED_EPSILON: f64 = 0.01;
