//! Shared fixtures: random model instances and an objective oracle written
//! from the term definitions, independent of the compiled model.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dgeofence::ingest::{BBox, CellMatrix, GridSpec, PoiCell};
use dgeofence::model::{build_model, AreaWindow, Direction, ModelFlags, QuadraticModel, Selection, Weights};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Instance {
    pub side: usize,
    pub v: Vec<f64>,
    pub poi: (usize, usize),
    pub weights: Weights,
    pub directions: Vec<Direction>,
    pub window: Option<(usize, usize)>,
    pub forbidden: BTreeSet<usize>,
    pub poi_hard: bool,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.side * self.side
    }

    pub fn model(&self) -> QuadraticModel {
        let d = self.side.trailing_zeros();
        let spec = GridSpec::new(d, BBox::unit()).unwrap();
        let v = CellMatrix::from_values(spec, self.v.clone()).unwrap();
        let window = self.window.map(|(lo, hi)| AreaWindow::new(lo, hi, self.n()).unwrap());
        let flags = ModelFlags {
            poi_hard: self.poi_hard,
            dw_directions: self.directions.clone(),
            forbidden_cells: self.forbidden.clone(),
        };
        build_model(&v, PoiCell { row: self.poi.0, col: self.poi.1 }, &self.weights, window, &flags).unwrap()
    }

    pub fn free_count(&self) -> usize {
        self.n() - self.forbidden.len() - usize::from(self.poi_hard)
    }

    pub fn poi_index(&self) -> usize {
        self.poi.0 * self.side + self.poi.1
    }

    pub fn allowed(&self, bits: &[bool]) -> bool {
        if self.forbidden.iter().any(|&i| bits[i]) || (self.poi_hard && !bits[self.poi_index()]) {
            return false;
        }
        let count = bits.iter().filter(|&&b| b).count();
        self.window.is_none_or(|(lo, hi)| (lo..=hi).contains(&count))
    }

    /// Objective from the four term definitions.
    pub fn objective(&self, bits: &[bool]) -> f64 {
        let w = &self.weights;
        let a_area = if self.window.is_some() { 0.0 } else { w.a_area };
        a_area * popcount(bits) as f64 - w.a_cover * self.cover(bits)
            + w.a_2dw * domain_walls(bits, self.side, &self.directions) as f64
            + w.a_ng * self.weighted_cut(bits)
    }

    pub fn cover(&self, bits: &[bool]) -> f64 {
        let mut total = 0.0;
        for r in 0..self.side {
            for c in 0..self.side {
                if bits[r * self.side + c] {
                    let md = (r as f64 - self.poi.0 as f64).abs() + (c as f64 - self.poi.1 as f64).abs();
                    total += (1.0 + md).powf(-self.weights.alpha) * self.v[r * self.side + c];
                }
            }
        }
        total
    }

    pub fn weighted_cut(&self, bits: &[bool]) -> f64 {
        let s = self.weights.sigma;
        let mut total = 0.0;
        for (a, b) in grid_edges(self.side) {
            if bits[a] != bits[b] {
                let dv = self.v[a] - self.v[b];
                total += (-dv * dv / (2.0 * s * s)).exp();
            }
        }
        total
    }

    /// Minimum objective over every allowed assignment, by plain bitmask
    /// enumeration. `None` when nothing is allowed.
    pub fn brute_force(&self) -> Option<f64> {
        let n = self.n();
        assert!(n <= 20, "enumeration over {n} cells");
        let mut best: Option<f64> = None;
        let mut bits = vec![false; n];
        for mask in 0u32..(1 << n) {
            for (i, b) in bits.iter_mut().enumerate() {
                *b = mask >> i & 1 == 1;
            }
            if self.allowed(&bits) {
                let e = self.objective(&bits);
                best = Some(best.map_or(e, |b| b.min(e)));
            }
        }
        best
    }
}

pub fn popcount(bits: &[bool]) -> usize {
    bits.iter().filter(|&&b| b).count()
}

/// Unordered 4-neighbor pairs of a square grid.
pub fn grid_edges(side: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                out.push((r * side + c, r * side + c + 1));
            }
            if r + 1 < side {
                out.push((r * side + c, (r + 1) * side + c));
            }
        }
    }
    out
}

pub fn cut_size(bits: &[bool], side: usize) -> usize {
    grid_edges(side).into_iter().filter(|&(a, b)| bits[a] != bits[b]).count()
}

/// Selected cells times in-grid neighbors outside the selection, counted
/// per direction: RD looks right, down-right and down; LU the opposite;
/// RU right, up-right, up; LD left, down-left, down.
pub fn domain_walls(bits: &[bool], side: usize, directions: &[Direction]) -> usize {
    let mut total = 0;
    for dir in directions {
        let offs: [(i64, i64); 3] = match dir {
            Direction::Rd => [(0, 1), (1, 1), (1, 0)],
            Direction::Lu => [(0, -1), (-1, -1), (-1, 0)],
            Direction::Ru => [(0, 1), (-1, 1), (-1, 0)],
            Direction::Ld => [(0, -1), (1, -1), (1, 0)],
        };
        for r in 0..side as i64 {
            for c in 0..side as i64 {
                if !bits[(r * side as i64 + c) as usize] {
                    continue;
                }
                for (dr, dc) in offs {
                    let (nr, nc) = (r + dr, c + dc);
                    if (0..side as i64).contains(&nr) && (0..side as i64).contains(&nc) && !bits[(nr * side as i64 + nc) as usize] {
                        total += 1;
                    }
                }
            }
        }
    }
    total
}

/// A random instance on a `2^d` grid with up to `max_forbidden` forbidden
/// cells and a window that the fixed cells leave reachable.
pub fn random_instance<R: Rng>(rng: &mut R, d: u32, max_forbidden: usize) -> Instance {
    let side = 1usize << d;
    let n = side * side;
    let v: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..=1.0) }).collect();
    let poi = (rng.gen_range(0..side), rng.gen_range(0..side));
    let weights = Weights {
        a_area: rng.gen_range(0.0..2.0),
        a_cover: rng.gen_range(0.0..60.0),
        a_2dw: rng.gen_range(0.0..2.0),
        a_ng: rng.gen_range(0.0..2.0),
        alpha: rng.gen_range(0.2..1.5),
        sigma: rng.gen_range(0.2..1.0),
    };
    let all = [Direction::Rd, Direction::Lu, Direction::Ru, Direction::Ld];
    let k = rng.gen_range(1..=all.len());
    let directions: Vec<Direction> = all.choose_multiple(rng, k).copied().collect();

    let poi_idx = poi.0 * side + poi.1;
    let poi_hard = rng.gen_bool(0.3);
    let mut cells: Vec<usize> = (0..n).filter(|&i| !(poi_hard && i == poi_idx)).collect();
    cells.shuffle(rng);
    let forbidden: BTreeSet<usize> = cells.into_iter().take(rng.gen_range(0..=max_forbidden.min(n - 1))).collect();

    let ones = usize::from(poi_hard);
    let reachable = n - forbidden.len();
    let window = rng.gen_bool(0.75).then(|| {
        let lo = rng.gen_range(ones..=reachable);
        let hi = rng.gen_range(lo..=reachable);
        (lo, hi)
    });
    Instance { side, v, poi, weights, directions, window, forbidden, poi_hard }
}

pub fn random_bits<R: Rng>(rng: &mut R, n: usize) -> Vec<bool> {
    let p = rng.gen_range(0.0..=1.0);
    (0..n).map(|_| rng.gen_bool(p)).collect()
}

/// A random assignment that respects the instance's fixed cells.
pub fn random_admissible<R: Rng>(rng: &mut R, inst: &Instance) -> Selection {
    let mut bits = random_bits(rng, inst.n());
    for &i in &inst.forbidden {
        bits[i] = false;
    }
    if inst.poi_hard {
        bits[inst.poi_index()] = true;
    }
    Selection::from_bits(inst.side, bits).unwrap()
}

/// Independent feasibility check of a selection against its model.
pub fn feasible(model: &QuadraticModel, sel: &Selection) -> bool {
    let count = popcount(sel.bits());
    let window_ok = model.window().is_none_or(|w| w.min_cells <= count && count <= w.max_cells);
    window_ok && model.fixed().iter().all(|(&i, &v)| sel.bits()[i] == v)
}
