//! The discrete geofence model: the area, weighted-cover, two-dimensional
//! domain-wall and adjacency terms over an `L x L` grid of 0-1 cell
//! variables, and their compilation into a quadratic 0-1 model.
//!
//! Everything is a minimization. With weights `a_*` the compiled objective is
//!
//! ```text
//! a_area * area(X) - a_cover * cover(X) + a_2dw * dw(X) + a_ng * ng(X)
//! ```
//!
//! where each `X_a (1 - X_b)` product expands to `X_a - X_a X_b`. When an
//! area window is given the area weight is dropped and the window is carried
//! as a hard constraint for the solvers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CellMatrix, GridSpec, PoiCell};

/// Neighbor direction for the domain-wall term, in index space: `R`/`L`
/// move the column by +1/-1, `D`/`U` move the row by +1/-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "RD")]
    Rd,
    #[serde(rename = "LU")]
    Lu,
    #[serde(rename = "RU")]
    Ru,
    #[serde(rename = "LD")]
    Ld,
}

impl Direction {
    pub const DEFAULT: [Direction; 2] = [Direction::Rd, Direction::Lu];

    /// `(d_row, d_col)` of the three cells examined from a given cell.
    pub fn offsets(self) -> [(isize, isize); 3] {
        match self {
            Direction::Rd => [(0, 1), (1, 1), (1, 0)],
            Direction::Lu => [(0, -1), (-1, -1), (-1, 0)],
            Direction::Ru => [(0, 1), (-1, 1), (-1, 0)],
            Direction::Ld => [(0, -1), (1, -1), (1, 0)],
        }
    }

    /// Boundary-clipped neighbor indices of `(row, col)`.
    pub fn neighbors(self, row: usize, col: usize, side: usize) -> impl Iterator<Item = usize> {
        self.offsets().into_iter().filter_map(move |(dr, dc)| {
            let r = row.checked_add_signed(dr)?;
            let c = col.checked_add_signed(dc)?;
            (r < side && c < side).then_some(r * side + c)
        })
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Rd => "RD",
            Direction::Lu => "LU",
            Direction::Ru => "RU",
            Direction::Ld => "LD",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RD" => Ok(Direction::Rd),
            "LU" => Ok(Direction::Lu),
            "RU" => Ok(Direction::Ru),
            "LD" => Ok(Direction::Ld),
            other => Err(Error::invalid(format!("unknown domain-wall direction {other:?}"))),
        }
    }
}

/// A binary `side x side` cell selection, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selection {
    side: usize,
    bits: Vec<bool>,
}

impl Selection {
    pub fn empty(side: usize) -> Self {
        Self { side, bits: vec![false; side * side] }
    }

    pub fn full(side: usize) -> Self {
        Self { side, bits: vec![true; side * side] }
    }

    pub fn from_bits(side: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(Error::ShapeMismatch { expected: side * side, actual: bits.len() });
        }
        Ok(Self { side, bits })
    }

    pub fn from_cells(side: usize, cells: impl IntoIterator<Item = PoiCell>) -> Result<Self> {
        let mut sel = Self::empty(side);
        for c in cells {
            if c.row >= side || c.col >= side {
                return Err(Error::invalid(format!("cell ({}, {}) outside a {side}x{side} grid", c.row, c.col)));
            }
            sel.bits[c.index(side)] = true;
        }
        Ok(sel)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.side + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Selected cells in `(row, col)` order.
    pub fn cells(&self) -> impl Iterator<Item = PoiCell> + '_ {
        let side = self.side;
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| PoiCell::from_index(i, side))
    }
}

/// A solved geofence: a selection tied to the grid it was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGeofence {
    pub spec: GridSpec,
    pub selection: Selection,
}

impl DiscreteGeofence {
    pub fn new(spec: GridSpec, selection: Selection) -> Result<Self> {
        if selection.side() != spec.side() {
            return Err(Error::ShapeMismatch { expected: spec.cell_count(), actual: selection.bits().len() });
        }
        Ok(Self { spec, selection })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub a_area: f64,
    pub a_cover: f64,
    pub a_2dw: f64,
    pub a_ng: f64,
    /// Distance-decay exponent of the cover weights.
    pub alpha: f64,
    /// Kernel width of the adjacency coefficients.
    pub sigma: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { a_area: 0.0, a_cover: 60.0, a_2dw: 1.0, a_ng: 1.0, alpha: 0.5, sigma: 0.5 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let named = [("a_area", self.a_area), ("a_cover", self.a_cover), ("a_2dw", self.a_2dw), ("a_ng", self.a_ng)];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Hard bounds on the number of selected cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaWindow {
    pub min_cells: usize,
    pub max_cells: usize,
}

impl AreaWindow {
    pub fn new(min_cells: usize, max_cells: usize, n: usize) -> Result<Self> {
        if min_cells > max_cells || max_cells > n {
            return Err(Error::invalid(format!(
                "area window [{min_cells}, {max_cells}] must satisfy 0 <= min <= max <= {n}"
            )));
        }
        Ok(Self { min_cells, max_cells })
    }

    /// Window from fractions of `n` cells: `max = floor(max_frac * n)` and
    /// `min = ceil(min_frac * n)`, the latter clipped to `max`.
    pub fn from_fractions(min_frac: f64, max_frac: f64, n: usize) -> Result<Self> {
        let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
        if !ok(min_frac) || !ok(max_frac) || min_frac > max_frac {
            return Err(Error::invalid(format!("area fractions [{min_frac}, {max_frac}] must lie in [0, 1], min <= max")));
        }
        let max_cells = ((max_frac * n as f64) + 1e-9).floor() as usize;
        let min_cells = (((min_frac * n as f64) - 1e-9).ceil().max(0.0) as usize).min(max_cells);
        Self::new(min_cells, max_cells.min(n), n)
    }

    pub fn contains(&self, count: usize) -> bool {
        (self.min_cells..=self.max_cells).contains(&count)
    }

    /// Cells missing below `min_cells` plus cells in excess of `max_cells`.
    pub fn violation(&self, count: usize) -> usize {
        self.min_cells.saturating_sub(count) + count.saturating_sub(self.max_cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelFlags {
    /// Force the POI cell into the geofence.
    pub poi_hard: bool,
    pub dw_directions: Vec<Direction>,
    /// Row-major cell indices forced out of the geofence.
    pub forbidden_cells: BTreeSet<usize>,
}

impl Default for ModelFlags {
    fn default() -> Self {
        Self { poi_hard: false, dw_directions: Direction::DEFAULT.to_vec(), forbidden_cells: BTreeSet::new() }
    }
}

pub fn area_term(x: &Selection) -> usize {
    x.count()
}

/// `C[i][j] = (1 + |P_r - i| + |P_c - j|)^(-alpha)`.
pub fn cover_weights(side: usize, poi: PoiCell, alpha: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let md = poi.row.abs_diff(i) + poi.col.abs_diff(j);
            c.push((1.0 + md as f64).powf(-alpha));
        }
    }
    c
}

pub fn cover_term(x: &Selection, v: &[f64], c: &[f64]) -> Result<f64> {
    let n = x.bits().len();
    for len in [v.len(), c.len()] {
        if len != n {
            return Err(Error::ShapeMismatch { expected: n, actual: len });
        }
    }
    Ok(x.bits().iter().zip(v).zip(c).filter(|((&b, _), _)| b).map(|((_, v), c)| c * v).sum())
}

pub fn domain_wall_term(x: &Selection, directions: &[Direction]) -> Result<f64> {
    if directions.is_empty() {
        return Err(Error::invalid("domain-wall term needs at least one direction"));
    }
    let side = x.side();
    let bits = x.bits();
    let mut total = 0usize;
    for &dir in directions {
        for r in 0..side {
            for c in 0..side {
                if bits[r * side + c] {
                    total += dir.neighbors(r, c, side).filter(|&n| !bits[n]).count();
                }
            }
        }
    }
    Ok(total as f64)
}

/// Gaussian coefficients on unordered 4-neighbor pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyCoeffs {
    side: usize,
    pairs: Vec<(usize, usize, f64)>,
}

impl AdjacencyCoeffs {
    /// `(a, b, q)` with `a < b`, in row-major order of `a`.
    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        let key = (a.min(b), a.max(b));
        self.pairs.iter().find(|p| (p.0, p.1) == key).map(|p| p.2)
    }
}

/// `Q = exp(-(V_a - V_b)^2 / (2 sigma^2))` for each 4-neighbor pair.
pub fn adjacency_coeffs(v: &CellMatrix, sigma: f64) -> Result<AdjacencyCoeffs> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let side = v.side();
    let vals = v.values();
    let q = |a: usize, b: usize| {
        let diff = vals[a] - vals[b];
        (-(diff * diff) / (2.0 * sigma * sigma)).exp()
    };
    let mut pairs = Vec::with_capacity(2 * side * side);
    for r in 0..side {
        for c in 0..side {
            let a = r * side + c;
            if c + 1 < side {
                pairs.push((a, a + 1, q(a, a + 1)));
            }
            if r + 1 < side {
                pairs.push((a, a + side, q(a, a + side)));
            }
        }
    }
    Ok(AdjacencyCoeffs { side, pairs })
}

/// Sum of `Q * X_a (1 - X_b)` over ordered 4-neighbor pairs, i.e. the
/// Q-weighted cut between selected and unselected cells.
pub fn adjacency_term(x: &Selection, q: &AdjacencyCoeffs) -> Result<f64> {
    if x.side() != q.side {
        return Err(Error::ShapeMismatch { expected: q.side * q.side, actual: x.bits().len() });
    }
    let bits = x.bits();
    Ok(q.pairs.iter().filter(|(a, b, _)| bits[*a] != bits[*b]).map(|p| p.2).sum())
}

/// Source data kept alongside the compiled coefficients so any assignment
/// can be re-scored term by term.
#[derive(Debug, Clone, PartialEq)]
struct Terms {
    v: Vec<f64>,
    cover: Vec<f64>,
    adjacency: AdjacencyCoeffs,
    weights: Weights,
    directions: Vec<Direction>,
}

/// A quadratic 0-1 model over the grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    spec: GridSpec,
    poi: PoiCell,
    linear: Vec<f64>,
    pairwise: BTreeMap<(usize, usize), f64>,
    constant: f64,
    window: Option<AreaWindow>,
    fixed: BTreeMap<usize, bool>,
    terms: Terms,
}

fn add_pair(map: &mut BTreeMap<(usize, usize), f64>, a: usize, b: usize, w: f64) {
    *map.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
}

/// Compiles the weighted terms into linear and pairwise coefficients.
pub fn build_model(
    v: &CellMatrix,
    poi: PoiCell,
    weights: &Weights,
    window: Option<AreaWindow>,
    flags: &ModelFlags,
) -> Result<QuadraticModel> {
    weights.validate()?;
    let spec = v.spec;
    let side = spec.side();
    let n = spec.cell_count();
    if poi.row >= side || poi.col >= side {
        return Err(Error::invalid(format!("POI cell ({}, {}) outside a {side}x{side} grid", poi.row, poi.col)));
    }
    if let Some(w) = window {
        AreaWindow::new(w.min_cells, w.max_cells, n)?;
    }
    if weights.a_2dw > 0.0 && flags.dw_directions.is_empty() {
        return Err(Error::invalid("a_2dw > 0 requires at least one domain-wall direction"));
    }
    if let Some(&bad) = flags.forbidden_cells.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("forbidden cell {bad} outside the {n}-cell grid")));
    }
    let poi_idx = poi.index(side);
    if flags.poi_hard && flags.forbidden_cells.contains(&poi_idx) {
        return Err(Error::Infeasible("the POI cell is forbidden while poi_hard is set".into()));
    }

    let mut weights = *weights;
    if window.is_some() {
        weights.a_area = 0.0;
    }
    let mut directions = flags.dw_directions.clone();
    directions.sort();
    directions.dedup();

    let cover = cover_weights(side, poi, weights.alpha);
    let adjacency = adjacency_coeffs(v, weights.sigma)?;
    let vals = v.values();

    let mut linear = vec![0.0; n];
    let mut pairwise = BTreeMap::new();
    for i in 0..n {
        linear[i] += weights.a_area - weights.a_cover * cover[i] * vals[i];
    }
    if weights.a_2dw > 0.0 {
        for &dir in &directions {
            for r in 0..side {
                for c in 0..side {
                    let a = r * side + c;
                    for b in dir.neighbors(r, c, side) {
                        linear[a] += weights.a_2dw;
                        add_pair(&mut pairwise, a, b, -weights.a_2dw);
                    }
                }
            }
        }
    }
    if weights.a_ng > 0.0 {
        for &(a, b, q) in adjacency.pairs() {
            // X_a(1-X_b) + X_b(1-X_a) = X_a + X_b - 2 X_a X_b
            linear[a] += weights.a_ng * q;
            linear[b] += weights.a_ng * q;
            add_pair(&mut pairwise, a, b, -2.0 * weights.a_ng * q);
        }
    }
    pairwise.retain(|_, w| *w != 0.0);

    let mut fixed: BTreeMap<usize, bool> = flags.forbidden_cells.iter().map(|&i| (i, false)).collect();
    if flags.poi_hard {
        fixed.insert(poi_idx, true);
    }

    Ok(QuadraticModel {
        spec,
        poi,
        linear,
        pairwise,
        constant: 0.0,
        window,
        fixed,
        terms: Terms { v: vals.to_vec(), cover, adjacency, weights, directions },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub total: f64,
    pub area: f64,
    pub cover: f64,
    pub dw: f64,
    pub ng: f64,
    pub window_violation: usize,
}

impl QuadraticModel {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn side(&self) -> usize {
        self.spec.side()
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn poi(&self) -> PoiCell {
        self.poi
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn pairwise(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.pairwise
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn window(&self) -> Option<AreaWindow> {
        self.window
    }

    pub fn fixed(&self) -> &BTreeMap<usize, bool> {
        &self.fixed
    }

    /// Weights as compiled (area weight zeroed under a window).
    pub fn weights(&self) -> &Weights {
        &self.terms.weights
    }

    pub fn directions(&self) -> &[Direction] {
        &self.terms.directions
    }

    pub fn density(&self) -> &[f64] {
        &self.terms.v
    }

    pub fn cover_weights(&self) -> &[f64] {
        &self.terms.cover
    }

    pub fn adjacency(&self) -> &AdjacencyCoeffs {
        &self.terms.adjacency
    }

    pub fn free_count(&self) -> usize {
        self.n() - self.fixed.len()
    }

    /// Copy of the model with additional cells fixed to `value`.
    pub fn with_fixed(&self, cells: impl IntoIterator<Item = usize>, value: bool) -> Result<Self> {
        let mut out = self.clone();
        for i in cells {
            if i >= self.n() {
                return Err(Error::invalid(format!("cell {i} outside the {}-cell grid", self.n())));
            }
            match out.fixed.insert(i, value) {
                Some(prev) if prev != value => {
                    return Err(Error::Infeasible(format!("cell {i} fixed to both 0 and 1")));
                }
                _ => {}
            }
        }
        Ok(out)
    }

    /// Replaces the area window.
    pub fn with_window(&self, window: Option<AreaWindow>) -> Result<Self> {
        if let Some(w) = window {
            AreaWindow::new(w.min_cells, w.max_cells, self.n())?;
        }
        let mut out = self.clone();
        out.window = window;
        Ok(out)
    }

    /// Compiled objective of a raw assignment, without any checks.
    pub fn energy(&self, bits: &[bool]) -> f64 {
        let lin: f64 = bits.iter().zip(&self.linear).filter(|(&b, _)| b).map(|(_, w)| w).sum();
        let quad: f64 = self.pairwise.iter().filter(|((a, b), _)| bits[*a] && bits[*b]).map(|(_, w)| w).sum();
        self.constant + lin + quad
    }

    /// Objective recomputed from the term definitions rather than the
    /// compiled coefficients.
    pub fn energy_direct(&self, x: &Selection) -> Result<f64> {
        let t = &self.terms;
        let w = &t.weights;
        let area = area_term(x) as f64;
        let cover = cover_term(x, &t.v, &t.cover)?;
        let dw = if w.a_2dw > 0.0 { domain_wall_term(x, &t.directions)? } else { 0.0 };
        let ng = adjacency_term(x, &t.adjacency)?;
        Ok(self.constant + w.a_area * area - w.a_cover * cover + w.a_2dw * dw + w.a_ng * ng)
    }

    pub fn check_assignment(&self, x: &Selection) -> Result<()> {
        if x.bits().len() != self.n() {
            return Err(Error::ShapeMismatch { expected: self.n(), actual: x.bits().len() });
        }
        for (&cell, &expected) in &self.fixed {
            let actual = x.bits()[cell];
            if actual != expected {
                return Err(Error::FixedViolation { cell, expected, actual });
            }
        }
        Ok(())
    }

    pub fn is_feasible(&self, x: &Selection) -> bool {
        self.check_assignment(x).is_ok() && self.window.is_none_or(|w| w.contains(x.count()))
    }

    /// Scores `x`: compiled total plus the raw value of every term.
    pub fn evaluate(&self, x: &Selection) -> Result<Breakdown> {
        self.check_assignment(x)?;
        let t = &self.terms;
        let total = self.energy(x.bits());
        let count = x.count();
        let breakdown = Breakdown {
            total,
            area: count as f64,
            cover: cover_term(x, &t.v, &t.cover)?,
            dw: if t.directions.is_empty() { 0.0 } else { domain_wall_term(x, &t.directions)? },
            ng: adjacency_term(x, &t.adjacency)?,
            window_violation: self.window.map_or(0, |w| w.violation(count)),
        };
        debug_assert!((total - self.energy_direct(x)?).abs() <= 1e-9 * total.abs().max(1.0));
        Ok(breakdown)
    }

    pub fn to_export(&self) -> ModelExport {
        ModelExport {
            n: self.n(),
            linear: self.linear.clone(),
            pairwise: self.pairwise.iter().map(|(&(i, j), &w)| PairEntry { i, j, w }).collect(),
            constant: self.constant,
            window: self.window,
            fixed: self.fixed.iter().map(|(&i, &v)| FixedEntry { i, value: u8::from(v) }).collect(),
        }
    }
}

/// Interchange form of a compiled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub n: usize,
    pub linear: Vec<f64>,
    pub pairwise: Vec<PairEntry>,
    pub constant: f64,
    pub window: Option<AreaWindow>,
    pub fixed: Vec<FixedEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedEntry {
    pub i: usize,
    pub value: u8,
}
