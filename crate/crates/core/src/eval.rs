//! Coverage metrics (UCR, UPCR) and overlap between geofences.
//!
//! All functions take trajectories in normalized coordinates, the space in
//! which both circular and discrete geofences are defined.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::circular::CircularGeofence;
use crate::error::{Error, Result};
use crate::ingest::{cell_of, TrajectorySet};
use crate::model::{DiscreteGeofence, Selection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geofence {
    Circular(CircularGeofence),
    Discrete(DiscreteGeofenceDoc),
}

/// Serializable discrete geofence: the grid plus its selected cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGeofenceDoc {
    pub d: u32,
    pub bbox: crate::ingest::BBox,
    /// Selected cells as `[row, col]`.
    pub selected: Vec<[usize; 2]>,
}

impl DiscreteGeofenceDoc {
    pub fn from_geofence(g: &DiscreteGeofence) -> Self {
        Self {
            d: g.spec.d,
            bbox: g.spec.bbox,
            selected: g.selection.cells().map(|c| [c.row, c.col]).collect(),
        }
    }

    pub fn to_geofence(&self) -> Result<DiscreteGeofence> {
        let spec = crate::ingest::GridSpec::new(self.d, self.bbox)?;
        let cells = self.selected.iter().map(|&[row, col]| crate::ingest::PoiCell { row, col });
        DiscreteGeofence::new(spec, Selection::from_cells(spec.side(), cells)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeofenceKind {
    Circular,
    Discrete,
}

/// Membership test over normalized coordinates.
#[derive(Debug, Clone)]
pub enum Region {
    Circular(CircularGeofence),
    Discrete(Selection),
}

impl Region {
    pub fn from_geofence(g: &Geofence) -> Result<Self> {
        Ok(match g {
            Geofence::Circular(c) => Region::Circular(*c),
            Geofence::Discrete(doc) => Region::Discrete(doc.to_geofence()?.selection),
        })
    }

    pub fn kind(&self) -> GeofenceKind {
        match self {
            Region::Circular(_) => GeofenceKind::Circular,
            Region::Discrete(_) => GeofenceKind::Discrete,
        }
    }
}

impl From<&DiscreteGeofence> for Region {
    fn from(g: &DiscreteGeofence) -> Self {
        Region::Discrete(g.selection.clone())
    }
}

impl From<CircularGeofence> for Region {
    fn from(g: CircularGeofence) -> Self {
        Region::Circular(g)
    }
}

/// Circular: strictly closer than `r` to the center. Discrete: the point's
/// cell is selected; points outside the unit square are never inside.
pub fn point_inside(region: &Region, x: f64, y: f64) -> bool {
    match region {
        Region::Circular(c) => c.contains(x, y),
        Region::Discrete(sel) => cell_of(x, y, sel.side()).is_some_and(|c| sel.get(c.row, c.col)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFraction {
    pub uid: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub geofence_kind: GeofenceKind,
    pub ucr: f64,
    pub upcr_mean: f64,
    /// Population standard deviation of the per-user fractions.
    pub upcr_std: f64,
    pub per_user: Vec<UserFraction>,
}

fn per_user(region: &Region, data: &TrajectorySet) -> Result<Vec<UserFraction>> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(data
        .iter()
        .map(|t| {
            let hit = t.points.iter().filter(|p| point_inside(region, p.x, p.y)).count();
            UserFraction { uid: t.uid.clone(), fraction: hit as f64 / t.points.len() as f64 }
        })
        .collect())
}

/// Fraction of users with at least one covered point.
pub fn ucr(region: &Region, data: &TrajectorySet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let covered = data.iter().filter(|t| t.points.iter().any(|p| point_inside(region, p.x, p.y))).count();
    Ok(covered as f64 / data.len() as f64)
}

/// Mean and population standard deviation of per-user covered-point
/// fractions, with the fractions themselves.
pub fn upcr(region: &Region, data: &TrajectorySet) -> Result<(f64, f64, Vec<UserFraction>)> {
    let fractions = per_user(region, data)?;
    let (mean, std) = mean_std(fractions.iter().map(|u| u.fraction));
    Ok((mean, std, fractions))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn coverage_report(region: &Region, data: &TrajectorySet) -> Result<CoverageReport> {
    let (upcr_mean, upcr_std, per_user) = upcr(region, data)?;
    let covered = per_user.iter().filter(|u| u.fraction > 0.0).count();
    Ok(CoverageReport {
        geofence_kind: region.kind(),
        ucr: covered as f64 / per_user.len() as f64,
        upcr_mean,
        upcr_std,
        per_user,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub intersection_cells: usize,
    pub union_cells: usize,
    /// Zero when both selections are empty.
    pub jaccard: f64,
}

pub fn overlap(a: &DiscreteGeofence, b: &DiscreteGeofence) -> Result<Overlap> {
    if a.spec != b.spec {
        return Err(Error::invalid("overlap needs geofences on the same grid"));
    }
    let (mut inter, mut union) = (0, 0);
    for (&x, &y) in a.selection.bits().iter().zip(b.selection.bits()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    let jaccard = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
    Ok(Overlap { intersection_cells: inter, union_cells: union, jaccard })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportColumn {
    pub label: String,
    pub kind: GeofenceKind,
    pub ucr: f64,
    pub upcr_mean: f64,
    pub upcr_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub circular_label: String,
    pub discrete_label: String,
    pub uid: String,
    pub circular_fraction: f64,
    pub discrete_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub columns: Vec<ReportColumn>,
    /// One row per user for every (circular, discrete) pairing.
    pub scatter: Vec<ScatterRow>,
}

/// Side-by-side UCR/UPCR table for labelled circular and discrete
/// geofences, plus per-user fraction pairs for scatter plots.
pub fn compare_report(
    circular: &[(String, CircularGeofence)],
    discrete: &[(String, DiscreteGeofence)],
    data: &TrajectorySet,
) -> Result<CompareReport> {
    if circular.is_empty() || discrete.is_empty() {
        return Err(Error::invalid("comparison needs at least one circular and one discrete geofence"));
    }
    let circ: Vec<(&String, CoverageReport)> = circular
        .iter()
        .map(|(l, g)| Ok((l, coverage_report(&Region::Circular(*g), data)?)))
        .collect::<Result<_>>()?;
    let disc: Vec<(&String, CoverageReport)> = discrete
        .iter()
        .map(|(l, g)| Ok((l, coverage_report(&Region::from(g), data)?)))
        .collect::<Result<_>>()?;

    let columns = circ
        .iter()
        .chain(&disc)
        .map(|(label, r)| ReportColumn {
            label: (*label).clone(),
            kind: r.geofence_kind,
            ucr: r.ucr,
            upcr_mean: r.upcr_mean,
            upcr_std: r.upcr_std,
        })
        .collect();
    let mut scatter = Vec::new();
    for (cl, cr) in &circ {
        for (dl, dr) in &disc {
            for (cu, du) in cr.per_user.iter().zip(&dr.per_user) {
                scatter.push(ScatterRow {
                    circular_label: (*cl).clone(),
                    discrete_label: (*dl).clone(),
                    uid: cu.uid.clone(),
                    circular_fraction: cu.fraction,
                    discrete_fraction: du.fraction,
                });
            }
        }
    }
    Ok(CompareReport { columns, scatter })
}

/// Writes the scatter rows as CSV with a header.
pub fn write_scatter_csv<W: Write>(report: &CompareReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in &report.scatter {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{BBox, GridSpec, PoiCell, TrajectoryPoint};
    use proptest::prelude::*;

    fn data(users: &[&[(f64, f64)]]) -> TrajectorySet {
        TrajectorySet::from_records(users.iter().enumerate().flat_map(|(u, pts)| {
            pts.iter().enumerate().map(move |(k, &(x, y))| (format!("u{u}"), TrajectoryPoint { t: k as f64, x, y }))
        }))
        .unwrap()
    }

    fn discrete(d: u32, cells: &[(usize, usize)]) -> DiscreteGeofence {
        let spec = GridSpec::new(d, BBox::unit()).unwrap();
        let sel = Selection::from_cells(spec.side(), cells.iter().map(|&(row, col)| PoiCell { row, col })).unwrap();
        DiscreteGeofence::new(spec, sel).unwrap()
    }

    #[test]
    fn circle_boundary_is_outside() {
        let c = Region::Circular(CircularGeofence::new(0.0, 0.0, 0.5).unwrap());
        assert!(!point_inside(&c, 0.5, 0.0));
        assert!(!point_inside(&c, 0.3, 0.4));
        assert!(point_inside(&c, 0.3, 0.39));
    }

    #[test]
    fn discrete_membership() {
        let g = Region::from(&discrete(1, &[(0, 1)]));
        assert!(point_inside(&g, 0.75, 0.25));
        assert!(!point_inside(&g, 0.25, 0.25));
        assert!(!point_inside(&g, 1.5, 0.25));
        let full = Region::Discrete(Selection::full(4));
        assert!(point_inside(&full, 1.0, 1.0) && point_inside(&full, 0.0, 0.0));
    }

    #[test]
    fn upcr_arithmetic() {
        let d = data(&[&[(0.1, 0.1), (0.2, 0.2)], &[(0.9, 0.9)]]);
        let g = Region::from(&discrete(1, &[(0, 0)]));
        let (mean, std, per) = upcr(&g, &d).unwrap();
        assert_eq!((mean, std), (0.5, 0.5));
        assert_eq!(per.len(), 2);
        assert_eq!(ucr(&g, &d).unwrap(), 0.5);
        let none = Region::Discrete(Selection::empty(2));
        let (m, s, per) = upcr(&none, &d).unwrap();
        assert_eq!((m, s), (0.0, 0.0));
        assert!(per.iter().all(|u| u.fraction == 0.0));
        assert_eq!(ucr(&Region::Discrete(Selection::full(2)), &d).unwrap(), 1.0);
        assert!(ucr(&g, &TrajectorySet::default()).is_err());
    }

    #[test]
    fn overlap_cases() {
        let a = discrete(2, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let b = discrete(2, &[(1, 0), (1, 1), (2, 0), (2, 1)]);
        let o = overlap(&a, &b).unwrap();
        assert_eq!(o.intersection_cells, 2);
        assert!((o.jaccard - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(overlap(&a, &a).unwrap().jaccard, 1.0);
        assert_eq!(overlap(&a, &discrete(2, &[(3, 3)])).unwrap().jaccard, 0.0);
        assert_eq!(overlap(&discrete(2, &[]), &discrete(2, &[])).unwrap().jaccard, 0.0);
        assert!(overlap(&a, &discrete(1, &[])).is_err());
    }

    #[test]
    fn compare_layout() {
        let d = data(&[&[(0.1, 0.1)], &[(0.9, 0.9)], &[(0.5, 0.5)]]);
        let c = CircularGeofence::new(0.1, 0.1, 0.2).unwrap();
        let r = compare_report(&[("circ".into(), c)], &[("disc".into(), discrete(1, &[(1, 1)]))], &d).unwrap();
        assert_eq!(r.columns.len(), 2);
        assert_eq!(r.scatter.len(), 3);
        let mut buf = Vec::new();
        write_scatter_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("circular_label,discrete_label,uid,circular_fraction,discrete_fraction\n"));
        assert!(compare_report(&[], &[("d".into(), discrete(1, &[]))], &d).is_err());
    }

    #[test]
    fn geofence_json_round_trip() {
        let g = Geofence::Discrete(DiscreteGeofenceDoc::from_geofence(&discrete(2, &[(1, 2)])));
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"kind\":\"discrete\""));
        assert_eq!(serde_json::from_str::<Geofence>(&text).unwrap(), g);
    }

    fn arb_data() -> impl Strategy<Value = TrajectorySet> {
        prop::collection::vec((0usize..6, 0.0..=1.0f64, 0.0..=1.0f64), 1..60).prop_map(|pts| {
            TrajectorySet::from_records(
                pts.into_iter().enumerate().map(|(k, (u, x, y))| (u.to_string(), TrajectoryPoint { t: k as f64, x, y })),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn adding_cells_never_lowers_coverage(d in arb_data(), bits in prop::collection::vec(any::<bool>(), 16), extra in 0usize..16) {
            let small = Selection::from_bits(4, bits.clone()).unwrap();
            let mut big = small.clone();
            big.set(extra / 4, extra % 4, true);
            let (rs, rb) = (Region::Discrete(small), Region::Discrete(big));
            prop_assert!(ucr(&rs, &d).unwrap() <= ucr(&rb, &d).unwrap());
            let (_, _, ps) = upcr(&rs, &d).unwrap();
            let (_, _, pb) = upcr(&rb, &d).unwrap();
            for (a, b) in ps.iter().zip(&pb) {
                prop_assert!(a.fraction <= b.fraction);
            }
        }

        #[test]
        fn report_is_consistent(d in arb_data(), bits in prop::collection::vec(any::<bool>(), 16)) {
            let r = coverage_report(&Region::Discrete(Selection::from_bits(4, bits).unwrap()), &d).unwrap();
            let mean = r.per_user.iter().map(|u| u.fraction).sum::<f64>() / r.per_user.len() as f64;
            prop_assert!((mean - r.upcr_mean).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.ucr) && (0.0..=1.0).contains(&r.upcr_std));
            prop_assert_eq!(r.ucr == 1.0, r.per_user.iter().all(|u| u.fraction > 0.0));
            prop_assert!(r.ucr + 1e-12 >= r.upcr_mean);
        }

        #[test]
        fn duplicating_points_keeps_upcr(d in arb_data(), bits in prop::collection::vec(any::<bool>(), 16)) {
            let doubled = TrajectorySet::new(d.iter().map(|t| {
                let mut t = t.clone();
                let copy = t.points.clone();
                t.points.extend(copy);
                t
            }).collect()).unwrap();
            let g = Region::Discrete(Selection::from_bits(4, bits).unwrap());
            let (a, _, _) = upcr(&g, &d).unwrap();
            let (b, _, _) = upcr(&g, &doubled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn jaccard_symmetric(a in prop::collection::vec(any::<bool>(), 16), b in prop::collection::vec(any::<bool>(), 16)) {
            let spec = GridSpec::new(2, BBox::unit()).unwrap();
            let ga = DiscreteGeofence::new(spec, Selection::from_bits(4, a).unwrap()).unwrap();
            let gb = DiscreteGeofence::new(spec, Selection::from_bits(4, b).unwrap()).unwrap();
            prop_assert_eq!(overlap(&ga, &gb).unwrap(), overlap(&gb, &ga).unwrap());
            if ga.selection.count() > 0 {
                prop_assert_eq!(overlap(&ga, &ga).unwrap().jaccard, 1.0);
            }
        }
    }
}
