//! GeoJSON rendering of geofences in source units.

use geojson::{Feature, FeatureCollection, Geometry, JsonObject, JsonValue, Value};

use crate::circular::CircularGeofence;
use crate::error::{Error, Result};
use crate::ingest::BBox;
use crate::model::DiscreteGeofence;

/// Vertices of the polygon approximating a circle.
pub const CIRCLE_VERTICES: usize = 64;

fn feature(geometry: Value, properties: JsonObject) -> Feature {
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(geometry)),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

fn collection(features: Vec<Feature>) -> FeatureCollection {
    FeatureCollection { bbox: None, features, foreign_members: None }
}

/// Selected cells as one MultiPolygon of counter-clockwise cell rectangles.
/// An empty selection yields an empty collection. `bbox` must match the
/// geofence's grid.
pub fn export_discrete(g: &DiscreteGeofence, bbox: &BBox, properties: JsonObject) -> Result<FeatureCollection> {
    if g.spec.bbox != *bbox {
        return Err(Error::invalid("bounding box does not match the geofence grid"));
    }
    if g.selection.count() == 0 {
        return Ok(collection(Vec::new()));
    }
    let polygons = g
        .selection
        .cells()
        .map(|cell| {
            let (x0, y0, x1, y1) = g.spec.cell_rect(cell);
            vec![vec![vec![x0, y0], vec![x1, y0], vec![x1, y1], vec![x0, y1], vec![x0, y0]]]
        })
        .collect();
    Ok(collection(vec![feature(Value::MultiPolygon(polygons), properties)]))
}

/// Circle in normalized units mapped through `bbox`, as a closed
/// [`CIRCLE_VERTICES`]-gon.
pub fn export_circular(c: &CircularGeofence, bbox: &BBox, properties: JsonObject) -> FeatureCollection {
    let mut ring: Vec<Vec<f64>> = (0..CIRCLE_VERTICES)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / CIRCLE_VERTICES as f64;
            let (x, y) = bbox.from_unit(c.cx + c.r * theta.cos(), c.cy + c.r * theta.sin());
            vec![x, y]
        })
        .collect();
    ring.push(ring[0].clone());
    collection(vec![feature(Value::Polygon(vec![ring]), properties)])
}

/// Builds a property map from `(key, value)` pairs.
pub fn properties<I, K>(pairs: I) -> JsonObject
where
    I: IntoIterator<Item = (K, JsonValue)>,
    K: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{bin_index, GridSpec, PoiCell};
    use crate::model::Selection;
    use proptest::prelude::*;

    fn ring_area(ring: &[Vec<f64>]) -> f64 {
        0.5 * ring.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum::<f64>()
    }

    fn polygons(fc: &FeatureCollection) -> Vec<Vec<Vec<Vec<f64>>>> {
        match &fc.features[0].geometry.as_ref().unwrap().value {
            Value::MultiPolygon(p) => p.clone(),
            other => panic!("unexpected geometry {other:?}"),
        }
    }

    #[test]
    fn empty_selection_is_empty_collection() {
        let spec = GridSpec::new(2, BBox::unit()).unwrap();
        let g = DiscreteGeofence::new(spec, Selection::empty(4)).unwrap();
        assert!(export_discrete(&g, &BBox::unit(), JsonObject::new()).unwrap().features.is_empty());
    }

    #[test]
    fn single_cell_rectangle() {
        let bbox = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let spec = GridSpec::new(1, bbox).unwrap();
        let g = DiscreteGeofence::new(spec, Selection::from_cells(2, [PoiCell { row: 0, col: 0 }]).unwrap()).unwrap();
        let fc = export_discrete(&g, &bbox, JsonObject::new()).unwrap();
        let p = polygons(&fc);
        assert_eq!(p[0][0], vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(export_discrete(&g, &BBox::unit(), JsonObject::new()).is_err());
    }

    #[test]
    fn full_grid_tiles_bbox() {
        let bbox = BBox::new(10.0, -5.0, 13.5, 2.0).unwrap();
        let spec = GridSpec::new(3, bbox).unwrap();
        let g = DiscreteGeofence::new(spec, Selection::full(8)).unwrap();
        let fc = export_discrete(&g, &bbox, properties([("run_id", JsonValue::from("x"))])).unwrap();
        let area: f64 = polygons(&fc).iter().map(|p| ring_area(&p[0])).sum();
        assert!((area - bbox.width() * bbox.height()).abs() < 1e-6);
        assert_eq!(fc.features[0].properties.as_ref().unwrap()["run_id"], "x");
    }

    #[test]
    fn circle_polygon() {
        let bbox = BBox::new(0.0, 0.0, 100.0, 100.0).unwrap();
        let c = CircularGeofence::new(0.5, 0.5, 0.25).unwrap();
        let fc = export_circular(&c, &bbox, JsonObject::new());
        let Value::Polygon(rings) = &fc.features[0].geometry.as_ref().unwrap().value else { panic!() };
        assert_eq!(rings[0].len(), CIRCLE_VERTICES + 1);
        assert_eq!(rings[0][0], rings[0][CIRCLE_VERTICES]);
        let exact = std::f64::consts::PI * 25.0 * 25.0;
        assert!((ring_area(&rings[0]) - exact).abs() / exact < 0.01);
    }

    proptest! {
        #[test]
        fn centroids_rebin_to_selection(bits in prop::collection::vec(any::<bool>(), 64), x0 in -1e3..1e3f64, w in 0.1..1e3f64, y0 in -1e3..1e3f64, h in 0.1..1e3f64) {
            let bbox = BBox::new(x0, y0, x0 + w, y0 + h).unwrap();
            let spec = GridSpec::new(3, bbox).unwrap();
            let sel = Selection::from_bits(8, bits).unwrap();
            let g = DiscreteGeofence::new(spec, sel.clone()).unwrap();
            let fc = export_discrete(&g, &bbox, JsonObject::new()).unwrap();
            let mut back = Selection::empty(8);
            if !fc.features.is_empty() {
                for poly in polygons(&fc) {
                    let ring = &poly[0];
                    let cx = (ring[0][0] + ring[2][0]) / 2.0;
                    let cy = (ring[0][1] + ring[2][1]) / 2.0;
                    let (u, v) = bbox.to_unit(cx, cy);
                    back.set(bin_index(v, 8).unwrap(), bin_index(u, 8).unwrap(), true);
                }
            }
            prop_assert_eq!(back, sel);
        }
    }
}
