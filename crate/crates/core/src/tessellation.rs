//! Tile sets, point-to-tile assignment and great-circle distance.

use std::collections::HashMap;
use std::io::Read;

use geojson::{GeoJson, Value};
use rstar::{RTree, RTreeObject, AABB};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two `(lat, lng)` pairs given in
/// degrees, on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lng1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lng2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlng = lng2 - lng1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlng / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

// Points closer than this (in degrees) to an edge count as on the boundary.
const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// A closed ring of `[lng, lat]` vertices, first vertex repeated last.
type Ring = Vec<[f64; 2]>;

#[derive(Debug, Clone)]
struct PolygonShape {
    exterior: Ring,
    holes: Vec<Ring>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Inside,
    OnBoundary,
    Outside,
}

impl PolygonShape {
    fn position(&self, p: [f64; 2]) -> Position {
        match ring_position(&self.exterior, p) {
            Position::Outside => Position::Outside,
            Position::OnBoundary => Position::OnBoundary,
            Position::Inside => {
                for hole in &self.holes {
                    match ring_position(hole, p) {
                        Position::Inside => return Position::Outside,
                        Position::OnBoundary => return Position::OnBoundary,
                        Position::Outside => {}
                    }
                }
                Position::Inside
            }
        }
    }
}

fn ring_position(ring: &[[f64; 2]], p: [f64; 2]) -> Position {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if point_segment_distance(p, a, b) <= BOUNDARY_TOLERANCE {
            return Position::OnBoundary;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    if inside {
        Position::Inside
    } else {
        Position::Outside
    }
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

fn orientation(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn ring_self_intersects(ring: &[[f64; 2]]) -> bool {
    let n = ring.len() - 1; // number of edges
    for i in 0..n {
        for j in (i + 1)..n {
            // Consecutive edges share a vertex, as do the first and last.
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return true;
            }
        }
    }
    false
}

fn validate_ring(raw: &[Vec<f64>]) -> std::result::Result<Ring, String> {
    if raw.len() < 4 {
        return Err("ring has fewer than four positions".into());
    }
    let mut ring = Vec::with_capacity(raw.len());
    for pos in raw {
        if pos.len() < 2 {
            return Err("position with fewer than two coordinates".into());
        }
        let (lng, lat) = (pos[0], pos[1]);
        if !(lng.is_finite() && lat.is_finite())
            || !(-180.0..=180.0).contains(&lng)
            || !(-90.0..=90.0).contains(&lat)
        {
            return Err("coordinate outside WGS-84 bounds".into());
        }
        ring.push([lng, lat]);
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".into());
    }
    if ring_self_intersects(&ring) {
        return Err("ring is self-intersecting".into());
    }
    Ok(ring)
}

fn validate_polygon(raw: &[Vec<Vec<f64>>]) -> std::result::Result<PolygonShape, String> {
    let (exterior, holes) = raw.split_first().ok_or("polygon has no rings")?;
    Ok(PolygonShape {
        exterior: validate_ring(exterior)?,
        holes: holes
            .iter()
            .map(|h| validate_ring(h))
            .collect::<std::result::Result<_, _>>()?,
    })
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    min: [f64; 2],
    max: [f64; 2],
}

impl BBox {
    fn of(polygons: &[PolygonShape]) -> BBox {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in polygons.iter().flat_map(|poly| poly.exterior.iter()) {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        BBox { min, max }
    }
}

/// Area-weighted centroid computed in an equirectangular projection centred
/// on the bounding box. Returns `(lat, lng)` or `None` for zero-area shapes.
fn planar_centroid(polygons: &[PolygonShape], bbox: BBox) -> Option<(f64, f64)> {
    let lng0 = (bbox.min[0] + bbox.max[0]) / 2.0;
    let lat0 = (bbox.min[1] + bbox.max[1]) / 2.0;
    let kx = lat0.to_radians().cos();
    let project = |p: &[f64; 2]| [(p[0] - lng0) * kx, p[1] - lat0];

    // Signed area and first moments of a ring in the projected plane.
    let ring_moments = |ring: &Ring| -> (f64, f64, f64) {
        let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for w in ring.windows(2) {
            let (p, q) = (project(&w[0]), project(&w[1]));
            let cross = p[0] * q[1] - q[0] * p[1];
            a += cross;
            cx += (p[0] + q[0]) * cross;
            cy += (p[1] + q[1]) * cross;
        }
        (a / 2.0, cx / 6.0, cy / 6.0)
    };

    let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
    for poly in polygons {
        // Normalise orientation: exterior adds, holes subtract.
        let (a, x, y) = ring_moments(&poly.exterior);
        let s = a.signum();
        area += a * s;
        mx += x * s;
        my += y * s;
        for hole in &poly.holes {
            let (a, x, y) = ring_moments(hole);
            let s = a.signum();
            area -= a * s;
            mx -= x * s;
            my -= y * s;
        }
    }
    if area <= 0.0 || !area.is_finite() {
        return None;
    }
    let (x, y) = (mx / area, my / area);
    Some((y + lat0, x / kx + lng0))
}

/// One cell of a tessellation.
#[derive(Debug, Clone)]
pub struct Tile {
    pub tile_id: String,
    /// `(lat, lng)` in degrees.
    pub centroid: (f64, f64),
    polygons: Vec<PolygonShape>,
    bbox: BBox,
}

impl Tile {
    fn position(&self, p: [f64; 2]) -> Position {
        let mut best = Position::Outside;
        for poly in &self.polygons {
            match poly.position(p) {
                Position::Inside => return Position::Inside,
                Position::OnBoundary => best = Position::OnBoundary,
                Position::Outside => {}
            }
        }
        best
    }

    /// `(min_lat, min_lng, max_lat, max_lng)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        (self.bbox.min[1], self.bbox.min[0], self.bbox.max[1], self.bbox.max[0])
    }
}

struct TileEnvelope {
    index: usize,
    bbox: BBox,
}

impl RTreeObject for TileEnvelope {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        AABB::from_corners(self.bbox.min, self.bbox.max)
    }
}

/// Which tile a point falls into. The index refers to
/// [`Tessellation::tiles`], which is sorted by `tile_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TileAssignment {
    Tile(usize),
    Outlier,
}

impl TileAssignment {
    pub fn index(self) -> Option<usize> {
        match self {
            TileAssignment::Tile(i) => Some(i),
            TileAssignment::Outlier => None,
        }
    }
}

/// An immutable set of tiles with a bounding-box index.
pub struct Tessellation {
    tiles: Vec<Tile>,
    by_id: HashMap<String, usize>,
    index: RTree<TileEnvelope>,
}

impl std::fmt::Debug for Tessellation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tessellation")
            .field("tiles", &self.tiles.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRejection {
    /// Position of the feature in the collection.
    pub feature: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadedTessellation {
    pub tessellation: Tessellation,
    pub rejections: Vec<FeatureRejection>,
}

/// Reads a GeoJSON feature collection whose features carry a string
/// `tile_id` property.
pub fn load_tessellation<R: Read>(mut reader: R) -> Result<LoadedTessellation> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let doc: GeoJson = text.parse().map_err(|e| Error::GeoJson(format!("{e}")))?;
    let features = match doc {
        GeoJson::FeatureCollection(fc) => fc.features,
        _ => return Err(Error::GeoJson("expected a FeatureCollection".into())),
    };

    let mut tiles = Vec::new();
    let mut rejections = Vec::new();
    for (i, feature) in features.into_iter().enumerate() {
        let reject = |reason: String| FeatureRejection { feature: i, reason };
        let tile_id = match feature.property("tile_id") {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => {
                rejections.push(reject("`tile_id` is not a non-empty string".into()));
                continue;
            }
            None => {
                rejections.push(reject("missing `tile_id` property".into()));
                continue;
            }
        };
        let raw_polygons = match feature.geometry.map(|g| g.value) {
            Some(Value::Polygon(p)) => vec![p],
            Some(Value::MultiPolygon(mp)) => mp,
            Some(other) => {
                rejections.push(reject(format!("{} geometry is not a polygon", other.type_name())));
                continue;
            }
            None => {
                rejections.push(reject("feature has no geometry".into()));
                continue;
            }
        };
        let polygons = match raw_polygons
            .iter()
            .map(|p| validate_polygon(p))
            .collect::<std::result::Result<Vec<_>, _>>()
        {
            Ok(p) if !p.is_empty() => p,
            Ok(_) => {
                rejections.push(reject("empty multipolygon".into()));
                continue;
            }
            Err(reason) => {
                rejections.push(reject(reason));
                continue;
            }
        };
        let bbox = BBox::of(&polygons);
        let Some(centroid) = planar_centroid(&polygons, bbox) else {
            rejections.push(reject("polygon has zero area".into()));
            continue;
        };
        tiles.push(Tile {
            tile_id,
            centroid,
            polygons,
            bbox,
        });
    }
    Ok(LoadedTessellation {
        tessellation: Tessellation::from_tiles(tiles)?,
        rejections,
    })
}

impl Tessellation {
    fn from_tiles(mut tiles: Vec<Tile>) -> Result<Self> {
        if tiles.is_empty() {
            return Err(Error::EmptyTessellation);
        }
        tiles.sort_by(|a, b| a.tile_id.cmp(&b.tile_id));
        if let Some(w) = tiles.windows(2).find(|w| w[0].tile_id == w[1].tile_id) {
            return Err(Error::DuplicateTile(w[0].tile_id.clone()));
        }
        let by_id = tiles
            .iter()
            .enumerate()
            .map(|(i, t)| (t.tile_id.clone(), i))
            .collect();
        let index = RTree::bulk_load(
            tiles
                .iter()
                .enumerate()
                .map(|(index, t)| TileEnvelope { index, bbox: t.bbox })
                .collect(),
        );
        Ok(Tessellation { tiles, by_id, index })
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn tile(&self, index: usize) -> &Tile {
        &self.tiles[index]
    }

    pub fn index_of(&self, tile_id: &str) -> Option<usize> {
        self.by_id.get(tile_id).copied()
    }

    pub fn tile_ids(&self) -> impl Iterator<Item = &str> {
        self.tiles.iter().map(|t| t.tile_id.as_str())
    }

    /// Tile containing `(lat, lng)`. Points on a boundary shared by several
    /// tiles go to the one with the smallest `tile_id`.
    pub fn assign(&self, lat: f64, lng: f64) -> TileAssignment {
        let p = [lng, lat];
        let mut best: Option<usize> = None;
        let probe = AABB::from_corners(
            [lng - BOUNDARY_TOLERANCE, lat - BOUNDARY_TOLERANCE],
            [lng + BOUNDARY_TOLERANCE, lat + BOUNDARY_TOLERANCE],
        );
        for env in self.index.locate_in_envelope_intersecting(&probe) {
            if best.is_some_and(|b| b < env.index) {
                continue;
            }
            if self.tiles[env.index].position(p) != Position::Outside {
                best = Some(env.index);
            }
        }
        best.map_or(TileAssignment::Outlier, TileAssignment::Tile)
    }

    /// Same as [`Tessellation::assign`], returning the tile id.
    pub fn assign_tile(&self, lat: f64, lng: f64) -> Option<&str> {
        self.assign(lat, lng)
            .index()
            .map(|i| self.tiles[i].tile_id.as_str())
    }

    /// Haversine distances between all tile centroids, row-major.
    pub fn centroid_distances(&self) -> Vec<f64> {
        let n = self.tiles.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = haversine_distance(self.tiles[i].centroid, self.tiles[j].centroid);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(id: &str, x0: f64, y0: f64, side: f64) -> String {
        format!(
            r#"{{"type":"Feature","properties":{{"tile_id":"{id}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#,
            x1 = x0 + side,
            y1 = y0 + side
        )
    }

    fn collection(features: &[String]) -> String {
        format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
    }

    fn load(features: &[String]) -> Result<LoadedTessellation> {
        load_tessellation(collection(features).as_bytes())
    }

    #[test]
    fn grid_of_386_tiles() {
        let features: Vec<String> = (0..386)
            .map(|i| square(&format!("t{i:03}"), 13.0 + (i % 20) as f64 * 0.01, 52.0 + (i / 20) as f64 * 0.01, 0.01))
            .collect();
        let loaded = load(&features).unwrap();
        assert_eq!(loaded.tessellation.len(), 386);
        assert!(loaded.rejections.is_empty());
    }

    #[test]
    fn duplicate_tile_id_is_rejected() {
        let err = load(&[square("A", 0.0, 0.0, 1.0), square("A", 1.0, 0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateTile(ref id) if id == "A"));
        assert!(err.is_config());
    }

    #[test]
    fn empty_collection_is_an_error() {
        assert!(matches!(load(&[]), Err(Error::EmptyTessellation)));
    }

    #[test]
    fn non_polygon_features_are_logged() {
        let point = r#"{"type":"Feature","properties":{"tile_id":"P"},"geometry":{"type":"Point","coordinates":[0.5,0.5]}}"#;
        let bowtie = r#"{"type":"Feature","properties":{"tile_id":"X"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,1],[1,0],[0,1],[0,0]]]}}"#;
        let open = r#"{"type":"Feature","properties":{"tile_id":"O"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}"#;
        let loaded = load(&[
            square("A", 0.0, 0.0, 1.0),
            point.into(),
            bowtie.into(),
            open.into(),
            r#"{"type":"Feature","properties":{},"geometry":null}"#.into(),
        ])
        .unwrap();
        assert_eq!(loaded.tessellation.len(), 1);
        let reasons: Vec<_> = loaded.rejections.iter().map(|r| (r.feature, r.reason.as_str())).collect();
        assert_eq!(
            reasons,
            vec![
                (1, "Point geometry is not a polygon"),
                (2, "ring is self-intersecting"),
                (3, "ring is not closed"),
                (4, "missing `tile_id` property"),
            ]
        );
    }

    #[test]
    fn assignment_and_tie_break() {
        let t = load(&[square("B", 1.0, 0.0, 1.0), square("A", 0.0, 0.0, 1.0)])
            .unwrap()
            .tessellation;
        let a = t.index_of("A").unwrap();
        let (lat, lng) = t.tile(a).centroid;
        assert_relative_eq!(lat, 0.5, epsilon = 1e-9);
        assert_relative_eq!(lng, 0.5, epsilon = 1e-9);
        assert_eq!(t.assign_tile(lat, lng), Some("A"));
        assert_eq!(t.assign_tile(0.5, 1.5), Some("B"));
        assert_eq!(t.assign_tile(5.0, 5.0), None);
        // Shared edge x = 1.
        assert_eq!(t.assign_tile(0.5, 1.0), Some("A"));
        assert_eq!(t.assign_tile(0.25, 1.0), Some("A"));
        // Outer edge of B only.
        assert_eq!(t.assign_tile(0.5, 2.0), Some("B"));
    }

    #[test]
    fn holes_and_multipolygons() {
        let donut = r#"{"type":"Feature","properties":{"tile_id":"D"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[4,0],[4,4],[0,4],[0,0]],[[1,1],[3,1],[3,3],[1,3],[1,1]]]}}"#;
        let multi = r#"{"type":"Feature","properties":{"tile_id":"M"},"geometry":{"type":"MultiPolygon","coordinates":[[[[10,0],[11,0],[11,1],[10,1],[10,0]]],[[[12,0],[13,0],[13,1],[12,1],[12,0]]]]}}"#;
        let t = load(&[donut.into(), multi.into()]).unwrap().tessellation;
        assert_eq!(t.assign_tile(2.0, 2.0), None);
        assert_eq!(t.assign_tile(0.5, 0.5), Some("D"));
        assert_eq!(t.assign_tile(0.5, 12.5), Some("M"));
        assert_eq!(t.assign_tile(0.5, 11.5), None);
        let d = t.tile(t.index_of("D").unwrap());
        assert_relative_eq!(d.centroid.0, 2.0, epsilon = 1e-9);
        let m = t.tile(t.index_of("M").unwrap());
        assert_relative_eq!(m.centroid.1, 11.5, epsilon = 1e-9);
    }

    #[test]
    fn centroid_inside_bounding_box() {
        let ell = r#"{"type":"Feature","properties":{"tile_id":"L"},"geometry":{"type":"Polygon","coordinates":[[[0,50],[3,50],[3,51],[1,51],[1,53],[0,53],[0,50]]]}}"#;
        let t = load(&[ell.into()]).unwrap().tessellation;
        let tile = t.tile(0);
        let (min_lat, min_lng, max_lat, max_lng) = tile.bounding_box();
        assert!((min_lat..=max_lat).contains(&tile.centroid.0));
        assert!((min_lng..=max_lng).contains(&tile.centroid.1));
    }

    #[test]
    fn haversine_identity_and_half_circumference() {
        assert_eq!(haversine_distance((52.52, 13.405), (52.52, 13.405)), 0.0);
        assert_relative_eq!(
            haversine_distance((0.0, 0.0), (0.0, 180.0)),
            std::f64::consts::PI * EARTH_RADIUS_M,
            max_relative = 1e-12
        );
    }

    #[test]
    fn haversine_matches_spherical_law_of_cosines() {
        // Independent formula for the same great-circle distance.
        fn law_of_cosines(a: (f64, f64), b: (f64, f64)) -> f64 {
            let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
            let dl = (b.1 - a.1).to_radians();
            let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
            EARTH_RADIUS_M * c.clamp(-1.0, 1.0).acos()
        }
        let (a, b) = ((52.52, 13.405), (52.52, 13.406));
        let d = haversine_distance(a, b);
        assert_relative_eq!(d, law_of_cosines(a, b), max_relative = 1e-5);
        assert_relative_eq!(d, 67.7, epsilon = 0.05);
    }
}
