//! Vector charts: shoreline polylines and point landmarks.
//!
//! Charts are read from GeoJSON. Shorelines are densified into evenly spaced
//! samples around a query origin and indexed on a uniform grid so that the
//! nearest-shoreline distance can be answered without scanning every sample.

use crate::error::{Error, Result};
use crate::geodesy::{GeodeticPoint, NedPoint, TangentPlane};
use serde_json::{json, Value};
use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub id: String,
    pub position: GeodeticPoint,
}

/// Shorelines and landmarks of a charted area.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    shorelines: Vec<Vec<GeodeticPoint>>,
    landmarks: Vec<Landmark>,
}

impl Chart {
    /// Validates and builds a chart. Every polyline needs two or more vertices
    /// and landmark ids must be unique.
    pub fn new(shorelines: Vec<Vec<GeodeticPoint>>, landmarks: Vec<Landmark>) -> Result<Self> {
        if shorelines.is_empty() && landmarks.is_empty() {
            return Err(Error::EmptyChart);
        }
        for (i, line) in shorelines.iter().enumerate() {
            if line.len() < 2 {
                return Err(Error::ChartParse {
                    feature: format!("shoreline #{i}"),
                    message: "polyline needs at least 2 vertices".into(),
                });
            }
        }
        let mut seen = HashSet::new();
        for l in &landmarks {
            if !seen.insert(l.id.as_str()) {
                return Err(Error::ChartParse {
                    feature: format!("landmark '{}'", l.id),
                    message: "duplicate landmark id".into(),
                });
            }
        }
        Ok(Chart {
            shorelines,
            landmarks,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_geojson_str(&text)
    }

    pub fn from_geojson_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::ChartParse {
            feature: "<document>".into(),
            message: e.to_string(),
        })?;
        Self::from_geojson(&root)
    }

    pub fn from_geojson(root: &Value) -> Result<Self> {
        let features = root
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::ChartParse {
                feature: "<document>".into(),
                message: "expected a FeatureCollection with a 'features' array".into(),
            })?;

        let mut shorelines = Vec::new();
        let mut landmarks = Vec::new();
        for (index, feature) in features.iter().enumerate() {
            let props = feature.get("properties");
            let kind = props.and_then(|p| p.get("kind")).and_then(Value::as_str);
            let label = props
                .and_then(|p| p.get("id"))
                .and_then(Value::as_str)
                .map(|id| format!("#{index} ('{id}')"))
                .unwrap_or_else(|| format!("#{index}"));
            let err = |message: String| Error::ChartParse {
                feature: label.clone(),
                message,
            };
            let geometry = feature
                .get("geometry")
                .ok_or_else(|| err("missing geometry".into()))?;
            let gtype = geometry
                .get("type")
                .and_then(Value::as_str)
                .ok_or_else(|| err("geometry without type".into()))?;
            let coords = geometry
                .get("coordinates")
                .ok_or_else(|| err("geometry without coordinates".into()))?;

            match (kind, gtype) {
                (Some("landmark"), "Point") => {
                    let id = props
                        .and_then(|p| p.get("id"))
                        .and_then(Value::as_str)
                        .ok_or_else(|| err("landmark without string 'id'".into()))?;
                    let position = parse_position(coords).map_err(err)?;
                    landmarks.push(Landmark {
                        id: id.to_string(),
                        position,
                    });
                }
                (Some("shoreline"), "LineString") => {
                    shorelines.push(parse_line(coords).map_err(err)?);
                }
                (Some("shoreline"), "MultiLineString") => {
                    for line in as_array(coords).map_err(err)? {
                        shorelines.push(parse_line(line).map_err(err)?);
                    }
                }
                (Some("shoreline"), "Polygon") => {
                    for ring in as_array(coords).map_err(err)? {
                        shorelines.push(parse_ring(ring).map_err(err)?);
                    }
                }
                (Some("shoreline"), "MultiPolygon") => {
                    for polygon in as_array(coords).map_err(err)? {
                        for ring in as_array(polygon).map_err(err)? {
                            shorelines.push(parse_ring(ring).map_err(err)?);
                        }
                    }
                }
                (Some("shoreline"), other) | (Some("landmark"), other) => {
                    return Err(err(format!(
                        "geometry type {other} not allowed for kind {}",
                        kind.unwrap_or_default()
                    )));
                }
                // unrelated chart content
                _ => {}
            }
        }
        Self::new(shorelines, landmarks)
    }

    /// GeoJSON FeatureCollection in the same layout [`Chart::from_geojson`] reads.
    pub fn to_geojson(&self) -> Value {
        let mut features: Vec<Value> = self
            .shorelines
            .iter()
            .map(|line| {
                let coords: Vec<[f64; 2]> =
                    line.iter().map(|p| [p.lon_deg(), p.lat_deg()]).collect();
                json!({
                    "type": "Feature",
                    "properties": { "kind": "shoreline" },
                    "geometry": { "type": "LineString", "coordinates": coords },
                })
            })
            .collect();
        features.extend(self.landmarks.iter().map(|l| {
            json!({
                "type": "Feature",
                "properties": { "kind": "landmark", "id": l.id },
                "geometry": {
                    "type": "Point",
                    "coordinates": [l.position.lon_deg(), l.position.lat_deg()],
                },
            })
        }));
        json!({ "type": "FeatureCollection", "features": features })
    }

    pub fn shorelines(&self) -> &[Vec<GeodeticPoint>] {
        &self.shorelines
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn landmark(&self, id: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    /// Landmarks within `radius` meters of `center`.
    pub fn landmarks_within(&self, center: GeodeticPoint, radius: f64) -> Vec<&Landmark> {
        let plane = TangentPlane::new(center);
        self.landmarks
            .iter()
            .filter(|l| plane.to_ned(l.position).norm() <= radius)
            .collect()
    }

    pub fn extract_shoreline(
        &self,
        origin: GeodeticPoint,
        radius: f64,
        spacing: f64,
    ) -> ShorelineSamples {
        extract_shoreline(self, origin, radius, spacing)
    }
}

fn as_array(v: &Value) -> std::result::Result<&Vec<Value>, String> {
    v.as_array().ok_or_else(|| "expected a coordinate array".to_string())
}

fn parse_position(v: &Value) -> std::result::Result<GeodeticPoint, String> {
    let arr = as_array(v)?;
    if arr.len() < 2 {
        return Err("position needs [lon, lat]".into());
    }
    let lon = arr[0].as_f64().ok_or("longitude is not a number")?;
    let lat = arr[1].as_f64().ok_or("latitude is not a number")?;
    GeodeticPoint::from_degrees(lat, lon)
        .ok_or_else(|| format!("coordinate out of range: lat {lat}°, lon {lon}°"))
}

fn parse_line(v: &Value) -> std::result::Result<Vec<GeodeticPoint>, String> {
    let line = as_array(v)?
        .iter()
        .map(parse_position)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if line.len() < 2 {
        return Err("polyline needs at least 2 vertices".into());
    }
    Ok(line)
}

/// Polygon rings become closed polylines.
fn parse_ring(v: &Value) -> std::result::Result<Vec<GeodeticPoint>, String> {
    let mut ring = parse_line(v)?;
    if ring.first() != ring.last() {
        ring.push(ring[0]);
    }
    Ok(ring)
}

pub fn load_chart(path: impl AsRef<Path>) -> Result<Chart> {
    Chart::load(path)
}

/// Densified shoreline around an origin, in that origin's tangent plane.
#[derive(Debug, Clone)]
pub struct ShorelineSamples {
    pub origin: GeodeticPoint,
    pub points: Vec<NedPoint>,
    /// Index ranges of `points` that are contiguous along one polyline.
    pub runs: Vec<Range<usize>>,
    pub spacing: f64,
    index: GridIndex,
}

impl ShorelineSamples {
    /// Builds samples from explicit points. Each run is a contiguous polyline.
    pub fn from_runs(origin: GeodeticPoint, runs: Vec<Vec<NedPoint>>, spacing: f64) -> Self {
        let mut points = Vec::new();
        let mut ranges = Vec::new();
        for run in runs {
            let start = points.len();
            points.extend(run);
            ranges.push(start..points.len());
        }
        let index = GridIndex::build(&points, (4.0 * spacing).max(1.0));
        ShorelineSamples {
            origin,
            points,
            runs: ranges,
            spacing,
            index,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn plane(&self) -> TangentPlane {
        TangentPlane::new(self.origin)
    }

    /// Line segments between consecutive samples of each run.
    pub fn segments(&self) -> impl Iterator<Item = (NedPoint, NedPoint)> + '_ {
        self.runs.iter().flat_map(move |r| {
            self.points[r.clone()]
                .windows(2)
                .map(|w| (w[0], w[1]))
        })
    }

    /// Minimum distance from `p` to any sample.
    pub fn min_distance(&self, p: NedPoint) -> Result<f64> {
        self.nearest_within(p, f64::INFINITY)
            .map(|(_, d)| d)
            .ok_or(Error::NoShoreline)
    }

    /// Nearest sample and its distance, if one lies within `cutoff`.
    ///
    /// The distance is bit-identical to the brute-force minimum whenever it
    /// is returned.
    pub fn nearest_within(&self, p: NedPoint, cutoff: f64) -> Option<(usize, f64)> {
        self.index.nearest(&self.points, p, cutoff)
    }
}

/// Brute-force minimum distance, the reference for the grid index.
pub fn min_distance_brute_force(p: NedPoint, samples: &ShorelineSamples) -> Option<f64> {
    samples
        .points
        .iter()
        .map(|q| {
            let dn = p.north - q.north;
            let de = p.east - q.east;
            dn * dn + de * de
        })
        .min_by(f64::total_cmp)
        .map(f64::sqrt)
}

/// Minimum Euclidean distance from `p` to the sampled shoreline.
pub fn min_distance(p: NedPoint, samples: &ShorelineSamples) -> Result<f64> {
    samples.min_distance(p)
}

/// Densifies every shoreline segment that intersects the disc of `radius`
/// meters around `origin`, clipped to the disc, at no more than `spacing`
/// meters between consecutive samples.
pub fn extract_shoreline(
    chart: &Chart,
    origin: GeodeticPoint,
    radius: f64,
    spacing: f64,
) -> ShorelineSamples {
    assert!(radius > 0.0 && spacing > 0.0, "radius and spacing must be positive");
    let plane = TangentPlane::new(origin);
    let r2 = radius * radius;
    let mut runs: Vec<Vec<NedPoint>> = Vec::new();

    for line in &chart.shorelines {
        let verts: Vec<NedPoint> = line.iter().map(|p| plane.to_ned(*p)).collect();
        // whether the current run ends exactly at the previous segment's end vertex
        let mut open_run = false;
        for w in verts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = b - a;
            let dd = d.north * d.north + d.east * d.east;
            if dd == 0.0 {
                continue;
            }
            let ad = a.north * d.north + a.east * d.east;
            let aa = a.north * a.north + a.east * a.east;
            let disc = ad * ad - dd * (aa - r2);
            if disc < 0.0 {
                open_run = false;
                continue;
            }
            let sq = disc.sqrt();
            let t0 = ((-ad - sq) / dd).max(0.0);
            let t1 = ((-ad + sq) / dd).min(1.0);
            if t0 > t1 {
                open_run = false;
                continue;
            }
            let len = (t1 - t0) * dd.sqrt();
            let n = ((len / spacing - 1e-9).ceil() as usize).max(1);
            let continues = open_run && t0 == 0.0;
            if !continues {
                runs.push(Vec::with_capacity(n + 1));
            }
            let run = runs.last_mut().expect("run was pushed");
            let first = if continues { 1 } else { 0 };
            for k in first..=n {
                let t = t0 + (t1 - t0) * (k as f64 / n as f64);
                run.push(a + d * t);
            }
            open_run = t1 == 1.0;
        }
    }
    ShorelineSamples::from_runs(origin, runs, spacing)
}

/// Uniform bucket grid over the sample bounding box, stored CSR-style.
#[derive(Debug, Clone)]
struct GridIndex {
    cell: f64,
    min_n: f64,
    min_e: f64,
    nx: i64,
    ny: i64,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl GridIndex {
    fn build(points: &[NedPoint], cell: f64) -> Self {
        if points.is_empty() {
            return GridIndex {
                cell,
                min_n: 0.0,
                min_e: 0.0,
                nx: 0,
                ny: 0,
                starts: vec![0],
                items: Vec::new(),
            };
        }
        let (mut min_n, mut max_n) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_e, mut max_e) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_n = min_n.min(p.north);
            max_n = max_n.max(p.north);
            min_e = min_e.min(p.east);
            max_e = max_e.max(p.east);
        }
        // keep the grid bounded for sparse, far-flung sample sets
        let extent = (max_n - min_n).max(max_e - min_e);
        let cell = cell.max(extent / 2048.0);
        let nx = ((max_n - min_n) / cell).floor() as i64 + 1;
        let ny = ((max_e - min_e) / cell).floor() as i64 + 1;

        let cell_of = |p: &NedPoint| -> usize {
            let i = (((p.north - min_n) / cell).floor() as i64).clamp(0, nx - 1);
            let j = (((p.east - min_e) / cell).floor() as i64).clamp(0, ny - 1);
            (i * ny + j) as usize
        };
        let ncell = (nx * ny) as usize;
        let mut counts = vec![0u32; ncell + 1];
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for k in 1..=ncell {
            counts[k] += counts[k - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0u32; points.len()];
        for (idx, p) in points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = idx as u32;
            fill[c] += 1;
        }
        GridIndex {
            cell,
            min_n,
            min_e,
            nx,
            ny,
            starts,
            items,
        }
    }

    fn nearest(&self, points: &[NedPoint], p: NedPoint, cutoff: f64) -> Option<(usize, f64)> {
        if points.is_empty() || !(p.north.is_finite() && p.east.is_finite()) {
            return None;
        }
        let ci = ((p.north - self.min_n) / self.cell).floor();
        let cj = ((p.east - self.min_e) / self.cell).floor();
        // far outside the grid: clamp into an i64-safe range, distances stay exact
        let ci = ci.clamp(-1e12, 1e12) as i64;
        let cj = cj.clamp(-1e12, 1e12) as i64;
        let ring_to = |i: i64, j: i64| (i - ci).abs().max((j - cj).abs());
        let r_first = {
            let di = (-ci).max(ci - (self.nx - 1)).max(0);
            let dj = (-cj).max(cj - (self.ny - 1)).max(0);
            di.max(dj)
        };
        let r_last = [
            ring_to(0, 0),
            ring_to(0, self.ny - 1),
            ring_to(self.nx - 1, 0),
            ring_to(self.nx - 1, self.ny - 1),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);

        let mut best = (usize::MAX, f64::INFINITY);
        let cutoff_sq = if cutoff.is_finite() {
            cutoff * cutoff
        } else {
            f64::INFINITY
        };
        let visit = |i: i64, j: i64, best: &mut (usize, f64)| {
            if i < 0 || j < 0 || i >= self.nx || j >= self.ny {
                return;
            }
            let c = (i * self.ny + j) as usize;
            for &k in &self.items[self.starts[c] as usize..self.starts[c + 1] as usize] {
                let q = points[k as usize];
                let dn = p.north - q.north;
                let de = p.east - q.east;
                let d2 = dn * dn + de * de;
                if d2 < best.1 || (d2 == best.1 && (k as usize) < best.0) {
                    *best = (k as usize, d2);
                }
            }
        };

        for r in r_first..=r_last {
            let bound = ((r - 1).max(0) as f64) * self.cell;
            let bound_sq = bound * bound;
            if r > 0 && (best.1 <= bound_sq || bound_sq > cutoff_sq) {
                break;
            }
            if r == 0 {
                visit(ci, cj, &mut best);
                continue;
            }
            let i_lo = (ci - r).max(0);
            let i_hi = (ci + r).min(self.nx - 1);
            for i in i_lo..=i_hi {
                visit(i, cj - r, &mut best);
                visit(i, cj + r, &mut best);
            }
            let j_lo = (cj - r + 1).max(0);
            let j_hi = (cj + r - 1).min(self.ny - 1);
            for j in j_lo..=j_hi {
                visit(ci - r, j, &mut best);
                visit(ci + r, j, &mut best);
            }
        }
        (best.1 <= cutoff_sq).then(|| (best.0, best.1.sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::to_geo;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn origin() -> GeodeticPoint {
        GeodeticPoint::from_degrees(55.0, 10.0).unwrap()
    }

    fn square_island(center: NedPoint, half: f64) -> Vec<GeodeticPoint> {
        let o = origin();
        [(-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)]
            .iter()
            .map(|(n, e)| to_geo(NedPoint::new(center.north + n * half, center.east + e * half), o))
            .collect()
    }

    const ISLAND_DOC: &str = r#"{
      "type": "FeatureCollection",
      "features": [
        {"type": "Feature", "properties": {"kind": "shoreline"},
         "geometry": {"type": "Polygon", "coordinates": [[[10.0, 55.0], [10.01, 55.0], [10.01, 55.01], [10.0, 55.01], [10.0, 55.0]]]}},
        {"type": "Feature", "properties": {"kind": "landmark", "id": "buoy-1"},
         "geometry": {"type": "Point", "coordinates": [10.02, 55.0]}},
        {"type": "Feature", "properties": {"kind": "landmark", "id": "buoy-2"},
         "geometry": {"type": "Point", "coordinates": [10.02, 55.02]}},
        {"type": "Feature", "properties": {"kind": "depth-area"},
         "geometry": {"type": "Point", "coordinates": [10.03, 55.02]}}
      ]
    }"#;

    #[test]
    fn loads_island_and_landmarks() {
        let chart = Chart::from_geojson_str(ISLAND_DOC).unwrap();
        assert_eq!(chart.shorelines().len(), 1);
        assert_eq!(chart.shorelines()[0].len(), 5);
        assert_eq!(chart.landmarks().len(), 2);
        assert_eq!(chart.landmarks()[1].id, "buoy-2");
        assert!((chart.landmarks()[0].position.lon - 10.02f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn geojson_round_trip() {
        let chart = Chart::from_geojson_str(ISLAND_DOC).unwrap();
        let again = Chart::from_geojson(&chart.to_geojson()).unwrap();
        assert_eq!(again.landmarks(), chart.landmarks());
        assert_eq!(again.shorelines().len(), 1);
        for (a, b) in again.shorelines()[0].iter().zip(&chart.shorelines()[0]) {
            assert!((a.lat - b.lat).abs() < 1e-15 && (a.lon - b.lon).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_collection_is_error() {
        let err = Chart::from_geojson_str(r#"{"type":"FeatureCollection","features":[]}"#)
            .unwrap_err();
        assert!(matches!(err, Error::EmptyChart));
    }

    #[test]
    fn bad_latitude_names_feature() {
        let doc = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","properties":{"kind":"landmark","id":"bad-buoy"},
           "geometry":{"type":"Point","coordinates":[10.0, 200.0]}}]}"#;
        match Chart::from_geojson_str(doc).unwrap_err() {
            Error::ChartParse { feature, message } => {
                assert!(feature.contains("bad-buoy"), "{feature}");
                assert!(message.contains("200"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn duplicate_landmark_ids_rejected() {
        let p = origin();
        let l = |id: &str| Landmark {
            id: id.into(),
            position: p,
        };
        assert!(Chart::new(vec![], vec![l("a"), l("a")]).is_err());
        assert!(Chart::new(vec![vec![p]], vec![]).is_err());
    }

    #[test]
    fn island_inside_radius_is_fully_covered() {
        let chart = Chart::new(vec![square_island(NedPoint::new(1000.0, 0.0), 100.0)], vec![])
            .unwrap();
        let s = chart.extract_shoreline(origin(), 3000.0, 5.0);
        // 800 m perimeter at 5 m spacing, closed ring
        assert!((s.len() as i64 - 161).abs() <= 1, "{}", s.len());
        assert_eq!(s.runs.len(), 1);
        for w in s.points.windows(2) {
            assert!(w[0].distance(&w[1]) <= 5.0 + 1e-6);
        }
    }

    #[test]
    fn island_outside_radius_is_empty() {
        let chart = Chart::new(vec![square_island(NedPoint::new(5000.0, 0.0), 100.0)], vec![])
            .unwrap();
        let s = chart.extract_shoreline(origin(), 3000.0, 5.0);
        assert!(s.is_empty());
        assert!(matches!(s.min_distance(NedPoint::ORIGIN), Err(Error::NoShoreline)));
    }

    #[test]
    fn straight_kilometer_gives_101_samples() {
        let o = origin();
        let line = vec![
            to_geo(NedPoint::new(200.0, -500.0), o),
            to_geo(NedPoint::new(200.0, 500.0), o),
        ];
        let chart = Chart::new(vec![line], vec![]).unwrap();
        let s = chart.extract_shoreline(o, 3000.0, 10.0);
        assert!((s.len() as i64 - 101).abs() <= 1, "{}", s.len());
    }

    #[test]
    fn clipping_keeps_samples_in_disc() {
        let o = origin();
        let line = vec![
            to_geo(NedPoint::new(500.0, -5000.0), o),
            to_geo(NedPoint::new(500.0, 5000.0), o),
        ];
        let chart = Chart::new(vec![line], vec![]).unwrap();
        let s = chart.extract_shoreline(o, 1000.0, 5.0);
        assert!(!s.is_empty());
        assert!(s.points.iter().all(|p| p.norm() <= 1000.0 + 5.0));
        // chord length 2*sqrt(1000^2-500^2) ≈ 1732 m
        assert!((s.len() as f64 - 1732.05 / 5.0).abs() < 2.0, "{}", s.len());
    }

    #[test]
    fn distance_to_sample_and_perpendicular() {
        let o = origin();
        let line = vec![
            to_geo(NedPoint::new(0.0, -500.0), o),
            to_geo(NedPoint::new(0.0, 500.0), o),
        ];
        let chart = Chart::new(vec![line], vec![]).unwrap();
        let s = chart.extract_shoreline(o, 3000.0, 5.0);
        let p = s.points[17];
        assert_eq!(s.min_distance(p).unwrap(), 0.0);
        let d = s.min_distance(NedPoint::new(50.0, 3.3)).unwrap();
        assert!((d - 50.0).abs() <= 2.5, "{d}");
    }

    #[test]
    fn index_matches_brute_force_l_shape() {
        let o = origin();
        let line = vec![
            to_geo(NedPoint::new(-800.0, 300.0), o),
            to_geo(NedPoint::new(400.0, 300.0), o),
            to_geo(NedPoint::new(400.0, -900.0), o),
        ];
        let chart = Chart::new(vec![line], vec![]).unwrap();
        let s = chart.extract_shoreline(o, 5000.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = NedPoint::new(rng.random_range(-6000.0..6000.0), rng.random_range(-6000.0..6000.0));
            assert_eq!(s.min_distance(p).unwrap(), min_distance_brute_force(p, &s).unwrap());
        }
    }

    #[test]
    fn bounded_query_respects_cutoff() {
        let s = ShorelineSamples::from_runs(origin(), vec![vec![NedPoint::new(0.0, 0.0)]], 5.0);
        assert!(s.nearest_within(NedPoint::new(100.0, 0.0), 99.0).is_none());
        assert_eq!(s.nearest_within(NedPoint::new(100.0, 0.0), 100.0).unwrap().1, 100.0);
    }

    #[test]
    fn landmarks_in_range() {
        let chart = Chart::from_geojson_str(ISLAND_DOC).unwrap();
        let near = chart.landmarks_within(origin(), 1500.0);
        assert_eq!(near.len(), 1);
        assert_eq!(near[0].id, "buoy-1");
    }

    #[test]
    fn extraction_independent_of_polyline_order() {
        let a = square_island(NedPoint::new(800.0, 0.0), 100.0);
        let b = square_island(NedPoint::new(-600.0, 400.0), 150.0);
        let c1 = Chart::new(vec![a.clone(), b.clone()], vec![]).unwrap();
        let c2 = Chart::new(vec![b, a], vec![]).unwrap();
        let s1 = c1.extract_shoreline(origin(), 3000.0, 5.0);
        let s2 = c2.extract_shoreline(origin(), 3000.0, 5.0);
        assert_eq!(s1.len(), s2.len());
        for p in &s1.points {
            assert!(s2.min_distance(*p).unwrap() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn min_distance_is_one_lipschitz(
            n1 in -2000.0f64..2000.0, e1 in -2000.0f64..2000.0,
            n2 in -2000.0f64..2000.0, e2 in -2000.0f64..2000.0,
        ) {
            let chart = Chart::new(vec![square_island(NedPoint::new(300.0, -200.0), 120.0)], vec![]).unwrap();
            let s = chart.extract_shoreline(origin(), 3000.0, 5.0);
            let p = NedPoint::new(n1, e1);
            let q = NedPoint::new(n2, e2);
            let dp = s.min_distance(p).unwrap();
            let dq = s.min_distance(q).unwrap();
            prop_assert!((dp - dq).abs() <= p.distance(&q) + 1e-9);
        }
    }
}
