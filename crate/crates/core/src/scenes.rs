//! Synthetic charts used by tests, examples and the simulator.

use crate::chart::{Chart, Landmark};
use crate::geodesy::{to_geo, GeodeticPoint, NedPoint};
use std::f64::consts::TAU;

/// Closed polygon approximating a circle of `radius` meters around `center`.
pub fn circle_polyline(origin: GeodeticPoint, center: NedPoint, radius: f64, n_vertices: usize) -> Vec<GeodeticPoint> {
    (0..=n_vertices)
        .map(|k| {
            let a = TAU * (k % n_vertices) as f64 / n_vertices as f64;
            to_geo(center + NedPoint::polar(radius, a), origin)
        })
        .collect()
}

pub fn circular_island(origin: GeodeticPoint, center: NedPoint, radius: f64, n_vertices: usize) -> Chart {
    Chart::new(vec![circle_polyline(origin, center, radius, n_vertices)], vec![])
        .expect("circle is a valid chart")
}

/// A straight east-west coastline `north` meters from `origin`, spanning
/// `±half_length` meters east.
pub fn straight_coast(origin: GeodeticPoint, north: f64, half_length: f64) -> Chart {
    let line = vec![
        to_geo(NedPoint::new(north, -half_length), origin),
        to_geo(NedPoint::new(north, half_length), origin),
    ];
    Chart::new(vec![line], vec![]).expect("line is a valid chart")
}

struct Island {
    center: (f64, f64),
    radius: f64,
    phase: f64,
}

const ISLANDS: [Island; 6] = [
    Island { center: (1800.0, 400.0), radius: 350.0, phase: 0.3 },
    Island { center: (-1200.0, 2000.0), radius: 500.0, phase: 1.7 },
    Island { center: (300.0, -2500.0), radius: 300.0, phase: 2.9 },
    Island { center: (-2600.0, -1000.0), radius: 450.0, phase: 4.1 },
    Island { center: (3200.0, -2200.0), radius: 250.0, phase: 5.3 },
    Island { center: (2400.0, 3000.0), radius: 400.0, phase: 0.9 },
];

/// Lighthouses on headlands plus a few buoys, NED meters from the origin.
const LANDMARKS: [(&str, f64, f64); 8] = [
    ("LH1", 2250.0, 400.0),
    ("LH2", -1200.0, 1400.0),
    ("LH3", 300.0, -2150.0),
    ("LH4", -2100.0, -1000.0),
    ("B1", 900.0, 900.0),
    ("B2", -600.0, -700.0),
    ("B3", 1400.0, -1300.0),
    ("B4", -300.0, 1100.0),
];

/// Six irregular islands and eight landmarks scattered within 4 km of `origin`.
///
/// Island outlines are radially modulated so no island has rotational symmetry.
pub fn archipelago(origin: GeodeticPoint) -> Chart {
    let n = 180;
    let shorelines = ISLANDS
        .iter()
        .map(|isl| {
            let c = NedPoint::new(isl.center.0, isl.center.1);
            (0..=n)
                .map(|k| {
                    let a = TAU * (k % n) as f64 / n as f64;
                    let r = isl.radius * (1.0 + 0.25 * (3.0 * a + isl.phase).sin() + 0.1 * (5.0 * a).cos());
                    to_geo(c + NedPoint::polar(r, a), origin)
                })
                .collect()
        })
        .collect();
    let landmarks = LANDMARKS
        .iter()
        .map(|&(id, n, e)| Landmark {
            id: id.to_string(),
            position: to_geo(NedPoint::new(n, e), origin),
        })
        .collect();
    Chart::new(shorelines, landmarks).expect("archipelago is a valid chart")
}
