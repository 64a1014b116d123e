//! WGS84 ellipsoid and the local tangent-plane (north, east) transforms.
//!
//! All positions live on the zero-altitude ellipsoid surface. The tangent
//! plane is the linear first-order map
//!
//! ```text
//! north = M(lat0) * (lat - lat0)
//! east  = N(lat0) * cos(lat0) * (lon - lon0)
//! ```
//!
//! with both radii of curvature evaluated at the origin latitude, so that
//! [`to_geo`] is the exact algebraic inverse of [`to_ned`].

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Reference ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// Semi-major axis in meters.
    pub a: f64,
    /// Semi-minor axis in meters.
    pub b: f64,
}

impl Ellipsoid {
    pub const WGS84: Ellipsoid = Ellipsoid {
        a: 6_378_137.0,
        b: 6_356_752.314_2,
    };

    /// First eccentricity squared, `1 - b²/a²`.
    pub fn e2(&self) -> f64 {
        1.0 - (self.b * self.b) / (self.a * self.a)
    }

    /// Prime-vertical radius `N` and meridional radius `M` at `lat`.
    pub fn radii_of_curvature(&self, lat: f64) -> (f64, f64) {
        let e2 = self.e2();
        let s = lat.sin();
        let w = 1.0 - e2 * s * s;
        let n = self.a / w.sqrt();
        let m = self.a * (1.0 - e2) / (w * w.sqrt());
        (n, m)
    }
}

impl Default for Ellipsoid {
    fn default() -> Self {
        Ellipsoid::WGS84
    }
}

/// Radii of curvature `(N, M)` on WGS84.
pub fn radii_of_curvature(lat: f64) -> (f64, f64) {
    Ellipsoid::WGS84.radii_of_curvature(lat)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// A point on the ellipsoid surface, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeodeticPoint {
    /// Builds a point from radians, returning `None` outside the valid domain.
    pub fn new(lat: f64, lon: f64) -> Option<Self> {
        let valid = lat.is_finite()
            && lon.is_finite()
            && (-PI / 2.0..=PI / 2.0).contains(&lat)
            && (-PI..=PI).contains(&lon);
        valid.then_some(GeodeticPoint { lat, lon })
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64) -> Option<Self> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians())
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat.to_degrees()
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon.to_degrees()
    }
}

/// Local tangent-plane coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NedPoint {
    pub north: f64,
    pub east: f64,
}

impl NedPoint {
    pub const ORIGIN: NedPoint = NedPoint {
        north: 0.0,
        east: 0.0,
    };

    pub fn new(north: f64, east: f64) -> Self {
        NedPoint { north, east }
    }

    /// Vector of length `range` at azimuth `azimuth` (clockwise from north).
    pub fn polar(range: f64, azimuth: f64) -> Self {
        let (s, c) = azimuth.sin_cos();
        NedPoint {
            north: range * c,
            east: range * s,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.north * self.north + self.east * self.east).sqrt()
    }

    /// Azimuth clockwise from north, `atan2(east, north)`.
    pub fn azimuth(&self) -> f64 {
        self.east.atan2(self.north)
    }

    pub fn distance(&self, other: &NedPoint) -> f64 {
        let dn = self.north - other.north;
        let de = self.east - other.east;
        (dn * dn + de * de).sqrt()
    }
}

impl std::ops::Add for NedPoint {
    type Output = NedPoint;
    fn add(self, rhs: NedPoint) -> NedPoint {
        NedPoint::new(self.north + rhs.north, self.east + rhs.east)
    }
}

impl std::ops::Sub for NedPoint {
    type Output = NedPoint;
    fn sub(self, rhs: NedPoint) -> NedPoint {
        NedPoint::new(self.north - rhs.north, self.east - rhs.east)
    }
}

impl std::ops::Neg for NedPoint {
    type Output = NedPoint;
    fn neg(self) -> NedPoint {
        NedPoint::new(-self.north, -self.east)
    }
}

impl std::ops::Mul<f64> for NedPoint {
    type Output = NedPoint;
    fn mul(self, k: f64) -> NedPoint {
        NedPoint::new(self.north * k, self.east * k)
    }
}

/// 3-DOF pose: position plus heading from true north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: GeodeticPoint,
    /// Radians, normalized to `(-π, π]`.
    pub heading: f64,
}

impl Pose {
    pub fn new(position: GeodeticPoint, heading: f64) -> Self {
        Pose {
            position,
            heading: wrap_pi(heading),
        }
    }
}

/// Tangent plane anchored at an origin, with the scale factors cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentPlane {
    origin: GeodeticPoint,
    /// meters per radian of latitude, `M(lat0)`
    north_scale: f64,
    /// meters per radian of longitude, `N(lat0) cos(lat0)`
    east_scale: f64,
}

impl TangentPlane {
    pub fn new(origin: GeodeticPoint) -> Self {
        Self::with_ellipsoid(origin, &Ellipsoid::WGS84)
    }

    pub fn with_ellipsoid(origin: GeodeticPoint, ellipsoid: &Ellipsoid) -> Self {
        let (n, m) = ellipsoid.radii_of_curvature(origin.lat);
        TangentPlane {
            origin,
            north_scale: m,
            east_scale: n * origin.lat.cos(),
        }
    }

    pub fn origin(&self) -> GeodeticPoint {
        self.origin
    }

    pub fn to_ned(&self, p: GeodeticPoint) -> NedPoint {
        NedPoint {
            north: self.north_scale * (p.lat - self.origin.lat),
            east: self.east_scale * wrap_pi(p.lon - self.origin.lon),
        }
    }

    pub fn to_geo(&self, p: NedPoint) -> GeodeticPoint {
        GeodeticPoint {
            lat: self.origin.lat + p.north / self.north_scale,
            lon: wrap_pi(self.origin.lon + p.east / self.east_scale),
        }
    }
}

/// Geodetic point to tangent-plane coordinates at `origin`.
pub fn to_ned(p: GeodeticPoint, origin: GeodeticPoint) -> NedPoint {
    TangentPlane::new(origin).to_ned(p)
}

/// Tangent-plane coordinates at `origin` back to a geodetic point.
pub fn to_geo(p: NedPoint, origin: GeodeticPoint) -> GeodeticPoint {
    TangentPlane::new(origin).to_geo(p)
}
