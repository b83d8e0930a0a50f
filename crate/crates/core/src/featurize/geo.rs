//! Great-circle distances on a spherical Earth.

use crate::domain::{GeoPoint, Hotspot};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Haversine distance in metres.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dp = p2 - p1;
    let dl = (b.longitude - a.longitude).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Point with its trigonometric terms cached, so that the haversine term of a
/// pair is a handful of multiplications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prepared {
    pub lat: f64,
    pub lon: f64,
    sin_lat: f64,
    cos_lat: f64,
    sin_lon: f64,
    cos_lon: f64,
}

impl Prepared {
    pub fn new(lat: f64, lon: f64) -> Self {
        let (sl, cl) = lat.to_radians().sin_cos();
        let (so, co) = lon.to_radians().sin_cos();
        Self { lat, lon, sin_lat: sl, cos_lat: cl, sin_lon: so, cos_lon: co }
    }

    /// Haversine term `a`; the distance is `2R asin(sqrt(a))`.
    #[inline]
    pub fn hav(&self, o: &Prepared) -> f64 {
        let cos_dlat = self.cos_lat * o.cos_lat + self.sin_lat * o.sin_lat;
        let cos_dlon = self.cos_lon * o.cos_lon + self.sin_lon * o.sin_lon;
        let a = 0.5 * (1.0 - cos_dlat) + self.cos_lat * o.cos_lat * 0.5 * (1.0 - cos_dlon);
        a.max(0.0)
    }

    pub fn distance_m(&self, o: &Prepared) -> f64 {
        2.0 * EARTH_RADIUS_M * self.hav(o).sqrt().min(1.0).asin()
    }
}

/// Haversine term corresponding to a distance: `d <= x` iff `hav <= hav_threshold(x)`.
pub fn hav_threshold(metres: f64) -> f64 {
    (metres / (2.0 * EARTH_RADIUS_M)).sin().powi(2)
}

/// `flag[i] = 1` iff some hotspot lies within `distances[i]` metres.
pub fn hotspot_flags(point: GeoPoint, hotspots: &[Hotspot], distances: &[f64]) -> Vec<f64> {
    let p = Prepared::new(point.latitude, point.longitude);
    let nearest = hotspots.iter().map(|h| p.hav(&Prepared::new(h.latitude, h.longitude))).fold(f64::INFINITY, f64::min);
    distances.iter().map(|&x| if nearest <= hav_threshold(x) { 1.0 } else { 0.0 }).collect()
}
