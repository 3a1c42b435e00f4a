//! Great-circle distance and exact radius queries over dependent events.

use std::collections::HashMap;
use std::f64::consts::PI;

use thiserror::Error;

use crate::dataset::{DependentEvent, GeoPoint};

/// Mean Earth radius (IUGG), kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("RadiusExceedsIndex: query radius {radius} km exceeds index maximum {max} km")]
    RadiusExceedsIndex { radius: f64, max: f64 },
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Uniform lat/lon bucket grid. Cell height is `r_max` in degrees of latitude,
/// cell width the same distance in degrees of longitude at the median
/// latitude of the indexed events. Queries scan a conservative cell range and
/// filter with [`haversine_km`], so results are exact regardless of cell size.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    r_max: f64,
    cell_lat: f64,
    cell_lon: f64,
    n_lat: i64,
    n_lon: i64,
    events: Vec<DependentEvent>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialIndex {
    pub fn build(events: &[DependentEvent], r_max: f64) -> Self {
        assert!(r_max > 0.0 && r_max.is_finite(), "r_max must be positive");
        let cell_lat = (r_max / EARTH_RADIUS_KM).to_degrees().min(180.0);
        let median_lat = {
            let mut lats: Vec<f64> = events.iter().map(|e| e.loc.lat).collect();
            lats.sort_by(f64::total_cmp);
            lats.get(lats.len() / 2).copied().unwrap_or(0.0)
        };
        // Guard the poles where a degree of longitude shrinks to nothing.
        let cos_lat = median_lat.to_radians().cos().max(0.01);
        let cell_lon = (cell_lat / cos_lat).min(360.0);
        let n_lat = (180.0 / cell_lat).ceil() as i64;
        let n_lon = (360.0 / cell_lon).ceil() as i64;

        let mut index = Self {
            r_max,
            cell_lat,
            cell_lon,
            n_lat,
            n_lon,
            events: events.to_vec(),
            buckets: HashMap::new(),
        };
        for (i, e) in events.iter().enumerate() {
            let key = index.cell_of(e.loc);
            index.buckets.entry(key).or_default().push(i);
        }
        index
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The indexed events, in the order they were given to [`SpatialIndex::build`].
    pub fn events(&self) -> &[DependentEvent] {
        &self.events
    }

    fn lat_cell(&self, lat: f64) -> i64 {
        (((lat + 90.0) / self.cell_lat).floor() as i64).clamp(0, self.n_lat - 1)
    }

    fn lon_cell(&self, lon: f64) -> i64 {
        (((lon + 180.0) / self.cell_lon).floor() as i64).clamp(0, self.n_lon - 1)
    }

    fn cell_of(&self, p: GeoPoint) -> (i64, i64) {
        (self.lat_cell(p.lat), self.lon_cell(p.lon))
    }

    /// Positions (into the indexed slice) of events within `r` km, ascending.
    pub fn query_positions(&self, center: GeoPoint, r: f64) -> Result<Vec<usize>, GeoError> {
        if r > self.r_max {
            return Err(GeoError::RadiusExceedsIndex {
                radius: r,
                max: self.r_max,
            });
        }
        if r < 0.0 || self.events.is_empty() {
            return Ok(Vec::new());
        }
        // Angular radius, padded against rounding in the bound computation.
        let delta = r / EARTH_RADIUS_KM + 1e-9;
        let delta_deg = delta.to_degrees();
        let lat_lo = (center.lat - delta_deg).max(-90.0);
        let lat_hi = (center.lat + delta_deg).min(90.0);

        let phi = center.lat.to_radians();
        let reaches_pole = phi.abs() + delta >= PI / 2.0;
        let lon_cells: Vec<i64> = if reaches_pole || delta >= PI {
            (0..self.n_lon).collect()
        } else {
            let dlon = (delta.sin() / phi.cos()).min(1.0).asin().to_degrees() + 1e-9;
            let (a, b) = (center.lon - dlon, center.lon + dlon);
            let segments = if b - a >= 360.0 {
                vec![(-180.0, 180.0)]
            } else if a < -180.0 {
                vec![(a + 360.0, 180.0), (-180.0, b)]
            } else if b > 180.0 {
                vec![(a, 180.0), (-180.0, b - 360.0)]
            } else {
                vec![(a, b)]
            };
            let mut cells: Vec<i64> = segments
                .into_iter()
                .flat_map(|(lo, hi)| self.lon_cell(lo)..=self.lon_cell(hi))
                .collect();
            cells.sort_unstable();
            cells.dedup();
            cells
        };

        let mut hits = Vec::new();
        for lat_c in self.lat_cell(lat_lo)..=self.lat_cell(lat_hi) {
            for &lon_c in &lon_cells {
                if let Some(bucket) = self.buckets.get(&(lat_c, lon_c)) {
                    hits.extend(
                        bucket
                            .iter()
                            .copied()
                            .filter(|&i| haversine_km(center, self.events[i].loc) <= r),
                    );
                }
            }
        }
        hits.sort_unstable();
        Ok(hits)
    }

    /// Ids of events within `r` km of `center`, sorted.
    pub fn query_radius(&self, center: GeoPoint, r: f64) -> Result<Vec<&str>, GeoError> {
        let mut ids: Vec<&str> = self
            .query_positions(center, r)?
            .into_iter()
            .map(|i| self.events[i].id.as_str())
            .collect();
        ids.sort_unstable();
        Ok(ids)
    }
}

pub fn build_index(events: &[DependentEvent], r_max: f64) -> SpatialIndex {
    SpatialIndex::build(events, r_max)
}

pub fn query_radius(index: &SpatialIndex, center: GeoPoint, r: f64) -> Result<Vec<&str>, GeoError> {
    index.query_radius(center, r)
}

/// Point reached from `origin` after `dist_km` along initial `bearing_rad`.
pub fn destination(origin: GeoPoint, bearing_rad: f64, dist_km: f64) -> GeoPoint {
    let delta = dist_km / EARTH_RADIUS_KM;
    let phi1 = origin.lat.to_radians();
    let lambda1 = origin.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * bearing_rad.cos()).asin();
    let lambda2 = lambda1
        + (bearing_rad.sin() * delta.sin() * phi1.cos())
            .atan2(delta.cos() - phi1.sin() * phi2.sin());
    let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    GeoPoint {
        lon,
        lat: phi2.to_degrees(),
    }
}
