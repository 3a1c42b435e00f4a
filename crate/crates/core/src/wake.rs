//! Pre/post dependent-event counts ("wakes") around each intervention.
//!
//! For a window of radius `r` and half-width `T` days, the pre-window is the
//! closed offset range `[-T, -1]` and the post-window `[1, T]`. Events on the
//! intervention day (offset 0) belong to neither. The trend compares the two
//! halves of the pre-window: `n_recent` over `[-T/2, -1]` minus `n_early`
//! over `[-T, -T/2 - 1]`, which is why `T` must be even.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, InterventionEvent};
use crate::geo::{GeoError, SpatialIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("window grid needs at least one radius and one half-width")]
    Empty,
    #[error("radius {0} km is not a positive finite number")]
    BadRadius(f64),
    #[error("OddHalfWidth: half-width {0} days must be even and at least 2")]
    OddHalfWidth(u32),
    #[error("grid values must be strictly increasing")]
    NotIncreasing,
}

impl GridError {
    pub fn code(&self) -> &'static str {
        match self {
            GridError::Empty => "EmptyGrid",
            GridError::BadRadius(_) => "BadRadius",
            GridError::OddHalfWidth(_) => "OddHalfWidth",
            GridError::NotIncreasing => "NotIncreasing",
        }
    }
}

/// One spatio-temporal window. Ordered and hashed by
/// `(radius_km, half_width_days)` so it can key result maps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowSpec {
    pub radius_km: f64,
    pub half_width_days: u32,
}

impl WindowSpec {
    pub fn new(radius_km: f64, half_width_days: u32) -> Result<Self, GridError> {
        if !(radius_km.is_finite() && radius_km > 0.0) {
            return Err(GridError::BadRadius(radius_km));
        }
        if half_width_days < 2 || !half_width_days.is_multiple_of(2) {
            return Err(GridError::OddHalfWidth(half_width_days));
        }
        Ok(Self {
            radius_km,
            half_width_days,
        })
    }
}

impl PartialEq for WindowSpec {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for WindowSpec {}

impl PartialOrd for WindowSpec {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for WindowSpec {
    fn cmp(&self, other: &Self) -> Ordering {
        self.radius_km
            .total_cmp(&other.radius_km)
            .then(self.half_width_days.cmp(&other.half_width_days))
    }
}

impl Hash for WindowSpec {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.radius_km.to_bits().hash(state);
        self.half_width_days.hash(state);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGrid {
    radii: Vec<f64>,
    half_widths: Vec<u32>,
}

impl WindowGrid {
    pub fn new(radii: Vec<f64>, half_widths: Vec<u32>) -> Result<Self, GridError> {
        let g = Self { radii, half_widths };
        g.check()?;
        Ok(g)
    }

    pub(crate) fn check(&self) -> Result<(), GridError> {
        if self.radii.is_empty() || self.half_widths.is_empty() {
            return Err(GridError::Empty);
        }
        for &r in &self.radii {
            if !(r.is_finite() && r > 0.0) {
                return Err(GridError::BadRadius(r));
            }
        }
        for &t in &self.half_widths {
            if t < 2 || t % 2 != 0 {
                return Err(GridError::OddHalfWidth(t));
            }
        }
        if !self.radii.windows(2).all(|w| w[0] < w[1])
            || !self.half_widths.windows(2).all(|w| w[0] < w[1])
        {
            return Err(GridError::NotIncreasing);
        }
        Ok(())
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn half_widths(&self) -> &[u32] {
        &self.half_widths
    }

    pub fn max_radius(&self) -> f64 {
        *self.radii.last().expect("nonempty grid")
    }

    pub fn max_half_width(&self) -> u32 {
        *self.half_widths.last().expect("nonempty grid")
    }

    /// All cells, radii-major.
    pub fn cells(&self) -> Vec<WindowSpec> {
        self.radii
            .iter()
            .flat_map(|&radius_km| {
                self.half_widths
                    .iter()
                    .map(move |&half_width_days| WindowSpec {
                        radius_km,
                        half_width_days,
                    })
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.half_widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wake {
    pub intervention_id: String,
    pub window: WindowSpec,
    pub n_pre: u32,
    pub n_post: u32,
    pub trend: i64,
    /// Offsets of the counted events, ascending; never contains 0.
    pub offsets: Vec<i64>,
}

impl Wake {
    pub fn total(&self) -> u32 {
        self.n_pre + self.n_post
    }
}

/// Pre/post counts and trend for an offset list under half-width `t`.
/// Offsets outside `[-t, t]` and offset 0 are ignored.
pub fn count_offsets(offsets: &[i64], t: u32) -> (u32, u32, i64) {
    let t = i64::from(t);
    let half = t / 2;
    let (mut early, mut recent, mut post) = (0u32, 0u32, 0u32);
    for &o in offsets {
        match o {
            _ if o < -t || o > t || o == 0 => {}
            _ if o < -half => early += 1,
            _ if o < 0 => recent += 1,
            _ => post += 1,
        }
    }
    (early + recent, post, i64::from(recent) - i64::from(early))
}

/// Signed day difference `event - intervention`.
pub fn day_offset(event_date: NaiveDate, intervention_date: NaiveDate) -> i64 {
    (event_date - intervention_date).num_days()
}

/// Counts dependent events around one intervention.
pub fn compute_wake(
    iv: &InterventionEvent,
    index: &SpatialIndex,
    w: WindowSpec,
) -> Result<Wake, GeoError> {
    let t = i64::from(w.half_width_days);
    let mut offsets: Vec<i64> = index
        .query_positions(iv.loc, w.radius_km)?
        .into_iter()
        .map(|i| day_offset(index.events()[i].date, iv.date))
        .filter(|&o| o != 0 && (-t..=t).contains(&o))
        .collect();
    offsets.sort_unstable();
    let (n_pre, n_post, trend) = count_offsets(&offsets, w.half_width_days);
    Ok(Wake {
        intervention_id: iv.id.clone(),
        window: w,
        n_pre,
        n_post,
        trend,
        offsets,
    })
}

/// One wake per intervention (input order) per grid cell.
pub type WakeGrid = BTreeMap<WindowSpec, Vec<Wake>>;

/// Builds the spatial index once at the largest radius and evaluates every
/// cell. Cells run on the current rayon pool; the result is keyed by window
/// so it does not depend on scheduling.
pub fn compute_wakes_grid(ds: &Dataset, grid: &WindowGrid) -> Result<WakeGrid, GeoError> {
    let index = SpatialIndex::build(&ds.dependents, grid.max_radius());
    compute_wakes_grid_with_index(ds, grid, &index)
}

pub fn compute_wakes_grid_with_index(
    ds: &Dataset,
    grid: &WindowGrid,
    index: &SpatialIndex,
) -> Result<WakeGrid, GeoError> {
    grid.cells()
        .into_par_iter()
        .map(|w| {
            let wakes = ds
                .interventions
                .iter()
                .map(|iv| compute_wake(iv, index, w))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((w, wakes))
        })
        .collect::<Result<Vec<_>, GeoError>>()
        .map(|cells| cells.into_iter().collect())
}
