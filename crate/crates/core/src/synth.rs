//! Synthetic datasets with a known planted effect.
//!
//! Dependent events form a homogeneous background over a lon/lat box and a
//! run of days. Every treatment site additionally receives
//! `Poisson(injection_mean)` events placed uniformly (by area) within
//! `injection_radius_km` of the site and uniformly on days
//! `injection_days.0..=injection_days.1` after it. Control sites receive
//! nothing extra, so the true effect at any window that contains the
//! injection disc and day range is `injection_mean`.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::dataset::{
    Arm, Covariate, CovariateKind, CovariateSchema, DependentEvent, GeoPoint, InterventionEvent,
};
use crate::geo::destination;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub extent_days: u32,
    pub lon_range: (f64, f64),
    pub lat_range: (f64, f64),
    pub n_background: usize,
    pub n_treatment: usize,
    pub n_control: usize,
    pub injection_mean: f64,
    pub injection_radius_km: f64,
    pub injection_days: (u32, u32),
    /// Interventions are dated at least this many days from either end.
    pub margin_days: u32,
    pub binary_covariates: Vec<String>,
    pub continuous_covariates: Vec<String>,
}

impl SynthConfig {
    /// 365 days, a 10 x 10 degree box, 2000 background events, 100 + 100
    /// sites, Poisson(3) extra events within 10 km on days 1-20.
    pub fn planted_effect(seed: u64) -> Self {
        Self {
            seed,
            start: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            extent_days: 365,
            lon_range: (60.0, 70.0),
            lat_range: (29.0, 39.0),
            n_background: 2000,
            n_treatment: 100,
            n_control: 100,
            injection_mean: 3.0,
            injection_radius_km: 10.0,
            injection_days: (1, 20),
            margin_days: 30,
            binary_covariates: vec!["road_nearby".into(), "is_urban".into()],
            continuous_covariates: vec![],
        }
    }

    /// [`SynthConfig::planted_effect`] without the injection.
    pub fn null(seed: u64) -> Self {
        Self {
            injection_mean: 0.0,
            ..Self::planted_effect(seed)
        }
    }

    /// A dense half-degree box where most sites see events on both sides of
    /// typical windows; suited to story demos.
    pub fn story_demo(seed: u64) -> Self {
        Self {
            lon_range: (65.0, 65.5),
            lat_range: (33.0, 33.5),
            n_background: 5000,
            n_treatment: 60,
            n_control: 60,
            ..Self::planted_effect(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub interventions: Vec<InterventionEvent>,
    pub schema: CovariateSchema,
    pub dependents: Vec<DependentEvent>,
}

fn random_point(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> GeoPoint {
    GeoPoint {
        lon: rng.random_range(cfg.lon_range.0..cfg.lon_range.1),
        lat: rng.random_range(cfg.lat_range.0..cfg.lat_range.1),
    }
}

pub fn generate(cfg: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let day = |d: u32| cfg.start + Duration::days(i64::from(d));

    let mut dependents: Vec<DependentEvent> = (0..cfg.n_background)
        .map(|i| DependentEvent {
            id: format!("D{i:05}"),
            date: day(rng.random_range(0..cfg.extent_days)),
            loc: random_point(&mut rng, cfg),
        })
        .collect();

    let schema = CovariateSchema {
        columns: cfg
            .binary_covariates
            .iter()
            .map(|n| Covariate {
                name: n.clone(),
                kind: CovariateKind::Binary,
            })
            .chain(cfg.continuous_covariates.iter().map(|n| Covariate {
                name: n.clone(),
                kind: CovariateKind::Continuous,
            }))
            .collect(),
    };

    let lo = cfg.margin_days;
    let hi = cfg.extent_days.saturating_sub(cfg.margin_days + 1).max(lo);
    let arms = std::iter::repeat_n(Arm::Treatment, cfg.n_treatment)
        .chain(std::iter::repeat_n(Arm::Control, cfg.n_control));
    let (mut n_t, mut n_c) = (0, 0);
    let interventions: Vec<InterventionEvent> = arms
        .map(|arm| {
            let id = match arm {
                Arm::Treatment => {
                    n_t += 1;
                    format!("T{n_t:03}")
                }
                Arm::Control => {
                    n_c += 1;
                    format!("C{n_c:03}")
                }
            };
            let mut covariates: Vec<f64> = Vec::with_capacity(schema.len());
            for _ in &cfg.binary_covariates {
                covariates.push(f64::from(u8::from(rng.random_bool(0.5))));
            }
            for _ in &cfg.continuous_covariates {
                covariates.push(f64::from(rng.random_range(0u32..1000)));
            }
            InterventionEvent {
                id,
                date: day(rng.random_range(lo..=hi)),
                loc: random_point(&mut rng, cfg),
                arm,
                covariates,
                truncated: false,
            }
        })
        .collect();

    if cfg.injection_mean > 0.0 {
        let poisson = Poisson::new(cfg.injection_mean).expect("positive mean");
        let mut k = 0usize;
        for iv in interventions.iter().filter(|iv| iv.arm == Arm::Treatment) {
            let count = poisson.sample(&mut rng) as usize;
            for _ in 0..count {
                let dist = cfg.injection_radius_km * rng.random::<f64>().sqrt();
                let bearing = rng.random_range(0.0..std::f64::consts::TAU);
                let offset = rng.random_range(cfg.injection_days.0..=cfg.injection_days.1);
                dependents.push(DependentEvent {
                    id: format!("X{k:05}"),
                    date: iv.date + Duration::days(i64::from(offset)),
                    loc: destination(iv.loc, bearing, dist),
                });
                k += 1;
            }
        }
    }

    SynthData {
        interventions,
        schema,
        dependents,
    }
}
