//! Event tables: interventions (treatment and control arms with covariates)
//! and dependent events, plus the scenario description that labels them.

mod csv;
mod scenario;

pub use self::csv::{
    parse_dependent, parse_interventions, write_dependent_csv, write_interventions_csv, ParseError,
};
pub use self::scenario::{
    render_template, ActorWeights, ConfigError, ScenarioConfig, REQUIRED_THEME_ROLES,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wake::{GridError, WindowGrid};

/// A position on the sphere, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    /// Checked constructor; both coordinates finite and in range.
    pub fn new(lon: f64, lat: f64) -> Option<Self> {
        let ok = lon.is_finite()
            && lat.is_finite()
            && (-180.0..=180.0).contains(&lon)
            && (-90.0..=90.0).contains(&lat);
        ok.then_some(Self { lon, lat })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentEvent {
    pub id: String,
    pub date: NaiveDate,
    pub loc: GeoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treatment,
    Control,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Treatment => "treatment",
            Arm::Control => "control",
        }
    }

    pub fn is_treated(self) -> bool {
        self == Arm::Treatment
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    pub id: String,
    pub date: NaiveDate,
    pub loc: GeoPoint,
    pub arm: Arm,
    /// Values aligned with the [`CovariateSchema`] column order.
    pub covariates: Vec<f64>,
    /// Set by [`validate_dataset`] when the widest window runs past the data extent.
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

/// Ordered covariate columns. Names come verbatim from the CSV header.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<Covariate>,
}

impl CovariateSchema {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }
}

/// Non-fatal findings from [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationWarning {
    /// `[date - T_max, date + T_max]` leaves the data extent.
    Truncated { intervention_id: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("NoTreatment: no treatment interventions")]
    NoTreatment,
    #[error("NoControl: no control interventions")]
    NoControl,
    #[error("NoDependent: no dependent events")]
    NoDependent,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("covariate kind override for unknown column `{0}`")]
    UnknownCovariate(String),
    #[error("column `{0}` holds values outside {{0,1}} and cannot be declared binary")]
    NotBinary(String),
}

impl DatasetError {
    /// Stable short name used in machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::NoTreatment => "NoTreatment",
            DatasetError::NoControl => "NoControl",
            DatasetError::NoDependent => "NoDependent",
            DatasetError::Grid(g) => g.code(),
            DatasetError::UnknownCovariate(_) => "UnknownCovariate",
            DatasetError::NotBinary(_) => "NotBinary",
        }
    }
}

/// A validated, immutable input set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub interventions: Vec<InterventionEvent>,
    pub dependents: Vec<DependentEvent>,
    pub schema: CovariateSchema,
    pub extent: (NaiveDate, NaiveDate),
}

impl Dataset {
    pub fn intervention(&self, id: &str) -> Option<&InterventionEvent> {
        self.interventions.iter().find(|iv| iv.id == id)
    }

    pub fn count_arm(&self, arm: Arm) -> usize {
        self.interventions.iter().filter(|iv| iv.arm == arm).count()
    }
}

/// Checks the cross-table invariants, computes the date extent and flags
/// interventions whose widest window is cut off by the extent.
pub fn validate_dataset(
    mut interventions: Vec<InterventionEvent>,
    dependents: Vec<DependentEvent>,
    schema: CovariateSchema,
    grid: &WindowGrid,
) -> Result<(Dataset, Vec<ValidationWarning>), DatasetError> {
    if !interventions.iter().any(|iv| iv.arm == Arm::Treatment) {
        return Err(DatasetError::NoTreatment);
    }
    if !interventions.iter().any(|iv| iv.arm == Arm::Control) {
        return Err(DatasetError::NoControl);
    }
    if dependents.is_empty() {
        return Err(DatasetError::NoDependent);
    }
    grid.check()?;

    let dates = interventions
        .iter()
        .map(|iv| iv.date)
        .chain(dependents.iter().map(|e| e.date));
    let first = dates.clone().min().expect("nonempty");
    let last = dates.max().expect("nonempty");

    let t_max = i64::from(grid.max_half_width());
    let mut warnings = Vec::new();
    for iv in &mut interventions {
        let start = (iv.date - first).num_days() - t_max;
        let end = (last - iv.date).num_days() - t_max;
        iv.truncated = start < 0 || end < 0;
        if iv.truncated {
            warnings.push(ValidationWarning::Truncated {
                intervention_id: iv.id.clone(),
            });
        }
    }

    Ok((
        Dataset {
            interventions,
            dependents,
            schema,
            extent: (first, last),
        },
        warnings,
    ))
}

/// Replaces inferred covariate kinds with explicit ones. Declaring a column
/// binary requires every value to be 0 or 1.
pub fn apply_kind_overrides(
    schema: &mut CovariateSchema,
    interventions: &[InterventionEvent],
    overrides: &std::collections::BTreeMap<String, CovariateKind>,
) -> Result<(), DatasetError> {
    for (name, kind) in overrides {
        let col = schema
            .position(name)
            .ok_or_else(|| DatasetError::UnknownCovariate(name.clone()))?;
        if *kind == CovariateKind::Binary
            && !interventions
                .iter()
                .all(|iv| iv.covariates[col] == 0.0 || iv.covariates[col] == 1.0)
        {
            return Err(DatasetError::NotBinary(name.clone()));
        }
        schema.columns[col].kind = *kind;
    }
    Ok(())
}
