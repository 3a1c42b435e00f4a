//! Story bundle generation.
//!
//! A bundle is one self-contained JSON document: an intro (hook, background,
//! outline), four scenes in a fixed order, a resolution, the data slices the
//! viewer needs to render and recompute interactions, and the color theme.
//! Each scene is a list of shots; a shot lists every visible mark, the text
//! beside it, and which marks entered with it. Persistent marks carry over
//! to the next shot, so every scene builds up from a plain first view to
//! the interactive final one.

mod check;
mod scenes;
mod text;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::ActorPair;
use crate::canonical::to_canonical_bytes;
use crate::dataset::{Arm, ConfigError, CovariateKind, Dataset, ScenarioConfig};
use crate::estimation::Analysis;
use crate::matching::VariableSource;
use crate::wake::WindowSpec;

pub use check::{check_bundle, IntegrityError};
pub use scenes::{
    build_scene_matching, build_scene_results, build_scene_trend, build_scene_wakes, side_fraction,
    trend_table, SceneContext,
};
pub use text::{build_intro, interpret_effect, interpretation_or_fallback, INSUFFICIENT_VARIATION};

pub const SCHEMA_VERSION: &str = "1";

/// JSON Schema (draft 2020-12) of the bundle document.
pub const BUNDLE_SCHEMA_V1: &str = include_str!("../../schema/bundle.v1.schema.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoryError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("DegenerateCell: no estimable effect at {radius_km} km / {half_width_days} days")]
    DegenerateCell {
        radius_km: f64,
        half_width_days: u32,
    },
    #[error("analysis has no cell for the reference window {0:?}")]
    MissingWindow(WindowSpec),
    #[error("actor `{0}` is not part of the dataset")]
    UnknownActor(String),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
}

/// A run of text; linked runs carry the theme role of the marks they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl Run {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            role: None,
        }
    }

    pub fn link(text: impl Into<String>, role: &str) -> Self {
        Self {
            text: text.into(),
            role: Some(role.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextBlock {
    pub paragraphs: Vec<Vec<Run>>,
}

impl TextBlock {
    pub fn single(runs: Vec<Run>) -> Self {
        Self {
            paragraphs: vec![runs],
        }
    }

    /// Paragraphs joined by blank lines, roles dropped.
    pub fn plain_text(&self) -> String {
        self.paragraphs
            .iter()
            .map(|p| p.iter().map(|r| r.text.as_str()).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.paragraphs
            .iter()
            .flatten()
            .filter_map(|r| r.role.as_deref())
    }

    pub fn without_roles(mut self) -> Self {
        for r in self.paragraphs.iter_mut().flatten() {
            r.role = None;
        }
        self
    }

    pub fn extend(&mut self, other: TextBlock) {
        self.paragraphs.extend(other.paragraphs);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkKind {
    MapPanel,
    ReferenceCircle,
    InterventionMarker,
    EventDots,
    Timeline,
    CountBar,
    TrendAid,
    WindowHandles,
    Histogram,
    Toggle,
    Filter,
    Heatmap,
    Legend,
    CellHighlight,
    Annotation,
}

/// One visual element of a shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mark {
    pub id: String,
    pub kind: MarkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    /// Carried into the next shot of the scene.
    pub persistent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub props: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shot {
    pub id: String,
    pub view_state: Vec<Mark>,
    pub text: TextBlock,
    /// Ids of marks that are new in this shot; the viewer animates them in.
    pub entering_marks: Vec<String>,
    pub interactive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneId {
    Wakes,
    Trend,
    Matching,
    Results,
}

impl SceneId {
    pub const ORDER: [SceneId; 4] = [
        SceneId::Wakes,
        SceneId::Trend,
        SceneId::Matching,
        SceneId::Results,
    ];
}

/// The explorative microenvironment of a scene's final shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    SynchronizedMaps,
    TemporalWindowDrag,
    HistogramFilter,
    HeatmapHover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub id: SceneId,
    pub title: String,
    pub summary: String,
    pub shots: Vec<Shot>,
    pub interaction: Interaction,
    /// Reserved for a technical per-scene summary; never generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advanced_summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intro {
    pub hook: String,
    pub background: String,
    pub outline: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownloadRef {
    pub label: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    pub summary: TextBlock,
    pub download_refs: Vec<DownloadRef>,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceEvent {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub offset: i64,
    pub distance_km: f64,
}

/// One actor with its nearby dependent events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSlice {
    pub id: String,
    pub arm: Arm,
    pub date: NaiveDate,
    pub lon: f64,
    pub lat: f64,
    /// Counts at the reference window.
    pub n_pre: u32,
    pub n_post: u32,
    pub trend: i64,
    /// Events within `slice_radius_km` and `slice_half_width_days`, by offset then id.
    pub events: Vec<SliceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSlices {
    pub treatment: ActorSlice,
    pub control: ActorSlice,
    pub radius_km: f64,
    pub half_width_days: u32,
    pub slice_radius_km: f64,
    pub slice_half_width_days: u32,
    pub score: f64,
    pub constraints: Vec<ConstraintRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowCounts {
    pub n_pre: u32,
    pub n_post: u32,
    pub trend: i64,
    pub trend_bin: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendRow {
    pub half_width_days: u32,
    pub treatment: WindowCounts,
    pub control: WindowCounts,
    /// Both trends fall into the same bin.
    pub valid: bool,
}

/// Scene 2 data. Offsets are those of events within the reference radius
/// and the widest half-width; counts for any even `T` follow from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendBins {
    pub default_half_width: u32,
    pub drag_range: Vec<u32>,
    /// Trend bin edges of the reference-window matching.
    pub edges: Vec<f64>,
    pub treatment_offsets: Vec<i64>,
    pub control_offsets: Vec<i64>,
    pub table: Vec<TrendRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableColumn {
    pub name: String,
    pub source: VariableSource,
    pub kind: CovariateKind,
    pub edges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateRow {
    pub id: String,
    pub arm: Arm,
    pub covariates: Vec<f64>,
    pub n_pre: u32,
    pub trend: i64,
    pub matched: bool,
    pub weight: f64,
    pub signature: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateTable {
    /// Matching variables in signature order.
    pub variables: Vec<VariableColumn>,
    /// Names of the `covariates` entries of each row.
    pub covariate_names: Vec<String>,
    pub rows: Vec<CovariateRow>,
    pub m_t: usize,
    pub m_c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatCell {
    pub radius_km: f64,
    pub half_width_days: u32,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub n_matched_t: usize,
    pub n_matched_c: usize,
    pub degenerate: bool,
    pub side_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heatmap {
    pub radii: Vec<f64>,
    pub half_widths: Vec<u32>,
    pub cells: Vec<HeatCell>,
    /// Symmetric around zero: `[-m, m]` with `m` the largest |estimate|
    /// among non-degenerate cells.
    pub color_domain: [f64; 2],
    pub reference: WindowSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryData {
    pub reference_window: WindowSpec,
    pub actor_slices: ActorSlices,
    pub trend_bins: TrendBins,
    pub covariate_table: CovariateTable,
    pub heatmap: Heatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub seed: u64,
    pub treatment_label: String,
    pub control_label: String,
    pub dependent_label: String,
    pub region_name: String,
    pub effect_units: String,
    pub data_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_url_template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryBundle {
    pub schema_version: String,
    pub intro: Intro,
    pub scenes: Vec<Scene>,
    pub resolution: Resolution,
    pub data: StoryData,
    pub theme: BTreeMap<String, String>,
    pub meta: Meta,
}

/// Relative paths of the result files the resolution links to.
pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";

/// Assembles the full bundle and checks its integrity.
pub fn build_bundle(
    ds: &Dataset,
    analysis: &Analysis,
    actors: &ActorPair,
    cfg: &ScenarioConfig,
) -> Result<StoryBundle, StoryError> {
    cfg.validate()?;
    let ctx = SceneContext::new(ds, analysis, actors, cfg)?;
    let scenes = vec![
        build_scene_wakes(&ctx)?,
        build_scene_trend(&ctx)?,
        build_scene_matching(&ctx)?,
        build_scene_results(&ctx)?,
    ];
    let intro = build_intro(cfg, &scenes)?;
    let resolution = Resolution {
        summary: text::resolution_summary(&ctx)?,
        download_refs: vec![
            DownloadRef {
                label: "Results table (CSV)".into(),
                path: RESULTS_CSV.into(),
            },
            DownloadRef {
                label: "Results (JSON)".into(),
                path: RESULTS_JSON.into(),
            },
        ],
        references: cfg.references.clone(),
    };
    let bundle = StoryBundle {
        schema_version: SCHEMA_VERSION.to_string(),
        intro,
        scenes,
        resolution,
        data: ctx.story_data(),
        theme: cfg.color_theme.clone(),
        meta: Meta {
            seed: cfg.seed,
            treatment_label: cfg.treatment_label.clone(),
            control_label: cfg.control_label.clone(),
            dependent_label: cfg.dependent_label.clone(),
            region_name: cfg.region_name.clone(),
            effect_units: cfg.effect_units()?,
            data_source: cfg.data_source.clone(),
            tile_url_template: cfg.tile_url_template.clone(),
        },
    };
    check_bundle(&bundle)?;
    Ok(bundle)
}

/// Canonical JSON bytes: sorted keys, six significant digits, no timestamps.
pub fn serialize_bundle(b: &StoryBundle) -> Vec<u8> {
    to_canonical_bytes(b).expect("bundle serializes")
}

pub fn parse_bundle(bytes: &[u8]) -> Result<StoryBundle, serde_json::Error> {
    serde_json::from_slice(bytes)
}
