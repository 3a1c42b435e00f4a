//! Scenario description: the labels, narrative text and theme that turn one
//! analysis into one version of the story.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CovariateKind;

/// Color roles every theme must define.
pub const REQUIRED_THEME_ROLES: [&str; 7] = [
    "treatment",
    "control",
    "dependent",
    "positive",
    "negative",
    "highlight",
    "invalid",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("scenario JSON: {0}")]
    Json(String),
    #[error("`{0}` must not be empty")]
    EmptyLabel(&'static str),
    #[error("UnresolvedPlaceholder: `{{{0}}}`")]
    UnresolvedPlaceholder(String),
    #[error("color theme lacks role `{0}`")]
    MissingThemeRole(&'static str),
    #[error("cutpoints for `{0}` must be at least two finite, strictly increasing values")]
    BadCutpoints(String),
    #[error("actor weights must be finite and nonnegative")]
    BadWeights,
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Json(_) => "ScenarioJson",
            ConfigError::EmptyLabel(_) => "EmptyLabel",
            ConfigError::UnresolvedPlaceholder(_) => "UnresolvedPlaceholder",
            ConfigError::MissingThemeRole(_) => "MissingThemeRole",
            ConfigError::BadCutpoints(_) => "BadCutpoints",
            ConfigError::BadWeights => "BadWeights",
        }
    }
}

/// Weights of the actor score terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorWeights {
    pub treatment_readability: f64,
    pub control_readability: f64,
    pub trend_similarity: f64,
}

impl Default for ActorWeights {
    fn default() -> Self {
        Self {
            treatment_readability: 2.0,
            control_readability: 2.0,
            trend_similarity: 1.0,
        }
    }
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// Contents of `scenario.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub treatment_label: String,
    pub control_label: String,
    pub dependent_label: String,
    pub region_name: String,
    /// Template; may use `{treatment_label}`, `{control_label}`,
    /// `{dependent_label}` and `{region_name}`.
    pub hook_question: String,
    pub background: String,
    pub data_source: String,
    pub references: Vec<String>,
    /// Template for the unit of the effect, e.g. `{dependent_label} per intervention`.
    pub effect_units_phrase: String,
    pub color_theme: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_url_template: Option<String>,
    pub seed: u64,

    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub covariate_kinds: BTreeMap<String, CovariateKind>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cutpoints: BTreeMap<String, Vec<f64>>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub match_on_pre_level: bool,
    #[serde(default)]
    pub actor_weights: ActorWeights,
}

impl ScenarioConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            serde_json::from_slice(bytes).map_err(|e| ConfigError::Json(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("treatment_label", &self.treatment_label),
            ("control_label", &self.control_label),
            ("dependent_label", &self.dependent_label),
            ("region_name", &self.region_name),
        ] {
            if value.trim().is_empty() {
                return Err(ConfigError::EmptyLabel(name));
            }
        }
        self.hook()?;
        self.effect_units()?;
        for role in REQUIRED_THEME_ROLES {
            match self.color_theme.get(role) {
                Some(c) if !c.trim().is_empty() => {}
                _ => return Err(ConfigError::MissingThemeRole(role)),
            }
        }
        for (name, edges) in &self.cutpoints {
            let ok = edges.len() >= 2
                && edges.iter().all(|e| e.is_finite())
                && edges.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(ConfigError::BadCutpoints(name.clone()));
            }
        }
        let w = self.actor_weights;
        if ![
            w.treatment_readability,
            w.control_readability,
            w.trend_similarity,
        ]
        .iter()
        .all(|x| x.is_finite() && *x >= 0.0)
        {
            return Err(ConfigError::BadWeights);
        }
        Ok(())
    }

    fn label_vars(&self) -> [(&'static str, &str); 4] {
        [
            ("treatment_label", &self.treatment_label),
            ("control_label", &self.control_label),
            ("dependent_label", &self.dependent_label),
            ("region_name", &self.region_name),
        ]
    }

    pub fn hook(&self) -> Result<String, ConfigError> {
        render_template(&self.hook_question, &self.label_vars())
    }

    pub fn effect_units(&self) -> Result<String, ConfigError> {
        render_template(&self.effect_units_phrase, &self.label_vars())
    }

    /// The theme shipped with the example scenarios.
    pub fn default_theme() -> BTreeMap<String, String> {
        [
            ("treatment", "#d6604d"),
            ("control", "#4393c3"),
            ("dependent", "#4d4d4d"),
            ("positive", "#b2182b"),
            ("negative", "#2166ac"),
            ("highlight", "#f4a582"),
            ("invalid", "#7b3294"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }
}

/// Substitutes `{name}` placeholders. Unknown names and empty values are
/// both unresolved.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| ConfigError::UnresolvedPlaceholder(after.to_string()))?;
        let name = &after[..close];
        match vars.iter().find(|(k, _)| *k == name) {
            Some((_, v)) if !v.trim().is_empty() => out.push_str(v),
            _ => return Err(ConfigError::UnresolvedPlaceholder(name.to_string())),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
