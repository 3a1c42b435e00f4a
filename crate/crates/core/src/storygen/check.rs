//! Structural checks every generated bundle must pass.

use std::collections::BTreeSet;

use serde_json::Value;
use thiserror::Error;

use super::{SceneId, StoryBundle, SCHEMA_VERSION};
use crate::dataset::REQUIRED_THEME_ROLES;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntegrityError {
    #[error("schema_version must be {SCHEMA_VERSION}, got {0}")]
    SchemaVersion(String),
    #[error("scenes must be wakes, trend, matching, results in that order")]
    SceneOrder,
    #[error("scene {0} has no shots")]
    EmptyScene(String),
    #[error("shot {0}: only the final shot of a scene is interactive")]
    Interactive(String),
    #[error("shot {shot}: persistent mark `{mark}` of the previous shot is missing")]
    Staging { shot: String, mark: String },
    #[error("shot {0}: entering_marks does not list exactly the marks new to this shot")]
    EnteringMarks(String),
    #[error("shot {shot}: duplicate mark id `{mark}`")]
    DuplicateMark { shot: String, mark: String },
    #[error("theme lacks role `{0}`")]
    MissingThemeRole(String),
    #[error("shot {shot}: role `{role}` is not defined in the theme")]
    UnknownRole { shot: String, role: String },
    #[error("shot {shot}: text links role `{role}` but no mark of that role is visible")]
    UnlinkedRole { shot: String, role: String },
    #[error("resolution text must not carry roles")]
    ResolutionRoles,
    #[error("{path}: external reference outside the allowed fields")]
    ExternalReference { path: String },
    #[error("download path `{0}` must be relative")]
    DownloadPath(String),
}

/// Fields that may legitimately hold URLs.
fn url_allowed(path: &[String]) -> bool {
    matches!(
        path.iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .as_slice(),
        ["resolution", "references", ..] | ["meta", "data_source"] | ["meta", "tile_url_template"]
    )
}

fn scan_urls(v: &Value, path: &mut Vec<String>) -> Result<(), IntegrityError> {
    match v {
        Value::String(s) if s.contains("://") && !url_allowed(path) => {
            Err(IntegrityError::ExternalReference {
                path: path.join("."),
            })
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                path.push(i.to_string());
                scan_urls(item, path)?;
                path.pop();
            }
            Ok(())
        }
        Value::Object(map) => {
            for (k, item) in map {
                path.push(k.clone());
                scan_urls(item, path)?;
                path.pop();
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

pub fn check_bundle(b: &StoryBundle) -> Result<(), IntegrityError> {
    if b.schema_version != SCHEMA_VERSION {
        return Err(IntegrityError::SchemaVersion(b.schema_version.clone()));
    }
    if b.scenes.iter().map(|s| s.id).ne(SceneId::ORDER) {
        return Err(IntegrityError::SceneOrder);
    }
    for role in REQUIRED_THEME_ROLES {
        if !b.theme.contains_key(role) {
            return Err(IntegrityError::MissingThemeRole(role.to_string()));
        }
    }

    for scene in &b.scenes {
        if scene.shots.is_empty() {
            return Err(IntegrityError::EmptyScene(format!("{:?}", scene.id)));
        }
        let last = scene.shots.len() - 1;
        let mut prev: Option<&super::Shot> = None;
        for (k, shot) in scene.shots.iter().enumerate() {
            if shot.interactive != (k == last) {
                return Err(IntegrityError::Interactive(shot.id.clone()));
            }
            let mut ids = BTreeSet::new();
            for m in &shot.view_state {
                if !ids.insert(m.id.as_str()) {
                    return Err(IntegrityError::DuplicateMark {
                        shot: shot.id.clone(),
                        mark: m.id.clone(),
                    });
                }
                if let Some(role) = &m.role {
                    if !b.theme.contains_key(role) {
                        return Err(IntegrityError::UnknownRole {
                            shot: shot.id.clone(),
                            role: role.clone(),
                        });
                    }
                }
            }
            let prev_ids: BTreeSet<&str> = prev
                .map(|p| p.view_state.iter().map(|m| m.id.as_str()).collect())
                .unwrap_or_default();
            if let Some(p) = prev {
                if let Some(m) = p
                    .view_state
                    .iter()
                    .find(|m| m.persistent && !ids.contains(m.id.as_str()))
                {
                    return Err(IntegrityError::Staging {
                        shot: shot.id.clone(),
                        mark: m.id.clone(),
                    });
                }
            }
            let expected: Vec<&str> = shot
                .view_state
                .iter()
                .map(|m| m.id.as_str())
                .filter(|id| !prev_ids.contains(id))
                .collect();
            if shot.entering_marks.iter().map(String::as_str).ne(expected) {
                return Err(IntegrityError::EnteringMarks(shot.id.clone()));
            }
            let mark_roles: BTreeSet<&str> = shot
                .view_state
                .iter()
                .filter_map(|m| m.role.as_deref())
                .collect();
            for role in shot.text.roles() {
                if !b.theme.contains_key(role) {
                    return Err(IntegrityError::UnknownRole {
                        shot: shot.id.clone(),
                        role: role.to_string(),
                    });
                }
                if !mark_roles.contains(role) {
                    return Err(IntegrityError::UnlinkedRole {
                        shot: shot.id.clone(),
                        role: role.to_string(),
                    });
                }
            }
            prev = Some(shot);
        }
    }

    if b.resolution.summary.roles().next().is_some() {
        return Err(IntegrityError::ResolutionRoles);
    }
    for d in &b.resolution.download_refs {
        if d.path.starts_with('/') || d.path.contains("://") || d.path.contains("..") {
            return Err(IntegrityError::DownloadPath(d.path.clone()));
        }
    }
    let value = serde_json::to_value(b).expect("bundle serializes");
    scan_urls(&value, &mut Vec::new())
}
