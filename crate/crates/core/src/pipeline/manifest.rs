//! Dataset manifest: a JSON document naming the view files, their kinds and
//! widths, the response file, and the class labels of the ordinal response.
//!
//! Paths inside the manifest are interpreted relative to the manifest file's
//! directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{ModelConfig, ViewKind, ViewRole, ViewSpec};
use crate::{Error, Result};

/// One view file entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestView {
    pub name: String,
    pub path: String,
    pub kind: ViewKind,
    pub n_features: usize,
    pub role: ViewRole,
    /// Category count for ordinal views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

/// Location of the response table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseFiles {
    pub path: String,
    #[serde(default = "default_r_column")]
    pub r_column: String,
    #[serde(default = "default_c_column")]
    pub c_column: String,
}

fn default_r_column() -> String {
    "r".into()
}

fn default_c_column() -> String {
    "c".into()
}

fn default_subject_column() -> String {
    "subject_id".into()
}

/// Manifest of one dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewManifest {
    #[serde(default = "default_subject_column")]
    pub subject_id_column: String,
    pub views: Vec<ManifestView>,
    pub responses: ResponseFiles,
    /// Display names of the ordinal response levels, lowest first.
    #[serde(default)]
    pub class_labels: Vec<String>,
}

impl ViewManifest {
    pub fn parse_json(text: &str, origin: &str) -> Result<Self> {
        let manifest: ViewManifest =
            serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        manifest.validate(origin)?;
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
        Self::parse_json(&text, &shown)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::json(&shown, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(&shown, e))
    }

    fn validate(&self, origin: &str) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::parse(origin, "manifest lists no views".to_string()));
        }
        let mut names = HashSet::new();
        for v in &self.views {
            if v.name.is_empty() {
                return Err(Error::parse(origin, "view with empty name".to_string()));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::parse(
                    origin,
                    format!("duplicate view name '{}'", v.name),
                ));
            }
            if v.n_features == 0 {
                return Err(Error::parse(
                    origin,
                    format!("view '{}' declares zero features", v.name),
                ));
            }
            match v.kind {
                ViewKind::Ordinal => {
                    if v.levels.map_or(true, |l| l < 2) {
                        return Err(Error::parse(
                            origin,
                            format!("ordinal view '{}' needs levels >= 2", v.name),
                        ));
                    }
                }
                _ => {
                    if v.levels.is_some() {
                        return Err(Error::parse(
                            origin,
                            format!("view '{}': levels only applies to ordinal views", v.name),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolve a manifest-relative path against the manifest's directory.
    pub fn resolve(&self, base: &Path, relative: &str) -> PathBuf {
        base.join(relative)
    }

    /// Error if any referenced file is missing under `base`.
    pub fn check_files_exist(&self, base: &Path) -> Result<()> {
        let mut paths: Vec<&str> = self.views.iter().map(|v| v.path.as_str()).collect();
        paths.push(&self.responses.path);
        for p in paths {
            let full = base.join(p);
            if !full.is_file() {
                return Err(Error::parse(
                    full.display().to_string(),
                    "file referenced by manifest does not exist".to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn views_of(&self, role: ViewRole) -> impl Iterator<Item = &ManifestView> {
        self.views.iter().filter(move |v| v.role == role)
    }

    /// Check the manifest's view inventory against a model configuration:
    /// same views in the same order per role, with matching kind and width.
    pub fn check_against_config(&self, config: &ModelConfig) -> Result<()> {
        let check_role = |role: ViewRole, specs: &[ViewSpec]| -> Result<()> {
            let listed: Vec<&ManifestView> = self.views_of(role).collect();
            if listed.len() != specs.len() {
                return Err(Error::InvalidData(format!(
                    "manifest lists {} {:?} views, model config expects {}",
                    listed.len(),
                    role,
                    specs.len()
                )));
            }
            for (m, s) in listed.iter().zip(specs) {
                if m.name != s.name {
                    return Err(Error::InvalidData(format!(
                        "{:?} view order mismatch: manifest has '{}', config has '{}'",
                        role, m.name, s.name
                    )));
                }
                if m.kind != s.kind {
                    return Err(Error::InvalidData(format!(
                        "view '{}': manifest kind {:?}, config kind {:?}",
                        m.name, m.kind, s.kind
                    )));
                }
                if m.n_features != s.n_features {
                    return Err(Error::InvalidData(format!(
                        "view '{}': manifest declares {} features, config {}",
                        m.name, m.n_features, s.n_features
                    )));
                }
                if m.kind == ViewKind::Ordinal && m.levels != s.levels_per_feature {
                    return Err(Error::InvalidData(format!(
                        "view '{}': manifest levels {:?}, config {:?}",
                        m.name, m.levels, s.levels_per_feature
                    )));
                }
            }
            Ok(())
        };
        check_role(ViewRole::Marker, &config.marker_views)?;
        check_role(ViewRole::Background, &config.background_views)?;
        Ok(())
    }

    /// Build a manifest describing `config` with conventional file names
    /// (`<view>.csv`, `responses.csv`).
    pub fn for_config(config: &ModelConfig, class_labels: &[String]) -> Self {
        let views = config
            .all_views()
            .map(|(role, spec)| ManifestView {
                name: spec.name.clone(),
                path: format!("{}.csv", spec.name),
                kind: spec.kind,
                n_features: spec.n_features,
                role,
                levels: spec.levels_per_feature,
            })
            .collect();
        ViewManifest {
            subject_id_column: default_subject_column(),
            views,
            responses: ResponseFiles {
                path: "responses.csv".into(),
                r_column: default_r_column(),
                c_column: default_c_column(),
            },
            class_labels: class_labels.to_vec(),
        }
    }
}
