//! Aligned per-subject observations across views and responses.

use ndarray::{Array1, Array2};

use super::config::{ModelConfig, ViewKind, ViewRole, ViewSpec};
use crate::{Error, Result};

/// Observed values of one view.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewData {
    /// Real-valued N x M matrix.
    Continuous(Array2<f64>),
    /// Integer-coded N x M matrix (binary: {0,1}; ordinal: {0..levels-1}).
    Discrete(Array2<u8>),
}

impl ViewData {
    pub fn n_rows(&self) -> usize {
        match self {
            ViewData::Continuous(m) => m.nrows(),
            ViewData::Discrete(m) => m.nrows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            ViewData::Continuous(m) => m.ncols(),
            ViewData::Discrete(m) => m.ncols(),
        }
    }

    pub fn as_continuous(&self) -> Option<&Array2<f64>> {
        match self {
            ViewData::Continuous(m) => Some(m),
            ViewData::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&Array2<u8>> {
        match self {
            ViewData::Discrete(m) => Some(m),
            ViewData::Continuous(_) => None,
        }
    }

    fn subset_rows(&self, rows: &[usize]) -> ViewData {
        match self {
            ViewData::Continuous(m) => {
                ViewData::Continuous(ndarray::Array2::from_shape_fn((rows.len(), m.ncols()), |(i, j)| m[(rows[i], j)]))
            }
            ViewData::Discrete(m) => {
                ViewData::Discrete(ndarray::Array2::from_shape_fn((rows.len(), m.ncols()), |(i, j)| m[(rows[i], j)]))
            }
        }
    }
}

/// A full aligned dataset: one row per subject everywhere.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub subject_ids: Vec<String>,
    /// Per marker view, aligned with `ModelConfig::marker_views`.
    pub marker_data: Vec<ViewData>,
    /// Per background view, aligned with `ModelConfig::background_views`.
    pub background_data: Vec<ViewData>,
    /// Continuous response score.
    pub response_r: Array1<f64>,
    /// Ordinal response code in {0..levels-1}.
    pub response_c: Vec<u8>,
}

impl Dataset {
    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    /// Check shape and domain agreement with a configuration.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let n = config.n_subjects;
        if self.subject_ids.len() != n {
            return Err(Error::InvalidData(format!(
                "dataset has {} subjects, config declares {}",
                self.subject_ids.len(),
                n
            )));
        }
        if self.marker_data.len() != config.marker_views.len() {
            return Err(Error::InvalidData(format!(
                "dataset has {} marker views, config declares {}",
                self.marker_data.len(),
                config.marker_views.len()
            )));
        }
        if self.background_data.len() != config.background_views.len() {
            return Err(Error::InvalidData(format!(
                "dataset has {} background views, config declares {}",
                self.background_data.len(),
                config.background_views.len()
            )));
        }
        for (role, views, data) in [
            (ViewRole::Marker, &config.marker_views, &self.marker_data),
            (ViewRole::Background, &config.background_views, &self.background_data),
        ] {
            let _ = role;
            for (spec, vd) in views.iter().zip(data.iter()) {
                validate_view(spec, vd, n)?;
            }
        }
        if self.response_r.len() != n {
            return Err(Error::InvalidData(format!(
                "response_r has {} entries, expected {}",
                self.response_r.len(),
                n
            )));
        }
        if let Some(i) = self.response_r.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("response_r[{i}] is not finite")));
        }
        if self.response_c.len() != n {
            return Err(Error::InvalidData(format!(
                "response_c has {} entries, expected {}",
                self.response_c.len(),
                n
            )));
        }
        let levels = config.response_ordinal_levels as u8;
        if let Some(i) = self.response_c.iter().position(|&c| c >= levels) {
            return Err(Error::InvalidData(format!(
                "response_c[{}] = {} outside 0..{}",
                i, self.response_c[i], levels
            )));
        }
        Ok(())
    }

    /// Row-subset copy preserving view structure (used by fold splitting).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            subject_ids: rows.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            marker_data: self.marker_data.iter().map(|v| v.subset_rows(rows)).collect(),
            background_data: self.background_data.iter().map(|v| v.subset_rows(rows)).collect(),
            response_r: Array1::from_iter(rows.iter().map(|&i| self.response_r[i])),
            response_c: rows.iter().map(|&i| self.response_c[i]).collect(),
        }
    }

    /// View data addressed by role.
    pub fn view_data(&self, role: ViewRole, idx: usize) -> &ViewData {
        match role {
            ViewRole::Marker => &self.marker_data[idx],
            ViewRole::Background => &self.background_data[idx],
        }
    }
}

fn validate_view(spec: &ViewSpec, vd: &ViewData, n: usize) -> Result<()> {
    let fail = |msg: String| Err(Error::InvalidData(format!("view `{}`: {}", spec.name, msg)));
    if vd.n_rows() != n {
        return fail(format!("{} rows, expected {}", vd.n_rows(), n));
    }
    if vd.n_cols() != spec.n_features {
        return fail(format!("{} columns, expected {}", vd.n_cols(), spec.n_features));
    }
    match (spec.kind, vd) {
        (ViewKind::Continuous, ViewData::Continuous(m)) => {
            for ((i, j), v) in m.indexed_iter() {
                if !v.is_finite() {
                    return fail(format!("non-finite value at row {i}, column {j}"));
                }
            }
        }
        (ViewKind::Binary, ViewData::Discrete(m)) => {
            for ((i, j), &v) in m.indexed_iter() {
                if v > 1 {
                    return fail(format!("binary value {v} at row {i}, column {j}"));
                }
            }
        }
        (ViewKind::Ordinal, ViewData::Discrete(m)) => {
            let levels = spec.levels_per_feature.unwrap_or(0) as u8;
            for ((i, j), &v) in m.indexed_iter() {
                if v >= levels {
                    return fail(format!(
                        "ordinal value {v} at row {i}, column {j} outside 0..{levels}"
                    ));
                }
            }
        }
        (kind, _) => {
            return fail(format!("storage does not match declared kind {kind:?}"));
        }
    }
    Ok(())
}
