//! Strict dataset loading: every file must carry exactly the same subject
//! ids; rows are aligned into sorted-id order regardless of file order, and
//! every cell is validated against its view's kind before model code sees it.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::manifest::ViewManifest;
use crate::model::{Dataset, ModelConfig, ViewData, ViewKind, ViewRole, ViewSpec};
use crate::{Error, Result};

/// Rows of one CSV file keyed by subject id, in file order.
struct RawTable {
    ids: Vec<String>,
    /// Cell text, one Vec per row, header dropped.
    cells: Vec<Vec<String>>,
}

fn read_table(path: &Path, id_column: &str, expected_cols: &[String]) -> Result<RawTable> {
    let shown = path.display().to_string();
    let wrap = |e: csv::Error| Error::parse(shown.clone(), e.to_string());
    let mut reader = csv::Reader::from_path(path).map_err(&wrap)?;
    let header = reader.headers().map_err(&wrap)?.clone();
    match header.get(0) {
        Some(first) if first == id_column => {}
        other => {
            return Err(Error::parse(
                &shown,
                format!(
                    "first column must be '{}', found '{}'",
                    id_column,
                    other.unwrap_or("")
                ),
            ))
        }
    }
    if !expected_cols.is_empty() {
        let got: Vec<&str> = header.iter().skip(1).collect();
        if got.len() != expected_cols.len() {
            return Err(Error::parse(
                &shown,
                format!(
                    "{} data columns, expected {}",
                    got.len(),
                    expected_cols.len()
                ),
            ));
        }
    }
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(&wrap)?;
        let id = record
            .get(0)
            .ok_or_else(|| Error::parse(&shown, format!("row {} is empty", i + 2)))?
            .to_string();
        if id.is_empty() {
            return Err(Error::parse(&shown, format!("row {} has an empty subject id", i + 2)));
        }
        if let Some(prev) = seen.insert(id.clone(), i) {
            return Err(Error::parse(
                &shown,
                format!("subject id '{}' appears in rows {} and {}", id, prev + 2, i + 2),
            ));
        }
        if record.len() != header.len() {
            return Err(Error::parse(
                &shown,
                format!("row {} has {} fields, header has {}", i + 2, record.len(), header.len()),
            ));
        }
        ids.push(id);
        cells.push(record.iter().skip(1).map(str::to_string).collect());
    }
    Ok(RawTable { ids, cells })
}

/// Check one file's id set against the canonical set, naming the offender.
fn check_ids(
    what: &str,
    table_ids: &[String],
    canonical: &HashMap<String, usize>,
) -> Result<()> {
    for id in table_ids {
        if !canonical.contains_key(id) {
            return Err(Error::InvalidData(format!(
                "{what}: subject '{id}' does not appear in every file"
            )));
        }
    }
    if table_ids.len() != canonical.len() {
        let present: HashMap<&str, ()> =
            table_ids.iter().map(|s| (s.as_str(), ())).collect();
        let missing = canonical
            .keys()
            .find(|id| !present.contains_key(id.as_str()))
            .expect("length mismatch implies a missing id");
        return Err(Error::InvalidData(format!(
            "{what}: subject '{missing}' is missing"
        )));
    }
    Ok(())
}

fn parse_view(
    table: &RawTable,
    order: &HashMap<String, usize>,
    spec: &ViewSpec,
    file: &str,
) -> Result<ViewData> {
    let n = order.len();
    let coords = |row: usize, col: usize| -> String {
        // Data rows start after the header; columns after the id.
        format!("view '{}' ({file}) row {} column f{col}", spec.name, row + 2)
    };
    match spec.kind {
        ViewKind::Continuous => {
            let mut m = Array2::zeros((n, spec.n_features));
            for (r, id) in table.ids.iter().enumerate() {
                let out_row = order[id];
                for c in 0..spec.n_features {
                    let text = &table.cells[r][c];
                    let value: f64 = text.parse().map_err(|_| {
                        Error::InvalidData(format!(
                            "{}: '{}' is not a number",
                            coords(r, c),
                            text
                        ))
                    })?;
                    if !value.is_finite() {
                        return Err(Error::InvalidData(format!(
                            "{}: non-finite value {}",
                            coords(r, c),
                            value
                        )));
                    }
                    m[(out_row, c)] = value;
                }
            }
            Ok(ViewData::Continuous(m))
        }
        ViewKind::Binary | ViewKind::Ordinal => {
            let top = match spec.kind {
                ViewKind::Binary => 2,
                _ => spec.levels_per_feature.expect("validated ordinal view"),
            };
            let mut m = Array2::zeros((n, spec.n_features));
            for (r, id) in table.ids.iter().enumerate() {
                let out_row = order[id];
                for c in 0..spec.n_features {
                    let text = &table.cells[r][c];
                    let value: u8 = text.parse().map_err(|_| {
                        Error::InvalidData(format!(
                            "{}: '{}' is not a small integer",
                            coords(r, c),
                            text
                        ))
                    })?;
                    if value as usize >= top {
                        return Err(Error::InvalidData(format!(
                            "{}: value {} outside 0..{}",
                            coords(r, c),
                            value,
                            top
                        )));
                    }
                    m[(out_row, c)] = value;
                }
            }
            Ok(ViewData::Discrete(m))
        }
    }
}

/// Load every view and the responses, aligning rows by subject id.
///
/// The returned dataset's subjects are in sorted-id order; every input file
/// must contain exactly the same id set, in any row order.
pub fn load_dataset(
    manifest: &ViewManifest,
    base: &Path,
    config: &ModelConfig,
) -> Result<Dataset> {
    manifest.check_against_config(config)?;
    manifest.check_files_exist(base)?;

    // Canonical subject order comes from the first view file, sorted.
    let first = &manifest.views[0];
    let first_table = read_table(
        &base.join(&first.path),
        &manifest.subject_id_column,
        &feature_names(first.n_features),
    )?;
    let mut subject_ids = first_table.ids.clone();
    subject_ids.sort();
    let order: HashMap<String, usize> = subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();

    let mut marker_data = Vec::new();
    let mut background_data = Vec::new();
    for (role, out) in
        [(ViewRole::Marker, &mut marker_data), (ViewRole::Background, &mut background_data)]
    {
        for spec in config.views_of(role) {
            let entry = manifest
                .views
                .iter()
                .find(|v| v.name == spec.name)
                .expect("checked against config");
            let table = read_table(
                &base.join(&entry.path),
                &manifest.subject_id_column,
                &feature_names(spec.n_features),
            )?;
            check_ids(&format!("view '{}'", spec.name), &table.ids, &order)?;
            out.push(parse_view(&table, &order, spec, &entry.path)?);
        }
    }

    // Responses: subject id + the two named columns, extra columns allowed.
    let resp_path = base.join(&manifest.responses.path);
    let shown = resp_path.display().to_string();
    let wrap = |e: csv::Error| Error::parse(shown.clone(), e.to_string());
    let mut reader = csv::Reader::from_path(&resp_path).map_err(&wrap)?;
    let header = reader.headers().map_err(&wrap)?.clone();
    let col_of = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(&shown, format!("missing column '{name}'")))
    };
    let id_col = col_of(&manifest.subject_id_column)?;
    let r_col = col_of(&manifest.responses.r_column)?;
    let c_col = col_of(&manifest.responses.c_column)?;
    let n = subject_ids.len();
    let mut response_r = Array1::from_elem(n, f64::NAN);
    let mut response_c = vec![0u8; n];
    let mut resp_ids = Vec::with_capacity(n);
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(&wrap)?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let id = field(id_col).to_string();
        let Some(&row) = order.get(&id) else {
            return Err(Error::InvalidData(format!(
                "responses: subject '{id}' does not appear in every file"
            )));
        };
        let r_text = field(r_col);
        response_r[row] = r_text.parse().map_err(|_| {
            Error::InvalidData(format!(
                "responses row {}: '{}' is not a number",
                i + 2,
                r_text
            ))
        })?;
        let c_text = field(c_col);
        let c_val: u8 = c_text.parse().map_err(|_| {
            Error::InvalidData(format!(
                "responses row {}: '{}' is not a category code",
                i + 2,
                c_text
            ))
        })?;
        if c_val as usize >= config.response_ordinal_levels {
            return Err(Error::InvalidData(format!(
                "responses row {}: category {} outside 0..{}",
                i + 2,
                c_val,
                config.response_ordinal_levels
            )));
        }
        response_c[row] = c_val;
        resp_ids.push(id);
    }
    check_ids("responses", &resp_ids, &order)?;

    let data = Dataset {
        subject_ids,
        marker_data,
        background_data,
        response_r,
        response_c,
    };
    data.validate(config)?;
    Ok(data)
}

fn feature_names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("f{j}")).collect()
}
