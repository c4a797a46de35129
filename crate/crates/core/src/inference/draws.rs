//! Posterior draw storage with CSV round-tripping.
//!
//! Draws are kept per chain on both scales: the sampler's unconstrained
//! coordinates (used for convergence diagnostics) and the model's constrained
//! parameters (used for reporting and prediction). The CSV layout is long
//! format: one row per kept iteration with bookkeeping columns followed by one
//! column per constrained parameter.

use std::path::Path;

use ndarray::Array2;

use super::layout::ParamLayout;
use super::nuts::SampleOutput;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// Constrained parameter names, one per column of `constrained`.
    pub param_names: Vec<String>,
    /// Unconstrained coordinate names, one per column of `unconstrained`.
    pub unconstrained_names: Vec<String>,
    pub n_chains: usize,
    pub n_samples: usize,
    /// Per chain: `n_samples` x `param_names.len()`.
    pub constrained: Vec<Array2<f64>>,
    /// Per chain: `n_samples` x `unconstrained_names.len()`.
    pub unconstrained: Vec<Array2<f64>>,
    pub logp: Vec<Vec<f64>>,
    pub divergent: Vec<Vec<bool>>,
    pub tree_depth: Vec<Vec<usize>>,
    pub step_size: Vec<f64>,
    pub inv_mass: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    /// Attach parameter names and constrained values to raw sampler output.
    pub fn from_sampler(output: SampleOutput, layout: &ParamLayout) -> Result<Self> {
        if output.dim != layout.dim() {
            return Err(Error::ShapeMismatch(format!(
                "sampler produced {} coordinates, layout expects {}",
                output.dim,
                layout.dim()
            )));
        }
        let param_names = layout.constrained_names();
        let mut constrained = Vec::with_capacity(output.n_chains);
        for chain in &output.draws {
            let mut block = Array2::zeros((output.n_samples, param_names.len()));
            let mut row_buf = vec![0.0; output.dim];
            for (s, row) in chain.rows().into_iter().enumerate() {
                row_buf.iter_mut().zip(row.iter()).for_each(|(d, &v)| *d = v);
                let state = layout.from_unconstrained(&row_buf)?;
                let values = layout.constrained_vec(&state);
                block.row_mut(s).iter_mut().zip(&values).for_each(|(d, &v)| *d = v);
            }
            constrained.push(block);
        }
        Ok(PosteriorDraws {
            param_names,
            unconstrained_names: layout.unconstrained_names(),
            n_chains: output.n_chains,
            n_samples: output.n_samples,
            constrained,
            unconstrained: output.draws,
            logp: output.logp,
            divergent: output.divergent,
            tree_depth: output.tree_depth,
            step_size: output.step_size,
            inv_mass: output.inv_mass,
        })
    }

    pub fn total_divergences(&self) -> usize {
        self.divergent.iter().map(|c| c.iter().filter(|&&d| d).count()).sum()
    }

    /// Pooled posterior mean of one constrained parameter.
    pub fn pooled_mean(&self, param_index: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for chain in &self.constrained {
            for row in chain.rows() {
                sum += row[param_index];
                n += 1;
            }
        }
        sum / n as f64
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|p| p == name)
    }

    /// Write all chains as one long-format CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        let wrap = |e: csv::Error| Error::parse(&shown, e.to_string());
        let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
        let mut header =
            vec!["chain".to_string(), "iter".to_string(), "logp".to_string(),
                 "divergent".to_string(), "tree_depth".to_string(), "step_size".to_string()];
        header.extend(self.param_names.iter().cloned());
        writer.write_record(&header).map_err(wrap)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for c in 0..self.n_chains {
            for s in 0..self.n_samples {
                record.clear();
                record.push(c.to_string());
                record.push(s.to_string());
                record.push(self.logp[c][s].to_string());
                record.push(if self.divergent[c][s] { "1" } else { "0" }.to_string());
                record.push(self.tree_depth[c][s].to_string());
                record.push(self.step_size[c].to_string());
                for v in self.constrained[c].row(s) {
                    record.push(v.to_string());
                }
                writer.write_record(&record).map_err(wrap)?;
            }
        }
        writer.flush().map_err(|e| Error::io(&shown, e))?;
        Ok(())
    }

    /// Read draws written by [`PosteriorDraws::write_csv`], restoring both
    /// scales through the layout. Inverse-mass diagonals are not persisted
    /// and come back as unit.
    pub fn read_csv(path: &Path, layout: &ParamLayout) -> Result<Self> {
        let shown = path.display().to_string();
        let wrap = |e: csv::Error| Error::parse(shown.clone(), e.to_string());
        let mut reader = csv::Reader::from_path(path).map_err(&wrap)?;
        let header = reader.headers().map_err(&wrap)?.clone();
        let find = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(&shown, format!("missing column '{name}'")))
        };
        let col_chain = find("chain")?;
        let col_iter = find("iter")?;
        let col_logp = find("logp")?;
        let col_div = find("divergent")?;
        let col_depth = find("tree_depth")?;
        let col_step = find("step_size")?;
        let param_names = layout.constrained_names();
        let param_cols: Vec<usize> =
            param_names.iter().map(|n| find(n)).collect::<Result<_>>()?;

        struct Row {
            chain: usize,
            iter: usize,
            logp: f64,
            divergent: bool,
            tree_depth: usize,
            step_size: f64,
            values: Vec<f64>,
        }
        let mut rows: Vec<Row> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(&wrap)?;
            let field = |i: usize| -> Result<&str> {
                record.get(i).ok_or_else(|| {
                    Error::parse(&shown, format!("row {} is truncated", line + 2))
                })
            };
            let parse_f64 = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|_| {
                    Error::parse(
                        &shown,
                        format!("row {}: '{}' is not a number", line + 2, record.get(i).unwrap_or("")),
                    )
                })
            };
            let parse_usize = |i: usize| -> Result<usize> {
                field(i)?.parse().map_err(|_| {
                    Error::parse(
                        &shown,
                        format!("row {}: '{}' is not a count", line + 2, record.get(i).unwrap_or("")),
                    )
                })
            };
            let values: Vec<f64> =
                param_cols.iter().map(|&i| parse_f64(i)).collect::<Result<_>>()?;
            rows.push(Row {
                chain: parse_usize(col_chain)?,
                iter: parse_usize(col_iter)?,
                logp: parse_f64(col_logp)?,
                divergent: field(col_div)? == "1",
                tree_depth: parse_usize(col_depth)?,
                step_size: parse_f64(col_step)?,
                values,
            });
        }
        if rows.is_empty() {
            return Err(Error::parse(&shown, "no data rows".to_string()));
        }
        let n_chains = rows.iter().map(|r| r.chain).max().unwrap() + 1;
        let n_samples = rows.iter().filter(|r| r.chain == 0).count();
        if rows.len() != n_chains * n_samples {
            return Err(Error::parse(
                &shown,
                format!(
                    "{} rows; expected {} chains x {} iterations",
                    rows.len(),
                    n_chains,
                    n_samples
                ),
            ));
        }
        rows.sort_by_key(|r| (r.chain, r.iter));

        let dim_u = layout.dim();
        let mut constrained = vec![Array2::zeros((n_samples, param_names.len())); n_chains];
        let mut unconstrained = vec![Array2::zeros((n_samples, dim_u)); n_chains];
        let mut logp = vec![Vec::with_capacity(n_samples); n_chains];
        let mut divergent = vec![Vec::with_capacity(n_samples); n_chains];
        let mut tree_depth = vec![Vec::with_capacity(n_samples); n_chains];
        let mut step_size = vec![f64::NAN; n_chains];
        for row in &rows {
            let c = row.chain;
            let s = logp[c].len();
            if s != row.iter {
                return Err(Error::parse(
                    &shown,
                    format!("chain {} iterations are not consecutive near iter {}", c, row.iter),
                ));
            }
            constrained[c].row_mut(s).iter_mut().zip(&row.values).for_each(|(d, &v)| *d = v);
            let state = layout.state_from_constrained(&row.values)?;
            let u = layout.to_unconstrained(&state)?;
            unconstrained[c].row_mut(s).iter_mut().zip(u.iter()).for_each(|(d, &v)| *d = v);
            logp[c].push(row.logp);
            divergent[c].push(row.divergent);
            tree_depth[c].push(row.tree_depth);
            step_size[c] = row.step_size;
        }
        Ok(PosteriorDraws {
            param_names,
            unconstrained_names: layout.unconstrained_names(),
            n_chains,
            n_samples,
            constrained,
            unconstrained,
            logp,
            divergent,
            tree_depth,
            step_size,
            inv_mass: vec![vec![1.0; dim_u]; n_chains],
        })
    }
}
