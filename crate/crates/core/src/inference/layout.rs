//! Flat parameter layout: maps the structured `ParameterState` onto a dense
//! unconstrained vector for gradient-based sampling.
//!
//! Positive scalars travel on the log scale, ordered blocks (thresholds,
//! cutpoints) as first-element-plus-log-increments, everything else
//! identically. The layout owns the name list for both scales and the chain
//! rule between constrained-space gradients and unconstrained ones
//! (including the log-Jacobian of the change of variables).

use ndarray::Array1;

use crate::model::{ModelConfig, ParameterState, ViewKind, ViewParams, ViewRole};
use crate::{Error, Result};

/// Change of variables applied to one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// Positive scalars: v = exp(u).
    Log,
    /// Strictly increasing rows: v_0 = u_0, v_k = v_{k-1} + exp(u_k).
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    /// Rows over which an ordered transform applies independently.
    fn ordered_rows(self) -> (usize, usize) {
        match self {
            Shape::Scalar => (1, 1),
            Shape::Vector(n) => (1, n),
            Shape::Matrix(r, c) => (r, c),
        }
    }
}

/// Where a block's coordinates live inside `ParameterState`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Level1(ViewRole, usize),
    LoadingsRaw(ViewRole, usize),
    LoadingsLocal(ViewRole, usize),
    LoadingsGlobal(ViewRole, usize),
    NoisePrecision(ViewRole, usize),
    Discrimination(ViewRole, usize),
    Difficulty(ViewRole, usize),
    Thresholds(ViewRole, usize),
    SharedU,
    SharedLoadings,
    ArdPrecisions,
    BackgroundRegression,
    ResponseG,
    ResponseGWeights,
    ResponseWR,
    ResponseWC,
    ResponseCutpoints,
    RNoisePrecision,
    ResponseCstar,
}

/// One contiguous block of the flat vector.
#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    slot: Slot,
    pub offset: usize,
    shape: Shape,
    pub transform: Transform,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense layout over every free parameter of a model configuration.
pub struct ParamLayout {
    blocks: Vec<Block>,
    dim: usize,
    template: ParameterState,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.dims();
        let n = config.n_subjects;
        let mut blocks: Vec<Block> = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: String, slot: Slot, shape: Shape, transform: Transform| {
            let block = Block { name, slot, offset, shape, transform };
            offset += block.len();
            blocks.push(block);
        };

        for (role, views) in [
            (ViewRole::Marker, &config.marker_views),
            (ViewRole::Background, &config.background_views),
        ] {
            for (i, v) in views.iter().enumerate() {
                let shape = match v.kind {
                    ViewKind::Continuous => Shape::Matrix(n, v.latent_dim),
                    _ => Shape::Vector(n),
                };
                push(
                    format!("level1[{}]", v.name),
                    Slot::Level1(role, i),
                    shape,
                    Transform::Identity,
                );
            }
        }
        for (role, views) in [
            (ViewRole::Marker, &config.marker_views),
            (ViewRole::Background, &config.background_views),
        ] {
            for (i, v) in views.iter().enumerate() {
                match v.kind {
                    ViewKind::Continuous => {
                        push(
                            format!("loadings_raw[{}]", v.name),
                            Slot::LoadingsRaw(role, i),
                            Shape::Matrix(v.latent_dim, v.n_features),
                            Transform::Identity,
                        );
                        if config.view_uses_horseshoe(role) {
                            push(
                                format!("loadings_local[{}]", v.name),
                                Slot::LoadingsLocal(role, i),
                                Shape::Matrix(v.latent_dim, v.n_features),
                                Transform::Log,
                            );
                            push(
                                format!("loadings_global[{}]", v.name),
                                Slot::LoadingsGlobal(role, i),
                                Shape::Scalar,
                                Transform::Log,
                            );
                        }
                        push(
                            format!("noise_precision[{}]", v.name),
                            Slot::NoisePrecision(role, i),
                            Shape::Scalar,
                            Transform::Log,
                        );
                    }
                    ViewKind::Binary => {
                        push(
                            format!("discrimination[{}]", v.name),
                            Slot::Discrimination(role, i),
                            Shape::Vector(v.n_features),
                            Transform::Log,
                        );
                        push(
                            format!("difficulty[{}]", v.name),
                            Slot::Difficulty(role, i),
                            Shape::Vector(v.n_features),
                            Transform::Identity,
                        );
                    }
                    ViewKind::Ordinal => {
                        let k = v.levels_per_feature.expect("validated ordinal") - 1;
                        push(
                            format!("discrimination[{}]", v.name),
                            Slot::Discrimination(role, i),
                            Shape::Vector(v.n_features),
                            Transform::Log,
                        );
                        push(
                            format!("thresholds[{}]", v.name),
                            Slot::Thresholds(role, i),
                            Shape::Matrix(v.n_features, k),
                            Transform::Ordered,
                        );
                    }
                }
            }
        }
        push(
            "shared_u".into(),
            Slot::SharedU,
            Shape::Matrix(n, dims.d_u),
            Transform::Identity,
        );
        push(
            "shared_loadings".into(),
            Slot::SharedLoadings,
            Shape::Matrix(dims.d_x, dims.d_u),
            Transform::Identity,
        );
        push(
            "ard_precisions".into(),
            Slot::ArdPrecisions,
            Shape::Matrix(config.marker_views.len(), dims.d_u),
            Transform::Log,
        );
        if dims.d_b > 0 {
            push(
                "background_regression".into(),
                Slot::BackgroundRegression,
                Shape::Matrix(dims.d_u, dims.d_b),
                Transform::Identity,
            );
        }
        push(
            "response_g".into(),
            Slot::ResponseG,
            Shape::Vector(n),
            Transform::Identity,
        );
        push(
            "response_g_weights".into(),
            Slot::ResponseGWeights,
            Shape::Vector(dims.d_u),
            Transform::Identity,
        );
        push("response_w_r".into(), Slot::ResponseWR, Shape::Scalar, Transform::Identity);
        push("response_w_c".into(), Slot::ResponseWC, Shape::Scalar, Transform::Identity);
        push(
            "response_cutpoints".into(),
            Slot::ResponseCutpoints,
            Shape::Vector(config.response_ordinal_levels - 1),
            Transform::Ordered,
        );
        push(
            "r_noise_precision".into(),
            Slot::RNoisePrecision,
            Shape::Scalar,
            Transform::Log,
        );
        if config.explicit_cstar {
            push(
                "response_cstar".into(),
                Slot::ResponseCstar,
                Shape::Vector(n),
                Transform::Identity,
            );
        }

        Ok(ParamLayout { dim: offset, blocks, template: ParameterState::neutral(config) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn template(&self) -> &ParameterState {
        &self.template
    }

    /// Flat index ranges of the subject-indexed blocks: level-1 latents, the
    /// shared subspace, the response summary, and (when present) the latent
    /// status. All carry the identity transform, so the ranges address the
    /// same coordinates on both scales.
    pub fn subject_local_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.blocks
            .iter()
            .filter(|b| {
                matches!(
                    b.slot,
                    Slot::Level1(..) | Slot::SharedU | Slot::ResponseG | Slot::ResponseCstar
                )
            })
            .map(|b| b.offset..b.offset + b.len())
            .collect()
    }

    fn read_slot(&self, state: &ParameterState, slot: Slot, out: &mut [f64]) {
        use crate::model::Level1;
        let copy_iter = |out: &mut [f64], it: &mut dyn Iterator<Item = f64>| {
            for (o, v) in out.iter_mut().zip(it) {
                *o = v;
            }
        };
        match slot {
            Slot::Level1(role, i) => match state.level1(role, i) {
                Level1::Factor(a) => copy_iter(out, &mut a.iter().copied()),
                Level1::Trait(a) => copy_iter(out, &mut a.iter().copied()),
            },
            Slot::LoadingsRaw(role, i) => match state.view_params(role, i) {
                ViewParams::Continuous { loadings, .. } => {
                    copy_iter(out, &mut loadings.raw.iter().copied())
                }
                _ => unreachable!(),
            },
            Slot::LoadingsLocal(role, i) => match state.view_params(role, i) {
                ViewParams::Continuous { loadings, .. } => {
                    copy_iter(out, &mut loadings.local_scales.iter().copied())
                }
                _ => unreachable!(),
            },
            Slot::LoadingsGlobal(role, i) => match state.view_params(role, i) {
                ViewParams::Continuous { loadings, .. } => out[0] = loadings.global_scale,
                _ => unreachable!(),
            },
            Slot::NoisePrecision(role, i) => match state.view_params(role, i) {
                ViewParams::Continuous { noise_precision, .. } => out[0] = *noise_precision,
                _ => unreachable!(),
            },
            Slot::Discrimination(role, i) => match state.view_params(role, i) {
                ViewParams::Binary { discrimination, .. }
                | ViewParams::Ordinal { discrimination, .. } => {
                    copy_iter(out, &mut discrimination.iter().copied())
                }
                _ => unreachable!(),
            },
            Slot::Difficulty(role, i) => match state.view_params(role, i) {
                ViewParams::Binary { difficulty, .. } => {
                    copy_iter(out, &mut difficulty.iter().copied())
                }
                _ => unreachable!(),
            },
            Slot::Thresholds(role, i) => match state.view_params(role, i) {
                ViewParams::Ordinal { thresholds, .. } => {
                    copy_iter(out, &mut thresholds.iter().copied())
                }
                _ => unreachable!(),
            },
            Slot::SharedU => copy_iter(out, &mut state.shared_u.iter().copied()),
            Slot::SharedLoadings => copy_iter(out, &mut state.shared_loadings.iter().copied()),
            Slot::ArdPrecisions => copy_iter(out, &mut state.ard_precisions.iter().copied()),
            Slot::BackgroundRegression => {
                copy_iter(out, &mut state.background_regression.iter().copied())
            }
            Slot::ResponseG => copy_iter(out, &mut state.response_g.iter().copied()),
            Slot::ResponseGWeights => {
                copy_iter(out, &mut state.response_g_weights.iter().copied())
            }
            Slot::ResponseWR => out[0] = state.response_w_r,
            Slot::ResponseWC => out[0] = state.response_w_c,
            Slot::ResponseCutpoints => {
                copy_iter(out, &mut state.response_cutpoints.iter().copied())
            }
            Slot::RNoisePrecision => out[0] = state.r_noise_precision,
            Slot::ResponseCstar => {
                let c = state.response_cstar.as_ref().expect("layout includes c*");
                copy_iter(out, &mut c.iter().copied())
            }
        }
    }

    fn write_slot(&self, state: &mut ParameterState, slot: Slot, values: &[f64]) {
        use crate::model::Level1;
        let assign = |dst: &mut dyn Iterator<Item = &mut f64>, src: &[f64]| {
            for (d, v) in dst.zip(src) {
                *d = *v;
            }
        };
        match slot {
            Slot::Level1(role, i) => match state.level1_mut(role, i) {
                Level1::Factor(a) => assign(&mut a.iter_mut(), values),
                Level1::Trait(a) => assign(&mut a.iter_mut(), values),
            },
            Slot::LoadingsRaw(role, i) => match state.view_params_mut(role, i) {
                ViewParams::Continuous { loadings, .. } => {
                    assign(&mut loadings.raw.iter_mut(), values)
                }
                _ => unreachable!(),
            },
            Slot::LoadingsLocal(role, i) => match state.view_params_mut(role, i) {
                ViewParams::Continuous { loadings, .. } => {
                    assign(&mut loadings.local_scales.iter_mut(), values)
                }
                _ => unreachable!(),
            },
            Slot::LoadingsGlobal(role, i) => match state.view_params_mut(role, i) {
                ViewParams::Continuous { loadings, .. } => loadings.global_scale = values[0],
                _ => unreachable!(),
            },
            Slot::NoisePrecision(role, i) => match state.view_params_mut(role, i) {
                ViewParams::Continuous { noise_precision, .. } => *noise_precision = values[0],
                _ => unreachable!(),
            },
            Slot::Discrimination(role, i) => match state.view_params_mut(role, i) {
                ViewParams::Binary { discrimination, .. }
                | ViewParams::Ordinal { discrimination, .. } => {
                    assign(&mut discrimination.iter_mut(), values)
                }
                _ => unreachable!(),
            },
            Slot::Difficulty(role, i) => match state.view_params_mut(role, i) {
                ViewParams::Binary { difficulty, .. } => {
                    assign(&mut difficulty.iter_mut(), values)
                }
                _ => unreachable!(),
            },
            Slot::Thresholds(role, i) => match state.view_params_mut(role, i) {
                ViewParams::Ordinal { thresholds, .. } => {
                    assign(&mut thresholds.iter_mut(), values)
                }
                _ => unreachable!(),
            },
            Slot::SharedU => assign(&mut state.shared_u.iter_mut(), values),
            Slot::SharedLoadings => assign(&mut state.shared_loadings.iter_mut(), values),
            Slot::ArdPrecisions => assign(&mut state.ard_precisions.iter_mut(), values),
            Slot::BackgroundRegression => {
                assign(&mut state.background_regression.iter_mut(), values)
            }
            Slot::ResponseG => assign(&mut state.response_g.iter_mut(), values),
            Slot::ResponseGWeights => assign(&mut state.response_g_weights.iter_mut(), values),
            Slot::ResponseWR => state.response_w_r = values[0],
            Slot::ResponseWC => state.response_w_c = values[0],
            Slot::ResponseCutpoints => assign(&mut state.response_cutpoints.iter_mut(), values),
            Slot::RNoisePrecision => state.r_noise_precision = values[0],
            Slot::ResponseCstar => {
                let c = state.response_cstar.as_mut().expect("layout includes c*");
                assign(&mut c.iter_mut(), values)
            }
        }
    }

    /// Constrained state -> unconstrained vector.
    pub fn to_unconstrained(&self, state: &ParameterState) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.dim);
        let mut scratch = Vec::new();
        for block in &self.blocks {
            scratch.resize(block.len(), 0.0);
            self.read_slot(state, block.slot, &mut scratch);
            let dst = &mut out.as_slice_mut().unwrap()[block.offset..block.offset + block.len()];
            match block.transform {
                Transform::Identity => dst.copy_from_slice(&scratch),
                Transform::Log => {
                    for (d, &v) in dst.iter_mut().zip(&scratch) {
                        if v <= 0.0 {
                            return Err(Error::Domain {
                                context: "to_unconstrained",
                                message: format!("block `{}` has non-positive entry {v}", block.name),
                            });
                        }
                        *d = v.ln();
                    }
                }
                Transform::Ordered => {
                    let (rows, cols) = block.shape.ordered_rows();
                    for r in 0..rows {
                        let row = &scratch[r * cols..(r + 1) * cols];
                        dst[r * cols] = row[0];
                        for k in 1..cols {
                            let inc = row[k] - row[k - 1];
                            if inc <= 0.0 {
                                return Err(Error::Domain {
                                    context: "to_unconstrained",
                                    message: format!(
                                        "block `{}` row {r} is not strictly increasing",
                                        block.name
                                    ),
                                });
                            }
                            dst[r * cols + k] = inc.ln();
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Unconstrained vector -> constrained state (no validity check beyond
    /// construction; overflow can produce non-finite entries the joint
    /// rejects).
    pub fn from_unconstrained(&self, x: &[f64]) -> Result<ParameterState> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coordinates, got {}",
                self.dim,
                x.len()
            )));
        }
        let mut state = self.template.clone();
        let mut scratch = Vec::new();
        for block in &self.blocks {
            let src = &x[block.offset..block.offset + block.len()];
            scratch.resize(block.len(), 0.0);
            match block.transform {
                Transform::Identity => scratch.copy_from_slice(src),
                Transform::Log => {
                    for (d, &u) in scratch.iter_mut().zip(src) {
                        *d = u.exp();
                    }
                }
                Transform::Ordered => {
                    let (rows, cols) = block.shape.ordered_rows();
                    for r in 0..rows {
                        let mut acc = src[r * cols];
                        scratch[r * cols] = acc;
                        for k in 1..cols {
                            acc += src[r * cols + k].exp();
                            scratch[r * cols + k] = acc;
                        }
                    }
                }
            }
            self.write_slot(&mut state, block.slot, &scratch);
        }
        Ok(state)
    }

    /// Same ordering as the unconstrained vector but raw constrained values.
    pub fn constrained_vec(&self, state: &ParameterState) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim);
        let mut scratch = Vec::new();
        for block in &self.blocks {
            scratch.resize(block.len(), 0.0);
            self.read_slot(state, block.slot, &mut scratch);
            out.as_slice_mut().unwrap()[block.offset..block.offset + block.len()]
                .copy_from_slice(&scratch);
        }
        out
    }

    /// Rebuild a state from constrained values in layout order.
    pub fn state_from_constrained(&self, values: &[f64]) -> Result<ParameterState> {
        if values.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coordinates, got {}",
                self.dim,
                values.len()
            )));
        }
        let mut state = self.template.clone();
        for block in &self.blocks {
            self.write_slot(
                &mut state,
                block.slot,
                &values[block.offset..block.offset + block.len()],
            );
        }
        Ok(state)
    }

    /// Log-Jacobian of the unconstrained -> constrained map at `x`.
    pub fn log_jacobian(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for block in &self.blocks {
            let src = &x[block.offset..block.offset + block.len()];
            match block.transform {
                Transform::Identity => {}
                Transform::Log => total += src.iter().sum::<f64>(),
                Transform::Ordered => {
                    let (rows, cols) = block.shape.ordered_rows();
                    for r in 0..rows {
                        for k in 1..cols {
                            total += src[r * cols + k];
                        }
                    }
                }
            }
        }
        total
    }

    /// Chain a constrained-space gradient (shaped like the state) into the
    /// gradient of `joint + log_jacobian` with respect to the unconstrained
    /// coordinates.
    pub fn chain_gradient(&self, x: &[f64], grad_state: &ParameterState) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim);
        let mut g_c = Vec::new();
        for block in &self.blocks {
            g_c.resize(block.len(), 0.0);
            self.read_slot(grad_state, block.slot, &mut g_c);
            let src = &x[block.offset..block.offset + block.len()];
            let dst = &mut out.as_slice_mut().unwrap()[block.offset..block.offset + block.len()];
            match block.transform {
                Transform::Identity => dst.copy_from_slice(&g_c),
                Transform::Log => {
                    for ((d, &g), &u) in dst.iter_mut().zip(&g_c).zip(src) {
                        *d = g * u.exp() + 1.0;
                    }
                }
                Transform::Ordered => {
                    let (rows, cols) = block.shape.ordered_rows();
                    for r in 0..rows {
                        let row = &g_c[r * cols..(r + 1) * cols];
                        // suffix sums of constrained gradients
                        let mut suffix = 0.0;
                        let mut suffixes = vec![0.0; cols];
                        for k in (0..cols).rev() {
                            suffix += row[k];
                            suffixes[k] = suffix;
                        }
                        dst[r * cols] = suffixes[0];
                        for k in 1..cols {
                            dst[r * cols + k] = src[r * cols + k].exp() * suffixes[k] + 1.0;
                        }
                    }
                }
            }
        }
        out
    }

    /// Names of coordinates on the constrained scale.
    pub fn constrained_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim);
        for block in &self.blocks {
            match block.shape {
                Shape::Scalar => names.push(block.name.clone()),
                Shape::Vector(n) => {
                    for i in 0..n {
                        names.push(format!("{}[{i}]", block.name));
                    }
                }
                Shape::Matrix(r, c) => {
                    for i in 0..r {
                        for j in 0..c {
                            names.push(format!("{}[{i},{j}]", block.name));
                        }
                    }
                }
            }
        }
        names
    }

    /// Names of coordinates on the unconstrained scale; log-transformed
    /// coordinates get a `:log` suffix, ordered increments `:ord`.
    pub fn unconstrained_names(&self) -> Vec<String> {
        let mut names = self.constrained_names();
        for block in &self.blocks {
            match block.transform {
                Transform::Identity => {}
                Transform::Log => {
                    for name in names[block.offset..block.offset + block.len()].iter_mut() {
                        name.push_str(":log");
                    }
                }
                Transform::Ordered => {
                    let (rows, cols) = block.shape.ordered_rows();
                    for r in 0..rows {
                        for k in 1..cols {
                            names[block.offset + r * cols + k].push_str(":ord");
                        }
                    }
                }
            }
        }
        names
    }
}
