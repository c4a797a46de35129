//! Gradient-based posterior inference: parameter layout, NUTS sampling with
//! warmup adaptation, MAP optimization, draw storage, and chain diagnostics.

pub mod adapt;
pub mod diagnostics;
pub mod draws;
pub mod layout;
pub mod map;
pub mod nuts;
pub mod posterior;

pub use adapt::{DualAverage, RunningVariance, WarmupSchedule};
pub use diagnostics::{split_ess, split_rhat, DiagnosticsReport, ParamDiagnostics};
pub use draws::PosteriorDraws;
pub use map::{map_estimate, MapResult};
pub use layout::{ParamLayout, Transform};
pub use nuts::{nuts_sample, NutsSettings, SampleOutput};
pub use posterior::{LogDensityGrad, Posterior};
