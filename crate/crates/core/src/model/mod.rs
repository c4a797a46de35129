//! Domain types and the joint log-density of the hierarchical model.

pub mod config;
pub mod data;
pub mod state;
pub mod likelihood;
pub mod prior;
pub mod joint;

pub use config::{ModelConfig, ModelDims, PriorConfig, ViewKind, ViewRole, ViewSpec};
pub use data::{Dataset, ViewData};
pub use joint::{joint_logdensity, JointDensity, TermId};
pub use state::{Level1, LoadingBlock, ParameterState, ViewParams};
