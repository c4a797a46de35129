//! Data handling around the model: manifests, strict CSV loading,
//! normalization, class balancing, fold assignment, and scoring.

pub mod cv;
pub mod folds;
pub mod load;
pub mod manifest;
pub mod metrics;
pub mod normalize;
pub mod smote;

pub use cv::{cross_validate, CvOutcome, CvSettings};
pub use folds::{kfold_split, Fold, FoldPlan};
pub use load::load_dataset;
pub use manifest::{ManifestView, ResponseFiles, ViewManifest};
pub use metrics::{compute_metrics, FoldMetrics, MetricsReport};
pub use normalize::{znormalize, ColumnStats};
pub use smote::{smote, ColumnRole};
