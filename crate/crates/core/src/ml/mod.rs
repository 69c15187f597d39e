//! PCA, kernel SVM and hyperparameter search.

pub mod grid;
pub mod pca;
pub mod scaler;
pub mod svm;

pub use grid::{grid_search, GridResult, HyperGrid};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use scaler::StandardScaler;
pub use svm::{svm_train, Kernel, KernelKind, SvmModel, SvmParams};
