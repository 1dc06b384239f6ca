//! Classical machine-learning laboratory for smartphone activity recognition.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: the UCI HAR reader, validated datasets and stratified resampling
//! - [`feature_select`]: one-way ANOVA F scores and top-k selection
//! - [`classifiers`]: decision tree, random forest, kernel SVM, logistic
//!   regression and a sigmoid MLP behind one fit/predict contract
//! - [`model_selection`]: stratified k-fold cross-validation and exhaustive grid search
//! - [`metrics`]: confusion matrices, accuracy and per-class precision/recall/F1
//! - [`stats`]: Welch's t-test and the 5x2 cross-validated paired t-test

pub mod classifiers;
pub mod data;
pub mod feature_select;
pub mod format;
pub mod metrics;
pub mod model_selection;
pub mod rng;
pub mod stats;
