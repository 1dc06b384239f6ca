//! Dataset types, the UCI HAR reader, the binary cache and seeded resampling.

mod cache;
mod dataset;
mod error;
pub mod fixture;
mod label;
mod loader;
mod resample;

pub use cache::{decode_cache, encode_cache, read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use dataset::{LabeledDataset, TestSplit, TrainSplit};
pub use error::DataError;
pub use label::ActivityLabel;
pub use loader::{
    load_har_root, load_har_split, load_split_dir, locate_split_files, parse_feature_matrix,
    parse_feature_names, parse_labels, parse_subjects, write_har_layout, SplitFiles, HAR_FEATURES,
};
pub use resample::{
    split_half, split_half_indices, stratified_kfold, stratified_quotas, stratified_subsample,
    stratified_subsample_indices, FoldPlan,
};
