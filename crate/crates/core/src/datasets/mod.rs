//! Simulation generators, CSV ingestion, preprocessing and fold splitting.

pub mod folds;
pub mod preprocess;
pub mod sim;
pub mod table;

pub use folds::{kfold_split, train_val_split, Fold, FoldPlan};
pub use preprocess::{
    iqr_bounds, iqr_clip, one_hot, standardize, FittedPreprocessor, OneHotEncoder,
    PreprocessSpec, Standardizer, TargetHandling,
};
pub use sim::{
    gen_interaction, gen_no_interaction, generate_sim, sim_feature_names, GroundTruth, SimDataset,
    SimKind,
};
pub use table::{load_csv, write_csv, Column, CsvSchema, RawTable};
