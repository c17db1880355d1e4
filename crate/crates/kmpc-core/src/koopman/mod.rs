//! Koopman-style identification: observable dictionaries, snapshot
//! assembly, least-squares operator fits, and switched linear prediction.

mod dictionary;
mod edmd;
mod eval;
mod model;
mod snapshots;

pub use dictionary::{DictionaryKind, History, ObservableDictionary};
pub use edmd::{
    fit_edmd, fit_projection_from_lifts, partition_operator, FitDiagnostics, SVD_CUTOFF_REL,
};
pub use eval::{
    evaluate_prediction, write_eval_csv, EvalOptions, PhaseAccuracy, PredictionReport,
    EVAL_CSV_HEADER,
};
pub use model::{fit_model, fit_projection, KoopmanModel, MatrixData, PhaseOperators};
pub use snapshots::{build_snapshots, SnapshotMatrices};
