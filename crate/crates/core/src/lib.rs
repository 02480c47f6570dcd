//! Estimation of the proportion of a treatment effect on survival that is
//! explained by a landmark surrogate, with perturbation-resampling inference
//! and the simulation study used to evaluate it.

// `!(x > 0.0)` guards reject NaN as well; index loops run over parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod pte;
pub mod rmst;
pub mod sim;
pub mod survival;

pub use data::{
    ingest_csv, snapshot, write_csv, Arm, SnapshotKind, SubjectRecord, SurrogateSnapshot,
    TrialDataset,
};
pub use error::{Error, ErrorKind, Result};
pub use pte::{
    apply_transform, estimate_pte, estimate_pte_ind, estimate_transform, EstimateOptions,
    OptimalTransform, PteResult, Variant,
};
