//! Simulation settings, population truths and Monte Carlo studies.

pub mod conditions;
pub mod generate;
pub mod oracle;
pub mod study;

pub use conditions::{check_conditions, ConditionReport};
pub use generate::{
    generate_setting, GeneratorReading, PotentialOutcomeSample, SettingId, SimSetting,
};
pub use oracle::{oracle_truth, OracleSample, OracleTruth};
pub use study::{run_study, StudyConfig, StudyRow, StudyTable};
