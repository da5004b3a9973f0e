//! End-to-end Mosco experiments: convergence checks of function sequences,
//! the polygonal pipelines over a plan corpus and report emission.

pub mod convergence;
pub mod corpus;
pub mod experiment;
pub mod report;

pub use convergence::{
    coupling_limit_check, lp_strong_check, lp_weak_defect, ConvergenceTolerances, CouplingReport, FunctionSequence,
    FunctionSpec, StrongReport,
};
pub use corpus::{build_corpus, BallDensity, CorpusKind, CorpusPlan, CorpusSpec, CORPUS_VERSION};
pub use experiment::{
    mosco_experiment, mosco_experiment_bv, run_experiment, ExperimentConfig, MoscoOptions, MoscoReport, MoscoRow,
    SequenceSpec, Status, Tolerances,
};
pub use report::{emit_report, load_report, ReportFormat};
