//! Runtime validation: convergence diagnostics, predictive checks, PSIS-LOO
//! and structural self-checks, assembled into one report.

pub mod checks;
pub mod convergence;
pub(crate) mod floats;
pub mod ppc;
pub mod psis;
pub mod report;
pub mod stats;

pub use checks::{gradient_audit, smoke_test, AuditStatus, BlockAudit, GradientAudit, SmokeResult};
pub use convergence::{ess_bulk, ess_tail, rank_normalized_rhat, ChainSet, Estimate};
pub use ppc::{posterior_predictive_check, DataKind, PpcResult, StatCheck};
pub use psis::{psis_loo, ParetoBuckets, PsisLoo, NO_VARIATION_K};
pub use report::{
    needs_escalation, run_validation, run_validation_graph, validate_with, DiagnosticsReport, Overall, ValidationConfig,
    RHAT_THRESHOLD,
};
