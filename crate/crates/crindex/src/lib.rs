//! Numerical boundary CR invariants for domains `{rho < 0}` in C^n.
//!
//! Given a smooth real-valued defining function, the library samples the
//! boundary, computes the Levi form and its null space in adapted unitary
//! frames, evaluates the induced (1,0)-form and its hermitian companion on
//! the null space, and turns them into certified one-sided estimates of the
//! Diederich-Fornaess and Steinness indices in both the weak and strong
//! sense. Independent interior/exterior plurisubharmonicity oracles
//! cross-validate the boundary numbers from the open sides.
//!
//! The high-level entry points are [`config::load_domain_config`],
//! [`report::run_analyze`] and [`report::run_certify`]; the `crindex` binary
//! wraps them in a CLI.

pub mod config;
pub mod expr;
pub mod geometry;
pub mod indices;
pub mod jet;
pub mod linalg;
pub mod optim;
mod parallel;
pub mod report;
pub mod selftest;

pub use config::{load_domain_config, DomainSpec};
pub use expr::{eval_expr, parse_defining_function, Expr, ExprError};
pub use geometry::{
    adapted_frame, dangelo_forms, levi_data, project_to_boundary, sample_boundary, BoundaryPoint,
    FormPair, LeviData, UnitaryFrame,
};
pub use indices::{
    aggregate_indices, conformal_transform, df_threshold, exterior_psh_oracle,
    interior_psh_oracle, optimize_trivialization, oracle_exponent_search, rank_one_threshold,
    steinness_threshold, strong_oka_margin, IndexCore, Objective, OracleSide, OracleVerdict,
    PointThreshold,
};
pub use jet::{jet_lift, jet_lift_frame, WJet};
pub use report::{
    emit_pointwise_csv, run_analyze, run_certify, AnalyzeReport, RunError, RunOptions,
};
