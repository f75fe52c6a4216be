//! Budget-constrained cascade deferral for machine translation.
//!
//! A small model translates every segment in a batch, a quality-estimation
//! model scores the hypotheses, and only the lowest-scoring fraction `eta`
//! of segments is escalated to a large model. This crate holds the offline
//! machinery: the record/batch data model with JSONL ingestion
//! ([`record`]), deferral rules and budget-constrained selection
//! ([`deferral`]), inference FLOPs accounting with parity points
//! ([`cost`]), and the evaluation layer with deferral curves, win/tie/loss
//! rates, and paired permutation tests ([`eval`]).

pub mod cost;
pub mod deferral;
pub mod eval;
pub mod record;

pub use cost::{CostBreakdown, CostError, CostModel, CostModelParams, CostReport, single_model_flops};
pub use deferral::{
    apply_decision, priority, select_deferrals, validate_for_rule, DecisionExport, DeferralBudget,
    DeferralDecision, DeferralError, DeferralRule, MissingColumnReport,
};
pub use eval::{
    crossover_budget, curves_to_csv, deferral_curve, mean_quality, paired_permutation_test,
    significance_band, win_tie_loss, BandPoint, CurvePoint, EvalError, PermutationConfig,
    PermutationMode, PermutationTestResult, WinTieLoss,
};
pub use record::{
    load_batch, load_batch_from_reader, Batch, BatchError, ColumnPair, LoadError, MissingColumn,
    ScoreColumn, ScoreDirection, ScoreOrientation, TranslationRecord,
};
