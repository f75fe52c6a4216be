//! Deferral rules and budget-constrained selection: given a batch, a rule,
//! and a budget fraction, pick which records the large model handles.
//!
//! The selection procedure is batch-wide: score every record, rank by the
//! rule's priority, and defer exactly the top `k = round_half_up(eta * B)`
//! records. Ties are broken by lower batch index so decisions are
//! reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::record::{Batch, ColumnPair, TranslationRecord};

/// A deferral rule: how records are ranked for escalation to the large
/// model. For every rule except `Random`, a larger priority means more
/// deserving of deferral.
#[derive(Debug, Clone, PartialEq)]
pub enum DeferralRule {
    /// Defer the hypotheses with the lowest QE scores.
    Qe,
    /// Defer a seeded uniformly random subset.
    Random { seed: u64 },
    /// Defer the shortest sources first.
    LengthShortest,
    /// Defer the longest sources first.
    LengthLongest,
    /// Defer the hypotheses with the lowest mean token log-probability.
    LogProbs,
    /// Defer the records with the largest true quality gain, read from the
    /// given column pair. An upper bound on any realizable rule.
    Oracle { columns: ColumnPair },
}

impl DeferralRule {
    /// Oracle over the evaluation-metric columns.
    pub fn oracle() -> Self {
        DeferralRule::Oracle { columns: ColumnPair::QUALITY }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DeferralRule::Qe => "qe",
            DeferralRule::Random { .. } => "random",
            DeferralRule::LengthShortest => "shortest",
            DeferralRule::LengthLongest => "longest",
            DeferralRule::LogProbs => "logprobs",
            DeferralRule::Oracle { .. } => "oracle",
        }
    }

    /// Record fields the rule reads.
    pub fn required_fields(&self) -> Vec<&'static str> {
        match self {
            DeferralRule::Qe => vec!["qe_small"],
            DeferralRule::Random { .. } => vec![],
            DeferralRule::LengthShortest | DeferralRule::LengthLongest => vec!["src_token_len"],
            DeferralRule::LogProbs => vec!["logprob_small", "hyp_token_len"],
            DeferralRule::Oracle { columns } => vec![columns.small.name(), columns.large.name()],
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            DeferralRule::Random { seed } => Some(*seed),
            _ => None,
        }
    }

    pub fn oracle_columns(&self) -> Option<ColumnPair> {
        match self {
            DeferralRule::Oracle { columns } => Some(*columns),
            _ => None,
        }
    }
}

impl std::fmt::Display for DeferralRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for DeferralRule {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DeferralError {
    #[error("record \"{id}\" is missing {column} required by the {rule} rule")]
    MissingColumn { id: String, column: &'static str, rule: &'static str },
    #[error("the random rule ranks by a seeded permutation, not a per-record priority")]
    RandomHasNoPriority,
    #[error("deferral budget must lie in [0, 1], got {eta}")]
    BudgetOutOfRange { eta: f64 },
    #[error("decision index {index} is out of range for a batch of {len} records")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Fraction of a batch deferred to the large model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeferralBudget(f64);

impl DeferralBudget {
    pub fn new(eta: f64) -> Result<Self, DeferralError> {
        if eta.is_finite() && (0.0..=1.0).contains(&eta) {
            Ok(DeferralBudget(eta))
        } else {
            Err(DeferralError::BudgetOutOfRange { eta })
        }
    }

    pub fn eta(self) -> f64 {
        self.0
    }
}

/// Which record indices a given budget sends to the large model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeferralDecision {
    /// Deferred batch indices, sorted ascending. `round_half_up(eta * B)`
    /// of them, clamped to `[0, B]`.
    pub deferred: Vec<usize>,
    pub eta_requested: f64,
    /// `|deferred| / B`; 0 for an empty batch.
    pub eta_effective: f64,
    pub rule: DeferralRule,
}

impl DeferralDecision {
    pub fn is_deferred(&self, index: usize) -> bool {
        self.deferred.binary_search(&index).is_ok()
    }

    /// External JSON form, with record ids substituted for indices.
    pub fn export(&self, batch: &Batch) -> Result<DecisionExport, DeferralError> {
        let deferred_ids = self
            .deferred
            .iter()
            .map(|&i| {
                batch
                    .records()
                    .get(i)
                    .map(|r| r.id.clone())
                    .ok_or(DeferralError::IndexOutOfRange { index: i, len: batch.len() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DecisionExport {
            rule: self.rule.label().to_string(),
            seed: self.rule.seed(),
            oracle_columns: self.rule.oracle_columns(),
            eta_requested: self.eta_requested,
            eta_effective: self.eta_effective,
            deferred_ids,
        })
    }
}

/// Serialized decision: `{rule, seed?, eta_requested, eta_effective,
/// deferred_ids}`.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionExport {
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_columns: Option<ColumnPair>,
    pub eta_requested: f64,
    pub eta_effective: f64,
    pub deferred_ids: Vec<String>,
}

/// Report of records missing the columns a rule needs; deferral may only
/// run when `missing_ids` is empty.
#[derive(Debug, Clone, Serialize)]
pub struct MissingColumnReport {
    pub rule: String,
    pub required: Vec<&'static str>,
    pub missing_ids: Vec<String>,
}

impl MissingColumnReport {
    pub fn is_ok(&self) -> bool {
        self.missing_ids.is_empty()
    }
}

fn field_present(record: &TranslationRecord, field: &str) -> bool {
    match field {
        "qe_small" => record.qe_small.is_some(),
        "qe_large" => record.qe_large.is_some(),
        "quality_small" => record.quality_small.is_some(),
        "quality_large" => record.quality_large.is_some(),
        "logprob_small" => record.logprob_small.is_some(),
        "hyp_token_len" => record.hyp_token_len.is_some(),
        "src_token_len" => record.src_token_len.is_some(),
        other => unreachable!("unknown record field {other}"),
    }
}

/// Lists the record ids that lack the columns `rule` needs.
pub fn validate_for_rule(batch: &Batch, rule: &DeferralRule) -> MissingColumnReport {
    let required = rule.required_fields();
    let missing_ids = batch
        .records()
        .iter()
        .filter(|r| required.iter().any(|f| !field_present(r, f)))
        .map(|r| r.id.clone())
        .collect();
    MissingColumnReport { rule: rule.label().to_string(), required, missing_ids }
}

/// Deferral priority of one record: larger means more deserving of
/// deferral. The random rule has no per-record priority.
pub fn priority(record: &TranslationRecord, rule: &DeferralRule) -> Result<f64, DeferralError> {
    let missing = |column: &'static str| DeferralError::MissingColumn {
        id: record.id.clone(),
        column,
        rule: rule.label(),
    };
    match rule {
        DeferralRule::Qe => Ok(-record.qe_small.ok_or_else(|| missing("qe_small"))?),
        DeferralRule::LogProbs => {
            let logprob = record.logprob_small.ok_or_else(|| missing("logprob_small"))?;
            let len = record.hyp_token_len.ok_or_else(|| missing("hyp_token_len"))?;
            Ok(-(logprob / len as f64))
        }
        DeferralRule::LengthShortest => {
            Ok(-(record.src_token_len.ok_or_else(|| missing("src_token_len"))? as f64))
        }
        DeferralRule::LengthLongest => {
            Ok(record.src_token_len.ok_or_else(|| missing("src_token_len"))? as f64)
        }
        DeferralRule::Oracle { columns } => {
            let small = columns.small.get(record).ok_or_else(|| missing(columns.small.name()))?;
            let large = columns.large.get(record).ok_or_else(|| missing(columns.large.name()))?;
            Ok(large - small)
        }
        DeferralRule::Random { .. } => Err(DeferralError::RandomHasNoPriority),
    }
}

/// `round(x)` with halves rounded up; exact for the non-negative inputs
/// this module produces (f64::round is half-away-from-zero).
fn round_half_up(x: f64) -> usize {
    x.round() as usize
}

/// Fisher-Yates permutation of `0..n` driven by a ChaCha8 stream seeded
/// from `seed`.
fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    indices
}

/// Picks the `round_half_up(eta * B)` records with the highest deferral
/// priority; ties go to the lower batch index. The random rule defers the
/// first `k` indices of a seeded Fisher-Yates permutation instead.
pub fn select_deferrals(
    batch: &Batch,
    rule: &DeferralRule,
    budget: DeferralBudget,
) -> Result<DeferralDecision, DeferralError> {
    let b = batch.len();
    let k = round_half_up(budget.eta() * b as f64).min(b);
    let mut deferred = match rule {
        DeferralRule::Random { seed } => {
            let mut picked = seeded_permutation(b, *seed);
            picked.truncate(k);
            picked
        }
        _ => {
            let mut ranked: Vec<(usize, f64)> = batch
                .records()
                .iter()
                .enumerate()
                .map(|(i, r)| priority(r, rule).map(|p| (i, p)))
                .collect::<Result<_, _>>()?;
            // Priorities are arithmetic over validated finite columns and
            // never NaN, so partial_cmp always succeeds.
            ranked.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .expect("deferral priorities are never NaN")
                    .then(a.0.cmp(&b.0))
            });
            ranked.into_iter().take(k).map(|(i, _)| i).collect()
        }
    };
    deferred.sort_unstable();
    Ok(DeferralDecision {
        deferred,
        eta_requested: budget.eta(),
        eta_effective: if b == 0 { 0.0 } else { k as f64 / b as f64 },
        rule: rule.clone(),
    })
}

/// Realizes the cascade outcome: record `i` yields the pair's large column
/// if deferred, else its small column.
pub fn apply_decision(
    batch: &Batch,
    decision: &DeferralDecision,
    columns: ColumnPair,
) -> Result<Vec<f64>, DeferralError> {
    if let Some(&index) = decision.deferred.iter().find(|&&i| i >= batch.len()) {
        return Err(DeferralError::IndexOutOfRange { index, len: batch.len() });
    }
    batch
        .records()
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let column = if decision.is_deferred(i) { columns.large } else { columns.small };
            column.get(record).ok_or_else(|| DeferralError::MissingColumn {
                id: record.id.clone(),
                column: column.name(),
                rule: decision.rule.label(),
            })
        })
        .collect()
}
