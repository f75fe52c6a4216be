//! Live cascade orchestration: translate everything with the small model,
//! score everything with the QE model, defer the lowest-scoring budget
//! fraction to the large model.

use reqwest::Client;
use serde::Serialize;

use cascade_core::{
    select_deferrals, Batch, CostModel, CostReport, DeferralBudget, DeferralDecision,
    DeferralRule, ScoreDirection, TranslationRecord,
};

use crate::cache::ResponseCache;
use crate::client::{score_batch, translate_batch};
use crate::config::LiveEndpoints;
use crate::GatewayError;

/// Pipeline stage at which an item failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LiveStage {
    TranslateSmall,
    ScoreQe,
    TranslateLarge,
}

/// Per-item failure, indexed into the original source list.
#[derive(Debug, Clone, Serialize)]
pub struct LiveFailure {
    pub stage: LiveStage,
    pub source_index: usize,
    pub error: String,
}

/// Outcome of one live run. The batch holds the records that survived
/// translation and scoring; deferral ran over exactly those.
#[derive(Debug)]
pub struct LiveRun {
    pub batch: Batch,
    pub decision: DeferralDecision,
    pub cost: CostReport,
    pub failures: Vec<LiveFailure>,
}

/// Runs the cascade against live endpoints.
///
/// Items that fail small-model translation or QE scoring after retries are
/// excluded from the batch and listed in `failures`; deferral proceeds
/// over the survivors. A deferred record whose large-model translation
/// fails stays in the batch without `hyp_large` and is likewise listed.
/// Record ids are `seg-<i>` with `i` the 0-based source index.
#[allow(clippy::too_many_arguments)]
pub async fn run_cascade_live(
    client: &Client,
    sources: &[String],
    endpoints: &LiveEndpoints,
    budget: DeferralBudget,
    cost: &CostModel,
    cache: &ResponseCache,
    lang_pair: &str,
    batch_name: &str,
) -> Result<LiveRun, GatewayError> {
    let mut failures = Vec::new();

    let hypotheses = translate_batch(client, sources, &endpoints.small, cache).await?;
    let mut survivors: Vec<(usize, String)> = Vec::new();
    for (index, result) in hypotheses.into_iter().enumerate() {
        match result {
            Ok(hypothesis) => survivors.push((index, hypothesis)),
            Err(error) => {
                failures.push(LiveFailure { stage: LiveStage::TranslateSmall, source_index: index, error })
            }
        }
    }

    let pairs: Vec<(String, String)> = survivors
        .iter()
        .map(|&(index, ref hyp)| (sources[index].clone(), hyp.clone()))
        .collect();
    let scores = score_batch(client, &pairs, &endpoints.qe.endpoint, cache).await?;
    let mut scored: Vec<(usize, String, f64)> = Vec::new();
    for ((index, hypothesis), result) in survivors.into_iter().zip(scores) {
        match result {
            Ok(raw) => {
                let qe = match endpoints.qe.orientation {
                    ScoreDirection::HigherBetter => raw,
                    ScoreDirection::LowerBetter => -raw,
                };
                scored.push((index, hypothesis, qe));
            }
            Err(error) => {
                failures.push(LiveFailure { stage: LiveStage::ScoreQe, source_index: index, error })
            }
        }
    }

    if scored.is_empty() {
        return Err(GatewayError::NoUsableRecords);
    }

    let mut records: Vec<TranslationRecord> = scored
        .iter()
        .map(|&(index, ref hypothesis, qe)| {
            let mut record =
                TranslationRecord::new(format!("seg-{index}"), lang_pair, sources[index].clone());
            record.hyp_small = Some(hypothesis.clone());
            record.qe_small = Some(qe);
            record
        })
        .collect();

    let ranking_batch = Batch::new(batch_name, records.clone())?;
    let decision = select_deferrals(&ranking_batch, &DeferralRule::Qe, budget)?;

    let deferred_sources: Vec<String> =
        decision.deferred.iter().map(|&i| records[i].source.clone()).collect();
    if !deferred_sources.is_empty() {
        let large = translate_batch(client, &deferred_sources, &endpoints.large, cache).await?;
        for (&record_index, result) in decision.deferred.iter().zip(large) {
            match result {
                Ok(hypothesis) => records[record_index].hyp_large = Some(hypothesis),
                Err(error) => failures.push(LiveFailure {
                    stage: LiveStage::TranslateLarge,
                    source_index: scored[record_index].0,
                    error,
                }),
            }
        }
    }

    let batch = Batch::new(batch_name, records)?;
    let report = cost.cascade_flops(decision.eta_effective, batch.len() as f64)?;
    Ok(LiveRun { batch, decision, cost: report, failures })
}
