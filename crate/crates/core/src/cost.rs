//! Inference FLOPs accounting for single models, the cascade, and QE
//! reranking, under the standard `2ND` transformer approximation: `N`
//! parameters, `D` generated tokens, doubled for the forward pass.
//!
//! Cascade cost for a batch of `B` examples at deferral fraction `eta`:
//!
//! ```text
//! 2*B*D_S*(N_S + N_QE) + 2*eta*B*D_L*N_L
//! ```
//!
//! All quantities are carried as reals; parameter counts at the 1e9..1e11
//! scale and token counts are exactly representable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("eta must lie in [0, 1], got {eta}")]
    EtaOutOfRange { eta: f64 },
    #[error("hypothesis count must be at least 1")]
    ZeroHypotheses,
}

fn positive(name: &'static str, value: f64) -> Result<f64, CostError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CostError::NonPositive { name, value })
    }
}

/// Raw cost-model parameters as they appear in config files.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostModelParams {
    /// Small-model parameter count `N_S`, e.g. 7e9.
    pub n_small: f64,
    /// Large-model parameter count `N_L`.
    pub n_large: f64,
    /// QE-model parameter count `N_QE`.
    pub n_qe: f64,
    /// Mean tokens generated per example by the small model, `D_S`.
    pub d_small: f64,
    /// Mean tokens generated per example by the large model, `D_L`.
    pub d_large: f64,
}

/// Validated model-size and token-count parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModel {
    n_small: f64,
    n_large: f64,
    n_qe: f64,
    d_small: f64,
    d_large: f64,
}

impl TryFrom<CostModelParams> for CostModel {
    type Error = CostError;

    fn try_from(p: CostModelParams) -> Result<Self, CostError> {
        CostModel::new(p.n_small, p.n_large, p.n_qe, p.d_small, p.d_large)
    }
}

/// Per-stage FLOPs of one serving configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub small_gen: f64,
    pub qe_score: f64,
    pub large_gen: f64,
}

/// Total FLOPs plus the cost relative to always running the large model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    /// Sum of the breakdown stages.
    pub flops: f64,
    /// `flops / (2 * B * D_L * N_L)`.
    pub relative_cost_x: f64,
    pub breakdown: CostBreakdown,
    /// True when `D_S != D_L`; the relative cost is still reported against
    /// the large model's own token count.
    pub token_counts_differ: bool,
}

/// FLOPs for one model over a batch: `2 * B * D * N`.
pub fn single_model_flops(n_params: f64, d_tokens: f64, batch: f64) -> Result<f64, CostError> {
    let n = positive("n_params", n_params)?;
    let d = positive("d_tokens", d_tokens)?;
    let b = positive("batch", batch)?;
    Ok(2.0 * b * d * n)
}

impl CostModel {
    pub fn new(n_small: f64, n_large: f64, n_qe: f64, d_small: f64, d_large: f64) -> Result<Self, CostError> {
        Ok(CostModel {
            n_small: positive("n_small", n_small)?,
            n_large: positive("n_large", n_large)?,
            n_qe: positive("n_qe", n_qe)?,
            d_small: positive("d_small", d_small)?,
            d_large: positive("d_large", d_large)?,
        })
    }

    pub fn n_small(&self) -> f64 {
        self.n_small
    }

    pub fn n_large(&self) -> f64 {
        self.n_large
    }

    pub fn n_qe(&self) -> f64 {
        self.n_qe
    }

    pub fn d_small(&self) -> f64 {
        self.d_small
    }

    pub fn d_large(&self) -> f64 {
        self.d_large
    }

    fn report(&self, breakdown: CostBreakdown, batch: f64) -> CostReport {
        let flops = breakdown.small_gen + breakdown.qe_score + breakdown.large_gen;
        CostReport {
            flops,
            relative_cost_x: flops / (2.0 * batch * self.d_large * self.n_large),
            breakdown,
            token_counts_differ: self.d_small != self.d_large,
        }
    }

    /// Cascade FLOPs at deferral fraction `eta` over a batch of `B`
    /// examples. QE scoring reads the small model's `D_S` generated tokens.
    pub fn cascade_flops(&self, eta: f64, batch: f64) -> Result<CostReport, CostError> {
        if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
            return Err(CostError::EtaOutOfRange { eta });
        }
        let b = positive("batch", batch)?;
        Ok(self.report(
            CostBreakdown {
                small_gen: 2.0 * b * self.d_small * self.n_small,
                qe_score: 2.0 * b * self.d_small * self.n_qe,
                large_gen: 2.0 * eta * b * self.d_large * self.n_large,
            },
            b,
        ))
    }

    /// The budget fraction at which the cascade's cost reaches the large
    /// model's: `eta* = 1 - (N_S + N_QE) / N_L`, assuming `D_S = D_L`.
    ///
    /// May be zero or negative, meaning the cascade cannot beat always
    /// running the large model under this cost model.
    pub fn parity_fraction(&self) -> f64 {
        1.0 - (self.n_small + self.n_qe) / self.n_large
    }

    /// FLOPs for QE reranking over `k` hypotheses per example: the small
    /// model generates and the QE model scores each hypothesis.
    pub fn reranking_flops(&self, k_hypotheses: usize, batch: f64) -> Result<CostReport, CostError> {
        if k_hypotheses == 0 {
            return Err(CostError::ZeroHypotheses);
        }
        let b = positive("batch", batch)?;
        let k = k_hypotheses as f64;
        Ok(self.report(
            CostBreakdown {
                small_gen: 2.0 * b * self.d_small * k * self.n_small,
                qe_score: 2.0 * b * self.d_small * k * self.n_qe,
                large_gen: 0.0,
            },
            b,
        ))
    }

    /// The cascade budget with the same cost as QE reranking with `k`
    /// hypotheses: `eta = (k - 1) * (N_S + N_QE) / N_L`. May exceed 1.
    pub fn cascade_equivalent_eta(&self, k_hypotheses: usize) -> Result<f64, CostError> {
        if k_hypotheses == 0 {
            return Err(CostError::ZeroHypotheses);
        }
        Ok((k_hypotheses as f64 - 1.0) * (self.n_small + self.n_qe) / self.n_large)
    }

    /// Largest hypothesis count whose reranking cost does not exceed the
    /// large model's (`X <= 1`), or `None` when even one hypothesis does.
    /// The search is capped at `cap`.
    pub fn reranking_parity_k(&self, cap: usize) -> Option<usize> {
        let mut best = None;
        for k in 1..=cap {
            // batch size cancels out of X
            match self.reranking_flops(k, 1.0) {
                Ok(report) if report.relative_cost_x <= 1.0 => best = Some(k),
                _ => break,
            }
        }
        best
    }
}
