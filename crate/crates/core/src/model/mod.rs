//! The frozen-base scorer standing in for the tuned language model, the
//! matrix-factorization baseline, and their training loops.
//!
//! Scorer wiring for a sample `x` with liked history `P`, disliked history
//! `N` and target item `i`:
//!
//! ```text
//! u = [ mean(E[P]) − mean(E[N])  ‖  E[i] ]          (2·d_emb)
//! z = ReLU(u·W1' + b1)                               (h)
//! p = σ(z·W2' + b2)                                  clamped to [1e-12, 1 − 1e-12]
//! ```
//!
//! where `W1' = W1 + s·A1·B1` and `W2' = W2 + s·A2·B2` when adapters are
//! attached. Empty history pools contribute zero vectors.

mod base;
mod mf;
mod train;

use serde::{Deserialize, Serialize};

pub use base::{
    decode_base, encode_base, init_adapter_set, load_base, save_base, BaseParams, MergedWeights, ModelConfig,
};
pub use mf::{mf_train, MfConfig, MfParams};
pub use train::{
    backward_adapters, bce_loss, pretrain_base, train_adapter, AdapterGrads, LayerGrad, PretrainConfig,
    PretrainOutcome, TrainConfig, TrainOutcome,
};

/// Adapter target for the first dense layer (`2·d_emb × h`).
pub const LAYER_W1: &str = "W1";
/// Adapter target for the output layer (`h × 1`).
pub const LAYER_W2: &str = "W2";

/// One scored event: a target item with the user's earlier liked and
/// disliked items. Item and user ids are stream vocabulary rows (≥ 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub user: u32,
    pub history_pos: Vec<u32>,
    pub history_neg: Vec<u32>,
    pub target_item: u32,
    pub label: u8,
    pub timestamp: i64,
}

impl Sample {
    pub fn positive(&self) -> bool {
        self.label == 1
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
