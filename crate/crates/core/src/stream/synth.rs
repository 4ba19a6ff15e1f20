//! Synthetic drifting stream.
//!
//! Affinity of user `u` for item `i` in period `t`:
//!
//! ```text
//! a(u,i,t) = w·(β_i + p_u·q_i / √k) + δ·(cos φ_t · β_i + sin φ_t · c_i)
//! φ_t      = 2π·((t − 1) mod L) / L
//! ```
//!
//! with `p_u, q_i ~ N(0, I_k)` and `β_i, c_i ~ N(0, 1)`. Labels are
//! Bernoulli(σ(a)). With `δ > w` the item ranking in periods `t` and
//! `t + L/2` is reversed along `β`. There is no user-level main effect, so an
//! item never seen in training carries no signal a user-only model can exploit.
//!
//! Users are drawn uniformly. Items are drawn by a Zipf weight
//! `(1 + rank)^−s` over a random rank; late items get the mean weight.
//! A `cold_item_fraction` of items is introduced at a uniformly drawn later
//! period, and items introduced in the current or previous period get their
//! weight multiplied by `fresh_item_weight`.

use serde::{Deserialize, Serialize};

use super::{assemble, Interaction, PeriodizedStream, DEFAULT_HISTORY_LEN, MIN_PERIOD_SIZE};
use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::model::{sigmoid, Sample};

const BASE_TIMESTAMP: i64 = 978_300_000;
const TIMESTAMP_STEP: i64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub periods: usize,
    pub period_size: usize,
    pub latent_dim: usize,
    pub stationary_weight: f64,
    pub drift_amplitude: f64,
    pub drift_period: usize,
    pub cold_item_fraction: f64,
    pub fresh_item_weight: f64,
    pub popularity_exponent: f64,
    pub history_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 2000,
            items: 500,
            periods: 20,
            period_size: 1000,
            latent_dim: 4,
            stationary_weight: 0.5,
            drift_amplitude: 1.0,
            drift_period: 6,
            cold_item_fraction: 0.2,
            fresh_item_weight: 10.0,
            popularity_exponent: 1.0,
            history_len: DEFAULT_HISTORY_LEN,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, val) in [
            ("users", self.users),
            ("items", self.items),
            ("periods", self.periods),
            ("drift_period", self.drift_period),
        ] {
            if val == 0 {
                v.push(format!("synthetic.{name} must be positive"));
            }
        }
        if self.period_size < MIN_PERIOD_SIZE {
            v.push(format!("synthetic.period_size must be at least {MIN_PERIOD_SIZE}"));
        }
        if self.latent_dim < 2 {
            v.push("synthetic.latent_dim must be at least 2".into());
        }
        if !self.stationary_weight.is_finite() || !self.drift_amplitude.is_finite() {
            v.push("synthetic weights must be finite".into());
        }
        if !(0.0..1.0).contains(&self.cold_item_fraction) {
            v.push("synthetic.cold_item_fraction must lie in [0, 1)".into());
        }
        if !(self.fresh_item_weight >= 1.0 && self.fresh_item_weight.is_finite()) {
            v.push("synthetic.fresh_item_weight must be a finite value >= 1".into());
        }
        if !(self.popularity_exponent >= 0.0 && self.popularity_exponent.is_finite()) {
            v.push("synthetic.popularity_exponent must be a finite value >= 0".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Drift phase of period `t` (1-based).
    pub fn phase(&self, t: usize) -> f64 {
        2.0 * std::f64::consts::PI * ((t - 1) % self.drift_period) as f64 / self.drift_period as f64
    }
}

struct Latent {
    users: Vec<Vec<f64>>,
    items: Vec<Vec<f64>>,
    bias: Vec<f64>,
    trait2: Vec<f64>,
    intro: Vec<usize>,
    popularity: Vec<f64>,
}

fn draw_latent(cfg: &SynthConfig, rng: &mut SeededRng) -> Latent {
    let k = cfg.latent_dim;
    let vec_k = |rng: &mut SeededRng| (0..k).map(|_| rng.gaussian()).collect::<Vec<f64>>();
    let users = (0..cfg.users).map(|_| vec_k(rng)).collect();
    let items = (0..cfg.items).map(|_| vec_k(rng)).collect();
    let bias = (0..cfg.items).map(|_| rng.gaussian()).collect();
    let trait2 = (0..cfg.items).map(|_| rng.gaussian()).collect();
    let n_cold = (cfg.cold_item_fraction * cfg.items as f64).round() as usize;
    let mut order: Vec<usize> = (0..cfg.items).collect();
    rng.shuffle(&mut order);
    let mut intro = vec![1; cfg.items];
    if cfg.periods > 1 {
        for &i in order.iter().take(n_cold) {
            intro[i] = 2 + rng.below(cfg.periods - 1);
        }
    }
    let mut ranks: Vec<usize> = (0..cfg.items).collect();
    rng.shuffle(&mut ranks);
    let mut popularity: Vec<f64> = ranks.iter().map(|&r| (1.0 + r as f64).powf(-cfg.popularity_exponent)).collect();
    // Late items enter at the mean popularity.
    let mean = popularity.iter().sum::<f64>() / cfg.items as f64;
    for (p, &t) in popularity.iter_mut().zip(&intro) {
        if t > 1 {
            *p = mean;
        }
    }
    Latent { users, items, bias, trait2, intro, popularity }
}

/// Probability of a positive label for `(user, item)` in period `t`.
fn positive_prob(cfg: &SynthConfig, lat: &Latent, u: usize, i: usize, t: usize) -> f64 {
    let q = &lat.items[i];
    let dot: f64 = lat.users[u].iter().zip(q).map(|(a, b)| a * b).sum();
    let stationary = lat.bias[i] + dot / (cfg.latent_dim as f64).sqrt();
    let phi = cfg.phase(t);
    let rotating = phi.cos() * lat.bias[i] + phi.sin() * lat.trait2[i];
    sigmoid(cfg.stationary_weight * stationary + cfg.drift_amplitude * rotating)
}

/// Generates the stream; fully determined by the config (including seed).
pub fn synth_drift(cfg: &SynthConfig) -> Result<PeriodizedStream> {
    cfg.validate()?;
    let root = SeededRng::new(cfg.seed).derive("data");
    let mut latent_rng = root.derive("latent");
    let lat = draw_latent(cfg, &mut latent_rng);
    let mut chunks = Vec::with_capacity(cfg.periods);
    let mut seq: i64 = 0;
    for t in 1..=cfg.periods {
        let mut rng = root.derive_indexed("events", t as u64);
        let mut available = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for i in 0..cfg.items {
            if lat.intro[i] > t {
                continue;
            }
            let fresh = lat.intro[i] > 1 && lat.intro[i] + 1 >= t;
            total += lat.popularity[i] * if fresh { cfg.fresh_item_weight } else { 1.0 };
            available.push(i);
            cumulative.push(total);
        }
        let mut chunk = Vec::with_capacity(cfg.period_size);
        for _ in 0..cfg.period_size {
            let u = rng.below(cfg.users);
            let r = rng.uniform() * total;
            let i = available[cumulative.partition_point(|&c| c <= r).min(available.len() - 1)];
            let positive = rng.bernoulli(positive_prob(cfg, &lat, u, i, t));
            let rating = if positive { 5.0 } else { 2.0 };
            chunk.push(Interaction::new(u as u64 + 1, i as u64 + 1, rating, BASE_TIMESTAMP + seq * TIMESTAMP_STEP));
            seq += 1;
        }
        chunks.push(chunk);
    }
    assemble(chunks, 0, cfg.history_len)
}

/// `n` samples whose label is determined by the target item: rows
/// `1..=items/2` are positive, the rest negative. Histories are empty.
pub fn separable_samples(n: usize, items: u32, seed: u64) -> Vec<Sample> {
    let mut rng = SeededRng::new(seed).derive("separable");
    (0..n)
        .map(|k| {
            let item = 1 + rng.below(items as usize) as u32;
            Sample {
                user: 1 + (k as u32 % 50),
                history_pos: Vec::new(),
                history_neg: Vec::new(),
                target_item: item,
                label: u8::from(item <= items / 2),
                timestamp: k as i64,
            }
        })
        .collect()
}
