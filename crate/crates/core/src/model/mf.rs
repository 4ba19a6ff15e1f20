//! Biased matrix factorization trained with MSE on binary labels.

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::math::{AdamConfig, AdamState, Matrix, SeededRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfConfig {
    pub factors: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub init_std: f64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self { factors: 64, epochs: 20, batch_size: 256, lr: 1e-3, weight_decay: 1e-5, init_std: 0.1 }
    }
}

/// Row 0 of each table is the shared slot for ids never seen in training.
#[derive(Debug, Clone, PartialEq)]
pub struct MfParams<T> {
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
    user_factors: Matrix<T>,
    item_factors: Matrix<T>,
    user_bias: Matrix<T>,
    item_bias: Matrix<T>,
    global_bias: Matrix<T>,
}

fn row_of(ids: &[u32], id: u32) -> usize {
    ids.binary_search(&id).map_or(0, |j| j + 1)
}

impl<T: Scalar> MfParams<T> {
    pub fn user_row(&self, user: u32) -> usize {
        row_of(&self.user_ids, user)
    }

    pub fn item_row(&self, item: u32) -> usize {
        row_of(&self.item_ids, item)
    }

    pub fn item_factors(&self) -> &Matrix<T> {
        &self.item_factors
    }

    fn raw_rows(&self, u: usize, i: usize) -> T {
        let dot: T = self.user_factors.row(u).iter().zip(self.item_factors.row(i)).map(|(&a, &b)| a * b).sum();
        self.global_bias.get(0, 0) + self.user_bias.get(u, 0) + self.item_bias.get(i, 0) + dot
    }

    /// Unclamped `μ + b_u + b_i + p_u·q_i`.
    pub fn predict_raw(&self, user: u32, item: u32) -> T {
        self.raw_rows(self.user_row(user), self.item_row(item))
    }

    /// Raw score clamped to `[0, 1]`, used for ranking.
    pub fn predict(&self, user: u32, item: u32) -> T {
        self.predict_raw(user, item).max(T::zero()).min(T::one())
    }

    pub fn predict_samples(&self, samples: &[Sample]) -> Vec<T> {
        samples.iter().map(|s| self.predict(s.user, s.target_item)).collect()
    }
}

/// Mini-batch Adam on mean squared error; sub-streams `init` and `shuffle`.
pub fn mf_train<T: Scalar>(data: &[Sample], config: &MfConfig, rng: &SeededRng) -> Result<MfParams<T>> {
    if data.is_empty() {
        return Err(Error::Usage("matrix factorization on empty data".into()));
    }
    if config.factors == 0 || config.batch_size == 0 {
        return Err(Error::Config(format!("invalid MF config {config:?}")));
    }
    let mut user_ids: Vec<u32> = data.iter().map(|s| s.user).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut item_ids: Vec<u32> = data.iter().map(|s| s.target_item).collect();
    item_ids.sort_unstable();
    item_ids.dedup();

    let f = config.factors;
    let mut init = rng.derive("init");
    let std = config.init_std;
    let mut params = MfParams {
        user_factors: Matrix::from_fn(user_ids.len() + 1, f, |_, _| T::cast(std * init.gaussian()))?,
        item_factors: Matrix::from_fn(item_ids.len() + 1, f, |_, _| T::cast(std * init.gaussian()))?,
        user_bias: Matrix::zeros(user_ids.len() + 1, 1),
        item_bias: Matrix::zeros(item_ids.len() + 1, 1),
        global_bias: Matrix::zeros(1, 1),
        user_ids,
        item_ids,
    };
    let rows: Vec<(usize, usize, T)> = data
        .iter()
        .map(|s| (params.user_row(s.user), params.item_row(s.target_item), T::cast(f64::from(s.label))))
        .collect();

    let adam = AdamConfig::<T>::new(config.lr, config.weight_decay);
    let mut st_p = AdamState::new(params.user_factors.shape(), adam);
    let mut st_q = AdamState::new(params.item_factors.shape(), adam);
    let mut st_bu = AdamState::new(params.user_bias.shape(), adam);
    let mut st_bi = AdamState::new(params.item_bias.shape(), adam);
    let mut st_mu = AdamState::new((1, 1), adam);

    let mut shuffle = rng.derive("shuffle");
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..config.epochs {
        shuffle.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let scale = T::cast(2.0 / chunk.len() as f64);
            let mut gp = Matrix::<T>::zeros(params.user_factors.rows(), f);
            let mut gq = Matrix::<T>::zeros(params.item_factors.rows(), f);
            let mut gbu = Matrix::<T>::zeros(params.user_bias.rows(), 1);
            let mut gbi = Matrix::<T>::zeros(params.item_bias.rows(), 1);
            let mut gmu = T::zero();
            {
                let (gp, gq) = (gp.data_mut(), gq.data_mut());
                let (gbu, gbi) = (gbu.data_mut(), gbi.data_mut());
                for &k in chunk {
                    let (u, i, y) = rows[k];
                    let err = (params.raw_rows(u, i) - y) * scale;
                    let pu = params.user_factors.row(u);
                    let qi = params.item_factors.row(i);
                    for c in 0..f {
                        gp[u * f + c] += err * qi[c];
                        gq[i * f + c] += err * pu[c];
                    }
                    gbu[u] += err;
                    gbi[i] += err;
                    gmu += err;
                }
            }
            st_p.update(&mut params.user_factors, &gp, "mf.P")?;
            st_q.update(&mut params.item_factors, &gq, "mf.Q")?;
            st_bu.update(&mut params.user_bias, &gbu, "mf.bu")?;
            st_bi.update(&mut params.item_bias, &gbi, "mf.bi")?;
            st_mu.update(&mut params.global_bias, &Matrix::new(1, 1, vec![gmu])?, "mf.mu")?;
        }
    }
    Ok(params)
}
