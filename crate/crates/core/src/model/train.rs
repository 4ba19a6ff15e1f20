use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::base::{clamp_prob, prob_floor};
use super::{sigmoid, BaseParams, MergedWeights, ModelConfig, Sample, LAYER_W1, LAYER_W2};
use crate::adapter::AdapterSet;
use crate::error::{Error, Result};
use crate::math::{AdamConfig, AdamState, Matrix, SeededRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 256, lr: 1e-3, weight_decay: 1e-5 }
    }
}

impl TrainConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads<T> {
    pub loss: T,
    pub layers: BTreeMap<String, LayerGrad<T>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub adapters: AdapterSet<T>,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-data loss before the first update.
    pub initial_loss: f64,
    /// Full-data loss after the last update.
    pub final_loss: f64,
    pub samples: usize,
}

/// Result of one dense forward/backward pass over a feature batch.
struct DensePass<T> {
    loss: T,
    g_w1: Matrix<T>,
    g_b1: Matrix<T>,
    g_w2: Matrix<T>,
    g_b2: T,
    /// `∂L/∂u`, only computed when requested.
    g_input: Option<Matrix<T>>,
}

fn bce<T: Scalar>(p: T, y: T) -> T {
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

fn dense_pass<T: Scalar>(
    u: &Matrix<T>,
    y: &[T],
    b1: &Matrix<T>,
    b2: T,
    merged: &MergedWeights<T>,
    want_input_grad: bool,
) -> Result<DensePass<T>> {
    let n = u.rows();
    let h = merged.w1.cols();
    let inv_n = T::one() / T::cast(n as f64);
    let mut a1 = u.matmul(&merged.w1)?.into_vec();
    for row in a1.chunks_mut(h) {
        for (a, &b) in row.iter_mut().zip(b1.as_slice()) {
            *a += b;
        }
    }
    let z = Matrix::new(n, h, a1.iter().map(|&a| a.max(T::zero())).collect())?;
    let a2 = z.matmul(&merged.w2)?;
    let lo = prob_floor::<T>();
    let mut loss = T::zero();
    let mut delta2 = Vec::with_capacity(n);
    for (i, &yi) in y.iter().enumerate() {
        let raw = sigmoid((a2.get(i, 0) + b2).as_f64());
        let p: T = clamp_prob(raw);
        loss += bce(p, yi);
        // The clamp is flat outside [lo, 1 − lo].
        let d = if raw < lo || raw > 1.0 - lo { T::zero() } else { (T::cast(raw) - yi) * inv_n };
        delta2.push(d);
    }
    loss *= inv_n;
    let delta2 = Matrix::new(n, 1, delta2)?;
    let g_w2 = z.transpose().matmul(&delta2)?;
    let g_b2 = delta2.as_slice().iter().copied().sum();
    let w2 = merged.w2.as_slice();
    let mut d1 = vec![T::zero(); n * h];
    for i in 0..n {
        let d = delta2.get(i, 0);
        for j in 0..h {
            if a1[i * h + j] > T::zero() {
                d1[i * h + j] = d * w2[j];
            }
        }
    }
    let d1 = Matrix::new(n, h, d1)?;
    let g_w1 = u.transpose().matmul(&d1)?;
    let g_b1 = d1.column_sums();
    let g_input = if want_input_grad { Some(d1.matmul(&merged.w1.transpose())?) } else { None };
    if !loss.is_finite() {
        return Err(Error::NonFinite { what: "batch loss".into(), index: 0 });
    }
    Ok(DensePass { loss, g_w1, g_b1, g_w2, g_b2, g_input })
}

fn labels<T: Scalar>(samples: &[Sample]) -> Vec<T> {
    samples.iter().map(|s| T::cast(f64::from(s.label))).collect()
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-12, 1 − 1e-12]`.
pub fn bce_loss<T: Scalar>(batch: &[Sample], base: &BaseParams<T>, adapters: Option<&AdapterSet<T>>) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Usage("loss of an empty batch".into()));
    }
    let preds = base.predict(batch, adapters)?;
    let total: T = preds.iter().zip(batch).map(|(&p, s)| bce(p, T::cast(f64::from(s.label)))).sum();
    Ok(total / T::cast(batch.len() as f64))
}

fn adapter_grads_from_pass<T: Scalar>(
    adapters: &AdapterSet<T>,
    pass: &DensePass<T>,
) -> Result<BTreeMap<String, LayerGrad<T>>> {
    let mut out = BTreeMap::new();
    for ad in adapters.iter() {
        let g = match ad.target() {
            LAYER_W1 => &pass.g_w1,
            LAYER_W2 => &pass.g_w2,
            other => return Err(Error::Compatibility(format!("unknown layer {other}"))),
        };
        let name_err = |e: Error| match e {
            Error::NonFinite { index, .. } => {
                Error::NonFinite { what: format!("gradient of layer {}", ad.target()), index }
            }
            e => e,
        };
        let s = ad.scaling();
        let a = g.matmul(&ad.b().transpose()).and_then(|m| m.scale(s)).map_err(name_err)?;
        let b = ad.a().transpose().matmul(g).and_then(|m| m.scale(s)).map_err(name_err)?;
        out.insert(ad.target().to_string(), LayerGrad { a, b });
    }
    Ok(out)
}

/// Analytic gradients of [`bce_loss`] with respect to every adapter factor.
/// The base receives no gradient.
pub fn backward_adapters<T: Scalar>(
    batch: &[Sample],
    base: &BaseParams<T>,
    adapters: &AdapterSet<T>,
) -> Result<AdapterGrads<T>> {
    if batch.is_empty() {
        return Err(Error::Usage("gradient of an empty batch".into()));
    }
    let merged = base.merged_weights(Some(adapters))?;
    let u = base.feature_matrix(batch)?;
    let pass = dense_pass(&u, &labels(batch), base.b1(), base.b2(), &merged, false)?;
    Ok(AdapterGrads { loss: pass.loss, layers: adapter_grads_from_pass(adapters, &pass)? })
}

fn gather_rows<T: Scalar>(m: &Matrix<T>, rows: &[usize]) -> Result<Matrix<T>> {
    let mut data = Vec::with_capacity(rows.len() * m.cols());
    for &r in rows {
        data.extend_from_slice(m.row(r));
    }
    Matrix::new(rows.len(), m.cols(), data)
}

/// Mini-batch Adam over the adapter factors only; the base must be frozen
/// and its content hash is re-verified afterwards.
pub fn train_adapter<T: Scalar>(
    data: &[Sample],
    base: &BaseParams<T>,
    init: &AdapterSet<T>,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainOutcome<T>> {
    if data.is_empty() {
        return Err(Error::Usage("adapter training on empty data".into()));
    }
    config.validate()?;
    let frozen = base.verify_frozen()?;
    base.check_adapters(init)?;

    let u_all = base.feature_matrix(data)?;
    let y_all: Vec<T> = labels(data);
    let full_loss = |set: &AdapterSet<T>| -> Result<f64> {
        let merged = base.merged_weights(Some(set))?;
        Ok(dense_pass(&u_all, &y_all, base.b1(), base.b2(), &merged, false)?.loss.as_f64())
    };
    let initial_loss = full_loss(init)?;
    let mut adapters = init.clone();
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            adapters,
            epoch_losses: Vec::new(),
            initial_loss,
            final_loss: initial_loss,
            samples: data.len(),
        });
    }

    let adam = AdamConfig::<T>::new(config.lr, config.weight_decay);
    let mut states: BTreeMap<String, (AdamState<T>, AdamState<T>)> = adapters
        .iter()
        .map(|ad| {
            (ad.target().to_string(), (AdamState::new(ad.a().shape(), adam), AdamState::new(ad.b().shape(), adam)))
        })
        .collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let ub = gather_rows(&u_all, chunk)?;
            let yb: Vec<T> = chunk.iter().map(|&i| y_all[i]).collect();
            let merged = base.merged_weights(Some(&adapters))?;
            let pass = dense_pass(&ub, &yb, base.b1(), base.b2(), &merged, false)?;
            epoch_loss += pass.loss.as_f64() * chunk.len() as f64;
            for (layer, g) in adapter_grads_from_pass(&adapters, &pass)? {
                let ad = adapters.get_mut(&layer).expect("layer present");
                let (sa, sb) = states.get_mut(&layer).expect("state present");
                let (a, b) = ad.factors_mut();
                sa.update(a, &g.a, &format!("{layer}.A"))?;
                sb.update(b, &g.b, &format!("{layer}.B"))?;
            }
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    let after = base.content_hash();
    if after != frozen {
        return Err(Error::BaseModified { before: frozen, after });
    }
    let final_loss = full_loss(&adapters)?;
    Ok(TrainOutcome { adapters, epoch_losses, initial_loss, final_loss, samples: data.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { model: ModelConfig::default(), train: TrainConfig { epochs: 20, ..TrainConfig::default() } }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<T> {
    /// Frozen; its hash is `base.frozen_hash()`.
    pub base: BaseParams<T>,
    pub epoch_losses: Vec<f64>,
}

/// Trains every base parameter (embeddings included) with the adapter
/// optimizer settings, then freezes. Randomness: sub-streams `init` and `shuffle`.
pub fn pretrain_base<T: Scalar>(
    data: &[Sample],
    config: &PretrainConfig,
    rng: &SeededRng,
) -> Result<PretrainOutcome<T>> {
    if data.is_empty() {
        return Err(Error::Usage("pretraining on empty data".into()));
    }
    config.train.validate()?;
    let mut vocab: Vec<u32> = data
        .iter()
        .flat_map(|s| s.history_pos.iter().chain(&s.history_neg).chain(std::iter::once(&s.target_item)))
        .copied()
        .collect();
    vocab.sort_unstable();
    vocab.dedup();
    let mut base = BaseParams::<T>::init(vocab, config.model, &mut rng.derive("init"))?;
    let mut shuffle = rng.derive("shuffle");
    let d = config.model.d_emb;
    let adam = AdamConfig::<T>::new(config.train.lr, config.train.weight_decay);
    let mut st_e = AdamState::new(base.embeddings().shape(), adam);
    let mut st_w1 = AdamState::new(base.w1().shape(), adam);
    let mut st_b1 = AdamState::new(base.b1().shape(), adam);
    let mut st_w2 = AdamState::new(base.w2().shape(), adam);
    let mut st_b2 = AdamState::new((1, 1), adam);
    let y_all: Vec<T> = labels(data);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.train.epochs);
    for _ in 0..config.train.epochs {
        shuffle.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.train.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let yb: Vec<T> = chunk.iter().map(|&i| y_all[i]).collect();
            let u = base.feature_matrix(&batch)?;
            let merged = base.merged_weights(None)?;
            let pass = dense_pass(&u, &yb, base.b1(), base.b2(), &merged, true)?;
            epoch_loss += pass.loss.as_f64() * chunk.len() as f64;

            let g_u = pass.g_input.as_ref().expect("input gradient requested");
            let mut g_e = Matrix::<T>::zeros(base.embeddings().rows(), d);
            {
                let ge = g_e.data_mut();
                for (i, s) in batch.iter().enumerate() {
                    let gu = g_u.row(i);
                    let (g_hist, g_target) = gu.split_at(d);
                    for (items, sign) in [(&s.history_pos, T::one()), (&s.history_neg, -T::one())] {
                        if items.is_empty() {
                            continue;
                        }
                        let w = sign / T::cast(items.len() as f64);
                        for &item in items.iter() {
                            let r = base.item_row(item);
                            for (g, &x) in ge[r * d..(r + 1) * d].iter_mut().zip(g_hist) {
                                *g += w * x;
                            }
                        }
                    }
                    let r = base.item_row(s.target_item);
                    for (g, &x) in ge[r * d..(r + 1) * d].iter_mut().zip(g_target) {
                        *g += x;
                    }
                }
            }
            g_e.ensure_finite("embedding gradient")?;
            let g_b2 = Matrix::new(1, 1, vec![pass.g_b2])?;
            let (e, w1, b1, w2, b2) = base.params_mut();
            st_e.update(e, &g_e, "E")?;
            st_w1.update(w1, &pass.g_w1, "W1")?;
            st_b1.update(b1, &pass.g_b1, "b1")?;
            st_w2.update(w2, &pass.g_w2, "W2")?;
            st_b2.update(b2, &g_b2, "b2")?;
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    base.freeze();
    Ok(PretrainOutcome { base, epoch_losses })
}
