use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sigmoid, Sample, LAYER_W1, LAYER_W2};
use crate::adapter::{max_rank, AdapterSet, LoraAdapter};
use crate::codec::{len_u32, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};
use crate::scalar::Scalar;

const BASE_SECTION: &[u8; 4] = b"BASE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d_emb: 64, hidden: 64 }
    }
}

/// Frozen backbone: item embeddings (row 0 = unknown/padding) and two dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams<T> {
    embeddings: Matrix<T>,
    w1: Matrix<T>,
    b1: Matrix<T>,
    w2: Matrix<T>,
    b2: Matrix<T>,
    /// Sorted; item `item_ids[j]` lives in embedding row `j + 1`.
    item_ids: Vec<u32>,
    frozen_hash: Option<String>,
}

/// Effective dense weights with adapters folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedWeights<T> {
    pub w1: Matrix<T>,
    pub w2: Matrix<T>,
}

pub(crate) fn prob_floor<T: Scalar>() -> f64 {
    1e-12f64.max(T::epsilon().as_f64())
}

pub(crate) fn clamp_prob<T: Scalar>(p: f64) -> T {
    let lo = prob_floor::<T>();
    T::cast(p.clamp(lo, 1.0 - lo))
}

impl<T: Scalar> BaseParams<T> {
    /// Random initialization: `E ~ N(0, 0.1²)`, `W1 ~ N(0, 2/(2·d_emb))`,
    /// `W2 ~ N(0, 1/h)`, zero biases.
    pub fn init(mut item_ids: Vec<u32>, config: ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        if config.d_emb == 0 || config.hidden == 0 {
            return Err(Error::Config(format!("empty model dimensions {config:?}")));
        }
        item_ids.sort_unstable();
        item_ids.dedup();
        let d = config.d_emb;
        let h = config.hidden;
        let embeddings = Matrix::from_fn(item_ids.len() + 1, d, |_, _| T::cast(0.1 * rng.gaussian()))?;
        let std1 = (2.0 / (2 * d) as f64).sqrt();
        let w1 = Matrix::from_fn(2 * d, h, |_, _| T::cast(std1 * rng.gaussian()))?;
        let std2 = (1.0 / h as f64).sqrt();
        let w2 = Matrix::from_fn(h, 1, |_, _| T::cast(std2 * rng.gaussian()))?;
        Ok(Self { embeddings, w1, b1: Matrix::zeros(1, h), w2, b2: Matrix::zeros(1, 1), item_ids, frozen_hash: None })
    }

    pub fn from_parts(
        embeddings: Matrix<T>,
        w1: Matrix<T>,
        b1: Matrix<T>,
        w2: Matrix<T>,
        b2: Matrix<T>,
        mut item_ids: Vec<u32>,
    ) -> Result<Self> {
        item_ids.sort_unstable();
        item_ids.dedup();
        let d = embeddings.cols();
        let h = w1.cols();
        let expect = [
            ("embeddings", embeddings.shape(), (item_ids.len() + 1, d)),
            ("W1", w1.shape(), (2 * d, h)),
            ("b1", b1.shape(), (1, h)),
            ("W2", w2.shape(), (h, 1)),
            ("b2", b2.shape(), (1, 1)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Config(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        if d == 0 || h == 0 {
            return Err(Error::Config("empty model dimensions".into()));
        }
        Ok(Self { embeddings, w1, b1, w2, b2, item_ids, frozen_hash: None })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig { d_emb: self.embeddings.cols(), hidden: self.w1.cols() }
    }

    pub fn embeddings(&self) -> &Matrix<T> {
        &self.embeddings
    }

    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    pub fn w1(&self) -> &Matrix<T> {
        &self.w1
    }

    pub fn b1(&self) -> &Matrix<T> {
        &self.b1
    }

    pub fn w2(&self) -> &Matrix<T> {
        &self.w2
    }

    pub fn b2(&self) -> T {
        self.b2.get(0, 0)
    }

    pub fn layer_weight(&self, layer: &str) -> Option<&Matrix<T>> {
        match layer {
            LAYER_W1 => Some(&self.w1),
            LAYER_W2 => Some(&self.w2),
            _ => None,
        }
    }

    /// Embedding row for an item id; unknown ids map to row 0.
    pub fn item_row(&self, item: u32) -> usize {
        self.item_ids.binary_search(&item).map_or(0, |j| j + 1)
    }

    /// SHA-256 over the canonical checkpoint body (dimensions, vocabulary, every parameter).
    pub fn content_hash(&self) -> String {
        let mut w = ByteWriter::new();
        self.write_body(&mut w).expect("base dimensions fit u32");
        hex::encode(Sha256::digest(w.finish()))
    }

    pub fn freeze(&mut self) -> String {
        let h = self.content_hash();
        self.frozen_hash = Some(h.clone());
        h
    }

    pub fn frozen_hash(&self) -> Option<&str> {
        self.frozen_hash.as_deref()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen_hash.is_some()
    }

    /// Recomputes the content hash and compares it with the one recorded at freeze time.
    pub fn verify_frozen(&self) -> Result<String> {
        let before = self.frozen_hash.clone().ok_or_else(|| Error::Usage("base parameters are not frozen".into()))?;
        let after = self.content_hash();
        if before != after {
            return Err(Error::BaseModified { before, after });
        }
        Ok(after)
    }

    /// E, W1, b1, W2, b2.
    #[allow(clippy::type_complexity)]
    pub(crate) fn params_mut(
        &mut self,
    ) -> (&mut Matrix<T>, &mut Matrix<T>, &mut Matrix<T>, &mut Matrix<T>, &mut Matrix<T>) {
        self.frozen_hash = None;
        (&mut self.embeddings, &mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2)
    }

    /// Pooled input vector `u` for one sample, written into `out` (length `2·d_emb`).
    pub(crate) fn features_into(&self, sample: &Sample, out: &mut [T]) {
        let d = self.embeddings.cols();
        out.iter_mut().for_each(|x| *x = T::zero());
        let (hist, target) = out.split_at_mut(d);
        for (items, sign) in [(&sample.history_pos, T::one()), (&sample.history_neg, -T::one())] {
            if items.is_empty() {
                continue;
            }
            let w = sign / T::cast(items.len() as f64);
            for &item in items {
                for (o, &e) in hist.iter_mut().zip(self.embeddings.row(self.item_row(item))) {
                    *o += w * e;
                }
            }
        }
        target.copy_from_slice(self.embeddings.row(self.item_row(sample.target_item)));
    }

    pub fn features(&self, sample: &Sample) -> Vec<T> {
        let mut u = vec![T::zero(); 2 * self.embeddings.cols()];
        self.features_into(sample, &mut u);
        u
    }

    /// Feature rows for a batch (`n × 2·d_emb`).
    pub fn feature_matrix(&self, samples: &[Sample]) -> Result<Matrix<T>> {
        let w = 2 * self.embeddings.cols();
        let mut data = vec![T::zero(); samples.len() * w];
        for (s, row) in samples.iter().zip(data.chunks_mut(w)) {
            self.features_into(s, row);
        }
        Matrix::new(samples.len(), w, data)
    }

    /// Rejects adapters naming unknown layers or with mismatched shapes.
    pub fn check_adapters(&self, adapters: &AdapterSet<T>) -> Result<()> {
        for ad in adapters.iter() {
            let w = self
                .layer_weight(ad.target())
                .ok_or_else(|| Error::Compatibility(format!("adapter targets unknown layer {:?}", ad.target())))?;
            if w.shape() != ad.shape() {
                return Err(Error::Compatibility(format!(
                    "adapter {} has shape {:?}, layer is {:?}",
                    ad.target(),
                    ad.shape(),
                    w.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn merged_weights(&self, adapters: Option<&AdapterSet<T>>) -> Result<MergedWeights<T>> {
        let mut w1 = self.w1.clone();
        let mut w2 = self.w2.clone();
        if let Some(set) = adapters {
            self.check_adapters(set)?;
            if let Some(ad) = set.get(LAYER_W1) {
                w1 = ad.effective_weight(&w1)?;
            }
            if let Some(ad) = set.get(LAYER_W2) {
                w2 = ad.effective_weight(&w2)?;
            }
        }
        Ok(MergedWeights { w1, w2 })
    }

    fn low_rank_layer(x: &Matrix<T>, w: &Matrix<T>, ad: Option<&LoraAdapter<T>>) -> Result<Matrix<T>> {
        let base = x.matmul(w)?;
        match ad {
            None => Ok(base),
            Some(ad) => base.add(&x.matmul(ad.a())?.matmul(ad.b())?.scale(ad.scaling())?),
        }
    }

    /// Score with adapters applied on the fly (`x·W + s·(x·A)·B`), never forming `W'`.
    pub fn forward(&self, sample: &Sample, adapters: Option<&AdapterSet<T>>) -> Result<T> {
        if let Some(set) = adapters {
            self.check_adapters(set)?;
        }
        let u = Matrix::new(1, 2 * self.embeddings.cols(), self.features(sample))?;
        let a1 = Self::low_rank_layer(&u, &self.w1, adapters.and_then(|s| s.get(LAYER_W1)))?.add(&self.b1)?;
        let z = a1.map(|x| x.max(T::zero()))?;
        let a2 = Self::low_rank_layer(&z, &self.w2, adapters.and_then(|s| s.get(LAYER_W2)))?;
        let logit = a2.get(0, 0) + self.b2();
        Ok(clamp_prob::<T>(sigmoid(logit.as_f64())))
    }

    /// Score with precomputed effective weights.
    pub fn forward_merged(&self, sample: &Sample, merged: &MergedWeights<T>) -> Result<T> {
        let u = self.features(sample);
        Ok(self.score_features(&u, merged))
    }

    pub(crate) fn score_features(&self, u: &[T], merged: &MergedWeights<T>) -> T {
        let mut a: Vec<T> = self.b1.as_slice().to_vec();
        for (p, &x) in u.iter().enumerate() {
            for (acc, &w) in a.iter_mut().zip(merged.w1.row(p)) {
                *acc += x * w;
            }
        }
        let mut logit = self.b2();
        for (j, &aj) in a.iter().enumerate() {
            if aj > T::zero() {
                logit += aj * merged.w2.get(j, 0);
            }
        }
        clamp_prob::<T>(sigmoid(logit.as_f64()))
    }

    /// Batch scores through the merged weights.
    pub fn predict(&self, samples: &[Sample], adapters: Option<&AdapterSet<T>>) -> Result<Vec<T>> {
        let merged = self.merged_weights(adapters)?;
        self.predict_merged(samples, &merged)
    }

    pub fn predict_merged(&self, samples: &[Sample], merged: &MergedWeights<T>) -> Result<Vec<T>> {
        let mut u = vec![T::zero(); 2 * self.embeddings.cols()];
        samples
            .iter()
            .map(|s| {
                self.features_into(s, &mut u);
                let p = self.score_features(&u, merged);
                if p.is_finite() {
                    Ok(p)
                } else {
                    Err(Error::NonFinite { what: "prediction".into(), index: 0 })
                }
            })
            .collect()
    }

    fn write_body(&self, w: &mut ByteWriter) -> Result<()> {
        let ModelConfig { d_emb, hidden } = self.config();
        w.u32(len_u32(d_emb, "d_emb")?);
        w.u32(len_u32(hidden, "hidden")?);
        w.u32(len_u32(self.item_ids.len(), "vocabulary")?);
        for &id in &self.item_ids {
            w.u32(id);
        }
        for m in [&self.embeddings, &self.w1, &self.b1, &self.w2, &self.b2] {
            w.matrix(m);
        }
        Ok(())
    }
}

/// Fresh adapters on `W1` (rank `r`) and `W2` (rank `min(r, max_rank)`).
pub fn init_adapter_set<T: Scalar>(
    base: &BaseParams<T>,
    rank: usize,
    scaling: T,
    tag: &str,
    rng: &mut SeededRng,
) -> Result<AdapterSet<T>> {
    let mut set = AdapterSet::new(tag);
    for layer in [LAYER_W1, LAYER_W2] {
        let shape = base.layer_weight(layer).expect("known layer").shape();
        let r = if layer == LAYER_W2 { rank.min(max_rank(shape.0, shape.1)) } else { rank };
        set.insert(LoraAdapter::init(layer, shape, r, rng)?.with_scaling(scaling));
    }
    Ok(set)
}

/// Base checkpoint layout:
///
/// ```text
/// "LSAT"  u16 version  "BASE"
/// u32 d_emb  u32 hidden  u32 vocab_len  vocab_len × u32 item id (row j+1)
/// E, W1, b1, W2, b2 as f64 row-major
/// ```
pub fn encode_base<T: Scalar>(base: &BaseParams<T>) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.header();
    w.bytes(BASE_SECTION);
    base.write_body(&mut w)?;
    Ok(w.finish())
}

/// Decodes and freezes.
pub fn decode_base<T: Scalar>(bytes: &[u8]) -> Result<BaseParams<T>> {
    let mut r = ByteReader::new(bytes);
    r.header()?;
    let tag = r.take(4)?;
    if tag != BASE_SECTION {
        return Err(Error::Format { offset: r.offset() - 4, msg: "not a base checkpoint section".into() });
    }
    let d = r.u32()? as usize;
    let h = r.u32()? as usize;
    let n = r.u32()? as usize;
    if n.saturating_mul(4) > r.remaining() {
        return Err(r.err("truncated vocabulary"));
    }
    let ids_at = r.offset();
    let ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format { offset: ids_at, msg: "vocabulary not strictly increasing".into() });
    }
    let e = r.matrix::<T>(n + 1, d)?;
    let w1 = r.matrix::<T>(2 * d, h)?;
    let b1 = r.matrix::<T>(1, h)?;
    let w2 = r.matrix::<T>(h, 1)?;
    let b2 = r.matrix::<T>(1, 1)?;
    r.expect_end()?;
    let mut base =
        BaseParams::from_parts(e, w1, b1, w2, b2, ids).map_err(|e| Error::Format { offset: 0, msg: e.to_string() })?;
    base.freeze();
    Ok(base)
}

pub fn save_base<T: Scalar>(base: &BaseParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_base(base)?).map_err(|e| Error::io(path, e))
}

pub fn load_base<T: Scalar>(path: impl AsRef<Path>) -> Result<BaseParams<T>> {
    let path = path.as_ref();
    decode_base(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
