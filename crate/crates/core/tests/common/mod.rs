//! Independent oracles and random fixtures shared by the integration tests
//! and the acceptance harness. Nothing here calls the library's own forward,
//! merge or AUC code.
#![allow(dead_code)]

use lsat_core::adapter::{AdapterSet, LoraAdapter};
use lsat_core::math::{Matrix, SeededRng};
use lsat_core::model::{init_adapter_set, BaseParams, ModelConfig, Sample, LAYER_W1, LAYER_W2};

/// Row-major nested vectors; the oracle never touches `Matrix` arithmetic.
pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &Matrix<f64>) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn from_dense(d: &Dense) -> Matrix<f64> {
    Matrix::from_rows(d).unwrap()
}

pub fn dense_product(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i][p] * b[p][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// `s·A·B` by triple loop.
pub fn dense_delta(ad: &LoraAdapter<f64>) -> Dense {
    let ab = dense_product(&to_dense(ad.a()), &to_dense(ad.b()));
    ab.into_iter().map(|row| row.into_iter().map(|v| ad.scaling() * v).collect()).collect()
}

pub fn dense_add(a: &Dense, b: &Dense, wa: f64, wb: f64) -> Dense {
    a.iter().zip(b).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| wa * x + wb * y).collect()).collect()
}

pub fn max_abs_dense(a: &Dense, b: &Dense) -> f64 {
    a.iter().zip(b).flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max)
}

/// Base weights with a dense delta per layer folded in.
pub fn base_with_deltas(base: &BaseParams<f64>, d1: Option<&Dense>, d2: Option<&Dense>) -> BaseParams<f64> {
    let mut w1 = to_dense(base.w1());
    let mut w2 = to_dense(base.w2());
    if let Some(d) = d1 {
        w1 = dense_add(&w1, d, 1.0, 1.0);
    }
    if let Some(d) = d2 {
        w2 = dense_add(&w2, d, 1.0, 1.0);
    }
    BaseParams::from_parts(
        base.embeddings().clone(),
        from_dense(&w1),
        base.b1().clone(),
        from_dense(&w2),
        Matrix::from_rows(&[vec![base.b2()]]).unwrap(),
        base.item_ids().to_vec(),
    )
    .unwrap()
}

/// Merged base for an adapter set, by triple-loop products.
pub fn dense_merged_base(base: &BaseParams<f64>, set: &AdapterSet<f64>) -> BaseParams<f64> {
    let d1 = set.get(LAYER_W1).map(dense_delta);
    let d2 = set.get(LAYER_W2).map(dense_delta);
    base_with_deltas(base, d1.as_ref(), d2.as_ref())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn embedding_row(base: &BaseParams<f64>, item: u32) -> Vec<f64> {
    let row = match base.item_ids().binary_search(&item) {
        Ok(j) => j + 1,
        Err(_) => 0,
    };
    base.embeddings().row(row).to_vec()
}

fn pooled(base: &BaseParams<f64>, items: &[u32], d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    if items.is_empty() {
        return acc;
    }
    for &i in items {
        for (a, e) in acc.iter_mut().zip(embedding_row(base, i)) {
            *a += e;
        }
    }
    acc.iter().map(|v| v / items.len() as f64).collect()
}

/// Scalar forward pass from the raw parameter tables and dense weights.
pub fn oracle_forward(base: &BaseParams<f64>, w1: &Dense, w2: &Dense, s: &Sample) -> f64 {
    let d = base.embeddings().cols();
    let pos = pooled(base, &s.history_pos, d);
    let neg = pooled(base, &s.history_neg, d);
    let mut u: Vec<f64> = pos.iter().zip(&neg).map(|(p, n)| p - n).collect();
    u.extend(embedding_row(base, s.target_item));
    let h = w1[0].len();
    let b1 = base.b1().row(0);
    let mut out = base.b2();
    for j in 0..h {
        let mut a = b1[j];
        for (i, ui) in u.iter().enumerate() {
            a += ui * w1[i][j];
        }
        out += a.max(0.0) * w2[j][0];
    }
    sigmoid(out).clamp(1e-12, 1.0 - 1e-12)
}

/// Forward under an optional adapter set, computed entirely by the oracle.
pub fn oracle_predict(base: &BaseParams<f64>, set: Option<&AdapterSet<f64>>, s: &Sample) -> f64 {
    let mut w1 = to_dense(base.w1());
    let mut w2 = to_dense(base.w2());
    if let Some(set) = set {
        if let Some(ad) = set.get(LAYER_W1) {
            w1 = dense_add(&w1, &dense_delta(ad), 1.0, 1.0);
        }
        if let Some(ad) = set.get(LAYER_W2) {
            w2 = dense_add(&w2, &dense_delta(ad), 1.0, 1.0);
        }
    }
    oracle_forward(base, &w1, &w2, s)
}

pub fn oracle_bce(base: &BaseParams<f64>, set: Option<&AdapterSet<f64>>, batch: &[Sample]) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|s| {
            let p = oracle_predict(base, set, s);
            let y = f64::from(s.label);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / batch.len() as f64
}

/// Pair-counting AUC; `None` when a class is missing.
pub fn pair_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

pub fn labels_of(samples: &[Sample]) -> Vec<u8> {
    samples.iter().map(|s| s.label).collect()
}

/// Random frozen base over items `1..=items`.
pub fn random_base(items: u32, d_emb: usize, hidden: usize, rng: &mut SeededRng) -> BaseParams<f64> {
    let init = BaseParams::init((1..=items).collect(), ModelConfig { d_emb, hidden }, rng).unwrap();
    // Nonzero biases so every term of the forward is exercised.
    let e = init.embeddings().map(|_| 0.5 * rng.gaussian()).unwrap();
    let b1 = Matrix::from_fn(1, hidden, |_, _| 0.1 * rng.gaussian()).unwrap();
    let b2 = Matrix::from_rows(&[vec![0.1 * rng.gaussian()]]).unwrap();
    let mut base =
        BaseParams::from_parts(e, init.w1().clone(), b1, init.w2().clone(), b2, init.item_ids().to_vec()).unwrap();
    base.freeze();
    base
}

/// Fresh adapters with `B` redrawn so the delta is nonzero.
pub fn random_adapters(
    base: &BaseParams<f64>,
    rank: usize,
    scale: f64,
    tag: &str,
    rng: &mut SeededRng,
) -> AdapterSet<f64> {
    let init = init_adapter_set(base, rank, 1.0, tag, rng).unwrap();
    let mut out = AdapterSet::new(tag);
    for ad in init.iter() {
        let b = ad.b().map(|_| scale * rng.gaussian()).unwrap();
        out.insert(LoraAdapter::from_factors(ad.target(), ad.a().clone(), b, ad.scaling()).unwrap());
    }
    out
}

/// Random samples; item ids may exceed the vocabulary to exercise row 0.
pub fn random_samples(n: usize, items: u32, rng: &mut SeededRng) -> Vec<Sample> {
    let pick = |rng: &mut SeededRng| 1 + rng.below(items as usize + 2) as u32;
    (0..n)
        .map(|k| Sample {
            user: 1 + rng.below(5) as u32,
            history_pos: (0..rng.below(4)).map(|_| pick(rng)).collect(),
            history_neg: (0..rng.below(4)).map(|_| pick(rng)).collect(),
            target_item: pick(rng),
            label: u8::from(rng.bernoulli(0.5)),
            timestamp: k as i64,
        })
        .collect()
}
