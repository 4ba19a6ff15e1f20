//! Low-rank adapters as plain values: creation, application to frozen
//! weights, task-arithmetic fusion and checkpoint files.
//!
//! An adapter for a `d × k` weight `W` holds `A (d × r)` and `B (r × k)` and
//! contributes `ΔW = s · A·B`. A freshly initialized adapter has `B = 0`, so
//! it leaves the frozen weight untouched until trained.

mod checkpoint;
mod fusion;

use std::collections::BTreeMap;

pub use checkpoint::{adapter_set_digest, decode_adapter_set, encode_adapter_set, load_adapter_set, save_adapter_set};
pub use fusion::{fuse_task_arithmetic, FusionCoefficient, FusionMode};

use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};
use crate::scalar::Scalar;

/// Largest rank accepted by [`LoraAdapter::init`] for a `d × k` target.
///
/// This is `⌊min(d, k)/2⌋`, except that single-column (or single-row) targets
/// admit rank 1 so that vector-shaped layers can still carry an adapter.
pub fn max_rank(d: usize, k: usize) -> usize {
    (d.min(k) / 2).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<T> {
    target: String,
    a: Matrix<T>,
    b: Matrix<T>,
    scaling: T,
}

impl<T: Scalar> LoraAdapter<T> {
    /// `A ~ N(0, 1/d)`, `B = 0`.
    pub fn init(target: &str, shape: (usize, usize), rank: usize, rng: &mut SeededRng) -> Result<Self> {
        let (d, k) = shape;
        if d == 0 || k == 0 {
            return Err(Error::Config(format!("adapter target {target} has empty shape {shape:?}")));
        }
        let cap = max_rank(d, k);
        if rank == 0 || rank > cap {
            return Err(Error::Config(format!("rank {rank} out of range 1..={cap} for {target} ({d}x{k})")));
        }
        let std = (1.0 / d as f64).sqrt();
        let a = Matrix::from_fn(d, rank, |_, _| T::cast(std * rng.gaussian()))?;
        Ok(Self { target: target.to_string(), a, b: Matrix::zeros(rank, k), scaling: T::one() })
    }

    /// Wraps explicit factors; only shape consistency is checked, so fused
    /// adapters may exceed the initialization rank cap.
    pub fn from_factors(target: &str, a: Matrix<T>, b: Matrix<T>, scaling: T) -> Result<Self> {
        if a.cols() != b.rows() || a.cols() == 0 {
            return Err(Error::Dimension { op: "adapter factors", left: a.shape(), right: b.shape() });
        }
        if !scaling.is_finite() {
            return Err(Error::NonFinite { what: format!("scaling of {target}"), index: 0 });
        }
        Ok(Self { target: target.to_string(), a, b, scaling })
    }

    pub fn with_scaling(mut self, scaling: T) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }

    pub fn scaling(&self) -> T {
        self.scaling
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    /// Shape `(d, k)` of the weight this adapter modifies.
    pub fn shape(&self) -> (usize, usize) {
        (self.a.rows(), self.b.cols())
    }

    pub(crate) fn factors_mut(&mut self) -> (&mut Matrix<T>, &mut Matrix<T>) {
        (&mut self.a, &mut self.b)
    }

    /// `s · A·B`.
    pub fn effective_delta(&self) -> Result<Matrix<T>> {
        self.a.matmul(&self.b)?.scale(self.scaling)
    }

    /// `W + s · A·B`.
    pub fn effective_weight(&self, w: &Matrix<T>) -> Result<Matrix<T>> {
        if w.shape() != self.shape() {
            return Err(Error::Dimension { op: "effective_weight", left: w.shape(), right: self.shape() });
        }
        w.add(&self.effective_delta()?)
    }
}

/// Adapters keyed by target layer name, plus a free-form tag such as `short:t=7`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdapterSet<T> {
    entries: BTreeMap<String, LoraAdapter<T>>,
    tag: String,
}

impl<T: Scalar> AdapterSet<T> {
    pub fn new(tag: impl Into<String>) -> Self {
        Self { entries: BTreeMap::new(), tag: tag.into() }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn set_tag(&mut self, tag: impl Into<String>) {
        self.tag = tag.into();
    }

    /// Inserts under the adapter's own target name, replacing any previous entry.
    pub fn insert(&mut self, adapter: LoraAdapter<T>) -> Option<LoraAdapter<T>> {
        self.entries.insert(adapter.target.clone(), adapter)
    }

    pub fn get(&self, layer: &str) -> Option<&LoraAdapter<T>> {
        self.entries.get(layer)
    }

    pub(crate) fn get_mut(&mut self, layer: &str) -> Option<&mut LoraAdapter<T>> {
        self.entries.get_mut(layer)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn layers(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LoraAdapter<T>> {
        self.entries.values()
    }

    /// Bitwise equality including tag and scalings.
    pub fn bits_eq(&self, other: &AdapterSet<T>) -> bool {
        self.tag == other.tag
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.a.bits_eq(&b.a)
                    && a.b.bits_eq(&b.b)
                    && a.scaling.as_f64().to_bits() == b.scaling.as_f64().to_bits()
            })
    }
}
