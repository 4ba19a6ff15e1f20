use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AdapterSet, LoraAdapter};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mixing weight in `[0, 1]`; `1` selects the long-term side.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FusionCoefficient<T>(T);

impl<T: Scalar> FusionCoefficient<T> {
    pub fn new(value: T) -> Result<Self> {
        if !(value >= T::zero() && value <= T::one()) {
            return Err(Error::Usage(format!("coefficient {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> T {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `ΔW' = λ·ΔW_h + (1−λ)·ΔW_t` exactly, via `A' = [A_h | A_t]`,
    /// `B' = [λ s_h B_h ; (1−λ) s_t B_t]`, `s' = 1`.
    #[default]
    DeltaExact,
    /// Interpolates the factors themselves; requires equal ranks.
    FactorInterp,
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::DeltaExact => "delta_exact",
            FusionMode::FactorInterp => "factor_interp",
        })
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_exact" => Ok(FusionMode::DeltaExact),
            "factor_interp" => Ok(FusionMode::FactorInterp),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

/// Task-arithmetic combination `λ·Θ_long + (1−λ)·Θ_short`, layer by layer.
pub fn fuse_task_arithmetic<T: Scalar>(
    long: &AdapterSet<T>,
    short: &AdapterSet<T>,
    lambda: FusionCoefficient<T>,
    mode: FusionMode,
) -> Result<AdapterSet<T>> {
    let long_layers: BTreeSet<&str> = long.layers().collect();
    let short_layers: BTreeSet<&str> = short.layers().collect();
    if long_layers != short_layers {
        return Err(Error::FusionLayers {
            only_long: long_layers.difference(&short_layers).map(|s| s.to_string()).collect(),
            only_short: short_layers.difference(&long_layers).map(|s| s.to_string()).collect(),
        });
    }
    let l = lambda.value();
    let one_minus = T::one() - l;
    let mut fused = AdapterSet::new(format!("fused:{mode}:lambda={l}"));
    for (h, t) in long.iter().zip(short.iter()) {
        if h.shape() != t.shape() {
            return Err(Error::Fusion(format!(
                "layer {} shapes differ: {:?} vs {:?}",
                h.target(),
                h.shape(),
                t.shape()
            )));
        }
        let adapter = match mode {
            FusionMode::DeltaExact => {
                let a = h.a().hstack(t.a())?;
                let b = h.b().scale(l * h.scaling())?.vstack(&t.b().scale(one_minus * t.scaling())?)?;
                LoraAdapter::from_factors(h.target(), a, b, T::one())?
            }
            FusionMode::FactorInterp => {
                if h.rank() != t.rank() {
                    return Err(Error::Rank(format!(
                        "factor interpolation on {} needs equal ranks, got {} and {}",
                        h.target(),
                        h.rank(),
                        t.rank()
                    )));
                }
                let a = h.a().scale(l)?.add(&t.a().scale(one_minus)?)?;
                let b = h.b().scale(l)?.add(&t.b().scale(one_minus)?)?;
                let s = l * h.scaling() + one_minus * t.scaling();
                LoraAdapter::from_factors(h.target(), a, b, s)?
            }
        };
        fused.insert(adapter);
    }
    Ok(fused)
}
