use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::adapter::{fuse_task_arithmetic, AdapterSet, FusionCoefficient, FusionMode};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::model::{BaseParams, Sample};

/// How the long-term and short-term adapters are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// `α·f(x; Θ_h) + (1 − α)·f(x; Θ_t)`: two forward passes.
    Ensemble,
    /// `f(x; λ·Θ_h + (1 − λ)·Θ_t)`: one forward pass.
    TaskArith(FusionMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub coefficient: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub coefficient: f64,
    pub val_auc: f64,
    /// Every grid point in grid order.
    pub sweep: Vec<GridPoint>,
}

/// Grid values lie in `[0, 1]`, are distinct, and include both endpoints.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(Error::Config("grid values must lie in [0, 1]".into()));
    }
    if !grid.contains(&0.0) || !grid.contains(&1.0) {
        return Err(Error::Config("grid must contain 0.0 and 1.0".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("grid values must be distinct".into()));
    }
    Ok(())
}

fn check_coefficient(c: f64) -> Result<f64> {
    Ok(FusionCoefficient::new(c)?.value())
}

/// The fused adapter set; at `λ = 1` and `λ = 0` the fusion reduces to the
/// long-term or short-term set itself, which is returned unchanged.
pub fn fused_adapters<'a>(
    long: &'a AdapterSet<f64>,
    short: &'a AdapterSet<f64>,
    lambda: f64,
    mode: FusionMode,
) -> Result<Cow<'a, AdapterSet<f64>>> {
    let c = FusionCoefficient::new(lambda)?;
    if lambda == 1.0 {
        Ok(Cow::Borrowed(long))
    } else if lambda == 0.0 {
        Ok(Cow::Borrowed(short))
    } else {
        Ok(Cow::Owned(fuse_task_arithmetic(long, short, c, mode)?))
    }
}

pub fn predict_lsat_ensemble(
    x: &Sample,
    base: &BaseParams<f64>,
    long: &AdapterSet<f64>,
    short: &AdapterSet<f64>,
    alpha: f64,
) -> Result<f64> {
    let alpha = check_coefficient(alpha)?;
    let fh = base.forward(x, Some(long))?;
    let ft = base.forward(x, Some(short))?;
    Ok(alpha * fh + (1.0 - alpha) * ft)
}

pub fn predict_lsat_fused(
    x: &Sample,
    base: &BaseParams<f64>,
    long: &AdapterSet<f64>,
    short: &AdapterSet<f64>,
    lambda: f64,
    mode: FusionMode,
) -> Result<f64> {
    let fused = fused_adapters(long, short, lambda, mode)?;
    base.forward(x, Some(&fused))
}

/// Scores of the combined model at one coefficient over `samples`.
pub fn combined_scores(
    samples: &[Sample],
    base: &BaseParams<f64>,
    long: &AdapterSet<f64>,
    short: &AdapterSet<f64>,
    coefficient: f64,
    combination: Combination,
) -> Result<Vec<f64>> {
    match combination {
        Combination::Ensemble => {
            let alpha = check_coefficient(coefficient)?;
            let fh = base.predict(samples, Some(long))?;
            let ft = base.predict(samples, Some(short))?;
            Ok(mix(&fh, &ft, alpha))
        }
        Combination::TaskArith(mode) => {
            let fused = fused_adapters(long, short, coefficient, mode)?;
            base.predict(samples, Some(&fused))
        }
    }
}

fn mix(fh: &[f64], ft: &[f64], alpha: f64) -> Vec<f64> {
    fh.iter().zip(ft).map(|(&h, &t)| alpha * h + (1.0 - alpha) * t).collect()
}

/// Grid search on validation AUC; ties go to the larger coefficient.
pub fn select_coefficient(
    val: &[Sample],
    base: &BaseParams<f64>,
    long: &AdapterSet<f64>,
    short: &AdapterSet<f64>,
    grid: &[f64],
    combination: Combination,
) -> Result<Selection> {
    validate_grid(grid)?;
    let labels: Vec<u8> = val.iter().map(|s| s.label).collect();
    let (fh, ft) = match combination {
        Combination::Ensemble => (base.predict(val, Some(long))?, base.predict(val, Some(short))?),
        Combination::TaskArith(_) => (Vec::new(), Vec::new()),
    };
    let mut sweep = Vec::with_capacity(grid.len());
    for &c in grid {
        let scores = match combination {
            Combination::Ensemble => mix(&fh, &ft, c),
            Combination::TaskArith(_) => combined_scores(val, base, long, short, c, combination)?,
        };
        sweep.push(GridPoint { coefficient: c, auc: auc(&scores, &labels)? });
    }
    let best = sweep
        .iter()
        .copied()
        .max_by(|a, b| a.auc.total_cmp(&b.auc).then(a.coefficient.total_cmp(&b.coefficient)))
        .expect("grid is non-empty");
    Ok(Selection { coefficient: best.coefficient, val_auc: best.auc, sweep })
}
