//! Numerical self-checks on small random models. Each check prints its
//! worst value against its tolerance.

use std::time::Instant;

use lsat_core::adapter::{
    decode_adapter_set, encode_adapter_set, fuse_task_arithmetic, AdapterSet, FusionCoefficient, FusionMode,
    LoraAdapter,
};
use lsat_core::eval::{auc, auc_oracle};
use lsat_core::math::{finite_diff_grad, relative_error, Matrix, SeededRng};
use lsat_core::model::{backward_adapters, bce_loss, decode_base, encode_base, BaseParams, ModelConfig, Sample};
use lsat_core::stream::{decode_dataset, encode_dataset, synth_drift, SynthConfig};
use lsat_core::Result;

use crate::CliError;

const ITEMS: u32 = 12;

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
}

fn random_matrix(rows: usize, cols: usize, std: f64, rng: &mut SeededRng) -> Result<Matrix<f64>> {
    Matrix::from_fn(rows, cols, |_, _| std * rng.gaussian())
}

fn model(rng: &mut SeededRng) -> Result<(BaseParams<f64>, AdapterSet<f64>)> {
    let cfg = ModelConfig { d_emb: 4, hidden: 6 };
    let mut base = BaseParams::init((1..=ITEMS).collect(), cfg, rng)?;
    base.freeze();
    let mut set = AdapterSet::new("selftest");
    for (layer, (d, k), r) in [("W1", (8, 6), 2), ("W2", (6, 1), 1)] {
        let a = random_matrix(d, r, 0.5, rng)?;
        let b = random_matrix(r, k, 0.5, rng)?;
        set.insert(LoraAdapter::from_factors(layer, a, b, 0.8)?);
    }
    Ok((base, set))
}

fn samples(n: usize, rng: &mut SeededRng) -> Vec<Sample> {
    (0..n)
        .map(|k| {
            let mut pick = |len: usize| (0..len).map(|_| 1 + rng.below(ITEMS as usize + 2) as u32).collect::<Vec<_>>();
            let (history_pos, history_neg) = (pick(k % 4), pick(k % 3));
            Sample {
                user: k as u32,
                history_pos,
                history_neg,
                target_item: 1 + rng.below(ITEMS as usize) as u32,
                label: u8::from(rng.bernoulli(0.5)),
                timestamp: k as i64,
            }
        })
        .collect()
}

fn gradient(inject_fault: bool, rng: &mut SeededRng) -> Result<Check> {
    let (base, set) = model(rng)?;
    let batch = samples(16, rng);
    let grads = backward_adapters(&batch, &base, &set)?;
    let sign = if inject_fault { -1.0 } else { 1.0 };
    let mut worst: f64 = 0.0;
    for ad in set.iter() {
        let layer = ad.target();
        let g = &grads.layers[layer];
        let loss_a = |a: &Matrix<f64>| {
            let mut s = set.clone();
            s.insert(LoraAdapter::from_factors(layer, a.clone(), ad.b().clone(), ad.scaling())?);
            bce_loss(&batch, &base, Some(&s))
        };
        let loss_b = |b: &Matrix<f64>| {
            let mut s = set.clone();
            s.insert(LoraAdapter::from_factors(layer, ad.a().clone(), b.clone(), ad.scaling())?);
            bce_loss(&batch, &base, Some(&s))
        };
        let fd_a = finite_diff_grad(loss_a, ad.a(), 1e-5)?;
        let fd_b = finite_diff_grad(loss_b, ad.b(), 1e-5)?;
        for (analytic, numeric) in [(&g.a, &fd_a), (&g.b, &fd_b)] {
            for (&x, &y) in analytic.as_slice().iter().zip(numeric.as_slice()) {
                worst = worst.max(relative_error(sign * x, y));
            }
        }
    }
    Ok(Check { name: "gradient (relative error)", value: worst, tol: 1e-4 })
}

fn merge(rng: &mut SeededRng) -> Result<Check> {
    let (base, set) = model(rng)?;
    let merged = base.merged_weights(Some(&set))?;
    let mut worst: f64 = 0.0;
    for x in samples(32, rng) {
        worst = worst.max((base.forward(&x, Some(&set))? - base.forward_merged(&x, &merged)?).abs());
    }
    Ok(Check { name: "merge (on-the-fly vs merged)", value: worst, tol: 1e-10 })
}

fn fusion(rng: &mut SeededRng) -> Result<Check> {
    let (_, long) = model(rng)?;
    let (_, short) = model(rng)?;
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 0.3, 0.5, 1.0] {
        let fused = fuse_task_arithmetic(&long, &short, FusionCoefficient::new(lambda)?, FusionMode::DeltaExact)?;
        for ad in fused.iter() {
            let layer = ad.target();
            let want = long
                .get(layer)
                .expect("same layers")
                .effective_delta()?
                .scale(lambda)?
                .add(&short.get(layer).expect("same layers").effective_delta()?.scale(1.0 - lambda)?)?;
            worst = worst.max(ad.effective_delta()?.max_abs_diff(&want)?);
        }
    }
    Ok(Check { name: "fusion (delta-exact)", value: worst, tol: 1e-12 })
}

fn auc_agreement(rng: &mut SeededRng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for n in 2..60 {
        let scores: Vec<f64> = (0..n).map(|_| rng.below(7) as f64 / 8.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.4))).collect();
        labels[0] = 1;
        labels[n - 1] = 0;
        worst = worst.max((auc(&scores, &labels)? - auc_oracle(&scores, &labels)?).abs());
    }
    Ok(Check { name: "AUC (sorted vs pairwise)", value: worst, tol: 1e-12 })
}

/// Number of artifacts that did not survive encode, decode, encode.
fn round_trips(rng: &mut SeededRng) -> Result<Check> {
    let (base, set) = model(rng)?;
    let mut broken = 0;
    let bytes = encode_adapter_set(&set)?;
    let back: AdapterSet<f64> = decode_adapter_set(&bytes)?;
    broken += usize::from(!back.bits_eq(&set) || encode_adapter_set(&back)? != bytes);
    let bytes = encode_base(&base)?;
    let back: BaseParams<f64> = decode_base(&bytes)?;
    broken += usize::from(back.content_hash() != base.content_hash() || encode_base(&back)? != bytes);
    let synth = SynthConfig { users: 30, items: 20, periods: 3, period_size: 40, ..SynthConfig::default() };
    let text = encode_dataset(&synth_drift(&synth)?, "selftest")?;
    let back = decode_dataset(&text)?;
    broken += usize::from(encode_dataset(&back.stream, &back.config_echo)? != text);
    Ok(Check { name: "serialization round trips (failures)", value: broken as f64, tol: 0.0 })
}

pub fn run(inject_fault: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let root = SeededRng::new(0x5e1f);
    let checks = [
        gradient(inject_fault, &mut root.derive("gradient")),
        merge(&mut root.derive("merge")),
        fusion(&mut root.derive("fusion")),
        auc_agreement(&mut root.derive("auc")),
        round_trips(&mut root.derive("round trip")),
    ];
    let mut failed = 0;
    for check in checks {
        match check {
            Ok(c) => {
                let ok = c.value <= c.tol;
                failed += usize::from(!ok);
                println!("[{}] {}: {:.3e} (tol {:.0e})", if ok { "PASS" } else { "FAIL" }, c.name, c.value, c.tol);
            }
            Err(e) => {
                failed += 1;
                println!("[FAIL] {e}");
            }
        }
    }
    println!("selftest: {} failed in {:.2}s", failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::SelfTest(failed))
    }
}
