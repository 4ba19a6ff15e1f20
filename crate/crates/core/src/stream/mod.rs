//! Raw rating logs to the periodized stream `D₁ … D_T`.
//!
//! Vocabulary rows are 1-based in order of first appearance; row 0 is
//! reserved for "unknown" in every model table.

mod dataset;
mod ingest;
mod synth;

use std::collections::{BTreeSet, HashMap};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Sample;

pub use dataset::{decode_dataset, encode_dataset, read_dataset, write_dataset, DatasetFile, DATASET_COLUMNS};
pub use ingest::{filter_time_range, filter_users, ingest, ingest_reader, subsample_users, RawFormat};
pub use synth::{separable_samples, synth_drift, SynthConfig};

/// Smallest period that keeps the 90/10 split non-degenerate.
pub const MIN_PERIOD_SIZE: usize = 10;
/// Default number of earlier events kept as history per sample.
pub const DEFAULT_HISTORY_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
    pub timestamp: i64,
    pub label: u8,
}

impl Interaction {
    /// Label is 1 iff `rating >= 4`.
    pub fn new(user: u64, item: u64, rating: f64, timestamp: i64) -> Self {
        Self { user, item, rating, timestamp, label: u8::from(rating >= 4.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodSpec {
    /// Consecutive chunks of exactly this many interactions.
    Size(usize),
    /// This many equal chunks; the size is `⌊n / count⌋`.
    Count(usize),
    /// Calendar windows of this many seconds starting at the first timestamp.
    Calendar(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Period {
    /// 1-based.
    pub index: usize,
    pub raw: Vec<Interaction>,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl Period {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Train followed by validation, i.e. the whole period in order.
    pub fn all_samples(&self) -> Vec<Sample> {
        self.train.iter().chain(&self.val).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodizedStream {
    periods: Vec<Period>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    item_first_period: Vec<usize>,
    dropped: usize,
    history_len: usize,
}

/// Table-1 style counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub periods: usize,
    pub users: usize,
    pub items: usize,
    pub instances: usize,
    pub dropped: usize,
    pub density: f64,
}

impl StreamSummary {
    /// Density as a percentage with 4 decimals, e.g. `3.1491%`.
    pub fn density_percent(&self) -> String {
        format!("{:.4}%", self.density * 100.0)
    }
}

/// `instances / (users · items)`.
pub fn density(instances: usize, users: usize, items: usize) -> f64 {
    if users == 0 || items == 0 {
        return 0.0;
    }
    instances as f64 / (users as f64 * items as f64)
}

impl PeriodizedStream {
    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }

    /// 1-based period access.
    pub fn period(&self, t: usize) -> Result<&Period> {
        if t == 0 || t > self.periods.len() {
            return Err(Error::Usage(format!("period {t} outside 1..={}", self.periods.len())));
        }
        Ok(&self.periods[t - 1])
    }

    /// Raw id of each user row; row `r` is at index `r - 1`.
    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    /// Item rows `1..=num_items`.
    pub fn item_rows(&self) -> Vec<u32> {
        (1..=self.item_ids.len() as u32).collect()
    }

    /// First period (1-based) in which each item row occurs; index `row - 1`.
    pub fn item_first_period(&self) -> &[usize] {
        &self.item_first_period
    }

    /// Interactions dropped as the final partial period.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn instances(&self) -> usize {
        self.periods.iter().map(Period::len).sum()
    }

    pub fn summary(&self) -> StreamSummary {
        let instances = self.instances();
        StreamSummary {
            periods: self.periods.len(),
            users: self.user_ids.len(),
            items: self.item_ids.len(),
            instances,
            dropped: self.dropped,
            density: density(instances, self.user_ids.len(), self.item_ids.len()),
        }
    }

    /// Train slices of the periods in `range`, concatenated in order.
    pub fn train_union(&self, range: RangeInclusive<usize>) -> Result<Vec<Sample>> {
        let mut out = Vec::new();
        for t in range {
            out.extend(self.period(t)?.train.iter().cloned());
        }
        Ok(out)
    }

    /// Every item row occurring (train or val) in the periods of `range`.
    pub fn items_in(&self, range: RangeInclusive<usize>) -> Result<BTreeSet<u32>> {
        let mut out = BTreeSet::new();
        for t in range {
            let p = self.period(t)?;
            out.extend(p.train.iter().chain(&p.val).map(|s| s.target_item));
        }
        Ok(out)
    }
}

/// Splits the sorted log into periods according to `spec`.
pub fn periodize(interactions: Vec<Interaction>, spec: PeriodSpec, history_len: usize) -> Result<PeriodizedStream> {
    let mut interactions = interactions;
    interactions.sort_by_key(|x| x.timestamp);
    let n = interactions.len();
    let chunks: Vec<Vec<Interaction>> = match spec {
        PeriodSpec::Size(size) => {
            if size < MIN_PERIOD_SIZE {
                return Err(Error::Config(format!("period size {size} below {MIN_PERIOD_SIZE}")));
            }
            chunk_by_size(interactions, size)?
        }
        PeriodSpec::Count(count) => {
            if count == 0 {
                return Err(Error::Config("period count must be positive".into()));
            }
            let size = n / count;
            if size < MIN_PERIOD_SIZE {
                return Err(Error::Dataset(format!(
                    "{n} interactions cannot fill {count} periods of at least {MIN_PERIOD_SIZE}"
                )));
            }
            chunk_by_size(interactions, size)?
        }
        PeriodSpec::Calendar(span) => chunk_by_calendar(interactions, span)?,
    };
    let kept: usize = chunks.iter().map(Vec::len).sum();
    let dropped = n - kept;
    if dropped > 0 {
        log::info!("dropped {dropped} interactions in the final partial period");
    }
    assemble(chunks, dropped, history_len)
}

fn chunk_by_size(interactions: Vec<Interaction>, size: usize) -> Result<Vec<Vec<Interaction>>> {
    let count = interactions.len() / size;
    if count == 0 {
        return Err(Error::Dataset(format!("{} interactions cannot fill one period of {size}", interactions.len())));
    }
    let mut iter = interactions.into_iter();
    Ok((0..count).map(|_| iter.by_ref().take(size).collect()).collect())
}

fn chunk_by_calendar(interactions: Vec<Interaction>, span: i64) -> Result<Vec<Vec<Interaction>>> {
    if span <= 0 {
        return Err(Error::Config(format!("calendar span {span} must be positive")));
    }
    let (Some(first), Some(last)) = (interactions.first(), interactions.last()) else {
        return Err(Error::Dataset("no interactions to periodize".into()));
    };
    let (t0, t_last) = (first.timestamp, last.timestamp);
    // A window is complete only if the data reaches its end.
    let complete = ((t_last - t0 + 1) / span) as usize;
    if complete == 0 {
        return Err(Error::Dataset(format!(
            "time span {} shorter than one calendar window of {span}",
            t_last - t0 + 1
        )));
    }
    let mut chunks = vec![Vec::new(); complete];
    for x in interactions {
        let k = ((x.timestamp - t0) / span) as usize;
        if k < complete {
            chunks[k].push(x);
        }
    }
    for (k, c) in chunks.iter().enumerate() {
        if c.len() < MIN_PERIOD_SIZE {
            return Err(Error::Dataset(format!(
                "calendar period {} holds {} interactions, fewer than {MIN_PERIOD_SIZE}",
                k + 1,
                c.len()
            )));
        }
    }
    Ok(chunks)
}

/// Builds vocabularies and samples from chronological period chunks.
pub(crate) fn assemble(chunks: Vec<Vec<Interaction>>, dropped: usize, history_len: usize) -> Result<PeriodizedStream> {
    let mut user_rows: HashMap<u64, u32> = HashMap::new();
    let mut item_rows: HashMap<u64, u32> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut item_first_period = Vec::new();
    // Per-user (timestamp, item row, label), chronological.
    let mut past: Vec<Vec<(i64, u32, u8)>> = vec![Vec::new()];
    let mut prev_ts = i64::MIN;
    let mut periods = Vec::with_capacity(chunks.len());

    for (k, raw) in chunks.into_iter().enumerate() {
        let t = k + 1;
        let mut samples = Vec::with_capacity(raw.len());
        for x in &raw {
            if x.timestamp < prev_ts {
                return Err(Error::Dataset(format!("timestamp {} precedes {prev_ts} in period {t}", x.timestamp)));
            }
            prev_ts = x.timestamp;
            let u = *user_rows.entry(x.user).or_insert_with(|| {
                user_ids.push(x.user);
                past.push(Vec::new());
                user_ids.len() as u32
            });
            let i = *item_rows.entry(x.item).or_insert_with(|| {
                item_ids.push(x.item);
                item_first_period.push(t);
                item_ids.len() as u32
            });
            let events = &mut past[u as usize];
            let earlier = events.partition_point(|e| e.0 < x.timestamp);
            let window = &events[earlier.saturating_sub(history_len)..earlier];
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for &(_, item, label) in window {
                if label == 1 {
                    pos.push(item);
                } else {
                    neg.push(item);
                }
            }
            samples.push(Sample {
                user: u,
                history_pos: pos,
                history_neg: neg,
                target_item: i,
                label: x.label,
                timestamp: x.timestamp,
            });
            events.push((x.timestamp, i, x.label));
        }
        let n_train = raw.len() * 9 / 10;
        let val = samples.split_off(n_train);
        periods.push(Period { index: t, raw, train: samples, val });
    }
    Ok(PeriodizedStream { periods, user_ids, item_ids, item_first_period, dropped, history_len })
}

/// `(warm, cold)` item rows of the probe periods relative to the train window.
pub fn cold_warm_sets(
    stream: &PeriodizedStream,
    train_window: RangeInclusive<usize>,
    probe: RangeInclusive<usize>,
) -> Result<(BTreeSet<u32>, BTreeSet<u32>)> {
    let (ws, we) = (*train_window.start(), *train_window.end());
    let (ps, pe) = (*probe.start(), *probe.end());
    let t = stream.num_periods();
    if ws == 0 || ws > we || we >= ps || ps > pe || pe > t {
        return Err(Error::Usage(format!("train window {ws}..={we} must precede probe {ps}..={pe} within 1..={t}")));
    }
    let seen = stream.items_in(train_window)?;
    let probed = stream.items_in(probe)?;
    let (warm, cold) = probed.into_iter().partition(|i| seen.contains(i));
    Ok((warm, cold))
}
