use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Interaction;
use crate::error::{Error, Result};
use crate::math::SeededRng;

/// Delimiter-separated rating log with field order `user, item, rating, timestamp`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawFormat {
    pub delimiter: String,
    pub has_header: bool,
}

impl RawFormat {
    pub fn movielens() -> Self {
        Self { delimiter: "::".into(), has_header: false }
    }

    pub fn csv() -> Self {
        Self { delimiter: ",".into(), has_header: false }
    }
}

impl Default for RawFormat {
    fn default() -> Self {
        Self::movielens()
    }
}

fn parse_line(line: &str, lineno: usize, delim: &str) -> Result<Interaction> {
    let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
    if fields.len() < 4 {
        return Err(Error::Parse { line: lineno, msg: format!("expected 4 fields, found {}", fields.len()) });
    }
    let parse_err = |what: &str, v: &str| Error::Parse { line: lineno, msg: format!("invalid {what} {v:?}") };
    let user = fields[0].parse::<u64>().map_err(|_| parse_err("user id", fields[0]))?;
    let item = fields[1].parse::<u64>().map_err(|_| parse_err("item id", fields[1]))?;
    let rating = fields[2].parse::<f64>().map_err(|_| parse_err("rating", fields[2]))?;
    let timestamp = fields[3]
        .parse::<i64>()
        .or_else(|_| fields[3].parse::<f64>().map(|x| x as i64))
        .map_err(|_| parse_err("timestamp", fields[3]))?;
    if !(1.0..=5.0).contains(&rating) {
        return Err(Error::Validation { line: lineno, msg: format!("rating {rating} outside [1, 5]") });
    }
    Ok(Interaction::new(user, item, rating, timestamp))
}

/// Parses a rating log and sorts it by timestamp (stable: ties keep input order).
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn ingest_reader<R: BufRead>(reader: R, format: &RawFormat) -> Result<Vec<Interaction>> {
    if format.delimiter.is_empty() {
        return Err(Error::Config("empty delimiter".into()));
    }
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() || (format.has_header && i == 0) {
            continue;
        }
        out.push(parse_line(&line, lineno, &format.delimiter)?);
    }
    out.sort_by_key(|x| x.timestamp);
    Ok(out)
}

pub fn ingest(path: impl AsRef<Path>, format: &RawFormat) -> Result<Vec<Interaction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), format)
}

/// Keeps every interaction of users with at least `min_count` events (all labels counted).
pub fn filter_users(interactions: Vec<Interaction>, min_count: usize) -> Vec<Interaction> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for x in &interactions {
        *counts.entry(x.user).or_default() += 1;
    }
    interactions.into_iter().filter(|x| counts[&x.user] >= min_count).collect()
}

/// Keeps `start <= timestamp < end` for the bounds given.
pub fn filter_time_range(interactions: Vec<Interaction>, start: Option<i64>, end: Option<i64>) -> Vec<Interaction> {
    interactions
        .into_iter()
        .filter(|x| start.is_none_or(|s| x.timestamp >= s) && end.is_none_or(|e| x.timestamp < e))
        .collect()
}

/// Keeps a uniformly drawn `round(fraction · #users)` subset of users.
pub fn subsample_users(interactions: Vec<Interaction>, fraction: f64, rng: &mut SeededRng) -> Result<Vec<Interaction>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("user fraction {fraction} outside (0, 1]")));
    }
    let mut users: Vec<u64> = interactions.iter().map(|x| x.user).collect::<BTreeSet<_>>().into_iter().collect();
    rng.shuffle(&mut users);
    let keep_n = (fraction * users.len() as f64).round() as usize;
    let keep: BTreeSet<u64> = users.into_iter().take(keep_n).collect();
    Ok(interactions.into_iter().filter(|x| keep.contains(&x.user)).collect())
}
