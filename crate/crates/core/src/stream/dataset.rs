//! Line-oriented periodized dataset file.
//!
//! ```text
//! # lsat-dataset 1
//! # periods=<T> users=<U> items=<I> instances=<N> dropped=<D> history_len=<K>
//! # config=<free text, single line>
//! # user_ids=<raw id of row 1> <raw id of row 2> ...
//! # item_ids=...
//! period,user_row,item_row,label,timestamp,rating
//! 1,1,1,1,978300760,5
//! ```
//!
//! Records appear in stream order. Samples are rebuilt on load with the same
//! history rule, so a reload reproduces the stream exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{assemble, Interaction, PeriodizedStream};
use crate::error::{Error, Result};

pub const DATASET_COLUMNS: &str = "period,user_row,item_row,label,timestamp,rating";
const MAGIC_LINE: &str = "# lsat-dataset 1";

fn join_ids(ids: &[u64]) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

/// Serializes the stream; `config_echo` must not contain newlines.
pub fn encode_dataset(stream: &PeriodizedStream, config_echo: &str) -> Result<String> {
    if config_echo.contains('\n') {
        return Err(Error::Config("config echo must be a single line".into()));
    }
    let s = stream.summary();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC_LINE}");
    let _ = writeln!(
        out,
        "# periods={} users={} items={} instances={} dropped={} history_len={}",
        s.periods,
        s.users,
        s.items,
        s.instances,
        s.dropped,
        stream.history_len()
    );
    let _ = writeln!(out, "# config={config_echo}");
    let _ = writeln!(out, "# user_ids={}", join_ids(stream.user_ids()));
    let _ = writeln!(out, "# item_ids={}", join_ids(stream.item_ids()));
    let _ = writeln!(out, "{DATASET_COLUMNS}");
    for p in stream.periods() {
        for (x, smp) in p.raw.iter().zip(p.train.iter().chain(&p.val)) {
            let _ =
                writeln!(out, "{},{},{},{},{},{}", p.index, smp.user, smp.target_item, x.label, x.timestamp, x.rating);
        }
    }
    Ok(out)
}

pub fn write_dataset(stream: &PeriodizedStream, config_echo: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = encode_dataset(stream, config_echo)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parsed header plus the rebuilt stream.
#[derive(Debug, Clone)]
pub struct DatasetFile {
    pub config_echo: String,
    pub stream: PeriodizedStream,
}

fn parse_ids(v: &str, line: usize) -> Result<Vec<u64>> {
    v.split_whitespace()
        .map(|x| x.parse().map_err(|_| Error::Parse { line, msg: format!("invalid id {x:?}") }))
        .collect()
}

pub fn decode_dataset(text: &str) -> Result<DatasetFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, MAGIC_LINE)) => {}
        _ => return Err(Error::Parse { line: 1, msg: "missing dataset magic line".into() }),
    }
    let mut header: BTreeMap<String, String> = BTreeMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut config_echo = String::new();
    loop {
        let Some((no, line)) = lines.next() else {
            return Err(Error::Parse { line: 0, msg: "missing column header".into() });
        };
        if line == DATASET_COLUMNS {
            break;
        }
        let Some(body) = line.strip_prefix("# ") else {
            return Err(Error::Parse { line: no, msg: "expected header comment".into() });
        };
        if let Some(v) = body.strip_prefix("config=") {
            config_echo = v.to_string();
        } else if let Some(v) = body.strip_prefix("user_ids=") {
            user_ids = parse_ids(v, no)?;
        } else if let Some(v) = body.strip_prefix("item_ids=") {
            item_ids = parse_ids(v, no)?;
        } else {
            for kv in body.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse { line: no, msg: format!("malformed header field {kv:?}") })?;
                header.insert(k.to_string(), v.to_string());
            }
        }
    }
    let field = |k: &str| -> Result<usize> {
        header
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse { line: 2, msg: format!("missing or invalid header field {k}") })
    };
    let (periods, dropped, history_len) = (field("periods")?, field("dropped")?, field("history_len")?);
    let mut chunks: Vec<Vec<Interaction>> = vec![Vec::new(); periods];
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |msg: String| Error::Parse { line: no, msg };
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<usize> { f[i].parse().map_err(|_| bad(format!("invalid field {:?}", f[i]))) };
        let (t, u, i) = (num(0)?, num(1)?, num(2)?);
        let timestamp: i64 = f[4].parse().map_err(|_| bad(format!("invalid timestamp {:?}", f[4])))?;
        let rating: f64 = f[5].parse().map_err(|_| bad(format!("invalid rating {:?}", f[5])))?;
        if t == 0 || t > periods || u == 0 || u > user_ids.len() || i == 0 || i > item_ids.len() {
            return Err(Error::Validation { line: no, msg: "period or vocabulary row out of range".into() });
        }
        let x = Interaction::new(user_ids[u - 1], item_ids[i - 1], rating, timestamp);
        if f[3] != x.label.to_string() {
            return Err(Error::Validation { line: no, msg: "label disagrees with rating".into() });
        }
        chunks[t - 1].push(x);
    }
    let stream = assemble(chunks, dropped, history_len)?;
    if stream.user_ids() != user_ids.as_slice() || stream.item_ids() != item_ids.as_slice() {
        return Err(Error::Dataset("vocabulary tables disagree with record order".into()));
    }
    if stream.instances() != field("instances")? {
        return Err(Error::Dataset("instance count disagrees with header".into()));
    }
    Ok(DatasetFile { config_echo, stream })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&text)
}
