//! LETOR / SVMLight text format:
//! `<label> qid:<id> <idx>:<val> ... [# comment]`, 1-based sparse features.
//!
//! Files written by this crate store every feature densely with shortest
//! round-trip formatting, so parsing a written file reproduces the values
//! bit for bit. Padding slots are written as `0 qid:<id> # padding`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::data::{CandidateSet, Item, RawItem, RawQuery};
use crate::error::{read_text, Error, Result};

/// Comment that marks a padding slot.
pub const PADDING_MARKER: &str = "padding";

/// Upper bound on a feature index, to keep hostile input from allocating
/// huge dense vectors.
pub const MAX_FEATURE_INDEX: usize = 1 << 20;

fn parse_line(line: &str, lineno: usize) -> Result<Option<(String, RawItem)>> {
    let (body, comment) = match line.split_once('#') {
        Some((b, c)) => (b, Some(c.trim().to_string())),
        None => (line, None),
    };
    let mut tokens = body.split_whitespace();
    let Some(label_tok) = tokens.next() else {
        // blank or comment-only line
        return Ok(None);
    };
    let label: f64 = label_tok
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| Error::parse(lineno, format!("invalid label `{label_tok}`")))?;
    let qid_tok = tokens
        .next()
        .ok_or_else(|| Error::parse(lineno, "missing qid"))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .filter(|q| !q.is_empty())
        .ok_or_else(|| Error::parse(lineno, format!("expected qid:<id>, found `{qid_tok}`")))?;

    let mut features = Vec::new();
    let mut last_index = 0;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(lineno, format!("expected <index>:<value>, found `{tok}`")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid feature index `{idx}`")))?;
        if idx == 0 || idx > MAX_FEATURE_INDEX {
            return Err(Error::parse(lineno, format!("feature index {idx} out of range")));
        }
        if idx <= last_index {
            return Err(Error::parse(lineno, format!("feature index {idx} not increasing")));
        }
        last_index = idx;
        let val: f64 = val
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(lineno, format!("invalid feature value `{val}`")))?;
        features.resize(idx, 0.0);
        features[idx - 1] = val;
    }
    Ok(Some((
        qid.to_string(),
        RawItem {
            label,
            features,
            comment,
        },
    )))
}

/// Parses LETOR text. Items are grouped by qid in order of first
/// appearance; every item's feature vector is widened to the file's
/// largest index.
pub fn parse_letor_str(text: &str) -> Result<Vec<RawQuery>> {
    let mut queries: Vec<RawQuery> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut previous: Option<usize> = None;
    let mut width = 0;
    for (i, line) in text.lines().enumerate() {
        let Some((qid, item)) = parse_line(line, i + 1)? else {
            continue;
        };
        width = width.max(item.features.len());
        let slot = match by_id.get(&qid) {
            Some(&slot) => {
                if previous != Some(slot) {
                    log::warn!("line {}: qid {qid} appears in more than one block", i + 1);
                }
                slot
            }
            None => {
                by_id.insert(qid.clone(), queries.len());
                queries.push(RawQuery {
                    query_id: qid,
                    items: Vec::new(),
                });
                queries.len() - 1
            }
        };
        queries[slot].items.push(item);
        previous = Some(slot);
    }
    for item in queries.iter_mut().flat_map(|q| q.items.iter_mut()) {
        item.features.resize(width, 0.0);
    }
    Ok(queries)
}

pub fn parse_letor(path: &Path) -> Result<Vec<RawQuery>> {
    parse_letor_str(&read_text(path)?).map_err(|e| e.in_file(path))
}

fn write_item(out: &mut impl Write, qid: &str, item: &Item) -> std::io::Result<()> {
    if item.is_padding {
        return writeln!(out, "0 qid:{qid} # {PADDING_MARKER}");
    }
    write!(out, "{} qid:{qid}", item.label)?;
    for (i, v) in item.features.iter().enumerate() {
        write!(out, " {}:{v}", i + 1)?;
    }
    writeln!(out)
}

/// Serializes candidate sets; criteria go to a separate sidecar.
pub fn write_letor(out: &mut impl Write, sets: &[CandidateSet]) -> Result<()> {
    for set in sets {
        if set.query_id.contains(char::is_whitespace) || set.query_id.contains('#') {
            return Err(Error::arg(format!("query id `{}` cannot be written", set.query_id)));
        }
        for item in &set.items {
            write_item(out, &set.query_id, item)?;
        }
    }
    Ok(())
}

/// Serializes raw queries densely, keeping item comments.
pub fn write_raw_letor(out: &mut impl Write, queries: &[RawQuery]) -> Result<()> {
    for q in queries {
        if q.query_id.contains(char::is_whitespace) || q.query_id.contains('#') {
            return Err(Error::arg(format!("query id `{}` cannot be written", q.query_id)));
        }
        for item in &q.items {
            write!(out, "{} qid:{}", item.label, q.query_id)?;
            for (i, v) in item.features.iter().enumerate() {
                write!(out, " {}:{v}", i + 1)?;
            }
            match &item.comment {
                Some(c) => writeln!(out, " # {c}")?,
                None => writeln!(out)?,
            }
        }
    }
    Ok(())
}

/// Turns parsed queries of an augmented file back into items: padding
/// marker lines become padding, the base score is read from the given
/// 0-based column, and every real item must have exactly `feature_dim`
/// features.
pub fn to_items(
    query: &RawQuery,
    feature_dim: usize,
    base_score_column: usize,
) -> Result<Vec<Item>> {
    if base_score_column >= feature_dim {
        return Err(Error::arg(format!(
            "base score column {} beyond feature width {feature_dim}",
            base_score_column + 1
        )));
    }
    query
        .items
        .iter()
        .map(|raw| {
            if raw.comment.as_deref() == Some(PADDING_MARKER) {
                return Ok(Item::padding(feature_dim));
            }
            let mut features = raw.features.clone();
            if features.len() > feature_dim {
                if features[feature_dim..].iter().any(|&v| v != 0.0) {
                    return Err(Error::dim(format!(
                        "query {}: item has features beyond column {feature_dim}",
                        query.query_id
                    )));
                }
                features.truncate(feature_dim);
            }
            features.resize(feature_dim, 0.0);
            let score = features[base_score_column];
            Ok(Item::new(features, raw.label, score))
        })
        .collect()
}
