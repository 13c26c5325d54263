//! CSV reports. Column order is fixed and floats use shortest round-trip
//! formatting, so identical results give byte-identical files.

use std::io::Write;

use crate::data::{CategoricalSchema, Slate};
use crate::error::{Error, Result};
use crate::metrics::{MeanScore, SlateScore};
use crate::mmr::SweepResult;
use crate::training::EpochRecord;

fn gap_columns(schema: &CategoricalSchema) -> Vec<String> {
    schema.variables().iter().map(|v| format!("gap_{}", v.name)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_train_log(out: impl Write, log: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "split", "ndcg", "gap", "goodness", "loss", "best_goodness"])?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            r.split.to_string(),
            r.ndcg.to_string(),
            r.gap.to_string(),
            r.goodness.to_string(),
            opt(r.loss),
            opt(r.best_goodness),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings(out: impl Write, seconds: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "seconds"])?;
    for (i, s) in seconds.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{s:.3}")])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per query followed by nothing else; the mean goes to the
/// summary file.
pub fn write_query_scores(
    out: impl Write,
    schema: &CategoricalSchema,
    qids: &[&str],
    scores: &[SlateScore],
) -> Result<()> {
    if qids.len() != scores.len() {
        return Err(Error::dim("one query id per score row required"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["qid".to_string(), "ndcg".to_string()];
    header.extend(gap_columns(schema));
    header.extend(["gap", "reward", "goodness"].map(String::from));
    w.write_record(&header)?;
    for (qid, s) in qids.iter().zip(scores) {
        let mut row = vec![qid.to_string(), s.ndcg.to_string()];
        row.extend(s.per_variable_gaps.iter().map(|g| g.to_string()));
        row.extend([s.gap.to_string(), s.reward.to_string(), s.goodness.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per method, in the given order.
pub fn write_summary(out: impl Write, schema: &CategoricalSchema, rows: &[(&str, MeanScore)]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::arg("summary without results"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method".to_string(), "queries".to_string(), "ndcg".to_string()];
    header.extend(gap_columns(schema));
    header.extend(["gap", "reward", "goodness"].map(String::from));
    w.write_record(&header)?;
    for (method, m) in rows {
        let mut row = vec![method.to_string(), m.count.to_string(), m.ndcg.to_string()];
        row.extend(m.per_variable_gaps.iter().map(|g| g.to_string()));
        row.extend([m.gap.to_string(), m.reward.to_string(), m.goodness.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Curve data of a lambda sweep: x = gap, y = ndcg, annotated by lambda.
pub fn write_sweep(out: impl Write, schema: &CategoricalSchema, sweep: &SweepResult) -> Result<()> {
    if sweep.rows.is_empty() {
        return Err(Error::arg("empty sweep"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["lambda".to_string(), "ndcg".to_string()];
    header.extend(gap_columns(schema));
    header.extend(["gap", "goodness"].map(String::from));
    w.write_record(&header)?;
    for r in &sweep.rows {
        let mut row = vec![r.lambda.to_string(), r.mean.ndcg.to_string()];
        row.extend(r.mean.per_variable_gaps.iter().map(|g| g.to_string()));
        row.extend([r.mean.gap.to_string(), r.mean.goodness.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `qid,slate` with the slate as space-separated 0-based item positions.
pub fn write_slates(out: impl Write, qids: &[&str], slates: &[Slate]) -> Result<()> {
    if qids.len() != slates.len() {
        return Err(Error::dim("one query id per slate required"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["qid", "slate"])?;
    for (qid, s) in qids.iter().zip(slates) {
        let items: Vec<String> = s.indices.iter().map(|i| i.to_string()).collect();
        w.write_record([qid.to_string(), items.join(" ")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::binary_schema;
    use crate::mmr::SweepRow;

    fn mean(ndcg: f64) -> MeanScore {
        MeanScore {
            count: 2,
            ndcg,
            gap: 0.1,
            per_variable_gaps: vec![0.1],
            reward: 0.3,
            goodness: 0.7,
        }
    }

    #[test]
    fn summary_rows_keep_order() {
        let mut buf = Vec::new();
        write_summary(&mut buf, &binary_schema(), &[("score_order", mean(0.5)), ("csso", mean(0.6))]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,queries,ndcg,gap_v,gap,reward,goodness");
        assert!(lines[1].starts_with("score_order,"));
        assert!(lines[2].starts_with("csso,"));
        assert_eq!(lines.len(), 3);
        assert!(write_summary(Vec::new(), &binary_schema(), &[]).is_err());
    }

    #[test]
    fn sweep_rows_match_grid() {
        let sweep = SweepResult {
            rows: (0..3)
                .map(|i| SweepRow {
                    lambda: i as f64 / 2.0,
                    mean: mean(0.5),
                })
                .collect(),
            best: 0,
        };
        let mut buf = Vec::new();
        write_sweep(&mut buf, &binary_schema(), &sweep).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        let empty = SweepResult { rows: vec![], best: 0 };
        assert!(write_sweep(Vec::new(), &binary_schema(), &empty).is_err());
    }
}
