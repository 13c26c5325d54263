//! Criteria sidecar: one `<qid> <variable> <v1,v2,...>` record per line and
//! per (query, variable); `#` starts a comment.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use crate::data::{CandidateSet, CategoricalSchema, DistributionalCriteria};
use crate::error::{read_text, Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    /// qid -> variable name -> target vector.
    records: HashMap<String, BTreeMap<String, Vec<f64>>>,
}

impl Sidecar {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, qid: &str, variable: &str, target: Vec<f64>) -> Result<()> {
        let vars = self.records.entry(qid.to_string()).or_default();
        if vars.insert(variable.to_string(), target).is_some() {
            return Err(Error::arg(format!("duplicate criteria for query {qid}, variable {variable}")));
        }
        Ok(())
    }

    /// Criteria of `qid` in schema order. A missing query or variable is an
    /// error, never a default.
    pub fn criteria_for(&self, qid: &str, schema: &CategoricalSchema) -> Result<DistributionalCriteria> {
        let vars = self
            .records
            .get(qid)
            .ok_or_else(|| Error::arg(format!("no criteria for query {qid}")))?;
        if vars.len() != schema.num_variables() {
            return Err(Error::arg(format!(
                "query {qid} has criteria for {} variables, schema declares {}",
                vars.len(),
                schema.num_variables()
            )));
        }
        let targets = schema
            .variables()
            .iter()
            .map(|v| {
                vars.get(&v.name)
                    .cloned()
                    .ok_or_else(|| Error::arg(format!("query {qid} lacks criteria for variable {}", v.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let criteria = DistributionalCriteria::new(targets)?;
        criteria.check_schema(schema)?;
        Ok(criteria)
    }

    pub fn from_sets(sets: &[CandidateSet], schema: &CategoricalSchema) -> Result<Self> {
        let mut out = Self::default();
        for set in sets {
            set.criteria.check_schema(schema)?;
            for (var, d) in schema.variables().iter().zip(set.criteria.targets()) {
                out.insert(&set.query_id, &var.name, d.clone())?;
            }
        }
        Ok(out)
    }
}

fn parse_vector(text: &str, lineno: usize) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(lineno, format!("invalid target value `{v}`")))
        })
        .collect()
}

pub fn parse_sidecar_str(text: &str) -> Result<Sidecar> {
    let mut out = Sidecar::default();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let body = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = body.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [qid, var, vector] => {
                let target = parse_vector(vector, lineno)?;
                DistributionalCriteria::new(vec![target.clone()])
                    .map_err(|e| Error::parse(lineno, e.to_string()))?;
                out.insert(qid, var, target)
                    .map_err(|e| Error::parse(lineno, e.to_string()))?;
            }
            _ => {
                return Err(Error::parse(
                    lineno,
                    format!("expected `<qid> <variable> <v1,v2,...>`, found {} fields", fields.len()),
                ))
            }
        }
    }
    Ok(out)
}

pub fn parse_sidecar(path: &Path) -> Result<Sidecar> {
    parse_sidecar_str(&read_text(path)?).map_err(|e| e.in_file(path))
}

/// Writes records in set order, variables in schema order.
pub fn write_sidecar(out: &mut impl Write, sets: &[CandidateSet], schema: &CategoricalSchema) -> Result<()> {
    for set in sets {
        set.criteria.check_schema(schema)?;
        for (var, d) in schema.variables().iter().zip(set.criteria.targets()) {
            let vector: Vec<String> = d.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{} {} {}", set.query_id, var.name, vector.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CategoricalVariable;

    fn schema() -> CategoricalSchema {
        CategoricalSchema::new(
            vec![
                CategoricalVariable {
                    name: "a".into(),
                    indices: vec![0, 1],
                },
                CategoricalVariable {
                    name: "b".into(),
                    indices: vec![2, 3, 4],
                },
            ],
            5,
        )
        .unwrap()
    }

    #[test]
    fn parse_and_join() {
        let s = parse_sidecar_str("# criteria\nq1 b 0.2,0.3,0.5\nq1 a 0.5,0.5 # trailing\n\n").unwrap();
        let c = s.criteria_for("q1", &schema()).unwrap();
        assert_eq!(c.targets(), &[vec![0.5, 0.5], vec![0.2, 0.3, 0.5]]);
        assert!(s.criteria_for("q2", &schema()).is_err());
    }

    #[test]
    fn rejects_bad_records() {
        for (text, line) in [
            ("q1 a 0.5,0.5\nq1 a 0.5,0.5", 2),
            ("q1 a 0.5,x", 1),
            ("q1 a", 1),
            ("q1 a 0.9,0.9", 1),
        ] {
            match parse_sidecar_str(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        let partial = parse_sidecar_str("q1 a 0.5,0.5").unwrap();
        assert!(partial.criteria_for("q1", &schema()).is_err());
    }

    #[test]
    fn write_round_trip() {
        let set = CandidateSet {
            query_id: "q9".into(),
            items: vec![],
            criteria: DistributionalCriteria::new(vec![vec![0.25, 0.75], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]])
                .unwrap(),
        };
        let mut buf = Vec::new();
        write_sidecar(&mut buf, std::slice::from_ref(&set), &schema()).unwrap();
        let parsed = parse_sidecar_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed.criteria_for("q9", &schema()).unwrap(), set.criteria);
        assert_eq!(parsed, Sidecar::from_sets(&[set], &schema()).unwrap());
    }
}
