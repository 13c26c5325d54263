//! Finite-difference verification of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than
/// relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[row,col]` of the worst entry.
    pub worst: String,
    pub entries_checked: usize,
}

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of `program` against central differences
/// for every trainable entry of `store`. `program` must be deterministic.
pub fn grad_check<F>(store: &ParamStore, program: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = program(store, &mut g)?;
    let grads = g.backward(loss)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let v = program(s, &mut g)?;
        let out = g.scalar(v);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Numeric {
                param: "loss".into(),
                detail: "non-finite loss during finite differences".into(),
            })
        }
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        entries_checked: 0,
    };
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let analytic = grads.get_or_zeros(store, id);
        let (rows, cols) = analytic.dim();
        for r in 0..rows {
            for c in 0..cols {
                let base = store.value(id)[[r, c]];
                let mut v = store.value(id).clone();
                v[[r, c]] = base + step;
                probe.set_value(id, v.clone())?;
                let plus = eval(&probe)?;
                v[[r, c]] = base - step;
                probe.set_value(id, v.clone())?;
                let minus = eval(&probe)?;
                v[[r, c]] = base;
                probe.set_value(id, v)?;

                let numeric = (plus - minus) / (2.0 * step);
                let err = relative_error(analytic[[r, c]], numeric);
                report.entries_checked += 1;
                if err > report.max_rel_error || report.worst.is_empty() {
                    report.max_rel_error = report.max_rel_error.max(err);
                    if err >= report.max_rel_error {
                        report.worst = format!("{}[{r},{c}]", store.get(id).name);
                    }
                }
            }
        }
    }
    Ok(report)
}
