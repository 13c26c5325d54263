//! Value types shared by every stage: items, candidate sets, categorical
//! schemas, distributional criteria, slates and the condition information
//! fed to the decoder.
//!
//! A categorical variable is a set of positions inside the feature vector
//! that together hold a one-hot encoding. A slate's realized distribution for
//! that variable is the mean of the one-hot slices of its items; the
//! criteria are the per-query targets those distributions are compared to.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Tolerance within which a criteria vector is accepted and renormalized.
pub const CRITERIA_RENORM_TOL: f64 = 1e-6;

/// One categorical variable: a name and the feature positions of its
/// one-hot encoding, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalVariable {
    pub name: String,
    pub indices: Vec<usize>,
}

/// The index sets locating every categorical variable inside a feature
/// vector of width `feature_dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalSchema {
    variables: Vec<CategoricalVariable>,
    feature_dim: usize,
}

impl CategoricalSchema {
    pub fn new(variables: Vec<CategoricalVariable>, feature_dim: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut variables = variables;
        for var in &mut variables {
            if var.indices.len() < 2 {
                return Err(Error::arg(format!(
                    "categorical variable `{}` needs at least two positions",
                    var.name
                )));
            }
            var.indices.sort_unstable();
            for &idx in &var.indices {
                if idx >= feature_dim {
                    return Err(Error::dim(format!(
                        "variable `{}` references position {idx} but features have width {feature_dim}",
                        var.name
                    )));
                }
                if !seen.insert(idx) {
                    return Err(Error::arg(format!(
                        "position {idx} belongs to more than one categorical variable"
                    )));
                }
            }
        }
        Ok(Self {
            variables,
            feature_dim,
        })
    }

    pub fn variables(&self) -> &[CategoricalVariable] {
        &self.variables
    }

    /// Number of categorical variables (c).
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// Feature width (m).
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Sizes |F_j| of every variable.
    pub fn category_counts(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.indices.len()).collect()
    }

    /// Total number of categories over all variables; the width of a
    /// flattened [`ConditionInfo`].
    pub fn total_categories(&self) -> usize {
        self.variables.iter().map(|v| v.indices.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub features: Vec<f64>,
    /// Relevance or click label; never negative.
    pub label: f64,
    pub base_score: f64,
    pub is_padding: bool,
}

impl Item {
    pub fn new(features: Vec<f64>, label: f64, base_score: f64) -> Self {
        Self {
            features,
            label,
            base_score,
            is_padding: false,
        }
    }

    /// A masked filler item: zero features, zero label.
    pub fn padding(feature_dim: usize) -> Self {
        Self {
            features: vec![0.0; feature_dim],
            label: 0.0,
            base_score: 0.0,
            is_padding: true,
        }
    }
}

/// One item as read from a ranking file, before any schema is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RawItem {
    pub label: f64,
    pub features: Vec<f64>,
    /// Trailing `# ...` text of the source line, if any.
    pub comment: Option<String>,
}

/// All items of one query id, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuery {
    pub query_id: String,
    pub items: Vec<RawItem>,
}

/// Target distributions d_1..d_c for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionalCriteria {
    targets: Vec<Vec<f64>>,
}

impl DistributionalCriteria {
    /// Validates every target: entries in [0, 1] and summing to one. Sums
    /// within [`CRITERIA_RENORM_TOL`] of one are renormalized, anything
    /// further off is rejected.
    pub fn new(targets: Vec<Vec<f64>>) -> Result<Self> {
        let mut targets = targets;
        for (j, d) in targets.iter_mut().enumerate() {
            if d.is_empty() {
                return Err(Error::arg(format!("criterion {j} is empty")));
            }
            if d.iter().any(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v)) {
                return Err(Error::arg(format!("criterion {j} has entries outside [0, 1]")));
            }
            let sum: f64 = d.iter().sum();
            if (sum - 1.0).abs() > CRITERIA_RENORM_TOL {
                return Err(Error::arg(format!("criterion {j} sums to {sum}, expected 1")));
            }
            // repeated until the sum is exactly one so that re-validating
            // already normalized targets leaves them bit-identical
            let mut sum = sum;
            for _ in 0..4 {
                if sum == 1.0 {
                    break;
                }
                d.iter_mut().for_each(|v| *v /= sum);
                sum = d.iter().sum();
            }
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn num_variables(&self) -> usize {
        self.targets.len()
    }

    pub fn check_schema(&self, schema: &CategoricalSchema) -> Result<()> {
        if self.targets.len() != schema.num_variables() {
            return Err(Error::dim(format!(
                "criteria cover {} variables, schema declares {}",
                self.targets.len(),
                schema.num_variables()
            )));
        }
        for (j, (d, var)) in self.targets.iter().zip(schema.variables()).enumerate() {
            if d.len() != var.indices.len() {
                return Err(Error::dim(format!(
                    "criterion {j} has {} entries, variable `{}` has {} categories",
                    d.len(),
                    var.name,
                    var.indices.len()
                )));
            }
        }
        Ok(())
    }
}

/// The ordered candidates of one (sub-)query, in base-ranker order, together
/// with the query's distributional criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query_id: String,
    pub items: Vec<Item>,
    pub criteria: DistributionalCriteria,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Count of non-padding items.
    pub fn real_count(&self) -> usize {
        self.items.iter().filter(|it| !it.is_padding).count()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.label).collect()
    }

    pub fn base_scores(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.base_score).collect()
    }

    pub fn padding_mask(&self) -> Vec<bool> {
        self.items.iter().map(|it| it.is_padding).collect()
    }

    /// Padding may only occupy trailing positions.
    pub fn padding_is_trailing(&self) -> bool {
        let first_pad = self.items.iter().position(|it| it.is_padding);
        match first_pad {
            None => true,
            Some(p) => self.items[p..].iter().all(|it| it.is_padding),
        }
    }
}

/// An ordered selection a_1..a_k of distinct positions into a candidate set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Slate {
    pub indices: Vec<usize>,
}

impl Slate {
    /// Builds a slate and checks it against `cands`: no duplicates, every
    /// index in range and none pointing at padding.
    pub fn new(indices: Vec<usize>, cands: &CandidateSet) -> Result<Self> {
        let slate = Self { indices };
        slate.validate(cands)?;
        Ok(slate)
    }

    pub fn validate(&self, cands: &CandidateSet) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in &self.indices {
            if i >= cands.len() {
                return Err(Error::arg(format!(
                    "slate index {i} out of range for {} candidates",
                    cands.len()
                )));
            }
            if cands.items[i].is_padding {
                return Err(Error::arg(format!("slate selects padding position {i}")));
            }
            if !seen.insert(i) {
                return Err(Error::arg(format!("slate selects position {i} twice")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Remaining distribution deficits d_j - r_j^(t) after t selections.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionInfo {
    pub deltas: Vec<Vec<f64>>,
}

impl ConditionInfo {
    /// Concatenation of all deltas, variable by variable.
    pub fn flatten(&self) -> Vec<f64> {
        self.deltas.iter().flatten().copied().collect()
    }
}

/// Features of `item` restricted to the positions of variable `j`.
pub fn categorical_slice(item: &Item, j: usize, schema: &CategoricalSchema) -> Result<Vec<f64>> {
    let var = schema.variables().get(j).ok_or_else(|| {
        Error::arg(format!(
            "variable {j} out of range, schema has {}",
            schema.num_variables()
        ))
    })?;
    if item.features.len() != schema.feature_dim() {
        return Err(Error::dim(format!(
            "item has {} features, schema expects {}",
            item.features.len(),
            schema.feature_dim()
        )));
    }
    Ok(var.indices.iter().map(|&i| item.features[i]).collect())
}

/// Position of the active category of variable `j` (argmax of the slice,
/// lowest position on ties).
pub fn category_of(item: &Item, j: usize, schema: &CategoricalSchema) -> Result<usize> {
    let slice = categorical_slice(item, j, schema)?;
    let mut best = 0;
    for (i, &v) in slice.iter().enumerate() {
        if v > slice[best] {
            best = i;
        }
    }
    Ok(best)
}

fn mean_slices<'a>(
    items: impl Iterator<Item = &'a Item>,
    count: usize,
    schema: &CategoricalSchema,
) -> Result<Vec<Vec<f64>>> {
    let mut sums: Vec<Vec<f64>> = schema
        .category_counts()
        .into_iter()
        .map(|c| vec![0.0; c])
        .collect();
    for item in items {
        for (j, sum) in sums.iter_mut().enumerate() {
            let slice = categorical_slice(item, j, schema)?;
            sum.iter_mut().zip(&slice).for_each(|(s, v)| *s += v);
        }
    }
    if count > 0 {
        let scale = 1.0 / count as f64;
        sums.iter_mut()
            .for_each(|s| s.iter_mut().for_each(|v| *v *= scale));
    }
    Ok(sums)
}

/// Realized distribution r_j of every variable over the whole slate.
pub fn slate_distribution(
    slate: &Slate,
    cands: &CandidateSet,
    schema: &CategoricalSchema,
) -> Result<Vec<Vec<f64>>> {
    if slate.is_empty() {
        return Err(Error::arg("slate distribution of an empty slate"));
    }
    partial_slate_distribution(&slate.indices, cands, schema)
}

/// Distribution over the first `prefix.len()` selections. An empty prefix
/// yields all-zero vectors.
pub fn partial_slate_distribution(
    prefix: &[usize],
    cands: &CandidateSet,
    schema: &CategoricalSchema,
) -> Result<Vec<Vec<f64>>> {
    if let Some(&bad) = prefix.iter().find(|&&i| i >= cands.len()) {
        return Err(Error::arg(format!(
            "prefix index {bad} out of range for {} candidates",
            cands.len()
        )));
    }
    mean_slices(prefix.iter().map(|&i| &cands.items[i]), prefix.len(), schema)
}

/// d_j - r_j^(t) for the current prefix; equal to the criteria themselves
/// before the first selection.
pub fn condition_info(
    criteria: &DistributionalCriteria,
    prefix: &[usize],
    cands: &CandidateSet,
    schema: &CategoricalSchema,
) -> Result<ConditionInfo> {
    criteria.check_schema(schema)?;
    let realized = partial_slate_distribution(prefix, cands, schema)?;
    let deltas = criteria
        .targets()
        .iter()
        .zip(&realized)
        .map(|(d, r)| d.iter().zip(r).map(|(a, b)| a - b).collect())
        .collect();
    Ok(ConditionInfo { deltas })
}

/// Per-variable category frequencies over all non-padding items.
pub fn infer_criteria(
    cands: &CandidateSet,
    schema: &CategoricalSchema,
) -> Result<DistributionalCriteria> {
    infer_criteria_from_items(&cands.items, schema)
}

pub fn infer_criteria_from_items(
    items: &[Item],
    schema: &CategoricalSchema,
) -> Result<DistributionalCriteria> {
    let real = items.iter().filter(|it| !it.is_padding).count();
    if real == 0 {
        return Err(Error::arg("cannot infer criteria from an all-padding set"));
    }
    let targets = mean_slices(items.iter().filter(|it| !it.is_padding), real, schema)?;
    DistributionalCriteria::new(targets)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn worked_example_schema() -> CategoricalSchema {
        // 1-based F_1 = {2,3}, F_2 = {4,5}
        CategoricalSchema::new(
            vec![
                CategoricalVariable {
                    name: "a".into(),
                    indices: vec![1, 2],
                },
                CategoricalVariable {
                    name: "b".into(),
                    indices: vec![3, 4],
                },
            ],
            6,
        )
        .unwrap()
    }

    #[test]
    fn slices_worked_example() {
        let schema = worked_example_schema();
        let item = Item::new(vec![0.3, 0.0, 1.0, 1.0, 0.0, 5.0], 0.0, 0.0);
        assert_eq!(categorical_slice(&item, 0, &schema).unwrap(), vec![0.0, 1.0]);
        assert_eq!(categorical_slice(&item, 1, &schema).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn slice_of_whole_one_hot_is_identity() {
        let schema = CategoricalSchema::new(
            vec![CategoricalVariable {
                name: "x".into(),
                indices: vec![0, 1, 2],
            }],
            3,
        )
        .unwrap();
        let item = Item::new(vec![0.0, 0.0, 1.0], 0.0, 0.0);
        assert_eq!(categorical_slice(&item, 0, &schema).unwrap(), item.features);
    }

    #[test]
    fn slice_rejects_bad_shapes() {
        let schema = worked_example_schema();
        let short = Item::new(vec![0.0; 4], 0.0, 0.0);
        assert!(matches!(
            categorical_slice(&short, 0, &schema),
            Err(Error::Dimension(_))
        ));
        let item = Item::new(vec![0.0; 6], 0.0, 0.0);
        assert!(categorical_slice(&item, 2, &schema).is_err());
    }

    #[test]
    fn schema_validation() {
        let overlapping = CategoricalSchema::new(
            vec![
                CategoricalVariable {
                    name: "a".into(),
                    indices: vec![0, 1],
                },
                CategoricalVariable {
                    name: "b".into(),
                    indices: vec![1, 2],
                },
            ],
            3,
        );
        assert!(overlapping.is_err());
        let singleton = CategoricalSchema::new(
            vec![CategoricalVariable {
                name: "a".into(),
                indices: vec![0],
            }],
            3,
        );
        assert!(singleton.is_err());
        let out_of_range = CategoricalSchema::new(
            vec![CategoricalVariable {
                name: "a".into(),
                indices: vec![0, 3],
            }],
            3,
        );
        assert!(matches!(out_of_range, Err(Error::Dimension(_))));
    }

    #[test]
    fn criteria_renormalize_or_reject() {
        let c = DistributionalCriteria::new(vec![vec![0.3, 0.7000004]]).unwrap();
        let s: f64 = c.targets()[0].iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        assert!(DistributionalCriteria::new(vec![vec![0.3, 0.8]]).is_err());
        assert!(DistributionalCriteria::new(vec![vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn slate_distribution_counts() {
        let schema = binary_schema();
        let c = cands(
            vec![item(0, 0.0, 0.0), item(1, 0.0, 0.0), item(0, 0.0, 0.0), item(0, 0.0, 0.0)],
            vec![0.5, 0.5],
        );
        let two_mixed = Slate::new(vec![0, 1], &c).unwrap();
        assert_eq!(slate_distribution(&two_mixed, &c, &schema).unwrap(), vec![vec![0.5, 0.5]]);
        let two_same = Slate::new(vec![0, 2], &c).unwrap();
        assert_eq!(slate_distribution(&two_same, &c, &schema).unwrap(), vec![vec![1.0, 0.0]]);
        let four = Slate::new(vec![0, 2, 3, 1], &c).unwrap();
        assert_eq!(slate_distribution(&four, &c, &schema).unwrap(), vec![vec![0.75, 0.25]]);
        let empty = Slate { indices: vec![] };
        assert!(slate_distribution(&empty, &c, &schema).is_err());
    }

    #[test]
    fn partial_distribution_and_condition_info() {
        let schema = binary_schema();
        let c = cands(vec![item(1, 0.0, 0.0), item(1, 0.0, 0.0), item(0, 0.0, 0.0)], vec![0.3, 0.7]);
        assert_eq!(partial_slate_distribution(&[0], &c, &schema).unwrap(), vec![vec![0.0, 1.0]]);
        assert_eq!(partial_slate_distribution(&[0, 1], &c, &schema).unwrap(), vec![vec![0.0, 1.0]]);
        assert_eq!(partial_slate_distribution(&[], &c, &schema).unwrap(), vec![vec![0.0, 0.0]]);

        let ci0 = condition_info(&c.criteria, &[], &c, &schema).unwrap();
        assert_eq!(ci0.deltas, vec![vec![0.3, 0.7]]);
        let ci2 = condition_info(&c.criteria, &[0, 1], &c, &schema).unwrap();
        assert_abs_diff_eq!(ci2.deltas[0][0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(ci2.deltas[0][1], -0.3, epsilon = 1e-12);

        let exact = cands(vec![item(0, 0.0, 0.0), item(1, 0.0, 0.0)], vec![0.5, 0.5]);
        let ci = condition_info(&exact.criteria, &[0, 1], &exact, &schema).unwrap();
        assert_eq!(ci.flatten(), vec![0.0, 0.0]);
    }

    #[test]
    fn infer_criteria_counts() {
        let schema = binary_schema();
        let two = cands(vec![item(0, 0.0, 0.0), item(1, 0.0, 0.0)], vec![0.5, 0.5]);
        assert_eq!(infer_criteria(&two, &schema).unwrap().targets(), &[vec![0.5, 0.5]]);
        let four = cands(
            vec![item(0, 0.0, 0.0), item(0, 0.0, 0.0), item(0, 0.0, 0.0), item(1, 0.0, 0.0)],
            vec![0.5, 0.5],
        );
        assert_eq!(infer_criteria(&four, &schema).unwrap().targets(), &[vec![0.75, 0.25]]);
        let mut one = cands(vec![item(0, 0.0, 0.0), Item::padding(3)], vec![0.5, 0.5]);
        assert_eq!(infer_criteria(&one, &schema).unwrap().targets(), &[vec![1.0, 0.0]]);
        one.items = vec![Item::padding(3)];
        assert!(infer_criteria(&one, &schema).is_err());
    }

    #[test]
    fn slate_validation() {
        let c = cands(vec![item(0, 0.0, 0.0), item(1, 0.0, 0.0), Item::padding(3)], vec![0.5, 0.5]);
        assert!(Slate::new(vec![0, 0], &c).is_err());
        assert!(Slate::new(vec![3], &c).is_err());
        assert!(Slate::new(vec![2], &c).is_err());
        assert!(Slate::new(vec![1, 0], &c).is_ok());
    }
}
