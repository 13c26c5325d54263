use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

pub type Mat = Array2<f64>;

/// Handle to one entry of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// AdaBelief moment estimates for one array.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSlots {
    pub first_moment: Mat,
    pub second_moment: Mat,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    /// Buffers (batch-norm running statistics) are stored alongside the
    /// weights but never receive gradients.
    pub trainable: bool,
    pub slots: Option<OptimizerSlots>,
}

/// Named real arrays with fixed shapes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Mat) -> Result<ParamId> {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: &str, value: Mat) -> Result<ParamId> {
        self.insert(name, value, false)
    }

    fn insert(&mut self, name: &str, value: Mat, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::arg(format!("duplicate parameter name `{name}`")));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg(format!("parameter `{name}` has non-finite entries")));
        }
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            trainable,
            slots: None,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    /// Overwrites a value; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: Mat) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.dim() != value.dim() {
            return Err(Error::dim(format!(
                "`{}` has shape {:?}, got {:?}",
                p.name,
                p.value.dim(),
                value.dim()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub(crate) fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of trainable scalars.
    pub fn trainable_size(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Drops all optimizer state.
    pub fn reset_slots(&mut self) {
        self.params.iter_mut().for_each(|p| p.slots = None);
    }
}

/// Gradients for every parameter of a store, indexed by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub(crate) fn from_vec(grads: Vec<Option<Mat>>) -> Self {
        Self { grads }
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `id`, or zeros shaped like the stored value.
    pub fn get_or_zeros(&self, store: &ParamStore, id: ParamId) -> Mat {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(store.value(id).dim()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            match (mine.as_mut(), theirs) {
                (Some(a), Some(b)) => *a += b,
                (None, Some(b)) => *mine = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.grads
            .iter_mut()
            .flatten()
            .for_each(|g| g.mapv_inplace(|v| v * factor));
    }

    /// All trainable gradient entries flattened in store order, zeros where a
    /// parameter received no gradient.
    pub fn flatten(&self, store: &ParamStore) -> Vec<f64> {
        let mut out = Vec::with_capacity(store.trainable_size());
        for (id, p) in store.iter().filter(|(_, p)| p.trainable) {
            match self.get(id) {
                Some(g) => out.extend(g.iter().copied()),
                None => out.extend(std::iter::repeat_n(0.0, p.value.len())),
            }
        }
        out
    }
}
