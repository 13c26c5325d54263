//! The pointer-network re-ranker.
//!
//! Items are embedded (dense, ReLU, dropout) and read left to right by an
//! LSTM encoder. An LSTM decoder, started from the encoder's final state,
//! receives at every step the embedding of the previously selected item (a
//! learned start token at the first step) concatenated with the flattened
//! condition information `d_j - r_j` of the prefix chosen so far. Its hidden
//! state passes through a two-layer head and acts as the query of an
//! additive attention over the encoder outputs; a masked softmax over the
//! resulting scores is the selection policy.
//!
//! Everything is batched: a batch of candidate sets is padded to a common
//! length and decoded in lockstep on one [`Graph`].

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{condition_info, CandidateSet, CategoricalSchema, Slate};
use crate::error::{Error, Result};
use crate::nn::{
    dropout, Attention, BatchNorm, Checkpoint, Dense, Graph, LstmCell, Mat, ParamId, ParamStore,
    Phase, RunningStatsUpdate, Var,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    /// Length of the flattened condition information (total categories).
    pub ci_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub k: usize,
    pub use_condition_info: bool,
    /// Batch normalization inside the head. Switching it off makes every
    /// row of a batch independent of the others.
    pub batch_norm: bool,
}

impl ModelConfig {
    /// Full-size defaults (256-wide layers) for the given data shape.
    pub fn new(feature_dim: usize, ci_dim: usize, k: usize) -> Self {
        Self {
            feature_dim,
            ci_dim,
            embed_dim: 256,
            hidden_dim: 256,
            dropout: 0.1,
            k,
            use_condition_info: true,
            batch_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("feature_dim", self.feature_dim),
            ("ci_dim", self.ci_dim),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("k", self.k),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::arg(format!("model {name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::arg(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("feature_dim", self.feature_dim.to_string()),
            ("ci_dim", self.ci_dim.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("dropout", self.dropout.to_string()),
            ("k", self.k.to_string()),
            ("use_condition_info", self.use_condition_info.to_string()),
            ("batch_norm", self.batch_norm.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        fn get<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
            let raw = ckpt
                .config_value(key)
                .ok_or_else(|| Error::arg(format!("checkpoint lacks model setting `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::arg(format!("checkpoint setting `{key}` = `{raw}` is invalid")))
        }
        let cfg = Self {
            feature_dim: get(ckpt, "feature_dim")?,
            ci_dim: get(ckpt, "ci_dim")?,
            embed_dim: get(ckpt, "embed_dim")?,
            hidden_dim: get(ckpt, "hidden_dim")?,
            dropout: get(ckpt, "dropout")?,
            k: get(ckpt, "k")?,
            use_condition_info: get(ckpt, "use_condition_info")?,
            batch_norm: get(ckpt, "batch_norm")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Greedy picks the most probable item (lowest index on exact ties);
/// sampling draws from the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Where the actions of a rollout come from.
#[derive(Debug, Clone, Copy)]
pub enum Actions<'a> {
    Decode(DecodeMode),
    /// Replays recorded actions (one `k`-long sequence per batch row).
    Forced(&'a [Vec<usize>]),
}

/// Graph nodes and choices of one batched decode.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// Per batch row, the `k` selected indices.
    pub actions: Vec<Vec<usize>>,
    /// Per step, the `B x n` policy.
    pub probs: Vec<Var>,
    /// Per step, the `B x n` log-policy (0 at forbidden entries).
    pub log_probs: Vec<Var>,
    /// Per step, `B x 1` log-probability of the selected item.
    pub chosen_log_probs: Vec<Var>,
    /// Padded candidate count.
    pub n: usize,
    pub bn_updates: Vec<RunningStatsUpdate>,
}

impl Rollout {
    /// `B x 1` column of `sum_t ln pi(a_t | s_t)`.
    pub fn trajectory_log_prob(&self, g: &mut Graph) -> Result<Var> {
        let mut total = self.chosen_log_probs[0];
        for &lp in &self.chosen_log_probs[1..] {
            total = g.add(total, lp)?;
        }
        Ok(total)
    }

    /// Plain per-step probability vectors of batch row `b`.
    pub fn row_probs(&self, g: &Graph, b: usize) -> Vec<Vec<f64>> {
        self.probs.iter().map(|&p| g.value(p).row(b).to_vec()).collect()
    }
}

/// Parameter handles of the network; the values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct CssoNetwork {
    pub config: ModelConfig,
    embed: Dense,
    encoder: LstmCell,
    decoder: LstmCell,
    start_token: ParamId,
    head_in: Dense,
    head_norm: Option<BatchNorm>,
    head_out: Dense,
    attention: Attention,
}

impl CssoNetwork {
    pub fn new(config: ModelConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let embed = Dense::new(store, "embed", config.feature_dim, e, rng)?;
        let encoder = LstmCell::new(store, "encoder", e, h, rng)?;
        let decoder = LstmCell::new(store, "decoder", e + config.ci_dim, h, rng)?;
        let bound = (1.0 / e as f64).sqrt();
        let start = Array2::from_shape_simple_fn((1, e), || rng.random_range(-bound..=bound));
        let start_token = store.add("start_token", start)?;
        let head_in = Dense::new(store, "head.in", h, h, rng)?;
        let head_norm = if config.batch_norm {
            Some(BatchNorm::new(store, "head.norm", h)?)
        } else {
            None
        };
        let head_out = Dense::new(store, "head.out", h, h, rng)?;
        let attention = Attention::new(store, "attention", h, h, h, rng)?;
        Ok(Self {
            config,
            embed,
            encoder,
            decoder,
            start_token,
            head_in,
            head_norm,
            head_out,
            attention,
        })
    }

    fn check_batch(&self, sets: &[&CandidateSet], schema: &CategoricalSchema) -> Result<usize> {
        if sets.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        if schema.total_categories() != self.config.ci_dim {
            return Err(Error::dim(format!(
                "schema has {} categories, model expects {}",
                schema.total_categories(),
                self.config.ci_dim
            )));
        }
        for set in sets {
            if set.real_count() < self.config.k {
                return Err(Error::arg(format!(
                    "query {} has {} real items, fewer than k = {}",
                    set.query_id,
                    set.real_count(),
                    self.config.k
                )));
            }
            if let Some(it) = set.items.iter().find(|it| it.features.len() != self.config.feature_dim) {
                return Err(Error::dim(format!(
                    "query {}: item has {} features, model expects {}",
                    set.query_id,
                    it.features.len(),
                    self.config.feature_dim
                )));
            }
        }
        Ok(sets.iter().map(|s| s.len()).max().unwrap_or(0))
    }

    /// Embeds every item: `(B*n) x embed`.
    pub fn embed(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        features: Mat,
        phase: Phase,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        if features.ncols() != self.config.feature_dim {
            return Err(Error::dim(format!(
                "{} feature columns, model expects {}",
                features.ncols(),
                self.config.feature_dim
            )));
        }
        let x = g.constant(features);
        let z = self.embed.forward(g, store, x)?;
        let a = g.relu(z);
        dropout(g, a, self.config.dropout, phase, rng)
    }

    /// Runs the encoder over `n` positions of `batch` rows of embeddings.
    /// Returns the outputs `(B*n) x hidden` and the state after each row's
    /// last real position (`last[b]`).
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        embedded: Var,
        batch: usize,
        n: usize,
        last: &[usize],
    ) -> Result<(Var, Var, Var)> {
        if n == 0 {
            return Err(Error::arg("cannot encode an empty sequence"));
        }
        let hid = self.config.hidden_dim;
        let mut h = g.constant(Mat::zeros((batch, hid)));
        let mut c = g.constant(Mat::zeros((batch, hid)));
        let mut hs = Vec::with_capacity(n);
        let mut cs = Vec::with_capacity(n);
        for t in 0..n {
            let x = g.gather_rows(embedded, (0..batch).map(|b| b * n + t).collect())?;
            (h, c) = self.encoder.forward(g, store, x, h, c)?;
            hs.push(h);
            cs.push(c);
        }
        // stacked rows are step-major: t * B + b
        let all_h = g.concat_rows(&hs)?;
        let all_c = g.concat_rows(&cs)?;
        let outputs = g.gather_rows(
            all_h,
            (0..batch).flat_map(|b| (0..n).map(move |t| t * batch + b)).collect(),
        )?;
        let finals: Vec<usize> = last.iter().enumerate().map(|(b, &t)| t * batch + b).collect();
        let h_n = g.gather_rows(all_h, finals.clone())?;
        let c_n = g.gather_rows(all_c, finals)?;
        Ok((outputs, h_n, c_n))
    }

    /// One decoder step: advances `(h, c)` and returns the raw attention
    /// scores `B x n` before masking.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        prev: Var,
        ci: Mat,
        state: (Var, Var),
        keys: Var,
        n: usize,
        phase: Phase,
        rng: &mut impl Rng,
        bn_updates: &mut Vec<RunningStatsUpdate>,
    ) -> Result<(Var, Var, Var)> {
        let ci = if self.config.use_condition_info {
            ci
        } else {
            Mat::zeros(ci.dim())
        };
        let ci = g.constant(ci);
        let input = g.concat_cols(&[prev, ci])?;
        let (h, c) = self.decoder.forward(g, store, input, state.0, state.1)?;
        let q = self.head_in.forward(g, store, h)?;
        let q = g.relu(q);
        let q = dropout(g, q, self.config.dropout, phase, rng)?;
        let q = match &self.head_norm {
            Some(bn) => bn.forward(g, store, q, phase, bn_updates)?,
            None => q,
        };
        let q = self.head_out.forward(g, store, q)?;
        let u = self.attention.scores(g, store, keys, q, n)?;
        Ok((h, c, u))
    }

    /// Decodes `k` steps for a batch of candidate sets.
    pub fn rollout(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        sets: &[&CandidateSet],
        schema: &CategoricalSchema,
        actions: Actions<'_>,
        phase: Phase,
        rng: &mut impl Rng,
    ) -> Result<Rollout> {
        let n = self.check_batch(sets, schema)?;
        let batch = sets.len();
        let k = self.config.k;
        if let Actions::Forced(forced) = actions {
            if forced.len() != batch || forced.iter().any(|a| a.len() != k) {
                return Err(Error::dim(format!("forced actions must be {batch} sequences of {k}")));
            }
        }

        let m = self.config.feature_dim;
        let mut features = Mat::zeros((batch * n, m));
        // forbidden[b * n + i]: padding or beyond the set's own length
        let mut forbidden = vec![true; batch * n];
        let mut last = vec![0; batch];
        for (b, set) in sets.iter().enumerate() {
            for (i, item) in set.items.iter().enumerate() {
                features
                    .row_mut(b * n + i)
                    .iter_mut()
                    .zip(&item.features)
                    .for_each(|(dst, v)| *dst = *v);
                forbidden[b * n + i] = item.is_padding;
                if !item.is_padding {
                    last[b] = i;
                }
            }
        }

        let embedded = self.embed(g, store, features, phase, rng)?;
        let (enc, h0, c0) = self.encode(g, store, embedded, batch, n, &last)?;
        let keys = self.attention.project_keys(g, store, enc)?;

        let start = g.param(store, self.start_token);
        let ones = g.constant(Mat::ones((batch, 1)));
        let mut prev = g.matmul(ones, start)?;
        let mut state = (h0, c0);
        let mut chosen: Vec<Vec<usize>> = vec![Vec::with_capacity(k); batch];
        let mut out = Rollout {
            actions: Vec::new(),
            probs: Vec::with_capacity(k),
            log_probs: Vec::with_capacity(k),
            chosen_log_probs: Vec::with_capacity(k),
            n,
            bn_updates: Vec::new(),
        };

        for t in 0..k {
            let mut ci = Mat::zeros((batch, self.config.ci_dim));
            for (b, set) in sets.iter().enumerate() {
                let info = condition_info(&set.criteria, &chosen[b], set, schema)?.flatten();
                ci.row_mut(b).iter_mut().zip(&info).for_each(|(dst, v)| *dst = *v);
            }
            let (h, c, u) = self.decode_step(
                g,
                store,
                prev,
                ci,
                state,
                keys,
                n,
                phase,
                rng,
                &mut out.bn_updates,
            )?;
            state = (h, c);
            let probs = g.masked_softmax(u, forbidden.clone())?;
            let log_probs = g.masked_log_softmax(u, forbidden.clone())?;

            let picks: Vec<usize> = match actions {
                Actions::Forced(forced) => {
                    let picks: Vec<usize> = forced.iter().map(|a| a[t]).collect();
                    for (b, &a) in picks.iter().enumerate() {
                        if a >= n || forbidden[b * n + a] {
                            return Err(Error::arg(format!(
                                "forced action {a} at step {} of row {b} is not selectable",
                                t + 1
                            )));
                        }
                    }
                    picks
                }
                Actions::Decode(mode) => {
                    let pv = g.value(probs);
                    (0..batch)
                        .map(|b| {
                            let row = pv.row(b);
                            let row = row.as_slice().expect("standard layout");
                            match mode {
                                DecodeMode::Greedy => argmax_allowed(row, &forbidden[b * n..(b + 1) * n]),
                                DecodeMode::Sample => sample_allowed(row, &forbidden[b * n..(b + 1) * n], rng),
                            }
                        })
                        .collect()
                }
            };

            let chosen_lp = g.pick_cols(log_probs, picks.clone())?;
            out.probs.push(probs);
            out.log_probs.push(log_probs);
            out.chosen_log_probs.push(chosen_lp);
            for (b, &a) in picks.iter().enumerate() {
                forbidden[b * n + a] = true;
                chosen[b].push(a);
            }
            prev = g.gather_rows(embedded, picks.iter().enumerate().map(|(b, &a)| b * n + a).collect())?;
        }
        out.actions = chosen;
        Ok(out)
    }
}

/// Most probable allowed index; lowest index on exact ties.
fn argmax_allowed(p: &[f64], forbidden: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in p.iter().enumerate() {
        if forbidden[i] {
            continue;
        }
        match best {
            Some(bi) if p[bi] >= v => {}
            _ => best = Some(i),
        }
    }
    best.expect("masked softmax guarantees an allowed index")
}

/// Inverse-CDF draw restricted to allowed indices.
fn sample_allowed(p: &[f64], forbidden: &[bool], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut fallback = None;
    for (i, &v) in p.iter().enumerate() {
        if forbidden[i] || v <= 0.0 {
            continue;
        }
        acc += v;
        fallback = Some(i);
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just below u
    fallback.unwrap_or_else(|| argmax_allowed(p, forbidden))
}

/// Greedy pick over a plain score vector with the model's masking and tie
/// rules.
pub fn select(
    scores: &[f64],
    forbidden: &[bool],
    mode: DecodeMode,
    rng: &mut impl Rng,
) -> Result<(usize, Vec<f64>)> {
    let p = crate::nn::masked_softmax(scores, forbidden)?;
    let a = match mode {
        DecodeMode::Greedy => argmax_allowed(&p, forbidden),
        DecodeMode::Sample => sample_allowed(&p, forbidden, rng),
    };
    Ok((a, p))
}

/// A generated slate together with the per-step policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub slate: Slate,
    pub probs: Vec<Vec<f64>>,
}

/// Network plus its parameter values.
#[derive(Debug, Clone)]
pub struct CssoModel {
    pub network: CssoNetwork,
    pub store: ParamStore,
}

/// Rows per inference graph.
const INFERENCE_CHUNK: usize = 256;

impl CssoModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = CssoNetwork::new(config, &mut store, &mut rng)?;
        Ok(Self { network, store })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    /// Decodes one slate in evaluation mode (no dropout, running batch-norm
    /// statistics).
    pub fn generate_slate(
        &self,
        cands: &CandidateSet,
        schema: &CategoricalSchema,
        mode: DecodeMode,
        rng: &mut impl Rng,
    ) -> Result<Generated> {
        Ok(self.generate_slates(&[cands], schema, mode, rng)?.remove(0))
    }

    /// Evaluation-mode decoding of many sets, batched internally.
    pub fn generate_slates(
        &self,
        sets: &[&CandidateSet],
        schema: &CategoricalSchema,
        mode: DecodeMode,
        rng: &mut impl Rng,
    ) -> Result<Vec<Generated>> {
        let mut out = Vec::with_capacity(sets.len());
        for chunk in sets.chunks(INFERENCE_CHUNK) {
            let mut g = Graph::new();
            let r = self.network.rollout(
                &mut g,
                &self.store,
                chunk,
                schema,
                Actions::Decode(mode),
                Phase::Eval,
                rng,
            )?;
            for (b, (set, actions)) in chunk.iter().zip(&r.actions).enumerate() {
                let probs = r
                    .row_probs(&g, b)
                    .into_iter()
                    .map(|mut p| {
                        p.truncate(set.len());
                        p
                    })
                    .collect();
                out.push(Generated {
                    slate: Slate::new(actions.clone(), set)?,
                    probs,
                });
            }
        }
        Ok(out)
    }

    /// Sum of log-probabilities of recorded slates under evaluation mode.
    pub fn replay_log_prob(
        &self,
        sets: &[&CandidateSet],
        schema: &CategoricalSchema,
        actions: &[Vec<usize>],
    ) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = self.network.rollout(
            &mut g,
            &self.store,
            sets,
            schema,
            Actions::Forced(actions),
            Phase::Eval,
            &mut rng,
        )?;
        let total = r.trajectory_log_prob(&mut g)?;
        Ok(g.value(total).column(0).to_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store, self.config().to_pairs())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_checkpoint(ckpt)?;
        let mut model = Self::new(config, 0)?;
        ckpt.load_into(&mut model.store)?;
        Ok(model)
    }
}
