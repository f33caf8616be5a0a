//! Stacked (Bi)LSTM sentence classifier with full backpropagation through time.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingTable, SubwordHasher};
use crate::eval::{metrics, ConfusionMatrix};
use crate::scalar::{sigmoid, Scalar};

use super::lstm::{CellGradients, CellStep, CellWeights};
use super::optim::{Adam, AdamConfig, Gradient, RowParams};
use super::{check_both_classes, Example, ModelError, Prediction};

pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// Last forward state concatenated with the backward state at the first token.
    Final,
    /// Mean of the top layer outputs over positions.
    MeanPool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    pub readout: Readout,
    /// Longer inputs are truncated to their first `max_tokens` tokens.
    pub max_tokens: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            layers: 2,
            hidden: 64,
            bidirectional: true,
            readout: Readout::Final,
            max_tokens: 128,
        }
    }
}

impl Architecture {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 || self.hidden == 0 || self.max_tokens == 0 {
            return Err(ModelError::Config(format!(
                "layers, hidden and max_tokens must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Where the pretrained table of a frozen-embedding model came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSource {
    pub path: String,
    pub fingerprint: String,
}

/// FNV-1a over the words and the little-endian f64 bits of every component.
pub fn table_fingerprint<T: Scalar>(table: &EmbeddingTable<T>) -> String {
    let mut bytes = Vec::with_capacity(table.len() * (table.dim() * 8 + 8));
    bytes.extend_from_slice(&(table.dim() as u64).to_le_bytes());
    for i in 0..table.len() {
        bytes.extend_from_slice(table.words()[i].as_bytes());
        bytes.push(0);
        for v in table.row(i) {
            bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    format!("{:016x}", crate::hash::fnv1a64(&bytes))
}

#[derive(Clone, Debug)]
pub enum EmbeddingLayer<T> {
    /// Trainable table over the training vocabulary; row 0 is [`UNKNOWN_TOKEN`].
    Learned {
        dim: usize,
        words: Vec<String>,
        index: HashMap<String, usize>,
        table: Vec<T>,
    },
    /// Frozen pretrained vectors; out-of-vocabulary tokens use trainable subword buckets.
    Pretrained {
        table: Arc<EmbeddingTable<T>>,
        hasher: SubwordHasher<T>,
        source: Option<TableSource>,
    },
}

#[derive(Clone, Debug, PartialEq)]
enum EmbedRef {
    Row(usize),
    Buckets(Vec<usize>),
    Fixed,
}

impl<T: Scalar> EmbeddingLayer<T> {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingLayer::Learned { dim, .. } => *dim,
            EmbeddingLayer::Pretrained { table, .. } => table.dim(),
        }
    }

    fn lookup(&self, token: &str) -> (Vec<T>, EmbedRef) {
        match self {
            EmbeddingLayer::Learned {
                dim, index, table, ..
            } => {
                let r = index.get(token).copied().unwrap_or(0);
                (table[r * dim..(r + 1) * dim].to_vec(), EmbedRef::Row(r))
            }
            EmbeddingLayer::Pretrained { table, hasher, .. } => {
                if let Some(i) = table.index_of(token) {
                    return (table.row(i).to_vec(), EmbedRef::Fixed);
                }
                let buckets = hasher.bucket_indices(token);
                match hasher.mean_of(&buckets) {
                    Some(v) => (v, EmbedRef::Buckets(buckets)),
                    None => (vec![T::zero(); table.dim()], EmbedRef::Fixed),
                }
            }
        }
    }
}

impl<T: Scalar> RowParams<T> for EmbeddingLayer<T> {
    fn row_mut(&mut self, row: usize) -> &mut [T] {
        match self {
            EmbeddingLayer::Learned { dim, table, .. } => &mut table[row * *dim..(row + 1) * *dim],
            EmbeddingLayer::Pretrained { hasher, .. } => hasher.row_mut(row),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slot {
    input: usize,
    offset: usize,
}

/// Offsets of every block inside the flat dense parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    hidden: usize,
    directions: usize,
    slots: Vec<Slot>,
    out_w: usize,
    rep: usize,
    out_b: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &Architecture, input: usize) -> Self {
        let h = arch.hidden;
        let dirs = arch.directions();
        let mut slots = Vec::new();
        let mut offset = 0;
        for layer in 0..arch.layers {
            let inp = if layer == 0 { input } else { h * dirs };
            for _ in 0..dirs {
                slots.push(Slot { input: inp, offset });
                offset += 4 * h * inp + 4 * h * h + 4 * h;
            }
        }
        let rep = h * dirs;
        Layout {
            hidden: h,
            directions: dirs,
            slots,
            out_w: offset,
            rep,
            out_b: offset + rep,
            total: offset + rep + 1,
        }
    }

    fn cell<'a, T>(&self, params: &'a [T], slot: usize) -> CellWeights<'a, T> {
        let s = self.slots[slot];
        let h = self.hidden;
        let w_len = 4 * h * s.input;
        let u_len = 4 * h * h;
        let base = s.offset;
        CellWeights {
            input: s.input,
            hidden: h,
            w: &params[base..base + w_len],
            u: &params[base + w_len..base + w_len + u_len],
            b: &params[base + w_len + u_len..base + w_len + u_len + 4 * h],
        }
    }

    fn cell_grads<'a, T>(&self, grads: &'a mut [T], slot: usize) -> CellGradients<'a, T> {
        let s = self.slots[slot];
        let h = self.hidden;
        let w_len = 4 * h * s.input;
        let u_len = 4 * h * h;
        let block = &mut grads[s.offset..s.offset + w_len + u_len + 4 * h];
        let (w, rest) = block.split_at_mut(w_len);
        let (u, b) = rest.split_at_mut(u_len);
        CellGradients { w, u, b }
    }
}

/// One named dense parameter block and its shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl BlockShape {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub blocks: Vec<(String, usize)>,
    pub trainable: usize,
    pub frozen: usize,
}

struct DirTrace<T> {
    // positions in processing order
    positions: Vec<usize>,
    steps: Vec<CellStep<T>>,
}

struct LayerTrace<T> {
    inputs: Vec<Vec<T>>,
    dirs: Vec<DirTrace<T>>,
}

struct Trace<T> {
    refs: Vec<EmbedRef>,
    layers: Vec<LayerTrace<T>>,
    rep: Vec<T>,
    logit: T,
}

/// Validation F1, validation loss, epoch, parameters and embeddings of the best epoch so far.
type Snapshot<T> = (f64, f64, usize, Vec<T>, EmbeddingLayer<T>);

#[derive(Clone, Debug)]
pub struct RecurrentClassifier<T> {
    arch: Architecture,
    embedding: EmbeddingLayer<T>,
    params: Vec<T>,
    layout: Layout,
}

impl<T: Scalar> RecurrentClassifier<T> {
    /// Model with a trainable embedding table over training tokens seen at least
    /// `min_count` times. Rarer tokens share the unknown row, which therefore gets trained.
    pub fn learned(
        arch: Architecture,
        dim: usize,
        vocabulary_from: &[Example],
        min_count: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        if dim == 0 {
            return Err(ModelError::Config(
                "embedding dimension must be positive".into(),
            ));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for e in vocabulary_from {
            for t in &e.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<&str> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .map(|(w, _)| w)
            .collect();
        kept.sort_unstable();
        let mut words = vec![UNKNOWN_TOKEN.to_string()];
        words.extend(
            kept.into_iter()
                .filter(|w| *w != UNKNOWN_TOKEN)
                .map(str::to_string),
        );
        let mut model = Self::init(
            arch,
            EmbeddingLayer::Learned {
                dim,
                index: HashMap::new(),
                table: Vec::new(),
                words: Vec::new(),
            },
            dim,
            seed,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e3be_dd16_0000);
        let table = (0..words.len() * dim)
            .map(|_| T::from_f64_lossy(rng.gen_range(-0.5..0.5)))
            .collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        model.embedding = EmbeddingLayer::Learned {
            dim,
            words,
            index,
            table,
        };
        Ok(model)
    }

    /// Model over a frozen pretrained table whose out-of-vocabulary tokens are embedded by
    /// the (trainable) subword buckets of `hasher`.
    pub fn pretrained(
        arch: Architecture,
        table: Arc<EmbeddingTable<T>>,
        hasher: SubwordHasher<T>,
        source: Option<TableSource>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        if hasher.dim() != table.dim() {
            return Err(ModelError::Config(format!(
                "subword dimension {} differs from table dimension {}",
                hasher.dim(),
                table.dim()
            )));
        }
        let dim = table.dim();
        Ok(Self::init(
            arch,
            EmbeddingLayer::Pretrained {
                table,
                hasher,
                source,
            },
            dim,
            seed,
        ))
    }

    fn init(arch: Architecture, embedding: EmbeddingLayer<T>, input: usize, seed: u64) -> Self {
        let layout = Layout::new(&arch, input);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = arch.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        let mut params = vec![T::zero(); layout.total];
        for slot in &layout.slots {
            let len = 4 * h * slot.input + 4 * h * h + 4 * h;
            for p in &mut params[slot.offset..slot.offset + len] {
                *p = T::from_f64_lossy(rng.gen_range(-bound..bound));
            }
            // forget gate bias
            let b = slot.offset + 4 * h * slot.input + 4 * h * h;
            for p in &mut params[b + h..b + 2 * h] {
                *p = T::one();
            }
        }
        let out_bound = 1.0 / (layout.rep as f64).sqrt();
        for p in &mut params[layout.out_w..layout.out_b] {
            *p = T::from_f64_lossy(rng.gen_range(-out_bound..out_bound));
        }
        RecurrentClassifier {
            arch,
            embedding,
            params,
            layout,
        }
    }

    /// Rebuilds a model from stored parts, checking the dense parameter count.
    pub fn from_parts(
        arch: Architecture,
        embedding: EmbeddingLayer<T>,
        params: Vec<T>,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        let layout = Layout::new(&arch, embedding.dim());
        if params.len() != layout.total {
            return Err(ModelError::Checkpoint(format!(
                "expected {} dense parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(RecurrentClassifier {
            arch,
            embedding,
            params,
            layout,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn embedding(&self) -> &EmbeddingLayer<T> {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut EmbeddingLayer<T> {
        &mut self.embedding
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn kind(&self) -> &'static str {
        match (&self.embedding, self.arch.bidirectional) {
            (EmbeddingLayer::Learned { .. }, false) => "lstm",
            (EmbeddingLayer::Learned { .. }, true) => "bilstm",
            (EmbeddingLayer::Pretrained { .. }, false) => "fasttext-lstm",
            (EmbeddingLayer::Pretrained { .. }, true) => "fasttext-bilstm",
        }
    }

    /// Names and shapes of the dense blocks, in storage order.
    pub fn dense_blocks(&self) -> Vec<BlockShape> {
        dense_block_shapes(&self.arch, self.embedding.dim())
    }

    /// Exact scalar counts per block. The LSTM blocks hold `4 (H d + H H + H)` scalars per
    /// direction, with `d` the layer input width.
    pub fn count_parameters(&self) -> ParameterCount {
        let mut blocks = Vec::new();
        let mut frozen = 0;
        match &self.embedding {
            EmbeddingLayer::Learned { dim, words, .. } => {
                blocks.push(("embedding".to_string(), words.len() * dim))
            }
            EmbeddingLayer::Pretrained { table, hasher, .. } => {
                blocks.push((
                    "subword-buckets".to_string(),
                    hasher.buckets() * hasher.dim(),
                ));
                frozen = table.len() * table.dim();
            }
        }
        let h = self.layout.hidden;
        for (k, slot) in self.layout.slots.iter().enumerate() {
            let name = format!(
                "lstm.{}.{}",
                k / self.layout.directions,
                direction_name(k % self.layout.directions)
            );
            blocks.push((name, 4 * (h * slot.input + h * h + h)));
        }
        blocks.push(("output".to_string(), self.layout.rep + 1));
        let trainable = blocks.iter().map(|(_, n)| n).sum();
        ParameterCount {
            blocks,
            trainable,
            frozen,
        }
    }

    fn forward<S: AsRef<str>>(&self, tokens: &[S]) -> Trace<T> {
        let tokens = &tokens[..tokens.len().min(self.arch.max_tokens)];
        let n = tokens.len();
        let h = self.layout.hidden;
        let dirs = self.layout.directions;
        let mut refs = Vec::with_capacity(n);
        let mut inputs = Vec::with_capacity(n);
        for t in tokens {
            let (v, r) = self.embedding.lookup(t.as_ref());
            inputs.push(v);
            refs.push(r);
        }
        let mut layers: Vec<LayerTrace<T>> = Vec::with_capacity(self.arch.layers);
        for layer in 0..self.arch.layers {
            let mut dir_traces = Vec::with_capacity(dirs);
            for d in 0..dirs {
                let cell = self.layout.cell(&self.params, layer * dirs + d);
                let positions: Vec<usize> = if d == 0 {
                    (0..n).collect()
                } else {
                    (0..n).rev().collect()
                };
                let mut steps: Vec<CellStep<T>> = Vec::with_capacity(n);
                let zeros = vec![T::zero(); h];
                for &pos in &positions {
                    let (hp, cp) = match steps.last() {
                        Some(s) => (s.h.as_slice(), s.c.as_slice()),
                        None => (zeros.as_slice(), zeros.as_slice()),
                    };
                    let step = cell.forward(&inputs[pos], hp, cp);
                    steps.push(step);
                }
                dir_traces.push(DirTrace { positions, steps });
            }
            let outputs = layer_outputs(&dir_traces, n, h);
            layers.push(LayerTrace {
                inputs: std::mem::replace(&mut inputs, outputs),
                dirs: dir_traces,
            });
        }
        let top = &inputs;
        let mut rep = vec![T::zero(); self.layout.rep];
        if n > 0 {
            match self.arch.readout {
                Readout::Final => {
                    let last = layers.last().expect("at least one layer");
                    for (d, dt) in last.dirs.iter().enumerate() {
                        rep[d * h..(d + 1) * h].copy_from_slice(&dt.steps[n - 1].h);
                    }
                }
                Readout::MeanPool => {
                    let scale = T::one() / T::from_usize_lossy(n);
                    for out in top {
                        for (r, &v) in rep.iter_mut().zip(out) {
                            *r += v * scale;
                        }
                    }
                }
            }
        }
        let l = &self.layout;
        let logit = l.out_w_dot(&self.params, &rep);
        Trace {
            refs,
            layers,
            rep,
            logit,
        }
    }

    pub fn logit<S: AsRef<str>>(&self, tokens: &[S]) -> T {
        self.forward(tokens).logit
    }

    pub fn probability<S: AsRef<str>>(&self, tokens: &[S]) -> T {
        sigmoid(self.logit(tokens))
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> Prediction {
        Prediction::from_probability(self.probability(tokens).to_f64_lossy())
    }

    /// Binary cross-entropy of one example, from the logit so that it never overflows.
    pub fn loss(&self, example: &Example) -> T {
        bce_from_logit(self.logit(&example.tokens), example.label)
    }

    pub fn loss_and_gradient(&self, example: &Example) -> (T, Gradient<T>) {
        let trace = self.forward(&example.tokens);
        let loss = bce_from_logit(trace.logit, example.label);
        let mut grad = Gradient::zeros(self.params.len());
        self.backward(&trace, example.label, &mut grad);
        (loss, grad)
    }

    fn backward(&self, trace: &Trace<T>, label: bool, grad: &mut Gradient<T>) {
        let l = &self.layout;
        let h = l.hidden;
        let y = if label { T::one() } else { T::zero() };
        let dz = sigmoid(trace.logit) - y;
        for (k, &r) in trace.rep.iter().enumerate() {
            grad.dense[l.out_w + k] += dz * r;
        }
        grad.dense[l.out_b] += dz;
        let n = trace.refs.len();
        if n == 0 {
            return;
        }
        let drep: Vec<T> = self.params[l.out_w..l.out_b]
            .iter()
            .map(|&w| w * dz)
            .collect();
        let width = h * l.directions;
        let mut d_out = vec![vec![T::zero(); width]; n];
        match self.arch.readout {
            Readout::Final => {
                let top = trace.layers.last().expect("at least one layer");
                for (d, dt) in top.dirs.iter().enumerate() {
                    let pos = dt.positions[n - 1];
                    for k in 0..h {
                        d_out[pos][d * h + k] += drep[d * h + k];
                    }
                }
            }
            Readout::MeanPool => {
                let scale = T::one() / T::from_usize_lossy(n);
                for row in &mut d_out {
                    for (g, &r) in row.iter_mut().zip(&drep) {
                        *g += r * scale;
                    }
                }
            }
        }
        for (layer, lt) in trace.layers.iter().enumerate().rev() {
            let input_width = lt.inputs.first().map_or(0, Vec::len);
            let mut d_in = vec![vec![T::zero(); input_width]; n];
            for (d, dt) in lt.dirs.iter().enumerate() {
                let slot = layer * l.directions + d;
                let cell = l.cell(&self.params, slot);
                let mut cg = l.cell_grads(&mut grad.dense, slot);
                let zeros = vec![T::zero(); h];
                let mut dh_next = vec![T::zero(); h];
                let mut dc_next = vec![T::zero(); h];
                for s in (0..n).rev() {
                    let pos = dt.positions[s];
                    let (hp, cp) = if s == 0 {
                        (zeros.as_slice(), zeros.as_slice())
                    } else {
                        (dt.steps[s - 1].h.as_slice(), dt.steps[s - 1].c.as_slice())
                    };
                    let dh: Vec<T> = (0..h).map(|k| d_out[pos][d * h + k] + dh_next[k]).collect();
                    let (dx, dhp, dcp) = cell.backward(
                        &lt.inputs[pos],
                        hp,
                        cp,
                        &dt.steps[s],
                        &dh,
                        &dc_next,
                        &mut cg,
                    );
                    for (a, b) in d_in[pos].iter_mut().zip(dx) {
                        *a += b;
                    }
                    dh_next = dhp;
                    dc_next = dcp;
                }
            }
            d_out = d_in;
        }
        for (pos, r) in trace.refs.iter().enumerate() {
            match r {
                EmbedRef::Row(row) => grad.add_to_row(*row, &d_out[pos], T::one()),
                EmbedRef::Buckets(buckets) => {
                    let share = T::one() / T::from_usize_lossy(buckets.len());
                    for &b in buckets {
                        grad.add_to_row(b, &d_out[pos], share);
                    }
                }
                EmbedRef::Fixed => {}
            }
        }
    }

    /// Mini-batch training with Adam, global-norm clipping and early stopping on validation
    /// F1. The parameters of the best validation epoch are restored before returning.
    pub fn train(
        &mut self,
        train: &[Example],
        validation: &[Example],
        config: &TrainConfig,
    ) -> Result<TrainReport, ModelError> {
        check_both_classes(train)?;
        if validation.is_empty() {
            return Err(ModelError::Config("validation set is empty".into()));
        }
        if config.batch_size == 0 {
            return Err(ModelError::Config("batch size must be positive".into()));
        }
        let mut adam = Adam::new(config.adam, self.params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let clip = T::from_f64_lossy(config.clip_norm);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut history = Vec::new();
        let mut best: Option<Snapshot<T>> = None;
        let mut since_best = 0;
        for epoch in 1..=config.max_epochs {
            order.shuffle(&mut rng);
            let mut total_loss = 0.0;
            for (b, batch) in order.chunks(config.batch_size).enumerate() {
                let mut grad = Gradient::zeros(self.params.len());
                for &i in batch {
                    let trace = self.forward(&train[i].tokens);
                    let loss = bce_from_logit(trace.logit, train[i].label).to_f64_lossy();
                    if !loss.is_finite() {
                        return Err(ModelError::Diverged {
                            epoch,
                            batch: b,
                            loss,
                        });
                    }
                    total_loss += loss;
                    self.backward(&trace, train[i].label, &mut grad);
                }
                grad.scale(T::one() / T::from_usize_lossy(batch.len()));
                let norm = grad.clip(clip).to_f64_lossy();
                if !norm.is_finite() {
                    return Err(ModelError::Diverged {
                        epoch,
                        batch: b,
                        loss: norm,
                    });
                }
                adam.step(&mut self.params, &grad, &mut self.embedding);
            }
            let eval = self.evaluate(validation);
            let record = EpochRecord {
                epoch,
                train_loss: total_loss / train.len() as f64,
                val_loss: eval.loss,
                val_f1: eval.f1,
                val_accuracy: eval.accuracy,
            };
            log::debug!("epoch {epoch}: {record:?}");
            if !record.val_loss.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    batch: 0,
                    loss: record.val_loss,
                });
            }
            history.push(record);
            let improved = match &best {
                None => true,
                Some((f1, loss, ..)) => eval.f1 > *f1 || (eval.f1 == *f1 && eval.loss < *loss),
            };
            if improved {
                best = Some((
                    eval.f1,
                    eval.loss,
                    epoch,
                    self.params.clone(),
                    self.embedding.clone(),
                ));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
        }
        let (best_f1, _, best_epoch, params, embedding) =
            best.ok_or_else(|| ModelError::Config("max_epochs must be positive".into()))?;
        self.params = params;
        self.embedding = embedding;
        Ok(TrainReport {
            history,
            best_epoch,
            best_val_f1: best_f1,
            parameters: self.count_parameters(),
        })
    }

    /// Mean loss, binary F1 and accuracy on labelled examples.
    pub fn evaluate(&self, examples: &[Example]) -> Evaluation {
        let mut cm = ConfusionMatrix::default();
        let mut loss = 0.0;
        for e in examples {
            let logit = self.logit(&e.tokens);
            loss += bce_from_logit(logit, e.label).to_f64_lossy();
            cm.record(logit >= T::zero(), e.label);
        }
        match metrics(&cm) {
            Ok(m) => Evaluation {
                loss: loss / examples.len() as f64,
                f1: m.f1_binary,
                accuracy: m.accuracy,
            },
            Err(_) => Evaluation {
                loss: 0.0,
                f1: 0.0,
                accuracy: 0.0,
            },
        }
    }
}

impl Layout {
    fn out_w_dot<T: Scalar>(&self, params: &[T], rep: &[T]) -> T {
        params[self.out_w..self.out_b]
            .iter()
            .zip(rep)
            .fold(params[self.out_b], |acc, (&w, &r)| acc + w * r)
    }
}

/// Dense block names and shapes for an architecture over `input`-wide embeddings.
pub fn dense_block_shapes(arch: &Architecture, input: usize) -> Vec<BlockShape> {
    let layout = Layout::new(arch, input);
    let h = layout.hidden;
    let mut out = Vec::new();
    for (k, slot) in layout.slots.iter().enumerate() {
        let prefix = format!(
            "lstm.{}.{}",
            k / layout.directions,
            direction_name(k % layout.directions)
        );
        out.push(BlockShape {
            name: format!("{prefix}.w"),
            shape: vec![4 * h, slot.input],
        });
        out.push(BlockShape {
            name: format!("{prefix}.u"),
            shape: vec![4 * h, h],
        });
        out.push(BlockShape {
            name: format!("{prefix}.b"),
            shape: vec![4 * h],
        });
    }
    out.push(BlockShape {
        name: "output.w".into(),
        shape: vec![layout.rep],
    });
    out.push(BlockShape {
        name: "output.b".into(),
        shape: vec![1],
    });
    out
}

fn direction_name(d: usize) -> &'static str {
    if d == 0 {
        "fwd"
    } else {
        "bwd"
    }
}

fn layer_outputs<T: Scalar>(dirs: &[DirTrace<T>], n: usize, h: usize) -> Vec<Vec<T>> {
    let mut out = vec![vec![T::zero(); h * dirs.len()]; n];
    for (d, dt) in dirs.iter().enumerate() {
        for (s, &pos) in dt.positions.iter().enumerate() {
            out[pos][d * h..(d + 1) * h].copy_from_slice(&dt.steps[s].h);
        }
    }
    out
}

/// `-[y ln sigma(z) + (1 - y) ln(1 - sigma(z))]`, written as `softplus(z) - y z`.
pub fn bce_from_logit<T: Scalar>(z: T, label: bool) -> T {
    let softplus = if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    if label {
        softplus - z
    } else {
        softplus
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub parameters: ParameterCount,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(layers: usize, hidden: usize, bidirectional: bool) -> Architecture {
        Architecture {
            layers,
            hidden,
            bidirectional,
            readout: Readout::Final,
            max_tokens: 32,
        }
    }

    fn toy_examples() -> Vec<Example> {
        let mut out = Vec::new();
        for i in 0..40 {
            let pos = i % 2 == 0;
            let filler = ["wir", "waren", "hier", "mit", "dem", "zimmer"][i % 6];
            let key = if pos {
                ["italiener", "briten", "franzosen"][i % 3]
            } else {
                ["familien", "kinder", "paare"][i % 3]
            };
            out.push(Example::new(&[filler, "viele", key, "im", "hotel"], pos));
        }
        out
    }

    #[test]
    fn parameter_counts_follow_the_gate_formula() {
        let corpus = toy_examples();
        let m = RecurrentClassifier::<f64>::learned(arch(2, 5, true), 3, &corpus, 1, 1).unwrap();
        let c = m.count_parameters();
        let per = |d: usize| 4 * (5 * d + 5 * 5 + 5);
        let vocab = match m.embedding() {
            EmbeddingLayer::Learned { words, .. } => words.len(),
            _ => unreachable!(),
        };
        let expected = vocab * 3 + 2 * per(3) + 2 * per(10) + 10 + 1;
        assert_eq!(c.trainable, expected);
        assert_eq!(c.frozen, 0);
        assert_eq!(m.params().len(), 2 * per(3) + 2 * per(10) + 11);
        let shapes: usize = m.dense_blocks().iter().map(BlockShape::len).sum();
        assert_eq!(shapes, m.params().len());
    }

    #[test]
    fn empty_input_reduces_to_the_output_bias() {
        let m = RecurrentClassifier::<f64>::learned(arch(1, 4, true), 3, &toy_examples(), 1, 2)
            .unwrap();
        let bias = *m.params().last().unwrap();
        assert_eq!(m.probability(&Vec::<String>::new()), sigmoid(bias));
        let (_, g) = m.loss_and_gradient(&Example::new(&Vec::<String>::new(), true));
        let nonzero: Vec<usize> = g
            .dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![m.params().len() - 1]);
        assert!(g.rows.is_empty());
    }

    #[test]
    fn unknown_tokens_map_to_the_unknown_row() {
        let m = RecurrentClassifier::<f64>::learned(arch(1, 2, false), 2, &toy_examples(), 1, 0)
            .unwrap();
        let (_, g) = m.loss_and_gradient(&Example::new(&["nie", "gesehen"], true));
        assert_eq!(g.rows.keys().copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        assert!((bce_from_logit(0.0f64, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_from_logit(800.0f64, false) - 800.0).abs() < 1e-9);
        assert!(bce_from_logit(800.0f64, true).abs() < 1e-12);
        assert!(bce_from_logit(-800.0f64, true).is_finite());
    }

    #[test]
    fn learns_a_keyword_task_and_is_deterministic() {
        let data = toy_examples();
        let (train, val) = data.split_at(30);
        let cfg = TrainConfig {
            adam: AdamConfig {
                learning_rate: 0.02,
                ..AdamConfig::default()
            },
            batch_size: 8,
            max_epochs: 40,
            patience: 40,
            clip_norm: 5.0,
            seed: 3,
        };
        let run = || {
            let mut m =
                RecurrentClassifier::<f64>::learned(arch(1, 8, true), 6, train, 1, 11).unwrap();
            let report = m.train(train, val, &cfg).unwrap();
            (m, report)
        };
        let (m, report) = run();
        assert!(report.best_val_f1 >= 0.99, "{:?}", report.history.last());
        let (m2, report2) = run();
        assert_eq!(report, report2);
        let bits = |m: &RecurrentClassifier<f64>| {
            m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&m), bits(&m2));
    }

    #[test]
    fn f32_models_train_too() {
        let data = toy_examples();
        let (train, val) = data.split_at(30);
        let mut m = RecurrentClassifier::<f32>::learned(arch(1, 4, true), 4, train, 1, 1).unwrap();
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let report = m.train(train, val, &cfg).unwrap();
        assert_eq!(report.history.len(), 3);
        assert!(report.history.iter().all(|e| e.train_loss.is_finite()));
    }

    #[test]
    fn single_class_training_sets_are_rejected() {
        let data: Vec<Example> = toy_examples().into_iter().filter(|e| e.label).collect();
        let mut m = RecurrentClassifier::<f64>::learned(arch(1, 2, false), 2, &data, 1, 0).unwrap();
        assert!(matches!(
            m.train(&data, &data, &TrainConfig::default()),
            Err(ModelError::SingleClass(_))
        ));
    }

    fn memorization_set() -> Vec<Example> {
        let rows: [(&[&str], bool); 10] = [
            (&["viele", "italiener", "im", "hotel"], true),
            (&["das", "zimmer", "war", "sauber"], false),
            (&["lauter", "briten", "am", "pool"], true),
            (&["beim", "italiener", "gegessen"], false),
            (&["die", "amis", "waren", "laut"], true),
            (&["das", "essen", "war", "gut"], false),
            (&["fast", "nur", "deutsche", "gäste"], true),
            (&["der", "pool", "war", "kalt"], false),
            (&["einige", "franzosen", "beim", "frühstück"], true),
            (
                &["freundliches", "personal", "an", "der", "rezeption"],
                false,
            ),
        ];
        rows.iter().map(|(t, l)| Example::new(t, *l)).collect()
    }

    #[test]
    fn memorizes_ten_sentences_within_two_hundred_epochs() {
        let data = memorization_set();
        let mut m = RecurrentClassifier::<f64>::learned(arch(1, 8, true), 6, &data, 1, 3).unwrap();
        let config = TrainConfig {
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            batch_size: 5,
            max_epochs: 200,
            patience: 200,
            ..TrainConfig::default()
        };
        m.train(&data, &data, &config).unwrap();
        assert!(
            m.evaluate(&data).loss < 0.05,
            "loss {}",
            m.evaluate(&data).loss
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(8))]

        #[test]
        fn first_epoch_lowers_the_loss(seed in 0u64..1000) {
            let data = memorization_set();
            let mut m = RecurrentClassifier::<f64>::learned(arch(1, 6, false), 4, &data, 1, seed).unwrap();
            let before = m.evaluate(&data).loss;
            let config = TrainConfig {
                adam: AdamConfig {
                    learning_rate: 1e-2,
                    ..AdamConfig::default()
                },
                batch_size: 2,
                max_epochs: 1,
                seed,
                ..TrainConfig::default()
            };
            m.train(&data, &data, &config).unwrap();
            proptest::prop_assert!(m.evaluate(&data).loss < before);
        }
    }
}
