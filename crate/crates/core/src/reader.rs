//! Attention-based bidirectional-GRU reader.
//!
//! Context and query share one embedding matrix but have their own forward
//! and backward GRUs. The query is the mean of its concatenated bidirectional
//! states; each context position is scored by
//! `s(t) = w_s . tanh(W h_doc(t) + U h_query)`, and the softmax of the scores
//! weights the context states. The attended context and the query vector are
//! concatenated and projected onto the vocabulary:
//!
//! ```text
//! P(a | D, Q) = softmax(W_r [sum_t alpha(t) h_doc(t) ; h_query])
//! ```
//!
//! GRU cell: `z = sigmoid(W_z x + U_z h + b_z)`, `r = sigmoid(W_r x + U_r h + b_r)`,
//! `h~ = tanh(W_h x + U_h (r * h) + b_h)`, `h' = (1 - z) * h + z * h~`, with
//! zero initial state.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{NodeId, Tape, Tensor};
use crate::vocab::{MappedTriple, Vocabulary};

pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReaderConfig {
    pub embed_dim: usize,
    /// Units per direction.
    pub hidden_dim: usize,
    pub vocab_total: usize,
    pub rng_seed: u64,
}

impl ReaderConfig {
    pub fn new(embed_dim: usize, hidden_dim: usize, vocab_total: usize, rng_seed: u64) -> Self {
        ReaderConfig {
            embed_dim,
            hidden_dim,
            vocab_total,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.vocab_total == 0 {
            return Err(Error::Invalid(format!(
                "reader dimensions must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Width of one bidirectional state.
    pub fn state_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    /// Width of the attention hidden layer (`W`, `U` rows).
    pub fn attention_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    DocForward = 0,
    DocBackward = 1,
    QueryForward = 2,
    QueryBackward = 3,
}

impl Encoder {
    pub const ALL: [Encoder; 4] = [
        Encoder::DocForward,
        Encoder::DocBackward,
        Encoder::QueryForward,
        Encoder::QueryBackward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Encoder::DocForward => "doc_fwd",
            Encoder::DocBackward => "doc_bwd",
            Encoder::QueryForward => "query_fwd",
            Encoder::QueryBackward => "query_bwd",
        }
    }
}

/// The nine tensors of one GRU, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    InUpdate = 0,
    RecUpdate,
    BiasUpdate,
    InReset,
    RecReset,
    BiasReset,
    InCandidate,
    RecCandidate,
    BiasCandidate,
}

const GATE_NAMES: [&str; 9] = [
    "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h",
];

pub const EMBEDDING: usize = 0;
pub const ATT_W: usize = 37;
pub const ATT_U: usize = 38;
pub const ATT_S: usize = 39;
pub const OUTPUT: usize = 40;
pub const NUM_TENSORS: usize = 41;

pub fn gru_index(enc: Encoder, gate: Gate) -> usize {
    1 + 9 * enc as usize + gate as usize
}

pub fn param_names() -> Vec<String> {
    let mut names = vec!["embedding".to_string()];
    for enc in Encoder::ALL {
        for g in GATE_NAMES {
            names.push(format!("{}.{g}", enc.name()));
        }
    }
    names.extend(["att.w", "att.u", "att.s", "output"].map(String::from));
    names
}

pub fn param_shapes(cfg: &ReaderConfig) -> Vec<Vec<usize>> {
    let (e, h, v, a, s) = (
        cfg.embed_dim,
        cfg.hidden_dim,
        cfg.vocab_total,
        cfg.attention_dim(),
        cfg.state_dim(),
    );
    let mut shapes = vec![vec![v, e]];
    for _ in Encoder::ALL {
        for _ in 0..3 {
            shapes.extend([vec![h, e], vec![h, h], vec![h]]);
        }
    }
    shapes.extend([vec![a, s], vec![a, s], vec![1, a], vec![v, 2 * s]]);
    shapes
}

fn is_recurrent(index: usize) -> bool {
    (1..ATT_W).contains(&index) && matches!((index - 1) % 9, 1 | 4 | 7)
}

fn is_bias(index: usize) -> bool {
    (1..ATT_W).contains(&index) && matches!((index - 1) % 9, 2 | 5 | 8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaderParams {
    config: ReaderConfig,
    tensors: Vec<Tensor>,
}

/// Embeddings, input projections, attention and output matrices are drawn
/// from `U[-0.1, 0.1)`; recurrent matrices are random orthogonal; biases
/// start at zero.
pub fn init_params(cfg: &ReaderConfig) -> Result<ReaderParams> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.rng_seed);
    let tensors = param_shapes(cfg)
        .iter()
        .enumerate()
        .map(|(i, shape)| {
            if is_bias(i) {
                Tensor::zeros(shape)
            } else if is_recurrent(i) {
                Tensor::orthogonal(shape[0], shape[1], &mut rng)
            } else {
                Tensor::uniform(shape, -INIT_SCALE, INIT_SCALE, &mut rng)
            }
        })
        .collect();
    Ok(ReaderParams {
        config: *cfg,
        tensors,
    })
}

impl ReaderParams {
    pub fn from_tensors(config: ReaderConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = param_shapes(&config);
        if tensors.len() != shapes.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, s), name) in tensors.iter().zip(&shapes).zip(param_names()) {
            if t.shape() != s.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, config implies {s:?}",
                    t.shape()
                )));
            }
        }
        Ok(ReaderParams { config, tensors })
    }

    pub fn config(&self) -> &ReaderConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Parameters whose prediction ignores the input: every recurrent state
/// saturates at `+1`, so the output logits are proportional to `scores`.
pub fn preference_params(cfg: &ReaderConfig, scores: &[f64]) -> Result<ReaderParams> {
    cfg.validate()?;
    if scores.len() != cfg.vocab_total {
        return Err(Error::Invalid(format!(
            "{} scores for {} outputs",
            scores.len(),
            cfg.vocab_total
        )));
    }
    let mut tensors: Vec<Tensor> = param_shapes(cfg).iter().map(|s| Tensor::zeros(s)).collect();
    for enc in Encoder::ALL {
        tensors[gru_index(enc, Gate::BiasUpdate)].fill(40.0);
        tensors[gru_index(enc, Gate::BiasCandidate)].fill(40.0);
    }
    let out = &mut tensors[OUTPUT];
    let cols = out.cols();
    for (id, &s) in scores.iter().enumerate() {
        out.data_mut()[id * cols..(id + 1) * cols].fill(s);
    }
    ReaderParams::from_tensors(*cfg, tensors)
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// `[T, 2h]`: concatenated forward/backward context states.
    pub h_doc: Tensor,
    /// `[2h]`: mean of the query's bidirectional states.
    pub h_query: Tensor,
    /// `[T, a]`: attention pre-activations.
    pub m: Tensor,
    pub alpha: Tensor,
    pub h_doc_att: Tensor,
    /// `[4h]`: `[h_doc_att; h_query]`.
    pub r: Tensor,
    pub dist: Tensor,
}

struct Graph {
    h_doc: NodeId,
    h_query: NodeId,
    m: Vec<NodeId>,
    alpha: NodeId,
    att: NodeId,
    r: NodeId,
    dist: NodeId,
}

fn gru_step(tape: &mut Tape<'_>, enc: Encoder, x: NodeId, h: NodeId) -> Result<NodeId> {
    let p = |g: Gate| tape.param(gru_index(enc, g));
    let (wz, uz, bz) = (p(Gate::InUpdate), p(Gate::RecUpdate), p(Gate::BiasUpdate));
    let (wr, ur, br) = (p(Gate::InReset), p(Gate::RecReset), p(Gate::BiasReset));
    let (wh, uh, bh) = (
        p(Gate::InCandidate),
        p(Gate::RecCandidate),
        p(Gate::BiasCandidate),
    );

    let gate = |tape: &mut Tape<'_>, w, u, b, hh| -> Result<NodeId> {
        let a = tape.matmul(w, x)?;
        let c = tape.matmul(u, hh)?;
        let s = tape.add(a, c)?;
        tape.add(s, b)
    };
    let z_pre = gate(tape, wz, uz, bz, h)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = gate(tape, wr, ur, br, h)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul(r, h)?;
    let cand_pre = gate(tape, wh, uh, bh, rh)?;
    let cand = tape.tanh(cand_pre)?;
    // (1 - z) * h + z * cand == h + z * (cand - h)
    let diff = tape.sub(cand, h)?;
    let step = tape.mul(z, diff)?;
    tape.add(h, step)
}

/// Concatenated `[fwd(t); bwd(t)]` for every position.
fn encode(
    tape: &mut Tape<'_>,
    fwd: Encoder,
    bwd: Encoder,
    inputs: &[NodeId],
    hidden: usize,
) -> Result<Vec<NodeId>> {
    let zero = tape.constant(Tensor::zeros(&[hidden]));
    let mut forward = Vec::with_capacity(inputs.len());
    let mut h = zero;
    for &x in inputs {
        h = gru_step(tape, fwd, x, h)?;
        forward.push(h);
    }
    let mut backward = vec![zero; inputs.len()];
    let mut h = zero;
    for (t, &x) in inputs.iter().enumerate().rev() {
        h = gru_step(tape, bwd, x, h)?;
        backward[t] = h;
    }
    forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat(&[f, b]))
        .collect()
}

fn check_ids(ids: &[usize], what: &str, cfg: &ReaderConfig) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::Invalid(format!("empty {what}")));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= cfg.vocab_total) {
        return Err(Error::Invalid(format!(
            "{what} id {bad} out of range for vocabulary of {}",
            cfg.vocab_total
        )));
    }
    Ok(())
}

fn build(tape: &mut Tape<'_>, cfg: &ReaderConfig, mapped: &MappedTriple) -> Result<Graph> {
    check_ids(&mapped.doc_ids, "document", cfg)?;
    check_ids(&mapped.query_ids, "query", cfg)?;
    let emb = tape.param(EMBEDDING);
    let doc_x: Vec<NodeId> = mapped
        .doc_ids
        .iter()
        .map(|&id| tape.row(emb, id))
        .collect::<Result<_>>()?;
    let query_x: Vec<NodeId> = mapped
        .query_ids
        .iter()
        .map(|&id| tape.row(emb, id))
        .collect::<Result<_>>()?;

    let h = cfg.hidden_dim;
    let doc_states = encode(tape, Encoder::DocForward, Encoder::DocBackward, &doc_x, h)?;
    let query_states = encode(
        tape,
        Encoder::QueryForward,
        Encoder::QueryBackward,
        &query_x,
        h,
    )?;

    let q_stack = tape.stack(&query_states)?;
    let h_query = tape.mean_rows(q_stack)?;

    let u_q = tape.matmul(tape.param(ATT_U), h_query)?;
    let mut m = Vec::with_capacity(doc_states.len());
    let mut scores = Vec::with_capacity(doc_states.len());
    for &hd in &doc_states {
        let w_h = tape.matmul(tape.param(ATT_W), hd)?;
        let pre = tape.add(w_h, u_q)?;
        let mt = tape.tanh(pre)?;
        scores.push(tape.matmul(tape.param(ATT_S), mt)?);
        m.push(mt);
    }
    let scores = tape.concat(&scores)?;
    let alpha = tape.softmax(scores)?;

    let h_doc = tape.stack(&doc_states)?;
    let h_doc_t = tape.transpose(h_doc)?;
    let att = tape.matmul(h_doc_t, alpha)?;
    let r = tape.concat(&[att, h_query])?;
    let logits = tape.matmul(tape.param(OUTPUT), r)?;
    let dist = tape.softmax(logits)?;
    Ok(Graph {
        h_doc,
        h_query,
        m,
        alpha,
        att,
        r,
        dist,
    })
}

fn new_tape(params: &ReaderParams) -> Tape<'_> {
    Tape::new(params.tensors.iter())
}

pub fn forward(params: &ReaderParams, mapped: &MappedTriple) -> Result<ForwardCache> {
    let mut tape = new_tape(params);
    let g = build(&mut tape, &params.config, mapped)?;
    let m_rows: Vec<&Tensor> = g.m.iter().map(|&id| tape.value(id)).collect();
    Ok(ForwardCache {
        h_doc: tape.value(g.h_doc).clone(),
        h_query: tape.value(g.h_query).clone(),
        m: crate::tensor::stack(&m_rows)?,
        alpha: tape.value(g.alpha).clone(),
        h_doc_att: tape.value(g.att).clone(),
        r: tape.value(g.r).clone(),
        dist: tape.value(g.dist).clone(),
    })
}

/// Negative log-likelihood of `answer_id` under the cached distribution.
pub fn loss(cache: &ForwardCache, answer_id: usize) -> Result<f64> {
    let p = cache.dist.data().get(answer_id).ok_or_else(|| {
        Error::Invalid(format!(
            "answer id {answer_id} out of range for {} outputs",
            cache.dist.len()
        ))
    })?;
    let l = -p.ln();
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::NonFinite("loss"))
    }
}

/// Loss and gradients for every parameter tensor, in storage order.
pub fn loss_and_gradients(
    params: &ReaderParams,
    mapped: &MappedTriple,
) -> Result<(f64, Vec<Tensor>)> {
    let answer = mapped
        .answer_id
        .ok_or_else(|| Error::Invalid("training sample without an answer".to_string()))?;
    if answer >= params.config.vocab_total {
        return Err(Error::Invalid(format!("answer id {answer} out of range")));
    }
    let mut tape = new_tape(params);
    let g = build(&mut tape, &params.config, mapped)?;
    let nll = tape.nll(g.dist, answer)?;
    let value = tape.value(nll).data()[0];
    let grads = tape.backward(nll)?;
    Ok((value, grads))
}

/// Arg-max of `dist`, over the ids in `doc_ids` when `restrict` is set. Ties
/// go to the lowest id.
pub fn argmax(dist: &Tensor, doc_ids: &[usize], restrict: bool) -> Result<(usize, f64)> {
    let d = dist.data();
    let mut best: Option<(usize, f64)> = None;
    let mut consider = |id: usize| {
        if let Some(&p) = d.get(id) {
            match best {
                Some((bid, bp)) if p < bp || (p == bp && id >= bid) => {}
                _ => best = Some((id, p)),
            }
        }
    };
    if restrict {
        doc_ids.iter().for_each(|&id| consider(id));
    } else {
        (0..d.len()).for_each(&mut consider);
    }
    best.ok_or_else(|| Error::Invalid("no candidate ids to predict from".to_string()))
}

pub fn predict(
    params: &ReaderParams,
    mapped: &MappedTriple,
    restrict_to_context: bool,
) -> Result<(usize, f64)> {
    let cache = forward(params, mapped)?;
    argmax(&cache.dist, &mapped.doc_ids, restrict_to_context)
}

const MAGIC: &[u8; 8] = b"CZPCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters plus the fingerprint of the vocabulary they were trained with.
///
/// Layout (little-endian): magic, `u32` version, `u64` embed/hidden/vocab/
/// seed, `u32`-prefixed fingerprint, `u32` tensor count, then per tensor a
/// `u32`-prefixed name, `u32` rank, `u64` dims and raw `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ReaderParams,
    pub vocab_fingerprint: String,
}

struct Cursor<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Cursor<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8".to_string()))
    }
}

impl Checkpoint {
    pub fn new(params: ReaderParams, vocab_fingerprint: impl Into<String>) -> Self {
        Checkpoint {
            params,
            vocab_fingerprint: vocab_fingerprint.into(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.params.config;
        let mut out = Vec::with_capacity(64 + 8 * self.params.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            cfg.embed_dim as u64,
            cfg.hidden_dim as u64,
            cfg.vocab_total as u64,
            cfg.rng_seed,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        put_str(&mut out, &self.vocab_fingerprint);
        out.extend_from_slice(&(self.params.tensors.len() as u32).to_le_bytes());
        for (name, t) in param_names().iter().zip(&self.params.tensors) {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".to_string()));
        }
        let version = c.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config = ReaderConfig {
            embed_dim: c.u64()? as usize,
            hidden_dim: c.u64()? as usize,
            vocab_total: c.u64()? as usize,
            rng_seed: c.u64()?,
        };
        config.validate()?;
        let vocab_fingerprint = c.string()?;
        let count = c.u32()? as usize;
        let names = param_names();
        let shapes = param_shapes(&config);
        if count != names.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                names.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in names.iter().zip(&shapes) {
            let found = c.string()?;
            if &found != name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{name}`, found `{found}`"
                )));
            }
            let rank = c.u32()? as usize;
            let dims: Vec<usize> = (0..rank)
                .map(|_| c.u64().map(|d| d as usize))
                .collect::<Result<_>>()?;
            if &dims != shape {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {dims:?}, config implies {shape:?}"
                )));
            }
            let n: usize = dims.iter().product();
            let raw = c.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(dims, data)?;
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("`{name}` has non-finite values")));
            }
            tensors.push(t);
        }
        if c.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".to_string()));
        }
        Ok(Checkpoint {
            params: ReaderParams { config, tensors },
            vocab_fingerprint,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Checks that this checkpoint was trained with `vocab`.
    pub fn verify(&self, vocab: &Vocabulary) -> Result<()> {
        let expected = vocab.fingerprint();
        if expected != self.vocab_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected,
                found: self.vocab_fingerprint.clone(),
            });
        }
        if self.params.config.vocab_total != vocab.total() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} outputs, vocabulary has {}",
                self.params.config.vocab_total,
                vocab.total()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn mapped(doc: Vec<usize>, query: Vec<usize>, answer: usize) -> MappedTriple {
        MappedTriple {
            doc_ids: doc,
            query_ids: query,
            answer_id: Some(answer),
            unk_table: Vec::new(),
        }
    }

    fn random_mapped(rng: &mut impl Rng, vocab: usize, dlen: usize, qlen: usize) -> MappedTriple {
        mapped(
            (0..dlen).map(|_| rng.random_range(0..vocab)).collect(),
            (0..qlen).map(|_| rng.random_range(0..vocab)).collect(),
            rng.random_range(0..vocab),
        )
    }

    /// Every value drawn from `U[-1, 1)`, so no gradient is vanishingly small.
    pub(crate) fn spread_params(cfg: &ReaderConfig, seed: u64) -> ReaderParams {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let tensors = param_shapes(cfg)
            .iter()
            .map(|s| Tensor::uniform(s, -1.0, 1.0, &mut rng))
            .collect();
        ReaderParams::from_tensors(*cfg, tensors).unwrap()
    }

    #[test]
    fn output_shape_follows_concatenation() {
        let p = init_params(&ReaderConfig::new(4, 4, 10, 1)).unwrap();
        assert_eq!(p.tensor(OUTPUT).shape(), &[10, 16]);
        assert_eq!(p.tensor(EMBEDDING).shape(), &[10, 4]);
        assert_eq!(p.tensors().len(), NUM_TENSORS);
        assert_eq!(param_names().len(), NUM_TENSORS);
        assert_eq!(param_names()[ATT_W], "att.w");
    }

    #[test]
    fn init_distributions() {
        let p = init_params(&ReaderConfig::new(5, 6, 30, 2)).unwrap();
        for (i, t) in p.tensors().iter().enumerate() {
            if is_recurrent(i) {
                let g = crate::tensor::matmul(&t.transpose(), t).unwrap();
                for r in 0..6 {
                    for c in 0..6 {
                        let id = if r == c { 1.0 } else { 0.0 };
                        assert!((g.at(r, c) - id).abs() <= 1e-8);
                    }
                }
            } else if is_bias(i) {
                assert!(t.data().iter().all(|&x| x == 0.0));
            } else {
                assert!(t.data().iter().all(|&x| (-0.1..=0.1).contains(&x)));
            }
        }
        assert_eq!(p, init_params(&ReaderConfig::new(5, 6, 30, 2)).unwrap());
        assert_ne!(p, init_params(&ReaderConfig::new(5, 6, 30, 3)).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let p = init_params(&ReaderConfig::new(2, 2, 6, 1)).unwrap();
        assert!(forward(&p, &mapped(vec![], vec![1], 2)).is_err());
        assert!(forward(&p, &mapped(vec![1], vec![], 2)).is_err());
        assert!(forward(&p, &mapped(vec![9], vec![1], 2)).is_err());
        assert!(ReaderConfig::new(0, 2, 6, 1).validate().is_err());
    }

    #[test]
    fn single_token_document_attends_fully() {
        let p = init_params(&ReaderConfig::new(3, 3, 8, 4)).unwrap();
        let c = forward(&p, &mapped(vec![5], vec![1, 2], 5)).unwrap();
        assert_eq!(c.alpha.data(), &[1.0]);
        assert_eq!(c.h_doc_att.data(), c.h_doc.data());
    }

    #[test]
    fn distributions_are_normalized() {
        let p = init_params(&ReaderConfig::new(4, 3, 12, 4)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let c = forward(&p, &random_mapped(&mut rng, 12, 5, 3)).unwrap();
        assert!((c.alpha.data().iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        assert!((c.dist.data().iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        assert!(c.alpha.data().iter().all(|&a| a > 0.0 && a < 1.0));
        assert_eq!(c.r.len(), 4 * 3);
    }

    // Scalar re-derivation of the whole forward pass with plain loops.
    mod scalar {
        pub fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
            (0..rows)
                .map(|i| (0..cols).map(|j| m[i * cols + j] * x[j]).sum())
                .collect()
        }
        pub fn sig(x: f64) -> f64 {
            1.0 / (1.0 + (-x).exp())
        }
        pub fn softmax(x: &[f64]) -> Vec<f64> {
            let mx = x.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }
    }

    fn oracle_dist(p: &ReaderParams, m: &MappedTriple) -> (Vec<f64>, Vec<f64>) {
        use scalar::*;
        let cfg = p.config();
        let (e, h) = (cfg.embed_dim, cfg.hidden_dim);
        let emb = |id: usize| p.tensor(EMBEDDING).row(id).to_vec();
        let gru = |enc: Encoder, xs: &[Vec<f64>], reverse: bool| -> Vec<Vec<f64>> {
            let t = |g: Gate| p.tensor(gru_index(enc, g)).data();
            let mut state = vec![0.0; h];
            let mut out = vec![vec![]; xs.len()];
            let order: Vec<usize> = if reverse {
                (0..xs.len()).rev().collect()
            } else {
                (0..xs.len()).collect()
            };
            for i in order {
                let x = &xs[i];
                let wz = matvec(t(Gate::InUpdate), h, e, x);
                let uz = matvec(t(Gate::RecUpdate), h, h, &state);
                let wr = matvec(t(Gate::InReset), h, e, x);
                let ur = matvec(t(Gate::RecReset), h, h, &state);
                let z: Vec<f64> = (0..h)
                    .map(|k| sig(wz[k] + uz[k] + t(Gate::BiasUpdate)[k]))
                    .collect();
                let r: Vec<f64> = (0..h)
                    .map(|k| sig(wr[k] + ur[k] + t(Gate::BiasReset)[k]))
                    .collect();
                let rh: Vec<f64> = (0..h).map(|k| r[k] * state[k]).collect();
                let wh = matvec(t(Gate::InCandidate), h, e, x);
                let uh = matvec(t(Gate::RecCandidate), h, h, &rh);
                let c: Vec<f64> = (0..h)
                    .map(|k| (wh[k] + uh[k] + t(Gate::BiasCandidate)[k]).tanh())
                    .collect();
                state = (0..h)
                    .map(|k| (1.0 - z[k]) * state[k] + z[k] * c[k])
                    .collect();
                out[i] = state.clone();
            }
            out
        };
        let bi = |f: Encoder, b: Encoder, ids: &[usize]| -> Vec<Vec<f64>> {
            let xs: Vec<Vec<f64>> = ids.iter().map(|&i| emb(i)).collect();
            let fw = gru(f, &xs, false);
            let bw = gru(b, &xs, true);
            fw.into_iter()
                .zip(bw)
                .map(|(mut a, b)| {
                    a.extend(b);
                    a
                })
                .collect()
        };
        let hd = bi(Encoder::DocForward, Encoder::DocBackward, &m.doc_ids);
        let hq_all = bi(Encoder::QueryForward, Encoder::QueryBackward, &m.query_ids);
        let s = 2 * h;
        let hq: Vec<f64> = (0..s)
            .map(|k| hq_all.iter().map(|v| v[k]).sum::<f64>() / hq_all.len() as f64)
            .collect();
        let a = cfg.attention_dim();
        let uq = matvec(p.tensor(ATT_U).data(), a, s, &hq);
        let scores: Vec<f64> = hd
            .iter()
            .map(|v| {
                let wv = matvec(p.tensor(ATT_W).data(), a, s, v);
                let mt: Vec<f64> = (0..a).map(|k| (wv[k] + uq[k]).tanh()).collect();
                matvec(p.tensor(ATT_S).data(), 1, a, &mt)[0]
            })
            .collect();
        let alpha = softmax(&scores);
        let att: Vec<f64> = (0..s)
            .map(|k| hd.iter().zip(&alpha).map(|(v, al)| v[k] * al).sum())
            .collect();
        let r: Vec<f64> = att.into_iter().chain(hq).collect();
        let logits = matvec(p.tensor(OUTPUT).data(), cfg.vocab_total, 2 * s, &r);
        (softmax(&logits), alpha)
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let cfg = ReaderConfig::new(2, 2, 6, 0);
        let mut p = init_params(&cfg).unwrap();
        // Hand-set, well-spread values so every gate matters.
        for (i, t) in p.tensors_mut().iter_mut().enumerate() {
            for (j, x) in t.data_mut().iter_mut().enumerate() {
                *x = (((i * 31 + j * 17) % 23) as f64 - 11.0) / 10.0;
            }
        }
        let m = mapped(vec![3, 1, 4], vec![5, 1], 2);
        let c = forward(&p, &m).unwrap();
        let (dist, alpha) = oracle_dist(&p, &m);
        for (a, b) in c.dist.data().iter().zip(&dist) {
            assert!((a - b).abs() <= 1e-10);
        }
        for (a, b) in c.alpha.data().iter().zip(&alpha) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn loss_values() {
        let uniform = ForwardCache {
            h_doc: Tensor::zeros(&[1, 2]),
            h_query: Tensor::zeros(&[2]),
            m: Tensor::zeros(&[1, 2]),
            alpha: Tensor::vector(vec![1.0]),
            h_doc_att: Tensor::zeros(&[2]),
            r: Tensor::zeros(&[4]),
            dist: Tensor::vector(vec![0.1; 10]),
        };
        assert!((loss(&uniform, 3).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!(loss(&uniform, 10).is_err());
        let mut peaked = uniform.clone();
        peaked.dist = Tensor::vector(vec![1.0, 0.0]);
        assert_eq!(loss(&peaked, 0).unwrap(), 0.0);

        let p = init_params(&ReaderConfig::new(3, 3, 9, 5)).unwrap();
        let m = mapped(vec![1, 2, 3], vec![4, 1], 7);
        let c = forward(&p, &m).unwrap();
        assert_eq!(loss(&c, 7).unwrap(), -c.dist.data()[7].ln());
        let (l, _) = loss_and_gradients(&p, &m).unwrap();
        assert!((l - loss(&c, 7).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn restricted_prediction() {
        let dist = Tensor::vector(vec![0.05, 0.5, 0.2, 0.2, 0.05]);
        assert_eq!(argmax(&dist, &[2, 3, 4], true).unwrap().0, 2);
        assert_eq!(argmax(&dist, &[2, 3, 4], false).unwrap().0, 1);
        assert!(argmax(&dist, &[], true).is_err());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d: Vec<f64> = (0..20).map(|_| rng.random_range(0..5) as f64).collect();
            let ids: Vec<usize> = (0..6).map(|_| rng.random_range(0..20)).collect();
            let (got, _) = argmax(&Tensor::vector(d.clone()), &ids, true).unwrap();
            let mut sorted = ids.clone();
            sorted.sort();
            let best = sorted
                .iter()
                .copied()
                .max_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(b.cmp(&a)))
                .unwrap();
            assert_eq!(got, best);
        }
    }

    #[test]
    fn vocabulary_relabeling_is_equivariant() {
        let cfg = ReaderConfig::new(3, 3, 7, 8);
        let p = init_params(&cfg).unwrap();
        let perm = [4usize, 0, 6, 2, 1, 5, 3]; // new id of old id i
        let mut q = p.clone();
        for old in 0..7 {
            let new = perm[old];
            for (idx, cols) in [(EMBEDDING, 3), (OUTPUT, 12)] {
                let src = p.tensor(idx).row(old).to_vec();
                q.tensors_mut()[idx].data_mut()[new * cols..(new + 1) * cols].copy_from_slice(&src);
            }
        }
        let m = mapped(vec![1, 2, 3, 1], vec![0, 5], 6);
        let mq = mapped(
            m.doc_ids.iter().map(|&i| perm[i]).collect(),
            m.query_ids.iter().map(|&i| perm[i]).collect(),
            perm[6],
        );
        let a = forward(&p, &m).unwrap();
        let b = forward(&q, &mq).unwrap();
        for old in 0..7 {
            assert!((a.dist.data()[old] - b.dist.data()[perm[old]]).abs() < 1e-14);
        }
    }

    #[test]
    fn reversing_document_swaps_directions() {
        let cfg = ReaderConfig::new(3, 4, 9, 12);
        let p = init_params(&cfg).unwrap();
        let mut q = p.clone();
        for g in 0..9 {
            let f = 1 + g;
            let b = 1 + 9 + g;
            q.tensors_mut().swap(f, b);
        }
        let m = mapped(vec![1, 5, 2, 8, 3], vec![4, 1], 2);
        let mut rev = m.clone();
        rev.doc_ids.reverse();
        let a = forward(&p, &m).unwrap();
        let b = forward(&q, &rev).unwrap();
        let (t, h) = (5, 4);
        for i in 0..t {
            let orig = a.h_doc.row(i);
            let mirrored = b.h_doc.row(t - 1 - i);
            assert_eq!(&orig[..h], &mirrored[h..]);
            assert_eq!(&orig[h..], &mirrored[..h]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = ReaderConfig::new(3, 3, 8, 6);
        let p = spread_params(&cfg, 6);
        let m = mapped(vec![1, 2, 3, 2, 7], vec![4, 1, 6], 3);
        let (_, grads) = loss_and_gradients(&p, &m).unwrap();
        let h = 1e-5;
        for (ti, g) in grads.iter().enumerate() {
            let mut num = vec![0.0; g.len()];
            let mut q = p.clone();
            for j in 0..g.len() {
                let orig = q.tensors()[ti].data()[j];
                q.tensors_mut()[ti].data_mut()[j] = orig + h;
                let up = loss_and_gradients(&q, &m).unwrap().0;
                q.tensors_mut()[ti].data_mut()[j] = orig - h;
                let down = loss_and_gradients(&q, &m).unwrap().0;
                q.tensors_mut()[ti].data_mut()[j] = orig;
                num[j] = (up - down) / (2.0 * h);
            }
            let diff: f64 = g
                .data()
                .iter()
                .zip(&num)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = g
                .norm_sq()
                .sqrt()
                .max(num.iter().map(|x| x * x).sum::<f64>().sqrt());
            assert!(scale > 0.0, "{} has zero gradient", param_names()[ti]);
            assert!(
                diff / scale <= 1e-4,
                "{}: {}",
                param_names()[ti],
                diff / scale
            );
        }
        // Rows of unused ids get exactly zero embedding gradient.
        assert!(grads[EMBEDDING].row(5).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let p = init_params(&ReaderConfig::new(3, 2, 7, 9)).unwrap();
        let ck = Checkpoint::new(p, "abc123");
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
