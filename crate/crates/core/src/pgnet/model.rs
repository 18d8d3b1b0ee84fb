use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, ModelConfig};
use super::extended::ExtendedVocab;
use crate::autodiff::{Mat, ParamId, ParamStore, Tape, Var};
use crate::embeddings::{
    lookup_embed, mix_layers, mixed_contextual_embed, pseudo_contextual_embed, EmbeddingKind, EmbeddingRequest,
    LayerMixer, VectorStore,
};
use crate::error::{Error, Result};
use crate::preprocess::{Vocabulary, START};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmIds {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CoattIds {
    pub w: ParamId,
    pub proj: ParamId,
    pub proj_b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderIds {
    pub init_h: ParamId,
    pub init_h_b: ParamId,
    pub init_c: ParamId,
    pub init_c_b: ParamId,
    pub att_m: ParamId,
    pub att_s: ParamId,
    pub att_b: ParamId,
    pub att_v: ParamId,
    pub cell: LstmIds,
    pub out1: ParamId,
    pub out1_b: ParamId,
    pub out2: ParamId,
    pub out2_b: ParamId,
    pub pgen_c: ParamId,
    pub pgen_s: ParamId,
    pub pgen_x: ParamId,
    pub pgen_b: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub table: Option<ParamId>,
    pub mixer: Option<LayerMixer>,
    pub decoder_table: ParamId,
    pub enc_fwd: LstmIds,
    pub enc_bwd: LstmIds,
    pub coatt: Vec<CoattIds>,
    pub decoders: Vec<DecoderIds>,
}

struct Builder<'a> {
    params: &'a mut ParamStore,
    rng: ChaCha8Rng,
    range: f64,
    embedding_range: f64,
}

impl Builder<'_> {
    fn embedding(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let r = self.embedding_range;
        self.params.add_uniform(name, rows, cols, r, &mut self.rng)
    }

    fn weight(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let r = self.range;
        self.params.add_uniform(name, rows, cols, r, &mut self.rng)
    }

    fn bias(&mut self, name: String, cols: usize) -> ParamId {
        self.params.add_zeros(name, 1, cols)
    }

    fn lstm(&mut self, prefix: &str, input: usize, h: usize) -> LstmIds {
        LstmIds {
            wx: self.weight(format!("{prefix}.wx"), input, 4 * h),
            wh: self.weight(format!("{prefix}.wh"), h, 4 * h),
            b: self.bias(format!("{prefix}.b"), 4 * h),
        }
    }
}

fn build(config: &ModelConfig, vocab_size: usize, seed: u64) -> (ParamStore, Layout) {
    let mut params = ParamStore::new();
    let (h, d, v) = (config.hidden, config.embed_dim, vocab_size);
    let m = config.memory_width();
    let mut b = Builder {
        params: &mut params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        range: config.init_range,
        embedding_range: config.embedding_init_range,
    };

    let (table, mixer, decoder_table) = match config.mixer_layers() {
        None => {
            let t = b.embedding("embedding.table".into(), v, d);
            (Some(t), None, t)
        }
        Some(layers) => {
            let mixer = LayerMixer::register(b.params, "embedding.mixer", layers);
            let t = b.embedding("decoder_embedding.table".into(), v, d);
            (None, Some(mixer), t)
        }
    };
    let enc_fwd = b.lstm("encoder.fwd", d, h);
    let enc_bwd = b.lstm("encoder.bwd", d, h);

    let mut coatt = Vec::new();
    let mut decoders = Vec::new();
    for k in 0..config.architecture.heads() {
        if config.architecture.has_coattention() {
            coatt.push(CoattIds {
                w: b.weight(format!("coatt{k}.w"), 2 * h, 2 * h),
                proj: b.weight(format!("coatt{k}.proj"), 4 * h, h),
                proj_b: b.bias(format!("coatt{k}.proj_b"), h),
            });
        }
        let p = format!("decoder{k}");
        decoders.push(DecoderIds {
            init_h: b.weight(format!("{p}.init_h"), 2 * h, h),
            init_h_b: b.bias(format!("{p}.init_h_b"), h),
            init_c: b.weight(format!("{p}.init_c"), 2 * h, h),
            init_c_b: b.bias(format!("{p}.init_c_b"), h),
            att_m: b.weight(format!("{p}.att_m"), m, h),
            att_s: b.weight(format!("{p}.att_s"), h, h),
            att_b: b.bias(format!("{p}.att_b"), h),
            att_v: b.weight(format!("{p}.att_v"), 1, h),
            cell: b.lstm(&format!("{p}.cell"), d + m, h),
            out1: b.weight(format!("{p}.out1"), h + m, h),
            out1_b: b.bias(format!("{p}.out1_b"), h),
            out2: b.weight(format!("{p}.out2"), h, v),
            out2_b: b.bias(format!("{p}.out2_b"), v),
            pgen_c: b.weight(format!("{p}.pgen_c"), 1, m),
            pgen_s: b.weight(format!("{p}.pgen_s"), 1, h),
            pgen_x: b.weight(format!("{p}.pgen_x"), 1, d),
            pgen_b: b.bias(format!("{p}.pgen_b"), 1),
        });
    }
    let layout = Layout {
        table,
        mixer,
        decoder_table,
        enc_fwd,
        enc_bwd,
        coatt,
        decoders,
    };
    (params, layout)
}

/// Pointer-generator network with optional coattention heads.
#[derive(Debug, Clone)]
pub struct PgNet {
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamStore,
    pub(crate) layout: Layout,
    store: Option<Arc<VectorStore>>,
}

/// Inverted dropout with its own random stream.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn mask(&mut self, rows: usize, cols: usize) -> Mat {
        let keep = 1.0 - self.rate;
        let data = (0..rows * cols)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        Mat::from_vec(rows, cols, data)
    }
}

/// Encoder output: `h` is `P × 2h`; final states are `1 × 2h` as `[h | c]`.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub h: Var,
    pub final_fwd: Var,
    pub final_bwd: Var,
}

/// Attended matrix plus its precomputed attention projection.
#[derive(Debug, Clone, Copy)]
pub struct Memory {
    pub m: Var,
    proj: Var,
}

/// Tape handles of one decoder step.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    /// Next decoder state `[s | cell]`.
    pub state: Var,
    pub attention: Var,
    pub context: Var,
    pub p_gen: Var,
    /// Extended distribution, `1 × |extended vocab|`.
    pub distribution: Var,
}

impl PgNet {
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::config("model vocabulary is empty"));
        }
        let (params, layout) = build(&config, vocab.len(), seed);
        Ok(PgNet {
            config,
            vocab,
            params,
            layout,
            store: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Sets the decoding beam width; 1 is greedy.
    pub fn set_beam_width(&mut self, width: usize) -> Result<()> {
        if width == 0 {
            return Err(Error::config("beam_width must be positive"));
        }
        self.config.beam_width = width;
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    /// Attaches precomputed vectors for `store` embeddings.
    pub fn attach_store(&mut self, store: Arc<VectorStore>) -> Result<()> {
        if store.dim() != self.config.embed_dim || store.layers() != self.config.store_layers {
            return Err(Error::Shape(format!(
                "vector store is {} layers × {} but the model expects {} × {}",
                store.layers(),
                store.dim(),
                self.config.store_layers,
                self.config.embed_dim
            )));
        }
        self.store = Some(store);
        Ok(())
    }

    pub fn store(&self) -> Option<&Arc<VectorStore>> {
        self.store.as_ref()
    }

    /// Encoder parameters used for both the input and the condition.
    pub fn encoder_param_ids(&self) -> [ParamId; 6] {
        let (f, b) = (self.layout.enc_fwd, self.layout.enc_bwd);
        [f.wx, f.wh, f.b, b.wx, b.wh, b.b]
    }

    /// Names of tensors that pretraining transfers: encoder and embedding.
    pub fn transferable_names(&self) -> Vec<String> {
        self.params
            .iter()
            .map(|(_, n, _)| n.to_string())
            .filter(|n| n.starts_with("encoder.") || n.starts_with("embedding."))
            .collect()
    }

    /// Embeds `tokens`; `key` addresses precomputed vectors.
    pub fn embed(&self, t: &mut Tape, tokens: &[String], key: &str, dropout: Option<&mut Dropout>) -> Result<Var> {
        let request = EmbeddingRequest::new(tokens, key)?;
        let x = match self.config.embedding {
            EmbeddingKind::Lookup => {
                let table = self.layout.table.expect("lookup table");
                lookup_embed(t, table, request, &self.vocab)
            }
            EmbeddingKind::Store => {
                let store = self
                    .store
                    .as_ref()
                    .ok_or_else(|| Error::config("store embeddings need an attached vector store"))?;
                let mixer = self.layout.mixer.as_ref().expect("mixer");
                mixed_contextual_embed(t, request, store, mixer)?
            }
            EmbeddingKind::Pseudo => {
                let layer = pseudo_contextual_embed(tokens, self.config.embed_dim, self.config.pseudo_seed);
                let mixer = self.layout.mixer.as_ref().expect("mixer");
                mix_layers(t, &[layer], mixer)?
            }
        };
        Ok(apply_dropout(t, x, dropout))
    }

    /// Decoder input embedding of one vocabulary id.
    pub fn embed_decoder_input(&self, t: &mut Tape, id: usize, dropout: Option<&mut Dropout>) -> Var {
        let table = t.param(self.layout.decoder_table);
        let x = t.gather_rows(table, &[id]);
        apply_dropout(t, x, dropout)
    }

    fn run_lstm(&self, t: &mut Tape, ids: LstmIds, x: Var, reverse: bool) -> (Vec<Var>, Var) {
        let h = self.config.hidden;
        let p = t.shape(x).0;
        let wx = t.param(ids.wx);
        let wh = t.param(ids.wh);
        let b = t.param(ids.b);
        let xw = t.matmul(x, wx);
        let xw = t.add_row(xw, b);
        let mut state = t.constant(Mat::zeros(1, 2 * h));
        let mut hs = vec![state; p];
        for step in 0..p {
            let pos = if reverse { p - 1 - step } else { step };
            let xz = t.slice_rows(xw, pos, 1);
            let z = if step == 0 {
                xz
            } else {
                let hp = t.slice_cols(state, 0, h);
                let hz = t.matmul(hp, wh);
                t.add(xz, hz)
            };
            state = t.lstm(z, state);
            hs[pos] = t.slice_cols(state, 0, h);
        }
        (hs, state)
    }

    /// Bidirectional encoding of a `P × d` embedding matrix.
    pub fn encode(&self, t: &mut Tape, x: Var) -> Result<Encoded> {
        let (p, d) = t.shape(x);
        if p == 0 {
            return Err(Error::data("cannot encode an empty input"));
        }
        if d != self.config.embed_dim {
            return Err(Error::Shape(format!("embedding width {d}, expected {}", self.config.embed_dim)));
        }
        let (fwd, final_fwd) = self.run_lstm(t, self.layout.enc_fwd, x, false);
        let (bwd, final_bwd) = self.run_lstm(t, self.layout.enc_bwd, x, true);
        let f = t.concat_rows(&fwd);
        let b = t.concat_rows(&bwd);
        let h = t.concat_cols(&[f, b]);
        Ok(Encoded {
            h,
            final_fwd,
            final_bwd,
        })
    }

    /// Coattention context `C_D` (`P × h`) of head `k`.
    pub fn coattend(&self, t: &mut Tape, k: usize, h_i: Var, h_q: Var) -> Result<Var> {
        let ids = *self
            .layout
            .coatt
            .get(k)
            .ok_or_else(|| Error::config(format!("no coattention head {k}")))?;
        let width = 2 * self.config.hidden;
        let (pi, wi) = t.shape(h_i);
        let (pq, wq) = t.shape(h_q);
        if pi == 0 || pq == 0 {
            return Err(Error::data("coattention inputs must be non-empty"));
        }
        if wi != width || wq != width {
            return Err(Error::Shape(format!("coattention expects width {width}, got {wi} and {wq}")));
        }
        let w = t.param(ids.w);
        let hw = t.matmul(h_i, w);
        let affinity = t.matmul_t(hw, h_q); // P × Q
        let a_q = t.softmax_rows(affinity);
        let lt = t.transpose(affinity);
        let a_i = t.softmax_rows(lt); // Q × P
        let c_q = t.t_matmul(a_q, h_i); // Q × 2h
        let q_cat = t.concat_cols(&[h_q, c_q]); // Q × 4h
        let c_d = t.t_matmul(a_i, q_cat); // P × 4h
        let proj = t.param(ids.proj);
        let proj_b = t.param(ids.proj_b);
        let c = t.matmul(c_d, proj);
        Ok(t.add_row(c, proj_b))
    }

    /// Prepares head `k`'s attention over `m` (`P × memory_width`).
    pub fn memory(&self, t: &mut Tape, k: usize, m: Var) -> Result<Memory> {
        let ids = self.layout.decoders[k];
        let width = t.shape(m).1;
        if width != self.config.memory_width() {
            return Err(Error::Shape(format!(
                "decoder memory width {width}, expected {}",
                self.config.memory_width()
            )));
        }
        let att_m = t.param(ids.att_m);
        let proj = t.matmul(m, att_m);
        Ok(Memory { m, proj })
    }

    /// Initial decoder state of head `k`, projected from the encoder's final
    /// forward and backward states.
    pub fn initial_state(&self, t: &mut Tape, k: usize, enc: &Encoded) -> Var {
        let ids = self.layout.decoders[k];
        let h = self.config.hidden;
        let hf = t.slice_cols(enc.final_fwd, 0, h);
        let hb = t.slice_cols(enc.final_bwd, 0, h);
        let cf = t.slice_cols(enc.final_fwd, h, h);
        let cb = t.slice_cols(enc.final_bwd, h, h);
        let hcat = t.concat_cols(&[hf, hb]);
        let ccat = t.concat_cols(&[cf, cb]);
        let wh = t.param(ids.init_h);
        let bh = t.param(ids.init_h_b);
        let wc = t.param(ids.init_c);
        let bc = t.param(ids.init_c_b);
        let h0 = t.matmul(hcat, wh);
        let h0 = t.add(h0, bh);
        let c0 = t.matmul(ccat, wc);
        let c0 = t.add(c0, bc);
        t.concat_cols(&[h0, c0])
    }

    /// One pointer-generator step of head `k`: attention from the previous
    /// state, then the recurrent update, then the mixed distribution.
    pub fn decode_step(
        &self,
        t: &mut Tape,
        k: usize,
        prev_embedding: Var,
        state: Var,
        memory: &Memory,
        ext: &ExtendedVocab,
    ) -> Result<StepVars> {
        let ids = self.layout.decoders[k];
        let h = self.config.hidden;
        let v = self.vocab.len();
        if ext.input_ids.len() != t.shape(memory.m).0 {
            return Err(Error::Shape("extended vocabulary does not match the attended input".into()));
        }

        let s_prev = t.slice_cols(state, 0, h);
        let att_s = t.param(ids.att_s);
        let att_b = t.param(ids.att_b);
        let q = t.matmul(s_prev, att_s);
        let q = t.add(q, att_b);
        let pre = t.add_row(memory.proj, q);
        let act = t.tanh(pre);
        let att_v = t.param(ids.att_v);
        let scores = t.matmul_t(att_v, act); // 1 × P
        let attention = t.softmax_rows(scores);
        let context = t.matmul(attention, memory.m);

        let x = t.concat_cols(&[prev_embedding, context]);
        let wx = t.param(ids.cell.wx);
        let wh = t.param(ids.cell.wh);
        let cb = t.param(ids.cell.b);
        let zx = t.matmul(x, wx);
        let zh = t.matmul(s_prev, wh);
        let z = t.add(zx, zh);
        let z = t.add(z, cb);
        let next = t.lstm(z, state);
        let s = t.slice_cols(next, 0, h);

        let sc = t.concat_cols(&[s, context]);
        let o1 = t.param(ids.out1);
        let o1b = t.param(ids.out1_b);
        let o2 = t.param(ids.out2);
        let o2b = t.param(ids.out2_b);
        let hidden = t.matmul(sc, o1);
        let hidden = t.add(hidden, o1b);
        let logits = t.matmul(hidden, o2);
        let logits = t.add(logits, o2b);
        let p_vocab = t.softmax_rows(logits);

        let wc = t.param(ids.pgen_c);
        let ws = t.param(ids.pgen_s);
        let wxp = t.param(ids.pgen_x);
        let bp = t.param(ids.pgen_b);
        let gc = t.matmul_t(context, wc);
        let gs = t.matmul_t(s, ws);
        let gx = t.matmul_t(prev_embedding, wxp);
        let g = t.add(gc, gs);
        let g = t.add(g, gx);
        let g = t.add(g, bp);
        let p_gen = t.sigmoid(g);

        let n = ext.len();
        let identity: Vec<usize> = (0..v).collect();
        let gen = t.scatter_cols(p_vocab, &identity, n);
        let copy = t.scatter_cols(attention, &ext.input_ids, n);
        let gen = t.mul_scalar(gen, p_gen);
        let one_minus = t.one_minus(p_gen);
        let copy = t.mul_scalar(copy, one_minus);
        let distribution = t.add(gen, copy);

        if !t.value(distribution).is_finite() {
            return Err(Error::NonFinite(format!("decoder {k} produced a non-finite distribution")));
        }
        Ok(StepVars {
            state: next,
            attention,
            context,
            p_gen,
            distribution,
        })
    }

    /// Runs head `k` from `state`. With `targets`, steps are teacher-forced
    /// for `targets.len()` steps; otherwise the argmax is fed back and
    /// decoding stops after `STOP` or `budget` steps.
    #[allow(clippy::too_many_arguments)]
    pub fn run_decoder(
        &self,
        t: &mut Tape,
        k: usize,
        mut state: Var,
        memory: &Memory,
        ext: &ExtendedVocab,
        targets: Option<&[Option<usize>]>,
        budget: usize,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Vec<(StepVars, usize)>> {
        let steps = targets.map_or(budget, <[_]>::len);
        let mut prev = START;
        let mut out = Vec::with_capacity(steps);
        for step in 0..steps {
            let emb = self.embed_decoder_input(t, prev, dropout.as_deref_mut());
            let vars = self.decode_step(t, k, emb, state, memory, ext)?;
            state = vars.state;
            let chosen = match targets {
                Some(tg) => tg[step].unwrap_or(crate::preprocess::UNK),
                None => t.value(vars.distribution).argmax(),
            };
            out.push((vars, chosen));
            if targets.is_none() && chosen == crate::preprocess::STOP {
                break;
            }
            prev = ext.feed_id(chosen);
        }
        Ok(out)
    }
}

fn apply_dropout(t: &mut Tape, x: Var, dropout: Option<&mut Dropout>) -> Var {
    match dropout {
        Some(d) if d.rate > 0.0 => {
            let (r, c) = t.shape(x);
            let mask = t.constant(d.mask(r, c));
            t.mul(x, mask)
        }
        _ => x,
    }
}
