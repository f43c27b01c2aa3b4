use rand::Rng;
use rayon::prelude::*;

use super::lstm::{self, LstmCache};
use super::tensor::{axpy, dot, sigmoid, softmax_in_place};
use super::{ModelConfig, NeuralError, Params, Real};
use crate::seqbuild::EncodedSample;

/// One training or inference input in id space. `source_ext` holds the
/// extended id of every source position; ids at or above the target
/// vocabulary size are per-sample copy indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source_ids: Vec<u32>,
    pub source_ext: Vec<u32>,
    /// Gold extended ids, normally ending in the end token.
    pub target: Vec<u32>,
}

impl From<&EncodedSample> for Example {
    fn from(s: &EncodedSample) -> Self {
        Example {
            source_ids: s.source_ids.clone(),
            source_ext: s.source_ext.clone(),
            target: s.target_ext.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

/// Encoder output for one source sequence.
#[derive(Debug, Clone)]
pub struct Encoded<T> {
    pub states: Vec<Vec<T>>,
    keys: Vec<Vec<T>>,
    pub source_ids: Vec<u32>,
    pub source_ext: Vec<u32>,
    /// Size of this sample's extended output space.
    pub ext_size: usize,
    pub initial: DecoderState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
    /// Previous attentional hidden state (input feeding).
    pub feed: Vec<T>,
    pub coverage: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    /// Probabilities over the extended output space.
    pub dist: Vec<T>,
    pub attention: Vec<T>,
    pub p_gen: T,
}

struct EncoderCache<T> {
    masks: Vec<Option<Vec<T>>>,
    fwd: Vec<LstmCache<T>>,
    bwd: Vec<LstmCache<T>>,
    bridge_h_in: Vec<T>,
    bridge_c_in: Vec<T>,
}

struct StepCache<T> {
    input_id: u32,
    mask: Option<Vec<T>>,
    lstm: LstmCache<T>,
    q: Vec<T>,
    attention: Vec<T>,
    coverage: Option<Vec<T>>,
    oc: Vec<T>,
    attn_h: Vec<T>,
    pg: Vec<T>,
    p_gen: T,
}

fn dropout_mask<T: Real, R: Rng>(n: usize, rate: f64, rng: &mut Option<&mut R>) -> Option<Vec<T>> {
    let rng = rng.as_mut()?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    Some(
        (0..n)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect(),
    )
}

fn apply_mask<T: Real>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(a, &b)| *a *= b);
    }
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        let params = Params::init(&config);
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Params<T>) -> Result<Self, NeuralError> {
        config.validate()?;
        let expected = Params::<T>::zeros(&config);
        let shapes_match = expected
            .tensors()
            .iter()
            .zip(params.tensors())
            .all(|((n1, a), (n2, b))| n1 == &n2 && a.rows == b.rows && a.cols == b.cols)
            && expected.tensors().len() == params.tensors().len();
        if !shapes_match {
            return Err(NeuralError::Config("parameter shapes do not match config".into()));
        }
        Ok(Model { config, params })
    }

    fn check_source(&self, ids: &[u32], ext: &[u32]) -> Result<usize, NeuralError> {
        if ids.is_empty() {
            return Err(NeuralError::EmptySource);
        }
        if ids.len() > self.config.max_source_len {
            return Err(NeuralError::SourceTooLong {
                len: ids.len(),
                max: self.config.max_source_len,
            });
        }
        if ext.len() != ids.len() {
            return Err(NeuralError::Config("source ids and copy indices differ in length".into()));
        }
        let limit = self.config.source_vocab_size;
        if let Some(&id) = ids.iter().find(|&&i| i as usize >= limit) {
            return Err(NeuralError::IdOutOfRange { id, limit });
        }
        let vt = self.config.target_vocab_size;
        let max_ext = ext.iter().map(|&e| e as usize + 1).max().unwrap_or(0);
        let ext_size = vt.max(max_ext);
        if ext_size > vt + ids.len() {
            return Err(NeuralError::IdOutOfRange {
                id: (max_ext - 1) as u32,
                limit: vt + ids.len(),
            });
        }
        Ok(ext_size)
    }

    pub fn encode(&self, source_ids: &[u32], source_ext: &[u32]) -> Result<Encoded<T>, NeuralError> {
        self.encode_inner::<rand_chacha::ChaCha8Rng>(source_ids, source_ext, None)
            .map(|(e, _)| e)
    }

    fn encode_inner<R: Rng>(
        &self,
        source_ids: &[u32],
        source_ext: &[u32],
        mut rng: Option<&mut R>,
    ) -> Result<(Encoded<T>, EncoderCache<T>), NeuralError> {
        let ext_size = self.check_source(source_ids, source_ext)?;
        let p = &self.params;
        let cfg = &self.config;
        let he = cfg.encoder_hidden;
        let n = source_ids.len();
        let mut embs = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        for &id in source_ids {
            let mut x = p.embed.row(id as usize).to_vec();
            let m = dropout_mask(x.len(), cfg.dropout, &mut rng);
            apply_mask(&mut x, &m);
            embs.push(x);
            masks.push(m);
        }
        let zero = vec![T::zero(); he];
        let mut fwd: Vec<LstmCache<T>> = Vec::with_capacity(n);
        for x in &embs {
            let (h, c) = fwd.last().map_or((&zero, &zero), |l| (&l.h, &l.c));
            let cache = lstm::forward(&p.enc_fwd, x, h, c);
            fwd.push(cache);
        }
        let mut bwd_rev: Vec<LstmCache<T>> = Vec::with_capacity(n);
        for x in embs.iter().rev() {
            let (h, c) = bwd_rev.last().map_or((&zero, &zero), |l| (&l.h, &l.c));
            let cache = lstm::forward(&p.enc_bwd, x, h, c);
            bwd_rev.push(cache);
        }
        bwd_rev.reverse();
        let bwd = bwd_rev;
        let states: Vec<Vec<T>> = (0..n)
            .map(|i| [fwd[i].h.as_slice(), bwd[i].h.as_slice()].concat())
            .collect();
        let keys = states
            .iter()
            .map(|s| {
                let mut k = p.att_bias.data.clone();
                p.att_key.matvec_acc(s, &mut k);
                k
            })
            .collect();
        let bridge_h_in = [fwd[n - 1].h.as_slice(), bwd[0].h.as_slice()].concat();
        let bridge_c_in = [fwd[n - 1].c.as_slice(), bwd[0].c.as_slice()].concat();
        let affine_tanh = |w: &super::Tensor<T>, b: &super::Tensor<T>, x: &[T]| {
            let mut out = b.data.clone();
            w.matvec_acc(x, &mut out);
            out.iter_mut().for_each(|v| *v = v.tanh());
            out
        };
        let h0 = affine_tanh(&p.bridge_h_w, &p.bridge_h_b, &bridge_h_in);
        let c0 = affine_tanh(&p.bridge_c_w, &p.bridge_c_b, &bridge_c_in);
        let initial = DecoderState {
            h: h0,
            c: c0,
            feed: vec![T::zero(); cfg.decoder_hidden],
            coverage: cfg.coverage_enabled.then(|| vec![T::zero(); n]),
        };
        Ok((
            Encoded {
                states,
                keys,
                source_ids: source_ids.to_vec(),
                source_ext: source_ext.to_vec(),
                ext_size,
                initial,
            },
            EncoderCache {
                masks,
                fwd,
                bwd,
                bridge_h_in,
                bridge_c_in,
            },
        ))
    }

    /// Embedding row fed to the decoder for a previously emitted extended id.
    /// A copied token uses the source-vocabulary id of its first occurrence.
    pub fn input_id(&self, prev: u32, enc: &Encoded<T>) -> u32 {
        if (prev as usize) < self.config.target_vocab_size {
            return prev;
        }
        enc.source_ext
            .iter()
            .position(|&e| e == prev)
            .map_or(self.config.unk_id, |i| enc.source_ids[i])
    }

    pub fn decode_step(
        &self,
        state: &DecoderState<T>,
        prev: u32,
        enc: &Encoded<T>,
    ) -> Result<(StepOutput<T>, DecoderState<T>), NeuralError> {
        if prev as usize >= enc.ext_size {
            return Err(NeuralError::IdOutOfRange {
                id: prev,
                limit: enc.ext_size,
            });
        }
        let input = self.input_id(prev, enc);
        let cache = self.step_forward::<rand_chacha::ChaCha8Rng>(state, input, enc, None);
        let dist = self.mixture(&cache, enc);
        let next = next_state(&cache);
        Ok((
            StepOutput {
                dist,
                attention: cache.attention,
                p_gen: cache.p_gen,
            },
            next,
        ))
    }

    fn step_forward<R: Rng>(
        &self,
        state: &DecoderState<T>,
        input_id: u32,
        enc: &Encoded<T>,
        mut rng: Option<&mut R>,
    ) -> StepCache<T> {
        let p = &self.params;
        let hd = self.config.decoder_hidden;
        let mut x = [p.embed.row(input_id as usize), state.feed.as_slice()].concat();
        let mask = dropout_mask(x.len(), self.config.dropout, &mut rng);
        apply_mask(&mut x, &mask);
        let lc = lstm::forward(&p.dec, &x, &state.h, &state.c);
        let mut q = vec![T::zero(); hd];
        p.att_query.matvec(&lc.h, &mut q);
        let mut scores: Vec<T> = (0..enc.states.len())
            .map(|i| {
                let cov = state.coverage.as_ref().map(|c| c[i]);
                let pre = self.attention_pre(&q, &enc.keys[i], cov);
                dot(&p.att_v.data, &pre)
            })
            .collect();
        softmax_in_place(&mut scores);
        let attention = scores;
        let mut ctx = vec![T::zero(); enc.states[0].len()];
        for (a, s) in attention.iter().zip(&enc.states) {
            axpy(*a, s, &mut ctx);
        }
        let oc = [ctx.as_slice(), lc.h.as_slice()].concat();
        let mut attn_h = p.out_b.data.clone();
        p.out_w.matvec_acc(&oc, &mut attn_h);
        attn_h.iter_mut().for_each(|v| *v = v.tanh());
        let mut pg = p.gen_b.data.clone();
        p.gen_w.matvec_acc(&attn_h, &mut pg);
        softmax_in_place(&mut pg);
        let p_gen = sigmoid(dot(&p.gate_w.data, &attn_h) + p.gate_b.data[0]);
        StepCache {
            input_id,
            mask,
            lstm: lc,
            q,
            attention,
            coverage: state.coverage.clone(),
            oc,
            attn_h,
            pg,
            p_gen,
        }
    }

    fn attention_pre(&self, q: &[T], key: &[T], cov: Option<T>) -> Vec<T> {
        let mut pre: Vec<T> = q.iter().zip(key).map(|(a, b)| *a + *b).collect();
        if let (Some(c), Some(w)) = (cov, &self.params.att_cov) {
            axpy(c, &w.data, &mut pre);
        }
        pre.iter_mut().for_each(|v| *v = v.tanh());
        pre
    }

    fn mixture(&self, cache: &StepCache<T>, enc: &Encoded<T>) -> Vec<T> {
        copy_mixture(cache.p_gen, &cache.pg, &cache.attention, &enc.source_ext, enc.ext_size)
    }

    fn gold_prob(&self, cache: &StepCache<T>, enc: &Encoded<T>, y: u32) -> (T, T, T) {
        let pg_y = cache.pg.get(y as usize).copied().unwrap_or(T::zero());
        let a_y: T = cache
            .attention
            .iter()
            .zip(&enc.source_ext)
            .filter(|(_, &e)| e == y)
            .map(|(a, _)| *a)
            .sum();
        let prob = cache.p_gen * pg_y + (T::one() - cache.p_gen) * a_y;
        (prob, pg_y, a_y)
    }

    fn check_target(&self, target: &[u32], enc: &Encoded<T>) -> Result<(), NeuralError> {
        match target.iter().find(|&&y| y as usize >= enc.ext_size) {
            Some(&id) => Err(NeuralError::IdOutOfRange {
                id,
                limit: enc.ext_size,
            }),
            None => Ok(()),
        }
    }

    /// Summed negative log-likelihood (plus weighted coverage penalty) of one
    /// example under teacher forcing, and its number of target steps.
    pub fn example_loss(&self, ex: &Example) -> Result<(T, usize), NeuralError> {
        let enc = self.encode(&ex.source_ids, &ex.source_ext)?;
        self.check_target(&ex.target, &enc)?;
        let mut state = enc.initial.clone();
        let mut prev = self.config.bos_id;
        let mut total = T::zero();
        let lambda = T::of(self.config.coverage_weight);
        for &y in &ex.target {
            let input = self.input_id(prev, &enc);
            let cache = self.step_forward::<rand_chacha::ChaCha8Rng>(&state, input, &enc, None);
            let (prob, _, _) = self.gold_prob(&cache, &enc, y);
            total += -prob.ln();
            if let Some(cov) = &cache.coverage {
                let pen: T = cache.attention.iter().zip(cov).map(|(a, c)| a.min(*c)).sum();
                total += lambda * pen;
            }
            state = next_state(&cache);
            prev = y;
        }
        Ok((total, ex.target.len()))
    }

    /// Mean per-step loss over a batch, without dropout.
    pub fn loss(&self, batch: &[Example]) -> Result<T, NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        let parts: Vec<(T, usize)> = batch
            .par_iter()
            .map(|ex| self.example_loss(ex))
            .collect::<Result<_, _>>()?;
        let steps: usize = parts.iter().map(|p| p.1).sum();
        let sum = parts.iter().fold(T::zero(), |acc, p| acc + p.0);
        let loss = if steps == 0 { T::zero() } else { sum / T::of(steps as f64) };
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(NeuralError::NonFinite)
        }
    }

    /// Mean per-step loss and its gradient. Per-example work runs in
    /// parallel; gradients are summed in batch order so results do not
    /// depend on the thread count. Dropout is active when `seeds` is given
    /// (one RNG seed per example).
    pub fn loss_and_grad(
        &self,
        batch: &[Example],
        seeds: Option<&[u64]>,
    ) -> Result<(T, Params<T>), NeuralError> {
        use rand::SeedableRng;
        if batch.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        let steps: usize = batch.iter().map(|e| e.target.len()).sum();
        let scale = if steps == 0 { T::zero() } else { T::one() / T::of(steps as f64) };
        let parts: Vec<(T, Params<T>)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let mut grad = self.params.zeros_like();
                let loss = match seeds {
                    Some(s) => {
                        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s[i]);
                        self.example_grad(ex, Some(&mut rng), scale, &mut grad)?
                    }
                    None => self.example_grad::<rand_chacha::ChaCha8Rng>(ex, None, scale, &mut grad)?,
                };
                Ok((loss, grad))
            })
            .collect::<Result<_, NeuralError>>()?;
        let mut iter = parts.into_iter();
        let (first_loss, mut grad) = iter.next().expect("non-empty batch");
        let mut sum = first_loss;
        for (l, g) in iter {
            sum += l;
            grad.add_scaled(T::one(), &g);
        }
        let loss = sum * scale;
        if loss.is_finite() {
            Ok((loss, grad))
        } else {
            Err(NeuralError::NonFinite)
        }
    }

    /// Forward and backward for one example; accumulates `scale · ∂loss/∂θ`
    /// into `grad` and returns the unscaled summed loss.
    fn example_grad<R: Rng>(
        &self,
        ex: &Example,
        mut rng: Option<&mut R>,
        scale: T,
        grad: &mut Params<T>,
    ) -> Result<T, NeuralError> {
        let (enc, ecache) = self.encode_inner(&ex.source_ids, &ex.source_ext, rng.as_deref_mut())?;
        self.check_target(&ex.target, &enc)?;
        let p = &self.params;
        let cfg = &self.config;
        let one = T::one();
        let lambda = T::of(cfg.coverage_weight);
        let n = enc.states.len();
        let hd = cfg.decoder_hidden;
        let e = cfg.embed_dim;

        let mut steps: Vec<StepCache<T>> = Vec::with_capacity(ex.target.len());
        let mut state = enc.initial.clone();
        let mut prev = cfg.bos_id;
        let mut total = T::zero();
        for &y in &ex.target {
            let input = self.input_id(prev, &enc);
            let cache = self.step_forward(&state, input, &enc, rng.as_deref_mut());
            let (prob, _, _) = self.gold_prob(&cache, &enc, y);
            total += -prob.ln();
            if let Some(cov) = &cache.coverage {
                let pen: T = cache.attention.iter().zip(cov).map(|(a, c)| a.min(*c)).sum();
                total += lambda * pen;
            }
            state = next_state(&cache);
            steps.push(cache);
            prev = y;
        }
        if ex.target.is_empty() || scale == T::zero() {
            return Ok(total);
        }

        let mut d_feed = vec![T::zero(); hd];
        let mut dh_carry = vec![T::zero(); hd];
        let mut dc_carry = vec![T::zero(); hd];
        let mut g_cov = vec![T::zero(); n];
        let mut d_states = vec![vec![T::zero(); hd]; n];
        let mut d_keys = vec![vec![T::zero(); hd]; n];

        for (t, cache) in steps.iter().enumerate().rev() {
            let y = ex.target[t];
            let (prob, pg_y, a_y) = self.gold_prob(cache, &enc, y);
            let ga = -scale / prob;
            let pgen = cache.p_gen;

            let dp = ga * (pg_y - a_y);
            let mut dlogits = vec![T::zero(); cache.pg.len()];
            if (y as usize) < cache.pg.len() {
                let c = ga * pgen * pg_y;
                for (j, d) in dlogits.iter_mut().enumerate() {
                    let delta = if j == y as usize { one } else { T::zero() };
                    *d = c * (delta - cache.pg[j]);
                }
            }
            let mut da: Vec<T> = enc
                .source_ext
                .iter()
                .map(|&s| if s == y { ga * (one - pgen) } else { T::zero() })
                .collect();

            let dz = dp * pgen * (one - pgen);
            axpy(dz, &cache.attn_h, &mut grad.gate_w.data);
            grad.gate_b.data[0] += dz;
            let mut d_attn = d_feed.clone();
            axpy(dz, &p.gate_w.data, &mut d_attn);
            p.gen_w.matvec_t_acc(&dlogits, &mut d_attn);
            grad.gen_w.outer_acc(&dlogits, &cache.attn_h);
            axpy(one, &dlogits, &mut grad.gen_b.data);

            let du: Vec<T> = d_attn
                .iter()
                .zip(&cache.attn_h)
                .map(|(d, a)| *d * (one - *a * *a))
                .collect();
            grad.out_w.outer_acc(&du, &cache.oc);
            axpy(one, &du, &mut grad.out_b.data);
            let mut doc = vec![T::zero(); cache.oc.len()];
            p.out_w.matvec_t_acc(&du, &mut doc);
            let (dctx, dh_out) = doc.split_at(hd);
            let mut dh = dh_carry.clone();
            axpy(one, dh_out, &mut dh);

            let mut d_cov_step = vec![T::zero(); n];
            if let Some(cov) = &cache.coverage {
                let w = lambda * scale;
                for i in 0..n {
                    if cache.attention[i] <= cov[i] {
                        da[i] += w;
                    } else {
                        d_cov_step[i] += w;
                    }
                    da[i] += g_cov[i];
                }
            }
            for i in 0..n {
                da[i] += dot(dctx, &enc.states[i]);
                axpy(cache.attention[i], dctx, &mut d_states[i]);
            }
            let sum_ad: T = cache.attention.iter().zip(&da).map(|(a, d)| *a * *d).sum();
            let mut dq = vec![T::zero(); hd];
            for i in 0..n {
                let ds = cache.attention[i] * (da[i] - sum_ad);
                if ds == T::zero() {
                    continue;
                }
                let cov_i = cache.coverage.as_ref().map(|c| c[i]);
                let pre = self.attention_pre(&cache.q, &enc.keys[i], cov_i);
                axpy(ds, &pre, &mut grad.att_v.data);
                let dzp: Vec<T> = pre
                    .iter()
                    .zip(&p.att_v.data)
                    .map(|(pr, v)| ds * *v * (one - *pr * *pr))
                    .collect();
                axpy(one, &dzp, &mut dq);
                axpy(one, &dzp, &mut d_keys[i]);
                if let (Some(c), Some(w), Some(gw)) = (cov_i, &p.att_cov, &mut grad.att_cov) {
                    axpy(c, &dzp, &mut gw.data);
                    d_cov_step[i] += dot(&dzp, &w.data);
                }
            }
            if cache.coverage.is_some() {
                axpy(one, &d_cov_step, &mut g_cov);
            }
            grad.att_query.outer_acc(&dq, &cache.lstm.h);
            p.att_query.matvec_t_acc(&dq, &mut dh);

            let (mut dx, dh_prev, dc_prev) = lstm::backward(&p.dec, &mut grad.dec, &cache.lstm, &dh, &dc_carry);
            apply_mask(&mut dx, &cache.mask);
            axpy(one, &dx[..e], grad.embed.row_mut(cache.input_id as usize));
            d_feed = dx[e..].to_vec();
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }

        // Bridge.
        let bridge_back = |w: &super::Tensor<T>,
                           gw: &mut super::Tensor<T>,
                           gb: &mut super::Tensor<T>,
                           out: &[T],
                           input: &[T],
                           d_out: &[T]| {
            let dpre: Vec<T> = d_out.iter().zip(out).map(|(d, o)| *d * (one - *o * *o)).collect();
            gw.outer_acc(&dpre, input);
            axpy(one, &dpre, &mut gb.data);
            let mut d_in = vec![T::zero(); input.len()];
            w.matvec_t_acc(&dpre, &mut d_in);
            d_in
        };
        let ds_h = bridge_back(
            &p.bridge_h_w,
            &mut grad.bridge_h_w,
            &mut grad.bridge_h_b,
            &enc.initial.h,
            &ecache.bridge_h_in,
            &dh_carry,
        );
        let ds_c = bridge_back(
            &p.bridge_c_w,
            &mut grad.bridge_c_w,
            &mut grad.bridge_c_b,
            &enc.initial.c,
            &ecache.bridge_c_in,
            &dc_carry,
        );

        for i in 0..n {
            grad.att_key.outer_acc(&d_keys[i], &enc.states[i]);
            axpy(one, &d_keys[i], &mut grad.att_bias.data);
            p.att_key.matvec_t_acc(&d_keys[i], &mut d_states[i]);
        }

        let he = cfg.encoder_hidden;
        let mut d_emb = vec![vec![T::zero(); e]; n];
        let mut dh = ds_h[..he].to_vec();
        let mut dc = ds_c[..he].to_vec();
        for i in (0..n).rev() {
            let mut dh_total = d_states[i][..he].to_vec();
            axpy(one, &dh, &mut dh_total);
            let (dx, dhp, dcp) = lstm::backward(&p.enc_fwd, &mut grad.enc_fwd, &ecache.fwd[i], &dh_total, &dc);
            axpy(one, &dx, &mut d_emb[i]);
            dh = dhp;
            dc = dcp;
        }
        let mut dh = ds_h[he..].to_vec();
        let mut dc = ds_c[he..].to_vec();
        for i in 0..n {
            let mut dh_total = d_states[i][he..].to_vec();
            axpy(one, &dh, &mut dh_total);
            let (dx, dhp, dcp) = lstm::backward(&p.enc_bwd, &mut grad.enc_bwd, &ecache.bwd[i], &dh_total, &dc);
            axpy(one, &dx, &mut d_emb[i]);
            dh = dhp;
            dc = dcp;
        }
        for (i, mut d) in d_emb.into_iter().enumerate() {
            apply_mask(&mut d, &ecache.masks[i]);
            axpy(one, &d, grad.embed.row_mut(ex.source_ids[i] as usize));
        }
        Ok(total)
    }
}

fn next_state<T: Real>(cache: &StepCache<T>) -> DecoderState<T> {
    DecoderState {
        h: cache.lstm.h.clone(),
        c: cache.lstm.c.clone(),
        feed: cache.attn_h.clone(),
        coverage: cache.coverage.as_ref().map(|c| {
            c.iter().zip(&cache.attention).map(|(x, a)| *x + *a).collect()
        }),
    }
}

/// Final distribution over the extended vocabulary: `p_gen` times the
/// generation distribution plus `1 - p_gen` times the attention mass that
/// lands on each source position's extended id.
pub fn copy_mixture<T: Real>(p_gen: T, generate: &[T], attention: &[T], source_ext: &[u32], ext_size: usize) -> Vec<T> {
    let mut dist = vec![T::zero(); ext_size];
    for (d, &g) in dist.iter_mut().zip(generate) {
        *d = p_gen * g;
    }
    let copy = T::one() - p_gen;
    for (&a, &e) in attention.iter().zip(source_ext) {
        dist[e as usize] += copy * a;
    }
    dist
}
