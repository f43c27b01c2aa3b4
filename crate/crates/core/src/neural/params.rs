use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    /// Gate rows in order input, forget, cell, output.
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Real> Lstm<T> {
    fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            w_ih: Tensor::zeros(4 * hidden, input),
            w_hh: Tensor::zeros(4 * hidden, hidden),
            b: Tensor::zeros(4 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols
    }
}

/// All trainable tensors. The decoder reads its input embeddings from
/// `embed` too: target ids are a prefix of source ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub embed: Tensor<T>,
    pub enc_fwd: Lstm<T>,
    pub enc_bwd: Lstm<T>,
    pub bridge_h_w: Tensor<T>,
    pub bridge_h_b: Tensor<T>,
    pub bridge_c_w: Tensor<T>,
    pub bridge_c_b: Tensor<T>,
    pub dec: Lstm<T>,
    pub att_query: Tensor<T>,
    pub att_key: Tensor<T>,
    pub att_bias: Tensor<T>,
    pub att_v: Tensor<T>,
    pub att_cov: Option<Tensor<T>>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
    pub gen_w: Tensor<T>,
    pub gen_b: Tensor<T>,
    pub gate_w: Tensor<T>,
    pub gate_b: Tensor<T>,
}

fn is_bias(name: &str) -> bool {
    name.ends_with("_b") || name.ends_with(".b") || name == "att_bias"
}

impl<T: Real> Params<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let e = cfg.embed_dim;
        let he = cfg.encoder_hidden;
        let hd = cfg.decoder_hidden;
        Params {
            embed: Tensor::zeros(cfg.source_vocab_size, e),
            enc_fwd: Lstm::zeros(e, he),
            enc_bwd: Lstm::zeros(e, he),
            bridge_h_w: Tensor::zeros(hd, 2 * he),
            bridge_h_b: Tensor::zeros(hd, 1),
            bridge_c_w: Tensor::zeros(hd, 2 * he),
            bridge_c_b: Tensor::zeros(hd, 1),
            dec: Lstm::zeros(e + hd, hd),
            att_query: Tensor::zeros(hd, hd),
            att_key: Tensor::zeros(hd, 2 * he),
            att_bias: Tensor::zeros(hd, 1),
            att_v: Tensor::zeros(hd, 1),
            att_cov: cfg.coverage_enabled.then(|| Tensor::zeros(hd, 1)),
            out_w: Tensor::zeros(hd, 2 * he + hd),
            out_b: Tensor::zeros(hd, 1),
            gen_w: Tensor::zeros(cfg.target_vocab_size, hd),
            gen_b: Tensor::zeros(cfg.target_vocab_size, 1),
            gate_w: Tensor::zeros(hd, 1),
            gate_b: Tensor::zeros(1, 1),
        }
    }

    /// Weights uniform in [-0.1, 0.1], biases zero.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for (name, t) in p.tensors_mut() {
            if is_bias(name) {
                continue;
            }
            for x in t.data.iter_mut() {
                *x = T::of(rng.gen_range(-0.1..=0.1));
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut v = vec![
            ("embed", &self.embed),
            ("enc_fwd.w_ih", &self.enc_fwd.w_ih),
            ("enc_fwd.w_hh", &self.enc_fwd.w_hh),
            ("enc_fwd.b", &self.enc_fwd.b),
            ("enc_bwd.w_ih", &self.enc_bwd.w_ih),
            ("enc_bwd.w_hh", &self.enc_bwd.w_hh),
            ("enc_bwd.b", &self.enc_bwd.b),
            ("bridge_h_w", &self.bridge_h_w),
            ("bridge_h_b", &self.bridge_h_b),
            ("bridge_c_w", &self.bridge_c_w),
            ("bridge_c_b", &self.bridge_c_b),
            ("dec.w_ih", &self.dec.w_ih),
            ("dec.w_hh", &self.dec.w_hh),
            ("dec.b", &self.dec.b),
            ("att_query", &self.att_query),
            ("att_key", &self.att_key),
            ("att_bias", &self.att_bias),
            ("att_v", &self.att_v),
        ];
        if let Some(c) = &self.att_cov {
            v.push(("att_cov", c));
        }
        v.extend([
            ("out_w", &self.out_w),
            ("out_b", &self.out_b),
            ("gen_w", &self.gen_w),
            ("gen_b", &self.gen_b),
            ("gate_w", &self.gate_w),
            ("gate_b", &self.gate_b),
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        let mut v = vec![
            ("embed", &mut self.embed),
            ("enc_fwd.w_ih", &mut self.enc_fwd.w_ih),
            ("enc_fwd.w_hh", &mut self.enc_fwd.w_hh),
            ("enc_fwd.b", &mut self.enc_fwd.b),
            ("enc_bwd.w_ih", &mut self.enc_bwd.w_ih),
            ("enc_bwd.w_hh", &mut self.enc_bwd.w_hh),
            ("enc_bwd.b", &mut self.enc_bwd.b),
            ("bridge_h_w", &mut self.bridge_h_w),
            ("bridge_h_b", &mut self.bridge_h_b),
            ("bridge_c_w", &mut self.bridge_c_w),
            ("bridge_c_b", &mut self.bridge_c_b),
            ("dec.w_ih", &mut self.dec.w_ih),
            ("dec.w_hh", &mut self.dec.w_hh),
            ("dec.b", &mut self.dec.b),
            ("att_query", &mut self.att_query),
            ("att_key", &mut self.att_key),
            ("att_bias", &mut self.att_bias),
            ("att_v", &mut self.att_v),
        ];
        if let Some(c) = &mut self.att_cov {
            v.push(("att_cov", c));
        }
        v.extend([
            ("out_w", &mut self.out_w),
            ("out_b", &mut self.out_b),
            ("gen_w", &mut self.gen_w),
            ("gen_b", &mut self.gen_b),
            ("gate_w", &mut self.gate_w),
            ("gate_b", &mut self.gate_b),
        ]);
        v
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill_zero();
        }
    }

    /// `self += a · other`
    pub fn add_scaled(&mut self, a: T, other: &Self) {
        for ((_, t), (_, o)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in t.data.iter_mut().zip(&o.data) {
                *x += a * y;
            }
        }
    }

    pub fn scale(&mut self, a: T) {
        for (_, t) in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn norm(&self) -> T {
        let mut s = 0.0f64;
        for (_, t) in self.tensors() {
            for &x in &t.data {
                s += x.as_f64() * x.as_f64();
            }
        }
        T::of(s.sqrt())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let cast_t = |t: &Tensor<T>| Tensor {
            rows: t.rows,
            cols: t.cols,
            data: t.data.iter().map(|x| U::of(x.as_f64())).collect(),
        };
        let cast_l = |l: &Lstm<T>| Lstm {
            w_ih: cast_t(&l.w_ih),
            w_hh: cast_t(&l.w_hh),
            b: cast_t(&l.b),
        };
        Params {
            embed: cast_t(&self.embed),
            enc_fwd: cast_l(&self.enc_fwd),
            enc_bwd: cast_l(&self.enc_bwd),
            bridge_h_w: cast_t(&self.bridge_h_w),
            bridge_h_b: cast_t(&self.bridge_h_b),
            bridge_c_w: cast_t(&self.bridge_c_w),
            bridge_c_b: cast_t(&self.bridge_c_b),
            dec: cast_l(&self.dec),
            att_query: cast_t(&self.att_query),
            att_key: cast_t(&self.att_key),
            att_bias: cast_t(&self.att_bias),
            att_v: cast_t(&self.att_v),
            att_cov: self.att_cov.as_ref().map(cast_t),
            out_w: cast_t(&self.out_w),
            out_b: cast_t(&self.out_b),
            gen_w: cast_t(&self.gen_w),
            gen_b: cast_t(&self.gen_b),
            gate_w: cast_t(&self.gate_w),
            gate_b: cast_t(&self.gate_b),
        }
    }
}
