use super::params::Lstm;
use super::tensor::sigmoid;
use super::Real;

#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates, `[i; f; g; o]`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

pub(crate) fn forward<T: Real>(p: &Lstm<T>, x: &[T], h_prev: &[T], c_prev: &[T]) -> LstmCache<T> {
    let n = p.hidden();
    let mut z = p.b.data.clone();
    p.w_ih.matvec_acc(x, &mut z);
    p.w_hh.matvec_acc(h_prev, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * n..3 * n).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
    let mut c = vec![T::zero(); n];
    let mut tanh_c = vec![T::zero(); n];
    let mut h = vec![T::zero(); n];
    for j in 0..n {
        c[j] = z[n + j] * c_prev[j] + z[j] * z[2 * n + j];
        tanh_c[j] = c[j].tanh();
        h[j] = z[3 * n + j] * tanh_c[j];
    }
    LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        c,
        tanh_c,
        h,
    }
}

/// Accumulates parameter gradients into `g`; returns `(dx, dh_prev, dc_prev)`.
pub(crate) fn backward<T: Real>(
    p: &Lstm<T>,
    g: &mut Lstm<T>,
    cache: &LstmCache<T>,
    dh: &[T],
    dc_next: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = p.hidden();
    let one = T::one();
    let z = &cache.gates;
    let mut dz = vec![T::zero(); 4 * n];
    let mut dc_prev = vec![T::zero(); n];
    for j in 0..n {
        let (i, f, gg, o) = (z[j], z[n + j], z[2 * n + j], z[3 * n + j]);
        let tc = cache.tanh_c[j];
        let dc = dc_next[j] + dh[j] * o * (one - tc * tc);
        dz[j] = dc * gg * i * (one - i);
        dz[n + j] = dc * cache.c_prev[j] * f * (one - f);
        dz[2 * n + j] = dc * i * (one - gg * gg);
        dz[3 * n + j] = dh[j] * tc * o * (one - o);
        dc_prev[j] = dc * f;
    }
    g.w_ih.outer_acc(&dz, &cache.x);
    g.w_hh.outer_acc(&dz, &cache.h_prev);
    for (b, d) in g.b.data.iter_mut().zip(&dz) {
        *b += *d;
    }
    let mut dx = vec![T::zero(); cache.x.len()];
    p.w_ih.matvec_t_acc(&dz, &mut dx);
    let mut dh_prev = vec![T::zero(); n];
    p.w_hh.matvec_t_acc(&dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}
