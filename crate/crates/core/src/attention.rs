//! Single-head scaled dot-product self-attention.
//!
//! `Q = H W_Q`, `K = H W_K`, `V = H W_V`, and the output is
//! `softmax_rows(Q Kᵀ / √d_k) V`, so output row `i` is the attention-weighted
//! average of the value rows. No positional terms, residual or normalisation.

use rand::Rng;

use crate::encoder::glorot;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub input: usize,
    pub key_dim: usize,
}

impl AttnParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        input: usize,
        key_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w_q = store.add("attention.W_Q", glorot(input, key_dim, rng));
        let w_k = store.add("attention.W_K", glorot(input, key_dim, rng));
        let w_v = store.add("attention.W_V", glorot(input, key_dim, rng));
        Self {
            w_q,
            w_k,
            w_v,
            input,
            key_dim,
        }
    }
}

/// Attention output together with its `n × n` weight matrix.
pub struct Attended {
    pub output: Var,
    pub weights: Var,
}

pub fn attend_with_weights(
    g: &mut Graph,
    store: &ParamStore,
    h: Var,
    p: &AttnParams,
) -> Result<Attended> {
    if !matches!(g.shape(h), [n, c] if *n >= 1 && *c == p.input) {
        return Err(Error::Dimension {
            op: "attend",
            left: g.shape(h).to_vec(),
            right: vec![p.input, p.key_dim],
        });
    }
    let (wq, wk, wv) = (
        g.param(store, p.w_q),
        g.param(store, p.w_k),
        g.param(store, p.w_v),
    );
    let q = g.matmul(h, wq)?;
    let k = g.matmul(h, wk)?;
    let v = g.matmul(h, wv)?;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / (p.key_dim as f64).sqrt());
    let weights = g.softmax_rows(scaled)?;
    let output = g.matmul(weights, v)?;
    Ok(Attended { output, weights })
}

/// `n × 2d_enc` encoder states to `n × d_v` attended states.
pub fn attend(g: &mut Graph, store: &ParamStore, h: Var, p: &AttnParams) -> Result<Var> {
    attend_with_weights(g, store, h, p).map(|a| a.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, input: usize, dk: usize) -> (ParamStore, AttnParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = AttnParams::init(&mut store, input, dk, &mut rng);
        (store, p)
    }

    #[test]
    fn single_token_returns_its_value() {
        let (store, p) = setup(1, 4, 3);
        let h = Tensor::row(vec![0.5, -1.0, 0.25, 2.0]);
        let mut g = Graph::new();
        let hv = g.constant(&h);
        let out = attend(&mut g, &store, hv, &p).unwrap();
        let wv = store.get(p.w_v);
        let expected: Vec<f64> = (0..3)
            .map(|j| (0..4).map(|i| h.data()[i] * wv.get(i, j)).sum())
            .collect();
        for (a, b) in g.value(out).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_rows_average_values() {
        let (store, p) = setup(2, 3, 3);
        let h = Tensor::from_rows(&[[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]]).unwrap();
        let mut g = Graph::new();
        let hv = g.constant(&h);
        let a = attend_with_weights(&mut g, &store, hv, &p).unwrap();
        assert!(g.value(a.weights).iter().all(|&w| (w - 0.5).abs() < 1e-15));
        let out = g.tensor(a.output);
        assert_eq!(out.row_slice(0), out.row_slice(1));
    }

    #[test]
    fn rejects_wrong_width() {
        let (store, p) = setup(3, 4, 2);
        let mut g = Graph::new();
        let hv = g.constant(&Tensor::zeros(&[2, 3]));
        assert!(attend(&mut g, &store, hv, &p).is_err());
    }
}
