//! Bidirectional GRU encoder.
//!
//! Row vectors throughout: an input step is `1 × m_in`, a hidden state `1 × d`.
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! h~ = tanh(x W + (r ⊙ h) U + b)
//! h' = (1 − z) ⊙ h + z ⊙ h~
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Weights of one GRU direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Fan-scaled uniform `rows × cols` matrix.
pub(crate) fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(&[rows, cols], bound, rng)
}

impl GruParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |name: &str, r: usize, c: usize, rng: &mut R| {
            store.add(format!("{prefix}.{name}"), glorot(r, c, rng))
        };
        let w_z = w("W_z", input, hidden, rng);
        let w_r = w("W_r", input, hidden, rng);
        let w_h = w("W", input, hidden, rng);
        let u_z = w("U_z", hidden, hidden, rng);
        let u_r = w("U_r", hidden, hidden, rng);
        let u_h = w("U", hidden, hidden, rng);
        let b_z = store.add(format!("{prefix}.b_z"), Tensor::zeros(&[1, hidden]));
        let b_r = store.add(format!("{prefix}.b_r"), Tensor::zeros(&[1, hidden]));
        let b_h = store.add(format!("{prefix}.b"), Tensor::zeros(&[1, hidden]));
        Self {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
            input,
            hidden,
        }
    }

    fn recurrent_vars(&self, g: &mut Graph, store: &ParamStore) -> (Var, Var, Var) {
        (
            g.param(store, self.u_z),
            g.param(store, self.u_r),
            g.param(store, self.u_h),
        )
    }

    /// `X W_* + b_*` for every row of `x` at once.
    fn project_inputs(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<[Var; 3]> {
        let mut out = [x; 3];
        for (slot, (w, b)) in out.iter_mut().zip([
            (self.w_z, self.b_z),
            (self.w_r, self.b_r),
            (self.w_h, self.b_h),
        ]) {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            let xw = g.matmul(x, wv)?;
            *slot = g.add_row(xw, bv)?;
        }
        Ok(out)
    }
}

/// GRU recurrence given precomputed input projections for this step.
pub(crate) fn gru_cell(
    g: &mut Graph,
    (u_z, u_r, u_h): (Var, Var, Var),
    [xz, xr, xh]: [Var; 3],
    h_prev: Var,
) -> Result<Var> {
    let hz = g.matmul(h_prev, u_z)?;
    let z_pre = g.add(xz, hz)?;
    let z = g.sigmoid(z_pre);
    let hr = g.matmul(h_prev, u_r)?;
    let r_pre = g.add(xr, hr)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h_prev)?;
    let rhu = g.matmul(rh, u_h)?;
    let cand_pre = g.add(xh, rhu)?;
    let cand = g.tanh(cand_pre);
    // (1 − z) ⊙ h + z ⊙ h~  ==  h + z ⊙ (h~ − h)
    let delta = g.sub(cand, h_prev)?;
    let step = g.mul(z, delta)?;
    g.add(h_prev, step)
}

/// One GRU step on a single `1 × m_in` input.
pub fn gru_step(
    g: &mut Graph,
    store: &ParamStore,
    p: &GruParams,
    input: Var,
    h_prev: Var,
) -> Result<Var> {
    if g.shape(input) != [1, p.input] || g.shape(h_prev) != [1, p.hidden] {
        return Err(Error::Dimension {
            op: "gru_step",
            left: g.shape(input).to_vec(),
            right: g.shape(h_prev).to_vec(),
        });
    }
    let xs = p.project_inputs(g, store, input)?;
    let us = p.recurrent_vars(g, store);
    gru_cell(g, us, xs, h_prev)
}

/// Runs one direction over all rows of `x` from a zero state.
///
/// Returns the hidden states indexed by input position (for `reverse`, the
/// state at position `t` has consumed rows `n-1 ..= t`).
pub fn run_direction(
    g: &mut Graph,
    store: &ParamStore,
    p: &GruParams,
    x: Var,
    reverse: bool,
) -> Result<Vec<Var>> {
    let n = match g.shape(x) {
        [n, c] if *c == p.input => *n,
        other => {
            return Err(Error::Dimension {
                op: "gru input",
                left: other.to_vec(),
                right: vec![p.input],
            })
        }
    };
    let proj = p.project_inputs(g, store, x)?;
    let us = p.recurrent_vars(g, store);
    let mut h = g.constant_owned(Tensor::zeros(&[1, p.hidden]));
    let mut states = vec![h; n];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for t in order {
        let xs = [
            g.slice_rows(proj[0], t, 1)?,
            g.slice_rows(proj[1], t, 1)?,
            g.slice_rows(proj[2], t, 1)?,
        ];
        h = gru_cell(g, us, xs, h)?;
        states[t] = h;
    }
    Ok(states)
}

/// Forward and backward GRUs with independent weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiGruParams {
    pub forward: GruParams,
    pub backward: GruParams,
}

impl BiGruParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            forward: GruParams::init(store, "encoder.fwd", input, hidden, rng),
            backward: GruParams::init(store, "encoder.bwd", input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }
}

/// Encodes an `n × m` sequence into `n × 2d`: row `t` is `[h_fwd_t, h_bwd_t]`.
pub fn encode(g: &mut Graph, store: &ParamStore, x: Var, p: &BiGruParams) -> Result<Var> {
    if g.shape(x).first().copied().unwrap_or(0) == 0 {
        return Err(Error::Contract("encode needs at least one position".into()));
    }
    let fwd = run_direction(g, store, &p.forward, x, false)?;
    let bwd = run_direction(g, store, &p.backward, x, true)?;
    let hf = g.concat_rows(&fwd)?;
    let hb = g.concat_rows(&bwd)?;
    g.concat_cols(hf, hb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line GRU over plain slices, written independently of the graph.
    fn reference_step(store: &ParamStore, p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
        let d = p.hidden;
        let affine = |w: ParamId, u: ParamId, b: ParamId, hh: &[f64]| -> Vec<f64> {
            let (w, u, b) = (store.get(w), store.get(u), store.get(b));
            (0..d)
                .map(|j| {
                    let mut s = b.data()[j];
                    for (i, xi) in x.iter().enumerate() {
                        s += xi * w.get(i, j);
                    }
                    for (i, hi) in hh.iter().enumerate() {
                        s += hi * u.get(i, j);
                    }
                    s
                })
                .collect()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z: Vec<f64> = affine(p.w_z, p.u_z, p.b_z, h).into_iter().map(sig).collect();
        let r: Vec<f64> = affine(p.w_r, p.u_r, p.b_r, h).into_iter().map(sig).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = affine(p.w_h, p.u_h, p.b_h, &rh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        (0..d)
            .map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j])
            .collect()
    }

    fn random_gru(seed: u64, input: usize, hidden: usize) -> (ParamStore, GruParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = GruParams::init(&mut store, "g", input, hidden, &mut rng);
        for id in [p.b_z, p.b_r, p.b_h] {
            let t = Tensor::uniform(&[1, hidden], 0.5, &mut rng);
            store.get_mut(id).data_mut().copy_from_slice(t.data());
        }
        (store, p)
    }

    #[test]
    fn zero_params_keep_zero_state() {
        let (mut store, p) = random_gru(0, 3, 2);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(&Tensor::row(vec![0.3, -1.0, 2.0]));
        let h0 = g.constant(&Tensor::zeros(&[1, 2]));
        let h = gru_step(&mut g, &store, &p, x, h0).unwrap();
        assert_eq!(g.value(h), &[0.0, 0.0]);
    }

    #[test]
    fn scalar_hand_case() {
        let (mut store, p) = random_gru(0, 1, 1);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        store.get_mut(p.w_h).data_mut()[0] = 1.0;
        store.get_mut(p.w_r).data_mut()[0] = 0.7;
        let mut g = Graph::new();
        let x = g.constant(&Tensor::row(vec![1.0]));
        let h0 = g.constant(&Tensor::zeros(&[1, 1]));
        let h = gru_step(&mut g, &store, &p, x, h0).unwrap();
        assert!((g.value(h)[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((g.value(h)[0] - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn step_matches_reference() {
        let (store, p) = random_gru(9, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut h_ref = vec![0.0; 3];
        let mut g = Graph::new();
        let mut h = g.constant(&Tensor::zeros(&[1, 3]));
        for _ in 0..6 {
            let x = Tensor::uniform(&[1, 4], 2.0, &mut rng);
            let xv = g.constant(&x);
            h = gru_step(&mut g, &store, &p, xv, h).unwrap();
            h_ref = reference_step(&store, &p, x.data(), &h_ref);
            for (a, b) in g.value(h).iter().zip(&h_ref) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_rejects_bad_dims() {
        let (store, p) = random_gru(0, 3, 2);
        let mut g = Graph::new();
        let x = g.constant(&Tensor::row(vec![1.0, 2.0]));
        let h0 = g.constant(&Tensor::zeros(&[1, 2]));
        assert!(matches!(
            gru_step(&mut g, &store, &p, x, h0),
            Err(Error::Dimension { .. })
        ));
    }

    fn bigru(seed: u64, m: usize, d: usize) -> (ParamStore, BiGruParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = BiGruParams::init(&mut store, m, d, &mut rng);
        (store, p)
    }

    #[test]
    fn single_position_encoding() {
        let (store, p) = bigru(2, 3, 2);
        let w = Tensor::row(vec![0.1, -0.4, 0.9]);
        let mut g = Graph::new();
        let x = g.constant(&w);
        let enc = encode(&mut g, &store, x, &p).unwrap();
        let f = reference_step(&store, &p.forward, w.data(), &[0.0, 0.0]);
        let b = reference_step(&store, &p.backward, w.data(), &[0.0, 0.0]);
        let expected: Vec<f64> = f.into_iter().chain(b).collect();
        assert_eq!(g.shape(enc), &[1, 4]);
        for (a, e) in g.value(enc).iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_matches_two_independent_passes() {
        let (store, p) = bigru(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::uniform(&[3, 3], 2.0, &mut rng);
        let mut g = Graph::new();
        let xv = g.constant(&x);
        let e = encode(&mut g, &store, xv, &p).unwrap();
        let enc = g.tensor(e);

        let mut fwd = vec![vec![0.0; 2]; 3];
        let mut h = vec![0.0; 2];
        for t in 0..3 {
            h = reference_step(&store, &p.forward, x.row_slice(t), &h);
            fwd[t] = h.clone();
        }
        let mut bwd = vec![vec![0.0; 2]; 3];
        let mut h = vec![0.0; 2];
        for t in (0..3).rev() {
            h = reference_step(&store, &p.backward, x.row_slice(t), &h);
            bwd[t] = h.clone();
        }
        for t in 0..3 {
            let row = enc.row_slice(t);
            for j in 0..2 {
                assert!((row[j] - fwd[t][j]).abs() < 1e-12);
                assert!((row[2 + j] - bwd[t][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reversal_with_swapped_directions() {
        let (store, p) = bigru(6, 2, 3);
        let swapped = BiGruParams {
            forward: p.backward,
            backward: p.forward,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor::uniform(&[5, 2], 1.5, &mut rng);
        let rows: Vec<Vec<f64>> = (0..5).rev().map(|t| x.row_slice(t).to_vec()).collect();
        let xr = Tensor::from_rows(&rows).unwrap();

        let mut g = Graph::new();
        let (a, b) = (g.constant(&x), g.constant(&xr));
        let o = encode(&mut g, &store, a, &p).unwrap();
        let o_r = encode(&mut g, &store, b, &swapped).unwrap();
        let (out, out_r) = (g.tensor(o), g.tensor(o_r));
        for t in 0..5 {
            let orig = out.row_slice(t);
            let rev = out_r.row_slice(4 - t);
            assert_eq!(&orig[..3], &rev[3..]);
            assert_eq!(&orig[3..], &rev[..3]);
        }
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let (store, p) = bigru(0, 2, 2);
        let mut g = Graph::new();
        let x = g.constant(&Tensor::zeros(&[1, 3]));
        assert!(matches!(
            encode(&mut g, &store, x, &p),
            Err(Error::Dimension { .. })
        ));
    }
}
