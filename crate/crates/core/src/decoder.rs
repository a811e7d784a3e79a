//! GRU decoder with label feedback.
//!
//! Each step sees the attended encoder state, its own previous hidden state
//! and the previous continuous label representation `T`:
//!
//! ```text
//! r  = σ(h* W_r + h U_r + T V_r + b_r)
//! z  = σ(h* W_z + h U_z + T V_z + b_z)
//! h~ = tanh(h* W + (r ⊙ h) U + T V + b)
//! h' = (1 − z) ⊙ h + z ⊙ h~
//! T' = tanh(h' W_T + b_T)
//! p  = softmax(T' W_Y + b_Y)
//! ```
//!
//! `T` is never discretised, so the same pass serves training and inference.

use rand::Rng;

use crate::encoder::glorot;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderParams {
    pub w_r: ParamId,
    pub w_z: ParamId,
    pub w_h: ParamId,
    pub u_r: ParamId,
    pub u_z: ParamId,
    pub u_h: ParamId,
    pub v_r: ParamId,
    pub v_z: ParamId,
    pub v_h: ParamId,
    pub b_r: ParamId,
    pub b_z: ParamId,
    pub b_h: ParamId,
    pub w_t: ParamId,
    pub b_t: ParamId,
    pub w_y: ParamId,
    pub b_y: ParamId,
    pub input: usize,
    pub hidden: usize,
    /// Width of the label representation `T` (equal to the tag count).
    pub label_dim: usize,
    pub tags: usize,
}

impl DecoderParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        input: usize,
        hidden: usize,
        tags: usize,
        rng: &mut R,
    ) -> Self {
        let label_dim = tags;
        let mut w = |name: &str, r: usize, c: usize, rng: &mut R| {
            store.add(format!("decoder.{name}"), glorot(r, c, rng))
        };
        let w_r = w("W_r", input, hidden, rng);
        let w_z = w("W_z", input, hidden, rng);
        let w_h = w("W", input, hidden, rng);
        let u_r = w("U_r", hidden, hidden, rng);
        let u_z = w("U_z", hidden, hidden, rng);
        let u_h = w("U", hidden, hidden, rng);
        let v_r = w("V_r", label_dim, hidden, rng);
        let v_z = w("V_z", label_dim, hidden, rng);
        let v_h = w("V", label_dim, hidden, rng);
        let w_t = w("W_T", hidden, label_dim, rng);
        let w_y = w("W_Y", label_dim, tags, rng);
        let mut zeros = |name: &str, n: usize| {
            store.add(format!("decoder.{name}"), Tensor::zeros(&[1, n]))
        };
        let b_r = zeros("b_r", hidden);
        let b_z = zeros("b_z", hidden);
        let b_h = zeros("b", hidden);
        let b_t = zeros("b_T", label_dim);
        let b_y = zeros("b_Y", tags);
        Self {
            w_r,
            w_z,
            w_h,
            u_r,
            u_z,
            u_h,
            v_r,
            v_z,
            v_h,
            b_r,
            b_z,
            b_h,
            w_t,
            b_t,
            w_y,
            b_y,
            input,
            hidden,
            label_dim,
            tags,
        }
    }
}

/// Decoder recurrent state: hidden `1 × d_dec` and label representation `1 × τ`.
#[derive(Clone, Copy, Debug)]
pub struct DecodeState {
    pub hidden: Var,
    pub label: Var,
}

impl DecodeState {
    pub fn zeros(g: &mut Graph, p: &DecoderParams) -> Self {
        Self {
            hidden: g.constant_owned(Tensor::zeros(&[1, p.hidden])),
            label: g.constant_owned(Tensor::zeros(&[1, p.label_dim])),
        }
    }
}

struct StepVars {
    u: [Var; 3],
    v: [Var; 3],
    w_t: Var,
    b_t: Var,
}

impl StepVars {
    fn new(g: &mut Graph, store: &ParamStore, p: &DecoderParams) -> Self {
        Self {
            u: [p.u_r, p.u_z, p.u_h].map(|id| g.param(store, id)),
            v: [p.v_r, p.v_z, p.v_h].map(|id| g.param(store, id)),
            w_t: g.param(store, p.w_t),
            b_t: g.param(store, p.b_t),
        }
    }
}

/// `X W_* + b_*` for the reset, update and candidate paths.
fn project_inputs(g: &mut Graph, store: &ParamStore, p: &DecoderParams, x: Var) -> Result<[Var; 3]> {
    let mut out = [x; 3];
    for (slot, (w, b)) in out
        .iter_mut()
        .zip([(p.w_r, p.b_r), (p.w_z, p.b_z), (p.w_h, p.b_h)])
    {
        let wv = g.param(store, w);
        let bv = g.param(store, b);
        let xw = g.matmul(x, wv)?;
        *slot = g.add_row(xw, bv)?;
    }
    Ok(out)
}

fn step_core(
    g: &mut Graph,
    vars: &StepVars,
    [xr, xz, xh]: [Var; 3],
    state: DecodeState,
) -> Result<DecodeState> {
    let h = state.hidden;
    let t = state.label;
    let gate = |g: &mut Graph, x: Var, u: Var, v: Var| -> Result<Var> {
        let hu = g.matmul(h, u)?;
        let tv = g.matmul(t, v)?;
        let s = g.add(x, hu)?;
        let s = g.add(s, tv)?;
        Ok(g.sigmoid(s))
    };
    let r = gate(g, xr, vars.u[0], vars.v[0])?;
    let z = gate(g, xz, vars.u[1], vars.v[1])?;
    let rh = g.mul(r, h)?;
    let rhu = g.matmul(rh, vars.u[2])?;
    let tv = g.matmul(t, vars.v[2])?;
    let c = g.add(xh, rhu)?;
    let c = g.add(c, tv)?;
    let cand = g.tanh(c);
    let delta = g.sub(cand, h)?;
    let step = g.mul(z, delta)?;
    let hidden = g.add(h, step)?;
    let lt = g.matmul(hidden, vars.w_t)?;
    let lt = g.add_row(lt, vars.b_t)?;
    let label = g.tanh(lt);
    Ok(DecodeState { hidden, label })
}

/// One decoder step for a single `1 × d_v` attended state.
pub fn decode_step(
    g: &mut Graph,
    store: &ParamStore,
    p: &DecoderParams,
    h_star: Var,
    state: DecodeState,
) -> Result<DecodeState> {
    if g.shape(h_star) != [1, p.input]
        || g.shape(state.hidden) != [1, p.hidden]
        || g.shape(state.label) != [1, p.label_dim]
    {
        return Err(Error::Dimension {
            op: "decode_step",
            left: g.shape(h_star).to_vec(),
            right: vec![p.input, p.hidden, p.label_dim],
        });
    }
    let xs = project_inputs(g, store, p, h_star)?;
    let vars = StepVars::new(g, store, p);
    step_core(g, &vars, xs, state)
}

/// Tag probabilities for every row of an `n × τ` label matrix.
pub fn tag_distribution(
    g: &mut Graph,
    store: &ParamStore,
    p: &DecoderParams,
    labels: Var,
) -> Result<Var> {
    let wy = g.param(store, p.w_y);
    let by = g.param(store, p.b_y);
    let y = g.matmul(labels, wy)?;
    let y = g.add_row(y, by)?;
    g.softmax_rows(y)
}

/// Output of [`decode_sequence`].
pub struct Decoded {
    /// `n × k` tag probabilities.
    pub probs: Var,
    /// `n × τ` label representations.
    pub labels: Var,
    pub tag_ids: Vec<usize>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Left-to-right decoding of an `n × d_v` sequence from a zero state.
pub fn decode_sequence(
    g: &mut Graph,
    store: &ParamStore,
    p: &DecoderParams,
    h_star: Var,
) -> Result<Decoded> {
    let n = match g.shape(h_star) {
        [n, c] if *c == p.input => *n,
        other => {
            return Err(Error::Dimension {
                op: "decode_sequence",
                left: other.to_vec(),
                right: vec![p.input],
            })
        }
    };
    if n == 0 {
        return Err(Error::Contract("decode needs at least one position".into()));
    }
    let proj = project_inputs(g, store, p, h_star)?;
    let vars = StepVars::new(g, store, p);
    let mut state = DecodeState::zeros(g, p);
    let mut labels = Vec::with_capacity(n);
    for t in 0..n {
        let xs = [
            g.slice_rows(proj[0], t, 1)?,
            g.slice_rows(proj[1], t, 1)?,
            g.slice_rows(proj[2], t, 1)?,
        ];
        state = step_core(g, &vars, xs, state)?;
        labels.push(state.label);
    }
    let labels = g.concat_rows(&labels)?;
    let probs = tag_distribution(g, store, p, labels)?;
    let k = p.tags;
    let tag_ids = g.value(probs).chunks(k).map(argmax).collect();
    Ok(Decoded {
        probs,
        labels,
        tag_ids,
    })
}
