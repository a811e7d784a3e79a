//! Straight-line reference implementations used as oracles by the
//! integration tests. Nothing here touches the autodiff graph.

#![allow(dead_code)]

use mixtag::attention::AttnParams;
use mixtag::corpus::Sentence;
use mixtag::decoder::DecoderParams;
use mixtag::encoder::GruParams;
use mixtag::numerics::{ParamStore, Tensor};
use mixtag::tagging::{Span, Triple};
use rand::Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows_of(t: &Tensor) -> Rows {
    (0..t.rows()).map(|i| t.row_slice(i).to_vec()).collect()
}

/// `x · W` for a row vector `x`.
pub fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    assert_eq!(x.len(), w.rows());
    (0..w.cols())
        .map(|j| x.iter().enumerate().map(|(i, xi)| xi * w.get(i, j)).sum())
        .collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn random_rows<R: Rng>(rng: &mut R, n: usize, d: usize, bound: f64) -> Rows {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-bound..bound)).collect())
        .collect()
}

pub fn to_tensor(rows: &Rows) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

pub fn max_abs_diff(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// GRU rollout from a zero state, one coordinate at a time.
pub fn gru_reference(store: &ParamStore, p: &GruParams, xs: &Rows, reverse: bool) -> Rows {
    let get = |id| store.get(id);
    let mut h = vec![0.0; p.hidden];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    let mut out = vec![Vec::new(); xs.len()];
    for t in order {
        let x = &xs[t];
        let bz = get(p.b_z).data();
        let br = get(p.b_r).data();
        let bh = get(p.b_h).data();
        let z: Vec<f64> = add(&add(&vec_mat(x, get(p.w_z)), &vec_mat(&h, get(p.u_z))), bz)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = add(&add(&vec_mat(x, get(p.w_r)), &vec_mat(&h, get(p.u_r))), br)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = add(&add(&vec_mat(x, get(p.w_h)), &vec_mat(&rh, get(p.u_h))), bh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        h = (0..p.hidden)
            .map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j])
            .collect();
        out[t] = h.clone();
    }
    out
}

/// Attention written as explicit sums: for each position `i`,
/// `a_ij = exp(q_i·k_j/√d) / Σ_l exp(q_i·k_l/√d)` and `out_i = Σ_j a_ij v_j`.
pub fn attention_by_sums(store: &ParamStore, p: &AttnParams, h: &Rows) -> (Rows, Rows) {
    let q: Rows = h.iter().map(|x| vec_mat(x, store.get(p.w_q))).collect();
    let k: Rows = h.iter().map(|x| vec_mat(x, store.get(p.w_k))).collect();
    let v: Rows = h.iter().map(|x| vec_mat(x, store.get(p.w_v))).collect();
    let scale = (p.key_dim as f64).sqrt();
    let n = h.len();
    let mut weights = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let e: Vec<f64> = (0..n)
            .map(|j| {
                let dot: f64 = q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum();
                (dot / scale).exp()
            })
            .collect();
        let total: f64 = e.iter().sum();
        let a: Vec<f64> = e.iter().map(|x| x / total).collect();
        let mut o = vec![0.0; v[0].len()];
        for j in 0..n {
            for (oc, vc) in o.iter_mut().zip(&v[j]) {
                *oc += a[j] * vc;
            }
        }
        weights.push(a);
        out.push(o);
    }
    (out, weights)
}

/// Decoder with label feedback, step by step: returns tag probabilities per position.
pub fn decoder_reference(store: &ParamStore, p: &DecoderParams, hs: &Rows) -> Rows {
    let get = |id| store.get(id);
    let mut h = vec![0.0; p.hidden];
    let mut t = vec![0.0; p.label_dim];
    let mut probs = Vec::with_capacity(hs.len());
    for x in hs {
        let gate = |w, u, v, b| -> Vec<f64> {
            let s = add(
                &add(&add(&vec_mat(x, get(w)), &vec_mat(&h, get(u))), &vec_mat(&t, get(v))),
                get(b).data(),
            );
            s.into_iter().map(sigmoid).collect()
        };
        let r = gate(p.w_r, p.u_r, p.v_r, p.b_r);
        let z = gate(p.w_z, p.u_z, p.v_z, p.b_z);
        let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = add(
            &add(&add(&vec_mat(x, get(p.w_h)), &vec_mat(&rh, get(p.u_h))), &vec_mat(&t, get(p.v_h))),
            get(p.b_h).data(),
        )
        .into_iter()
        .map(f64::tanh)
        .collect();
        h = (0..p.hidden)
            .map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j])
            .collect();
        t = add(&vec_mat(&h, get(p.w_t)), get(p.b_t).data())
            .into_iter()
            .map(f64::tanh)
            .collect();
        let logits = add(&vec_mat(&t, get(p.w_y)), get(p.b_y).data());
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        probs.push(e.into_iter().map(|x| x / s).collect());
    }
    probs
}

const TEXT_CHARS: &str = "甲乙丙丁戊己庚辛壬癸子丑寅卯辰巳午未申酉戌亥";

/// A random sentence with up to `max_triples` triples, each on a distinct
/// relation drawn from `relations`, and no two entity mentions overlapping.
pub fn random_sentence<R: Rng>(rng: &mut R, relations: &[String], max_triples: usize) -> Sentence {
    let pool: Vec<char> = TEXT_CHARS.chars().collect();
    let n = rng.gen_range(2..=30);
    let text: Vec<char> = (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    let mut taken = vec![false; n];
    let mut rel_order: Vec<usize> = (0..relations.len()).collect();
    for i in (1..rel_order.len()).rev() {
        rel_order.swap(i, rng.gen_range(0..=i));
    }
    let wanted = rng.gen_range(0..=max_triples.min(relations.len()));
    let mut triples = Vec::new();
    let place = |rng: &mut R, taken: &mut Vec<bool>| -> Option<Span> {
        for _ in 0..20 {
            let len = rng.gen_range(1..=4.min(n));
            let start = rng.gen_range(0..=n - len);
            if taken[start..start + len].iter().all(|t| !t) {
                taken[start..start + len].iter_mut().for_each(|t| *t = true);
                return Some(Span::new(start, start + len));
            }
        }
        None
    };
    for &r in rel_order.iter().take(wanted) {
        let Some(head) = place(rng, &mut taken) else { break };
        let Some(tail) = place(rng, &mut taken) else {
            taken[head.start..head.end].iter_mut().for_each(|t| *t = false);
            break;
        };
        triples.push(Triple::from_spans(&text, head, &relations[r], tail));
    }
    Sentence {
        text: text.into_iter().collect(),
        triples,
    }
}

/// Synthetic benchmark: 4 relations, 250 sentences split 200/50.
pub fn harness_corpus(seed: u64) -> mixtag::corpus::SynthCorpus {
    mixtag::corpus::generate_synthetic(&mixtag::corpus::SynthConfig {
        seed,
        word_dim: 32,
        ..Default::default()
    })
    .unwrap()
}

/// Scaled-down model (32/32/64) with α = 3 and the harness optimiser settings.
pub fn harness_config(seed: u64, epochs: usize) -> mixtag::training::TrainConfig {
    mixtag::training::TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: 1e-2,
        seed,
        alpha: 3.0,
        model: mixtag::training::ModelConfig {
            char_dim: 32,
            encoder_dim: 32,
            decoder_dim: 64,
            use_word_mixing: true,
            use_attention: true,
        },
        ..Default::default()
    }
}

/// Tag letters for the one-relation scheme, read from the id layout
/// `1 + position·2 + (role − 1)` with positions B, I, E, S.
pub fn letter_role(id: usize) -> Option<(char, u8)> {
    const TABLE: [(char, u8); 8] = [
        ('B', 1),
        ('B', 2),
        ('I', 1),
        ('I', 2),
        ('E', 1),
        ('E', 2),
        ('S', 1),
        ('S', 2),
    ];
    (id >= 1).then(|| TABLE[id - 1])
}

/// Every span `[i, j]` whose tags read `S` or `B I… E` with one role,
/// found by checking all `O(n²)` candidate spans.
pub fn reference_mentions(tags: &[usize]) -> Vec<(Span, u8)> {
    let mut out = Vec::new();
    for i in 0..tags.len() {
        for j in i..tags.len() {
            let Some((first, role)) = letter_role(tags[i]) else { continue };
            let ok = if i == j {
                first == 'S'
            } else {
                first == 'B'
                    && letter_role(tags[j]) == Some(('E', role))
                    && (i + 1..j).all(|k| letter_role(tags[k]) == Some(('I', role)))
            };
            if ok {
                out.push((Span::new(i, j + 1), role));
            }
        }
    }
    out
}

pub fn chars_between(a: Span, b: Span) -> usize {
    (0..a.end.max(b.end))
        .filter(|&k| (k >= a.end && k < b.start) || (k >= b.end && k < a.start))
        .count()
}

/// Heads left to right, each claiming the unclaimed tail with the fewest
/// characters in between, preferring the rightmost tail on ties.
pub fn reference_decode(tags: &[usize]) -> Vec<(Span, Span)> {
    let mentions = reference_mentions(tags);
    let mut heads: Vec<Span> = mentions.iter().filter(|m| m.1 == 1).map(|m| m.0).collect();
    let tails: Vec<Span> = mentions.iter().filter(|m| m.1 == 2).map(|m| m.0).collect();
    heads.sort();
    let mut claimed = vec![false; tails.len()];
    let mut pairs = Vec::new();
    for h in heads {
        let best = (0..tails.len())
            .filter(|&j| !claimed[j])
            .min_by_key(|&j| (chars_between(h, tails[j]), std::cmp::Reverse(tails[j].start)));
        if let Some(j) = best {
            claimed[j] = true;
            pairs.push((h, tails[j]));
        }
    }
    pairs.sort();
    pairs
}
