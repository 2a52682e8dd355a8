//! Multi-head self-attention and the post-norm transformer encoder layer.
//! Sequences are `[seq, embed]` row-major.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{ln_backward, ln_forward, LayerNorm, Linear, LnCache};
use super::tensor::{add_bias, col_sum_acc, matmul, matmul_at_acc, matmul_bt, Tensor};
use crate::error::{Error, Result};

/// Projections of one head: `W_i^Q`, `W_i^K`, `W_i^V` are `[embed, d_h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHead {
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerParams {
    pub heads: Vec<AttentionHead>,
    /// `W^O`, `[h * d_h, embed]`.
    pub w_o: Tensor,
    pub b_o: Tensor,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
}

/// Fixed sinusoidal encoding `[seq, embed]` with base 10^4.
pub fn positional_encoding(seq: usize, embed: usize) -> Vec<f64> {
    let mut pe = vec![0.0; seq * embed];
    for s in 0..seq {
        for i in 0..embed {
            let rate = 10_000f64.powf((2 * (i / 2)) as f64 / embed as f64);
            let a = s as f64 / rate;
            pe[s * embed + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    pe
}

/// `softmax(Q K^T / sqrt(d_h)) V` for `q [sq, d_h]`, `k [sk, d_h]`,
/// `v [sk, dv]`. Returns the output and the attention weights `[sq, sk]`.
pub(crate) fn attention_raw(q: &[f64], k: &[f64], v: &[f64], sq: usize, sk: usize, dh: usize, dv: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (dh as f64).sqrt();
    let mut a = matmul_bt(q, k, sq, dh, sk);
    for row in a.chunks_mut(sk) {
        let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x * scale));
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x * scale - m).exp();
            z += *x;
        }
        row.iter_mut().for_each(|x| *x /= z);
    }
    (matmul(&a, v, sq, sk, dv), a)
}

/// Scaled dot-product attention on `[rows, cols]` tensors.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, d_h: usize) -> Result<Tensor> {
    let dims = |t: &Tensor| (t.shape.len() == 2).then(|| (t.shape[0], t.shape[1]));
    let (Some((sq, dq)), Some((sk, dk)), Some((sv, dv))) = (dims(q), dims(k), dims(v)) else {
        return Err(Error::ShapeMismatch("attention expects 2-d tensors".into()));
    };
    if dq != dk || sk != sv || dq != d_h {
        return Err(Error::ShapeMismatch(format!(
            "q {:?}, k {:?}, v {:?}, d_h {d_h}",
            q.shape, k.shape, v.shape
        )));
    }
    let (out, _) = attention_raw(&q.data, &k.data, &v.data, sq, sk, d_h, dv);
    Ok(Tensor::from_vec(&[sq, dv], out))
}

#[derive(Debug, Clone)]
pub(crate) struct TransformerCache {
    u: Vec<f64>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    concat: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    n1: Vec<f64>,
    ln1: LnCache,
    h1: Vec<f64>,
    ff_mask: Option<Vec<f64>>,
    ln2: LnCache,
    /// Output of the layer, `f(u)`.
    pub out: Vec<f64>,
}

impl TransformerCache {
    pub(crate) fn relu_pattern(&self) -> impl Iterator<Item = bool> + '_ {
        self.h1.iter().map(|&v| v > 0.0)
    }
}

fn dropout_mask<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

/// One encoder layer on `u [seq, embed]` (positional encoding already
/// added). `dropout` carries the rate and the mask stream in training mode.
pub(crate) fn transformer_forward<R: Rng>(
    p: &TransformerParams,
    u: &[f64],
    seq: usize,
    embed: usize,
    dropout: Option<(f64, &mut R)>,
) -> TransformerCache {
    let h = p.heads.len();
    let dh = embed / h;
    let (mut qs, mut ks, mut vs, mut as_) = (vec![], vec![], vec![], vec![]);
    let mut concat = vec![0.0; seq * embed];
    for (i, head) in p.heads.iter().enumerate() {
        let proj = |w: &Tensor, b: &Tensor| {
            let mut r = matmul(u, &w.data, seq, embed, dh);
            add_bias(&mut r, &b.data);
            r
        };
        let q = proj(&head.w_q, &head.b_q);
        let k = proj(&head.w_k, &head.b_k);
        let v = proj(&head.w_v, &head.b_v);
        let (o, a) = attention_raw(&q, &k, &v, seq, seq, dh, dh);
        for s in 0..seq {
            concat[s * embed + i * dh..][..dh].copy_from_slice(&o[s * dh..][..dh]);
        }
        qs.push(q);
        ks.push(k);
        vs.push(v);
        as_.push(a);
    }
    let mut m = matmul(&concat, &p.w_o.data, seq, embed, embed);
    add_bias(&mut m, &p.b_o.data);
    let (mut attn_mask, mut ff_mask) = (None, None);
    let mut dropout = dropout.filter(|(rate, _)| *rate > 0.0);
    if let Some((rate, rng)) = dropout.as_mut() {
        let mask = dropout_mask(m.len(), *rate, *rng);
        m.iter_mut().zip(&mask).for_each(|(x, k)| *x *= k);
        attn_mask = Some(mask);
    }
    let r1: Vec<f64> = u.iter().zip(&m).map(|(a, b)| a + b).collect();
    let (n1, ln1) = ln_forward(&r1, &p.ln1, embed);

    let ff = p.ff1.b.len();
    let mut h1 = matmul(&n1, &p.ff1.w.data, seq, embed, ff);
    add_bias(&mut h1, &p.ff1.b.data);
    h1.iter_mut().for_each(|x| *x = x.max(0.0));
    let mut f = matmul(&h1, &p.ff2.w.data, seq, ff, embed);
    add_bias(&mut f, &p.ff2.b.data);
    if let Some((rate, rng)) = dropout.as_mut() {
        let mask = dropout_mask(f.len(), *rate, *rng);
        f.iter_mut().zip(&mask).for_each(|(x, k)| *x *= k);
        ff_mask = Some(mask);
    }
    let r2: Vec<f64> = n1.iter().zip(&f).map(|(a, b)| a + b).collect();
    let (out, ln2) = ln_forward(&r2, &p.ln2, embed);
    TransformerCache {
        u: u.to_vec(),
        q: qs,
        k: ks,
        v: vs,
        a: as_,
        concat,
        attn_mask,
        n1,
        ln1,
        h1,
        ff_mask,
        ln2,
        out,
    }
}

/// Returns the gradient with respect to `u`; accumulates into `grad`.
pub(crate) fn transformer_backward(
    p: &TransformerParams,
    c: &TransformerCache,
    dout: &[f64],
    seq: usize,
    embed: usize,
    grad: &mut TransformerParams,
) -> Vec<f64> {
    let h = p.heads.len();
    let dh = embed / h;
    let ff = p.ff1.b.len();

    let dr2 = ln_backward(dout, &c.ln2, &p.ln2, embed, &mut grad.ln2);
    let mut df = dr2.clone();
    if let Some(mask) = &c.ff_mask {
        df.iter_mut().zip(mask).for_each(|(d, k)| *d *= k);
    }
    matmul_at_acc(&c.h1, &df, seq, ff, embed, &mut grad.ff2.w.data);
    col_sum_acc(&df, &mut grad.ff2.b.data);
    let mut dh1 = matmul_bt(&df, &p.ff2.w.data, seq, embed, ff);
    dh1.iter_mut().zip(&c.h1).for_each(|(d, &v)| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    matmul_at_acc(&c.n1, &dh1, seq, embed, ff, &mut grad.ff1.w.data);
    col_sum_acc(&dh1, &mut grad.ff1.b.data);
    let mut dn1 = matmul_bt(&dh1, &p.ff1.w.data, seq, ff, embed);
    dn1.iter_mut().zip(&dr2).for_each(|(a, b)| *a += b);

    let dr1 = ln_backward(&dn1, &c.ln1, &p.ln1, embed, &mut grad.ln1);
    let mut du = dr1.clone();
    let mut dm = dr1;
    if let Some(mask) = &c.attn_mask {
        dm.iter_mut().zip(mask).for_each(|(d, k)| *d *= k);
    }
    matmul_at_acc(&c.concat, &dm, seq, embed, embed, &mut grad.w_o.data);
    col_sum_acc(&dm, &mut grad.b_o.data);
    let dconcat = matmul_bt(&dm, &p.w_o.data, seq, embed, embed);

    let scale = 1.0 / (dh as f64).sqrt();
    for i in 0..h {
        let mut dho = vec![0.0; seq * dh];
        for s in 0..seq {
            dho[s * dh..][..dh].copy_from_slice(&dconcat[s * embed + i * dh..][..dh]);
        }
        let a = &c.a[i];
        let da = matmul_bt(&dho, &c.v[i], seq, dh, seq);
        let mut dv = vec![0.0; seq * dh];
        matmul_at_acc(a, &dho, seq, seq, dh, &mut dv);
        let mut ds = vec![0.0; seq * seq];
        for r in 0..seq {
            let ar = &a[r * seq..][..seq];
            let dar = &da[r * seq..][..seq];
            let dot: f64 = ar.iter().zip(dar).map(|(x, y)| x * y).sum();
            for j in 0..seq {
                ds[r * seq + j] = ar[j] * (dar[j] - dot) * scale;
            }
        }
        let dq = matmul(&ds, &c.k[i], seq, seq, dh);
        let mut dk = vec![0.0; seq * dh];
        matmul_at_acc(&ds, &c.q[i], seq, seq, dh, &mut dk);

        let head = &p.heads[i];
        let g = &mut grad.heads[i];
        for (d, w, gw, gb) in [
            (&dq, &head.w_q, &mut g.w_q, &mut g.b_q),
            (&dk, &head.w_k, &mut g.w_k, &mut g.b_k),
            (&dv, &head.w_v, &mut g.w_v, &mut g.b_v),
        ] {
            matmul_at_acc(&c.u, d, seq, embed, dh, &mut gw.data);
            col_sum_acc(d, &mut gb.data);
            let back = matmul_bt(d, &w.data, seq, dh, embed);
            du.iter_mut().zip(back).for_each(|(a, b)| *a += b);
        }
    }
    du
}
