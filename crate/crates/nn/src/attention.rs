//! Multi-head self-attention over a 2-D feature map (the BoTNet block core).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::gemm::{sgemm, Layout};
use crate::layers::Conv2d;
use crate::module::{join, Module, ParamMuts, ParamRefs};
use crate::param::Param;
use crate::tensor::Tensor;

/// All-to-all attention over the `h x w` positions of a feature map.
///
/// Per head with queries `Q`, keys `K`, values `V` (each `d x N`) and a learned
/// position embedding `P[:, (y, x)] = r_h[:, y] + r_w[:, x]`, the logits are
/// `E = QᵀK + PᵀQ`, the attention is the row softmax of `E` and the output is
/// `V Aᵀ`. The spatial size is fixed at construction.
pub struct SelfAttention2d {
    channels: usize,
    heads: usize,
    height: usize,
    width: usize,
    query: Conv2d,
    key: Conv2d,
    value: Conv2d,
    rel_h: Param,
    rel_w: Param,
    cache: Option<AttentionCache>,
}

struct AttentionCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Vec<f32>,
}

impl SelfAttention2d {
    pub fn new<R: Rng + ?Sized>(channels: usize, heads: usize, height: usize, width: usize, rng: &mut R) -> Self {
        assert!(channels.is_multiple_of(heads), "channels must divide evenly across heads");
        let d = channels / heads;
        let normal = Normal::new(0.0f32, 1.0 / (d as f32).sqrt()).expect("valid std");
        let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| normal.sample(rng)).collect() };
        let rel_h = Param::new(vec![heads, d, height], draw(heads * d * height));
        let rel_w = Param::new(vec![heads, d, width], draw(heads * d * width));
        Self {
            channels,
            heads,
            height,
            width,
            query: Conv2d::new(channels, channels, 1, 1, 0, true, rng),
            key: Conv2d::new(channels, channels, 1, 1, 0, true, rng),
            value: Conv2d::new(channels, channels, 1, 1, 0, true, rng),
            rel_h,
            rel_w,
            cache: None,
        }
    }

    fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    fn positions(&self, head: usize) -> Vec<f32> {
        let d = self.head_dim();
        let (h, w) = (self.height, self.width);
        let mut p = vec![0.0f32; d * h * w];
        for dd in 0..d {
            let rh = &self.rel_h.value()[(head * d + dd) * h..(head * d + dd + 1) * h];
            let rw = &self.rel_w.value()[(head * d + dd) * w..(head * d + dd + 1) * w];
            for y in 0..h {
                for x in 0..w {
                    p[dd * h * w + y * w + x] = rh[y] + rw[x];
                }
            }
        }
        p
    }

    fn attend(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> (Tensor, Vec<f32>) {
        let [n, c, h, w] = q.shape();
        assert_eq!((c, h, w), (self.channels, self.height, self.width), "attention input shape mismatch");
        let d = self.head_dim();
        let npos = h * w;
        let mut out = Tensor::zeros(q.shape());
        let mut attn = vec![0.0f32; n * self.heads * npos * npos];
        let positions: Vec<Vec<f32>> = (0..self.heads).map(|hd| self.positions(hd)).collect();
        for b in 0..n {
            for hd in 0..self.heads {
                let r = hd * d * npos..(hd + 1) * d * npos;
                let (qh, kh, vh) = (&q.item(b)[r.clone()], &k.item(b)[r.clone()], &v.item(b)[r.clone()]);
                let a = &mut attn[(b * self.heads + hd) * npos * npos..(b * self.heads + hd + 1) * npos * npos];
                sgemm(npos, d, npos, qh, Layout::Transposed, kh, Layout::Normal, a, false);
                sgemm(npos, d, npos, &positions[hd], Layout::Transposed, qh, Layout::Normal, a, true);
                for row in a.chunks_mut(npos) {
                    let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                    let mut s = 0.0;
                    row.iter_mut().for_each(|e| {
                        *e = (*e - m).exp();
                        s += *e;
                    });
                    row.iter_mut().for_each(|e| *e /= s);
                }
                let o = &mut out.item_mut(b)[r];
                sgemm(d, npos, npos, vh, Layout::Normal, a, Layout::Transposed, o, false);
            }
        }
        (out, attn)
    }
}

impl Module for SelfAttention2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let (q, k, v) = (self.query.forward(x), self.key.forward(x), self.value.forward(x));
        self.attend(&q, &k, &v).0
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let q = self.query.forward_train(x);
        let k = self.key.forward_train(x);
        let v = self.value.forward_train(x);
        let (out, attn) = self.attend(&q, &k, &v);
        self.cache = Some(AttentionCache { q, k, v, attn });
        out
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let AttentionCache { q, k, v, attn } = self.cache.take().expect("SelfAttention2d::backward without forward_train");
        let [n, _, h, w] = q.shape();
        let d = self.head_dim();
        let npos = h * w;
        let mut dq = Tensor::zeros(q.shape());
        let mut dk = Tensor::zeros(q.shape());
        let mut dv = Tensor::zeros(q.shape());
        let mut d_rel_h = vec![0.0f32; self.rel_h.len()];
        let mut d_rel_w = vec![0.0f32; self.rel_w.len()];
        let mut da = vec![0.0f32; npos * npos];
        let mut dp = vec![0.0f32; d * npos];
        let positions: Vec<Vec<f32>> = (0..self.heads).map(|hd| self.positions(hd)).collect();
        for b in 0..n {
            for hd in 0..self.heads {
                let r = hd * d * npos..(hd + 1) * d * npos;
                let a = &attn[(b * self.heads + hd) * npos * npos..(b * self.heads + hd + 1) * npos * npos];
                let go = &grad_out.item(b)[r.clone()];
                let (qh, kh, vh) = (&q.item(b)[r.clone()], &k.item(b)[r.clone()], &v.item(b)[r.clone()]);
                sgemm(d, npos, npos, go, Layout::Normal, a, Layout::Normal, &mut dv.item_mut(b)[r.clone()], false);
                sgemm(npos, d, npos, go, Layout::Transposed, vh, Layout::Normal, &mut da, false);
                // softmax backward, in place: da <- dE
                for (arow, drow) in a.chunks(npos).zip(da.chunks_mut(npos)) {
                    let dot: f32 = arow.iter().zip(drow.iter()).map(|(x, y)| x * y).sum();
                    drow.iter_mut().zip(arow).for_each(|(dv, av)| *dv = av * (*dv - dot));
                }
                let de = &da;
                let dqh = &mut dq.item_mut(b)[r.clone()];
                sgemm(d, npos, npos, kh, Layout::Normal, de, Layout::Transposed, dqh, false);
                sgemm(d, npos, npos, &positions[hd], Layout::Normal, de, Layout::Normal, dqh, true);
                sgemm(d, npos, npos, qh, Layout::Normal, de, Layout::Normal, &mut dk.item_mut(b)[r.clone()], false);
                sgemm(d, npos, npos, qh, Layout::Normal, de, Layout::Transposed, &mut dp, false);
                for dd in 0..d {
                    for y in 0..h {
                        for x in 0..w {
                            let g = dp[dd * npos + y * w + x];
                            d_rel_h[(hd * d + dd) * h + y] += g;
                            d_rel_w[(hd * d + dd) * w + x] += g;
                        }
                    }
                }
            }
        }
        self.rel_h.accumulate_grad(&d_rel_h);
        self.rel_w.accumulate_grad(&d_rel_w);
        let mut dx = self.query.backward(&dq);
        dx.add_assign(&self.key.backward(&dk));
        dx.add_assign(&self.value.backward(&dv));
        dx
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        self.query.collect_params(&join(prefix, "query"), out);
        self.key.collect_params(&join(prefix, "key"), out);
        self.value.collect_params(&join(prefix, "value"), out);
        out.push((join(prefix, "rel_h"), &self.rel_h));
        out.push((join(prefix, "rel_w"), &self.rel_w));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        self.query.collect_params_mut(&join(prefix, "query"), out);
        self.key.collect_params_mut(&join(prefix, "key"), out);
        self.value.collect_params_mut(&join(prefix, "value"), out);
        out.push((join(prefix, "rel_h"), &mut self.rel_h));
        out.push((join(prefix, "rel_w"), &mut self.rel_w));
    }

    fn clear_cache(&mut self) {
        self.cache = None;
        self.query.clear_cache();
        self.key.clear_cache();
        self.value.clear_cache();
    }
}
