use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::gemm::{sgemm, Layout};
use crate::module::{join, Module, ParamMuts, ParamRefs};
use crate::param::Param;
use crate::tensor::Tensor;

/// Batch items handled by one worker during the backward pass. Fixed so that
/// gradient summation order never depends on the thread count.
const BACKWARD_CHUNK: usize = 4;

/// Square-kernel 2-D convolution lowered to `im2col` + GEMM.
#[derive(Debug, Clone)]
pub struct Conv2d {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    weight: Param,
    bias: Option<Param>,
    cache: Option<Tensor>,
}

impl Conv2d {
    /// He-normal (fan-in) initialized weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        assert!(kernel > 0 && stride > 0);
        let fan_in = in_channels * kernel * kernel;
        let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("valid std");
        let weight: Vec<f32> = (0..out_channels * fan_in).map(|_| normal.sample(rng)).collect();
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(vec![out_channels, in_channels, kernel, kernel], weight),
            bias: bias.then(|| Param::filled(vec![out_channels], 0.0)),
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.padding - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.padding - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    pub fn weight(&self) -> &Param {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Param {
        &mut self.weight
    }

    fn pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn geometry(&self, h: usize, w: usize) -> ColGeometry {
        let (oh, ow) = self.output_size(h, w);
        ColGeometry {
            channels: self.in_channels,
            h,
            w,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            oh,
            ow,
        }
    }

    fn run_forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.in_channels, "conv input channel mismatch");
        let geo = self.geometry(h, w);
        let plane = geo.oh * geo.ow;
        let rows = self.col_rows();
        let mut out = Tensor::zeros([n, self.out_channels, geo.oh, geo.ow]);
        let item_out = self.out_channels * plane;
        out.data_mut()
            .par_chunks_mut(item_out)
            .enumerate()
            .for_each_init(
                || vec![0.0f32; if self.pointwise() { 0 } else { rows * plane }],
                |col, (b, o)| {
                    let input = x.item(b);
                    let col: &[f32] = if self.pointwise() {
                        input
                    } else {
                        im2col(input, &geo, col);
                        col
                    };
                    sgemm(
                        self.out_channels,
                        rows,
                        plane,
                        self.weight.value(),
                        Layout::Normal,
                        col,
                        Layout::Normal,
                        o,
                        false,
                    );
                    if let Some(bias) = &self.bias {
                        for (oc, chunk) in o.chunks_mut(plane).enumerate() {
                            let bv = bias.value()[oc];
                            chunk.iter_mut().for_each(|v| *v += bv);
                        }
                    }
                },
            );
        out
    }
}

impl Module for Conv2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        self.run_forward(x)
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let out = self.run_forward(x);
        self.cache = Some(x.clone());
        out
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self.cache.take().expect("Conv2d::backward without forward_train");
        let [n, _, h, w] = x.shape();
        let geo = self.geometry(h, w);
        let plane = geo.oh * geo.ow;
        let rows = self.col_rows();
        let oc = self.out_channels;
        assert_eq!(grad_out.shape(), [n, oc, geo.oh, geo.ow]);
        let pointwise = self.pointwise();
        let weight = self.weight.value();
        let in_item = x.item_len();
        let has_bias = self.bias.is_some();

        let mut dx = Tensor::zeros(x.shape());
        let partials: Vec<(Vec<f32>, Vec<f32>)> = dx
            .data_mut()
            .par_chunks_mut(in_item * BACKWARD_CHUNK)
            .enumerate()
            .map(|(chunk_idx, dx_chunk)| {
                let mut dw = vec![0.0f32; weight.len()];
                let mut db = vec![0.0f32; if has_bias { oc } else { 0 }];
                let mut col = vec![0.0f32; if pointwise { 0 } else { rows * plane }];
                let mut dcol = vec![0.0f32; rows * plane];
                for (j, dx_item) in dx_chunk.chunks_mut(in_item).enumerate() {
                    let b = chunk_idx * BACKWARD_CHUNK + j;
                    let g = grad_out.item(b);
                    let colv: &[f32] = if pointwise {
                        x.item(b)
                    } else {
                        im2col(x.item(b), &geo, &mut col);
                        &col
                    };
                    sgemm(oc, plane, rows, g, Layout::Normal, colv, Layout::Transposed, &mut dw, true);
                    if has_bias {
                        for (o, chunk) in g.chunks(plane).enumerate() {
                            db[o] += chunk.iter().sum::<f32>();
                        }
                    }
                    if pointwise {
                        sgemm(rows, oc, plane, weight, Layout::Transposed, g, Layout::Normal, dx_item, false);
                    } else {
                        sgemm(rows, oc, plane, weight, Layout::Transposed, g, Layout::Normal, &mut dcol, false);
                        col2im(&dcol, &geo, dx_item);
                    }
                }
                (dw, db)
            })
            .collect();
        for (dw, db) in partials {
            self.weight.accumulate_grad(&dw);
            if let Some(bias) = &mut self.bias {
                bias.accumulate_grad(&db);
            }
        }
        dx
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        out.push((join(prefix, "weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((join(prefix, "bias"), b));
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), b));
        }
    }

    fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[derive(Debug, Clone, Copy)]
struct ColGeometry {
    channels: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl ColGeometry {
    /// Output columns `[lo, hi)` whose input column `ox * stride + kx - padding` is in bounds.
    fn valid_range(&self, k: usize, out_len: usize, in_len: usize) -> (usize, usize) {
        let s = self.stride;
        let p = self.padding;
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        // largest o with o*s + k - p <= in_len - 1
        let hi = if in_len + p > k {
            ((in_len - 1 + p - k) / s + 1).min(out_len)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

fn im2col(input: &[f32], g: &ColGeometry, col: &mut [f32]) {
    let plane = g.oh * g.ow;
    let mut row = 0;
    for c in 0..g.channels {
        let src = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kernel {
            let (oy_lo, oy_hi) = g.valid_range(ky, g.oh, g.h);
            for kx in 0..g.kernel {
                let (ox_lo, ox_hi) = g.valid_range(kx, g.ow, g.w);
                let dst = &mut col[row * plane..(row + 1) * plane];
                dst.iter_mut().for_each(|v| *v = 0.0);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.padding;
                    let src_row = &src[iy * g.w..(iy + 1) * g.w];
                    let dst_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        let ix0 = ox_lo + kx - g.padding;
                        dst_row[ox_lo..ox_hi].copy_from_slice(&src_row[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            dst_row[ox] = src_row[ox * g.stride + kx - g.padding];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(col: &[f32], g: &ColGeometry, out: &mut [f32]) {
    let plane = g.oh * g.ow;
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut row = 0;
    for c in 0..g.channels {
        let dst = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kernel {
            let (oy_lo, oy_hi) = g.valid_range(ky, g.oh, g.h);
            for kx in 0..g.kernel {
                let (ox_lo, ox_hi) = g.valid_range(kx, g.ow, g.w);
                let src = &col[row * plane..(row + 1) * plane];
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.padding;
                    let dst_row = &mut dst[iy * g.w..(iy + 1) * g.w];
                    let src_row = &src[oy * g.ow..(oy + 1) * g.ow];
                    for ox in ox_lo..ox_hi {
                        dst_row[ox * g.stride + kx - g.padding] += src_row[ox];
                    }
                }
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_conv(conv: &Conv2d, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = conv.output_size(h, w);
        let k = conv.kernel;
        let mut out = Tensor::zeros([n, conv.out_channels, oh, ow]);
        for b in 0..n {
            for o in 0..conv.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |p| p.value()[o]);
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                                    let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let wv = conv.weight.value()[((o * c + ci) * k + ky) * k + kx];
                                    acc += wv * x.item(b)[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out.item_mut(b)[(o * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0), (7, 2, 3), (2, 2, 0)] {
            let mut conv = Conv2d::new(3, 4, k, s, p, true, &mut rng);
            conv.bias.as_mut().unwrap().value_mut()[1] = 0.5;
            let x = Tensor::from_vec(
                [2, 3, 9, 8],
                (0..2 * 3 * 72).map(|i| ((i * 37 % 17) as f32 - 8.0) / 8.0).collect(),
            );
            let got = conv.forward(&x);
            let want = direct_conv(&conv, &x);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-4, "k={k} s={s} p={p}: {a} vs {b}");
            }
        }
    }
}
