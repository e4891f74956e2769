use crate::module::{join, Module, ParamMuts, ParamRefs};
use crate::param::Param;
use crate::tensor::Tensor;

/// Per-channel batch normalization over `(n, h, w)`.
///
/// Running statistics follow the usual exponential update with the unbiased
/// batch variance; inference uses them exclusively.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    channels: usize,
    eps: f32,
    momentum: f32,
    gamma: Param,
    beta: Param,
    running_mean: Param,
    running_var: Param,
    cache: Option<NormCache>,
}

#[derive(Debug, Clone)]
struct NormCache {
    x_hat: Tensor,
    inv_std: Vec<f32>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Param::filled(vec![channels], 1.0),
            beta: Param::filled(vec![channels], 0.0),
            running_mean: Param::buffer(vec![channels], vec![0.0; channels]),
            running_var: Param::buffer(vec![channels], vec![1.0; channels]),
            cache: None,
        }
    }

    pub fn gamma_mut(&mut self) -> &mut Param {
        &mut self.gamma
    }
}

impl Module for BatchNorm2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.channels);
        let plane = h * w;
        let mut out = x.clone();
        for b in 0..n {
            let item = out.item_mut(b);
            for ch in 0..c {
                let inv = 1.0 / (self.running_var.value()[ch] + self.eps).sqrt();
                let scale = self.gamma.value()[ch] * inv;
                let shift = self.beta.value()[ch] - self.running_mean.value()[ch] * scale;
                item[ch * plane..(ch + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v = *v * scale + shift);
            }
        }
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.channels);
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for b in 0..n {
            let item = x.item(b);
            for ch in 0..c {
                mean[ch] += item[ch * plane..(ch + 1) * plane].iter().map(|&v| v as f64).sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for b in 0..n {
            let item = x.item(b);
            for ch in 0..c {
                let m = mean[ch];
                var[ch] += item[ch * plane..(ch + 1) * plane]
                    .iter()
                    .map(|&v| (v as f64 - m).powi(2))
                    .sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= count);

        let inv_std: Vec<f32> = var.iter().map(|&v| (1.0 / (v + self.eps as f64).sqrt()) as f32).collect();
        let mut x_hat = x.clone();
        let mut out = x.clone();
        for b in 0..n {
            let xh = x_hat.item_mut(b);
            for ch in 0..c {
                let m = mean[ch] as f32;
                xh[ch * plane..(ch + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v = (*v - m) * inv_std[ch]);
            }
            let o = out.item_mut(b);
            o.copy_from_slice(xh);
            for ch in 0..c {
                let (g, bt) = (self.gamma.value()[ch], self.beta.value()[ch]);
                o[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = *v * g + bt);
            }
        }

        let mom = self.momentum as f64;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for ch in 0..c {
            let rm = &mut self.running_mean.value_mut()[ch];
            *rm = ((1.0 - mom) * *rm as f64 + mom * mean[ch]) as f32;
            let rv = &mut self.running_var.value_mut()[ch];
            *rv = ((1.0 - mom) * *rv as f64 + mom * var[ch] * unbias) as f32;
        }
        self.cache = Some(NormCache { x_hat, inv_std });
        out
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let NormCache { x_hat, inv_std } = self.cache.take().expect("BatchNorm2d::backward without forward_train");
        let [n, c, h, w] = grad_out.shape();
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for b in 0..n {
            let g = grad_out.item(b);
            let xh = x_hat.item(b);
            for ch in 0..c {
                let r = ch * plane..(ch + 1) * plane;
                for (gv, xv) in g[r.clone()].iter().zip(&xh[r]) {
                    dbeta[ch] += *gv as f64;
                    dgamma[ch] += (*gv as f64) * (*xv as f64);
                }
            }
        }
        let mut dx = grad_out.clone();
        for b in 0..n {
            let xh = x_hat.item(b);
            let d = dx.item_mut(b);
            for ch in 0..c {
                let k = self.gamma.value()[ch] as f64 * inv_std[ch] as f64 / count;
                let r = ch * plane..(ch + 1) * plane;
                for (dv, xv) in d[r.clone()].iter_mut().zip(&xh[r]) {
                    *dv = (k * (count * *dv as f64 - dbeta[ch] - *xv as f64 * dgamma[ch])) as f32;
                }
            }
        }
        let dg: Vec<f32> = dgamma.iter().map(|&v| v as f32).collect();
        let db: Vec<f32> = dbeta.iter().map(|&v| v as f32).collect();
        self.gamma.accumulate_grad(&dg);
        self.beta.accumulate_grad(&db);
        dx
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        out.push((join(prefix, "weight"), &self.gamma));
        out.push((join(prefix, "bias"), &self.beta));
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        out.push((join(prefix, "weight"), &mut self.gamma));
        out.push((join(prefix, "bias"), &mut self.beta));
        out.push((join(prefix, "running_mean"), &mut self.running_mean));
        out.push((join(prefix, "running_var"), &mut self.running_var));
    }

    fn clear_cache(&mut self) {
        self.cache = None;
    }
}
