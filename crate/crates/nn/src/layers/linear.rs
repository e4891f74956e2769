use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::gemm::{sgemm, Layout};
use crate::module::{join, Module, ParamMuts, ParamRefs};
use crate::param::Param;
use crate::tensor::Tensor;

/// Affine map on feature vectors shaped `[n, in, 1, 1]`.
#[derive(Debug, Clone)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    weight: Param,
    bias: Param,
    cache: Option<Tensor>,
}

impl Linear {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0f32, (2.0 / in_features as f32).sqrt()).expect("valid std");
        let weight = (0..in_features * out_features).map(|_| normal.sample(rng)).collect();
        Self {
            in_features,
            out_features,
            weight: Param::new(vec![out_features, in_features], weight),
            bias: Param::filled(vec![out_features], 0.0),
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn weight_mut(&mut self) -> &mut Param {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Param {
        &mut self.bias
    }
}

impl Module for Linear {
    fn forward(&self, x: &Tensor) -> Tensor {
        let n = x.batch();
        assert_eq!(x.item_len(), self.in_features, "linear input width mismatch");
        let mut out = Tensor::zeros([n, self.out_features, 1, 1]);
        sgemm(
            n,
            self.in_features,
            self.out_features,
            x.data(),
            Layout::Normal,
            self.weight.value(),
            Layout::Transposed,
            out.data_mut(),
            false,
        );
        let b = self.bias.value();
        for row in out.data_mut().chunks_mut(self.out_features) {
            row.iter_mut().zip(b).for_each(|(v, bv)| *v += bv);
        }
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.cache = Some(x.clone());
        self.forward(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self.cache.take().expect("Linear::backward without forward_train");
        let n = x.batch();
        let (fi, fo) = (self.in_features, self.out_features);
        let mut dw = vec![0.0f32; fi * fo];
        sgemm(fo, n, fi, grad_out.data(), Layout::Transposed, x.data(), Layout::Normal, &mut dw, false);
        self.weight.accumulate_grad(&dw);
        let mut db = vec![0.0f32; fo];
        for row in grad_out.data().chunks(fo) {
            db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
        }
        self.bias.accumulate_grad(&db);
        let mut dx = Tensor::zeros(x.shape());
        sgemm(n, fo, fi, grad_out.data(), Layout::Normal, self.weight.value(), Layout::Normal, dx.data_mut(), false);
        dx
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }

    fn clear_cache(&mut self) {
        self.cache = None;
    }
}
