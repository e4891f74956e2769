use crate::module::{join, Module, ParamMuts, ParamRefs};
use crate::tensor::Tensor;

/// Modules applied in order; each child is named for parameter paths.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<(String, Box<dyn Module>)>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, layer: impl Module + 'static) -> &mut Self {
        self.layers.push((name.into(), Box::new(layer)));
        self
    }

    pub fn with(mut self, name: impl Into<String>, layer: impl Module + 'static) -> Self {
        self.push(name, layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl Module for Sequential {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut iter = self.layers.iter();
        let Some((_, first)) = iter.next() else {
            return x.clone();
        };
        let mut h = first.forward(x);
        for (_, layer) in iter {
            h = layer.forward(&h);
        }
        h
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let mut iter = self.layers.iter_mut();
        let Some((_, first)) = iter.next() else {
            return x.clone();
        };
        let mut h = first.forward_train(x);
        for (_, layer) in iter {
            h = layer.forward_train(&h);
        }
        h
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let mut g = grad_out.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        for (name, layer) in &self.layers {
            layer.collect_params(&join(prefix, name), out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        for (name, layer) in &mut self.layers {
            layer.collect_params_mut(&join(prefix, name), out);
        }
    }

    fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(|(_, l)| l.clear_cache());
    }
}
