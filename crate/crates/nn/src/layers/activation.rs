use crate::module::Module;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Module for Relu {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        self.forward(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let mask = self.mask.take().expect("Relu::backward without forward_train");
        let mut dx = grad_out.clone();
        for (d, keep) in dx.data_mut().iter_mut().zip(mask) {
            if !keep {
                *d = 0.0;
            }
        }
        dx
    }

    fn clear_cache(&mut self) {
        self.mask = None;
    }
}
