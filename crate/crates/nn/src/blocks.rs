//! Residual building blocks shared by the ResNet-family backbones.

use rand::Rng;

use crate::layers::{AvgPool2d, BatchNorm2d, Conv2d, Relu, Sequential};
use crate::module::{join, Module, ParamMuts, ParamRefs};
use crate::tensor::Tensor;

/// `relu(main(x) + shortcut(x))`, with an identity shortcut when none is given.
pub struct Residual {
    main: Sequential,
    shortcut: Option<Sequential>,
    relu: Relu,
}

impl Residual {
    pub fn new(main: Sequential, shortcut: Option<Sequential>) -> Self {
        Self {
            main,
            shortcut,
            relu: Relu::new(),
        }
    }
}

impl Module for Residual {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = self.main.forward(x);
        match &self.shortcut {
            Some(s) => h.add_assign(&s.forward(x)),
            None => h.add_assign(x),
        }
        self.relu.forward(&h)
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let mut h = self.main.forward_train(x);
        match &mut self.shortcut {
            Some(s) => h.add_assign(&s.forward_train(x)),
            None => h.add_assign(x),
        }
        self.relu.forward_train(&h)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let g = self.relu.backward(grad_out);
        let mut dx = self.main.backward(&g);
        match &mut self.shortcut {
            Some(s) => dx.add_assign(&s.backward(&g)),
            None => dx.add_assign(&g),
        }
        dx
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        self.main.collect_params(prefix, out);
        if let Some(s) = &self.shortcut {
            s.collect_params(&join(prefix, "downsample"), out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        self.main.collect_params_mut(prefix, out);
        if let Some(s) = &mut self.shortcut {
            s.collect_params_mut(&join(prefix, "downsample"), out);
        }
    }

    fn clear_cache(&mut self) {
        self.main.clear_cache();
        if let Some(s) = &mut self.shortcut {
            s.clear_cache();
        }
        self.relu.clear_cache();
    }
}

/// `conv -> bn (-> relu)` as a named sequence.
pub fn conv_bn<R: Rng + ?Sized>(
    seq: &mut Sequential,
    tag: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    relu: bool,
    rng: &mut R,
) {
    seq.push(format!("conv{tag}"), Conv2d::new(in_ch, out_ch, kernel, stride, kernel / 2, false, rng));
    seq.push(format!("bn{tag}"), BatchNorm2d::new(out_ch));
    if relu {
        seq.push(format!("relu{tag}"), Relu::new());
    }
}

/// 1x1 projection shortcut used when shape changes across a block.
pub fn projection<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut R) -> Sequential {
    Sequential::new()
        .with("0", Conv2d::new(in_ch, out_ch, 1, stride, 0, false, rng))
        .with("1", BatchNorm2d::new(out_ch))
}

/// Two 3x3 convolutions (ResNet-18/34 block).
pub fn basic_block<R: Rng + ?Sized>(in_ch: usize, planes: usize, stride: usize, rng: &mut R) -> Residual {
    let mut main = Sequential::new();
    conv_bn(&mut main, "1", in_ch, planes, 3, stride, true, rng);
    conv_bn(&mut main, "2", planes, planes, 3, 1, false, rng);
    let shortcut = (stride != 1 || in_ch != planes).then(|| projection(in_ch, planes, stride, rng));
    Residual::new(main, shortcut)
}

/// 1x1 -> 3x3 (strided) -> 1x1 bottleneck with expansion 4.
pub fn bottleneck<R: Rng + ?Sized>(in_ch: usize, planes: usize, stride: usize, rng: &mut R) -> Residual {
    let out_ch = planes * 4;
    let mut main = Sequential::new();
    conv_bn(&mut main, "1", in_ch, planes, 1, 1, true, rng);
    conv_bn(&mut main, "2", planes, planes, 3, stride, true, rng);
    conv_bn(&mut main, "3", planes, out_ch, 1, 1, false, rng);
    let shortcut = (stride != 1 || in_ch != out_ch).then(|| projection(in_ch, out_ch, stride, rng));
    Residual::new(main, shortcut)
}

/// Hierarchical multi-scale 3x3 stage of a Res2Net bottleneck.
///
/// The input is split into `scale` channel groups `x_0..x_{s-1}`. Group `i < s-1`
/// goes through its own `conv3x3 -> bn -> relu`, receiving `x_i + y_{i-1}` in
/// normal blocks and `x_i` alone in the first (stage) block of a layer. The last
/// group passes through unchanged, or through a 3x3 average pool in stage blocks.
pub struct Res2Split {
    width: usize,
    scale: usize,
    stage: bool,
    branches: Vec<Sequential>,
    pool: Option<AvgPool2d>,
}

impl Res2Split {
    pub fn new<R: Rng + ?Sized>(width: usize, scale: usize, stride: usize, stage: bool, rng: &mut R) -> Self {
        assert!(scale >= 2);
        assert!(stage || stride == 1, "strided Res2Net split must be a stage block");
        let branches = (0..scale - 1)
            .map(|_| {
                let mut s = Sequential::new();
                s.push("conv", Conv2d::new(width, width, 3, stride, 1, false, rng));
                s.push("bn", BatchNorm2d::new(width));
                s.push("relu", Relu::new());
                s
            })
            .collect();
        Self {
            width,
            scale,
            stage,
            branches,
            pool: stage.then(|| AvgPool2d::new(3, stride, 1)),
        }
    }
}

impl Module for Res2Split {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.scale);
        for i in 0..self.scale - 1 {
            let mut inp = x.slice_channels(i * self.width, self.width);
            if !self.stage && i > 0 {
                inp.add_assign(&outs[i - 1]);
            }
            outs.push(self.branches[i].forward(&inp));
        }
        let last = x.slice_channels((self.scale - 1) * self.width, self.width);
        outs.push(match &self.pool {
            Some(p) => p.forward(&last),
            None => last,
        });
        Tensor::concat_channels(&outs)
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.channels(), self.width * self.scale);
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.scale);
        for i in 0..self.scale - 1 {
            let mut inp = x.slice_channels(i * self.width, self.width);
            if !self.stage && i > 0 {
                inp.add_assign(&outs[i - 1]);
            }
            outs.push(self.branches[i].forward_train(&inp));
        }
        let last = x.slice_channels((self.scale - 1) * self.width, self.width);
        outs.push(match &mut self.pool {
            Some(p) => p.forward_train(&last),
            None => last,
        });
        Tensor::concat_channels(&outs)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let w = self.width;
        let mut dx_parts: Vec<Tensor> = vec![Tensor::zeros([0, 0, 0, 0]); self.scale];
        let g_last = grad_out.slice_channels((self.scale - 1) * w, w);
        dx_parts[self.scale - 1] = match &mut self.pool {
            Some(p) => p.backward(&g_last),
            None => g_last,
        };
        // gradient reaching y_i through the input of branch i + 1
        let mut carry: Option<Tensor> = None;
        for i in (0..self.scale - 1).rev() {
            let mut g = grad_out.slice_channels(i * w, w);
            if let Some(c) = carry.take() {
                g.add_assign(&c);
            }
            let d_inp = self.branches[i].backward(&g);
            if !self.stage && i > 0 {
                carry = Some(d_inp.clone());
            }
            dx_parts[i] = d_inp;
        }
        Tensor::concat_channels(&dx_parts)
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        for (i, b) in self.branches.iter().enumerate() {
            b.collect_params(&join(prefix, &i.to_string()), out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        for (i, b) in self.branches.iter_mut().enumerate() {
            b.collect_params_mut(&join(prefix, &i.to_string()), out);
        }
    }

    fn clear_cache(&mut self) {
        self.branches.iter_mut().for_each(|b| b.clear_cache());
        if let Some(p) = &mut self.pool {
            p.clear_cache();
        }
    }
}

/// Res2Net bottleneck (`26w x 4s` by default through `base_width` and `scale`).
pub fn res2net_bottleneck<R: Rng + ?Sized>(
    in_ch: usize,
    planes: usize,
    stride: usize,
    stage: bool,
    base_width: usize,
    scale: usize,
    rng: &mut R,
) -> Residual {
    let width = planes * base_width / 64;
    let out_ch = planes * 4;
    let mut main = Sequential::new();
    conv_bn(&mut main, "1", in_ch, width * scale, 1, 1, true, rng);
    main.push("convs", Res2Split::new(width, scale, stride, stage, rng));
    conv_bn(&mut main, "3", width * scale, out_ch, 1, 1, false, rng);
    let shortcut = (stride != 1 || in_ch != out_ch).then(|| projection(in_ch, out_ch, stride, rng));
    Residual::new(main, shortcut)
}
