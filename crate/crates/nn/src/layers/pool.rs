use crate::module::Module;
use crate::tensor::Tensor;

fn pooled_size(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

/// Max pooling; padded positions never win.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    kernel: usize,
    stride: usize,
    padding: usize,
    cache: Option<(Vec<usize>, [usize; 4])>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    fn run(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        let [n, c, h, w] = x.shape();
        let oh = pooled_size(h, self.kernel, self.stride, self.padding);
        let ow = pooled_size(w, self.kernel, self.stride, self.padding);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut arg = vec![0usize; n * c * oh * ow];
        let data = x.data();
        let mut idx = 0;
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f32::NEG_INFINITY;
                        let mut best_at = usize::MAX;
                        for ky in 0..self.kernel {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let at = base + iy as usize * w + ix as usize;
                                if best_at == usize::MAX || data[at] > best {
                                    best = data[at];
                                    best_at = at;
                                }
                            }
                        }
                        out.data_mut()[idx] = best;
                        arg[idx] = best_at;
                        idx += 1;
                    }
                }
            }
        }
        (out, arg)
    }
}

impl Module for MaxPool2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        self.run(x).0
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let (out, arg) = self.run(x);
        self.cache = Some((arg, x.shape()));
        out
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let (arg, shape) = self.cache.take().expect("MaxPool2d::backward without forward_train");
        let mut dx = Tensor::zeros(shape);
        for (g, &at) in grad_out.data().iter().zip(&arg) {
            dx.data_mut()[at] += g;
        }
        dx
    }

    fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Average pooling that counts padded positions in the divisor.
#[derive(Debug, Clone)]
pub struct AvgPool2d {
    kernel: usize,
    stride: usize,
    padding: usize,
    input_shape: Option<[usize; 4]>,
}

impl AvgPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            input_shape: None,
        }
    }

    /// Visits `(output index, input index)` pairs for one channel plane.
    fn for_each_tap(&self, h: usize, w: usize, mut f: impl FnMut(usize, usize)) {
        let oh = pooled_size(h, self.kernel, self.stride, self.padding);
        let ow = pooled_size(w, self.kernel, self.stride, self.padding);
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..self.kernel {
                    let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..self.kernel {
                        let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        f(oy * ow + ox, iy as usize * w + ix as usize);
                    }
                }
            }
        }
    }
}

impl Module for AvgPool2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        let oh = pooled_size(h, self.kernel, self.stride, self.padding);
        let ow = pooled_size(w, self.kernel, self.stride, self.padding);
        let norm = 1.0 / (self.kernel * self.kernel) as f32;
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let (ip, op) = (h * w, oh * ow);
        let src = x.data();
        let dst = out.data_mut();
        for plane in 0..n * c {
            self.for_each_tap(h, w, |o, i| dst[plane * op + o] += src[plane * ip + i] * norm);
        }
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.input_shape = Some(x.shape());
        self.forward(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let shape = self.input_shape.take().expect("AvgPool2d::backward without forward_train");
        let [n, c, h, w] = shape;
        let norm = 1.0 / (self.kernel * self.kernel) as f32;
        let mut dx = Tensor::zeros(shape);
        let (ip, op) = (h * w, grad_out.height() * grad_out.width());
        let g = grad_out.data();
        let d = dx.data_mut();
        for plane in 0..n * c {
            self.for_each_tap(h, w, |o, i| d[plane * ip + i] += g[plane * op + o] * norm);
        }
        dx
    }

    fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}

/// Mean over the spatial dimensions: `[n, c, h, w] -> [n, c, 1, 1]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Module for GlobalAvgPool {
    fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        let plane = h * w;
        let data: Vec<f32> = x
            .data()
            .chunks(plane)
            .map(|p| p.iter().sum::<f32>() / plane as f32)
            .collect();
        Tensor::from_vec([n, c, 1, 1], data)
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.input_shape = Some(x.shape());
        self.forward(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let shape = self.input_shape.take().expect("GlobalAvgPool::backward without forward_train");
        let plane = shape[2] * shape[3];
        let mut dx = Tensor::zeros(shape);
        for (chunk, g) in dx.data_mut().chunks_mut(plane).zip(grad_out.data()) {
            let v = g / plane as f32;
            chunk.iter_mut().for_each(|d| *d = v);
        }
        dx
    }

    fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}

/// `[n, c, h, w] -> [n, c*h*w, 1, 1]`.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<[usize; 4]>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Module for Flatten {
    fn forward(&self, x: &Tensor) -> Tensor {
        x.clone().reshape([x.batch(), x.item_len(), 1, 1])
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.input_shape = Some(x.shape());
        self.forward(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let shape = self.input_shape.take().expect("Flatten::backward without forward_train");
        grad_out.clone().reshape(shape)
    }

    fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}
