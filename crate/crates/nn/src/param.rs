/// A named learnable tensor (or a persistent buffer such as batch-norm running statistics).
///
/// Gradients are allocated lazily so inference-only models do not pay for them.
#[derive(Debug, Clone)]
pub struct Param {
    shape: Vec<usize>,
    value: Vec<f32>,
    grad: Vec<f32>,
    trainable: bool,
}

impl Param {
    pub fn new(shape: Vec<usize>, value: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        Self {
            shape,
            value,
            grad: Vec::new(),
            trainable: true,
        }
    }

    /// A persistent, non-trainable buffer.
    pub fn buffer(shape: Vec<usize>, value: Vec<f32>) -> Self {
        Self {
            trainable: false,
            ..Self::new(shape, value)
        }
    }

    pub fn filled(shape: Vec<usize>, v: f32) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![v; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn value(&self) -> &[f32] {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut [f32] {
        &mut self.value
    }

    /// Gradient accumulated since the last [`Param::zero_grad`]; empty if none.
    pub fn grad(&self) -> &[f32] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f32] {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
        &mut self.grad
    }

    /// Splits into `(value, grad)` for optimizers that update in place.
    pub fn value_and_grad_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
        (&mut self.value, &mut self.grad)
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate_grad(&mut self, g: &[f32]) {
        for (a, b) in self.grad_mut().iter_mut().zip(g) {
            *a += b;
        }
    }
}
