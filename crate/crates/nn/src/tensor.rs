//! Dense NCHW tensor used by every layer.

/// A dense `f32` tensor with a fixed four-dimensional `[n, c, h, w]` layout.
///
/// Feature vectors are represented as `[n, features, 1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Panics if `data.len()` does not match the shape.
    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Number of elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn item(&self, n: usize) -> &[f32] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(mut self, shape: [usize; 4]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch in add");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Copies channels `start..start + count` into a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Tensor {
        let [n, c, h, w] = self.shape;
        assert!(start + count <= c);
        let plane = h * w;
        let mut out = Tensor::zeros([n, count, h, w]);
        for b in 0..n {
            let src = &self.item(b)[start * plane..(start + count) * plane];
            out.item_mut(b).copy_from_slice(src);
        }
        out
    }

    /// Concatenates along the channel axis. All parts share batch and spatial size.
    pub fn concat_channels(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let [n, _, h, w] = parts[0].shape;
        let total: usize = parts.iter().map(|p| p.channels()).sum();
        let mut out = Tensor::zeros([n, total, h, w]);
        for b in 0..n {
            let dst = out.item_mut(b);
            let mut offset = 0;
            for p in parts {
                assert_eq!([p.shape[0], p.shape[2], p.shape[3]], [n, h, w]);
                let src = p.item(b);
                dst[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_and_concat_are_inverse() {
        let t = Tensor::from_vec([2, 3, 1, 2], (0..12).map(|v| v as f32).collect());
        let a = t.slice_channels(0, 1);
        let b = t.slice_channels(1, 2);
        assert_eq!(a.item(1), &[6.0, 7.0]);
        assert_eq!(Tensor::concat_channels(&[a, b]), t);
    }
}
