//! CPU building blocks for pose networks: layers with explicit backward
//! passes, ResNet-family feature extractors and the Adam optimizer.
//!
//! Everything runs in `f32` on the CPU. Batch items are processed in parallel
//! but gradient reductions use a fixed order, so training is bit-reproducible
//! regardless of the worker count.

pub mod adam;
pub mod attention;
pub mod backbone;
pub mod blocks;
mod gemm;
pub mod layers;
pub mod module;
pub mod param;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use module::{Module, ParamMuts, ParamRefs};
pub use param::Param;
pub use tensor::Tensor;

/// Total element count of the trainable parameters of `module`.
pub fn trainable_parameter_count(module: &dyn Module) -> usize {
    let mut params = Vec::new();
    module.collect_params("", &mut params);
    params.iter().filter(|(_, p)| p.is_trainable()).map(|(_, p)| p.len()).sum()
}
