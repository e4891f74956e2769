use crate::param::Param;
use crate::tensor::Tensor;

/// Named parameter references collected from a module tree.
pub type ParamRefs<'a> = Vec<(String, &'a Param)>;
pub type ParamMuts<'a> = Vec<(String, &'a mut Param)>;

/// A layer with an explicit backward pass.
///
/// `forward` is the inference path and never mutates state. `forward_train`
/// uses batch statistics where relevant and caches whatever `backward` needs;
/// `backward` must be called at most once per `forward_train`, receives the
/// gradient of the loss with respect to the output, accumulates parameter
/// gradients and returns the gradient with respect to the input.
pub trait Module: Send + Sync {
    fn forward(&self, x: &Tensor) -> Tensor;

    fn forward_train(&mut self, x: &Tensor) -> Tensor;

    fn backward(&mut self, grad_out: &Tensor) -> Tensor;

    fn collect_params<'a>(&'a self, _prefix: &str, _out: &mut ParamRefs<'a>) {}

    fn collect_params_mut<'a>(&'a mut self, _prefix: &str, _out: &mut ParamMuts<'a>) {}

    /// Drops any activations cached by `forward_train`.
    fn clear_cache(&mut self) {}
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
