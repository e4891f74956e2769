mod activation;
mod conv;
mod linear;
mod norm;
mod pool;
mod sequential;

pub use activation::Relu;
pub use conv::Conv2d;
pub use linear::Linear;
pub use norm::BatchNorm2d;
pub use pool::{AvgPool2d, Flatten, GlobalAvgPool, MaxPool2d};
pub use sequential::Sequential;
