//! Feature extractors. Each builder returns a module mapping
//! `[n, 3, s, s]` images to `[n, feature_dim, 1, 1]` features.

use rand::Rng;

use crate::attention::SelfAttention2d;
use crate::blocks::{basic_block, bottleneck, conv_bn, projection, res2net_bottleneck, Residual};
use crate::layers::{AvgPool2d, BatchNorm2d, Conv2d, Flatten, GlobalAvgPool, Linear, MaxPool2d, Relu, Sequential};

pub const TINY_CNN_FEATURES: usize = 128;
pub const RESNET18_FEATURES: usize = 512;
pub const BOTTLENECK_FEATURES: usize = 2048;

fn conv_out(size: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (size + 2 * padding - kernel) / stride + 1
}

/// Spatial side length entering `layer4` and leaving it, for a ResNet stem.
fn resnet_layer4_sizes(input: usize) -> (usize, usize) {
    let s = conv_out(input, 7, 2, 3);
    let s = conv_out(s, 3, 2, 1);
    let s = conv_out(s, 3, 2, 1); // layer2
    let s = conv_out(s, 3, 2, 1); // layer3
    (s, conv_out(s, 3, 2, 1))
}

fn resnet_stem<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    Sequential::new()
        .with("conv1", Conv2d::new(3, 64, 7, 2, 3, false, rng))
        .with("bn1", BatchNorm2d::new(64))
        .with("relu", Relu::new())
        .with("maxpool", MaxPool2d::new(3, 2, 1))
}

fn stage<R: Rng + ?Sized>(
    blocks: usize,
    mut make: impl FnMut(usize, &mut R) -> Residual,
    rng: &mut R,
) -> Sequential {
    let mut s = Sequential::new();
    for i in 0..blocks {
        s.push(i.to_string(), make(i, rng));
    }
    s
}

/// Four stride-2 conv blocks and a fully connected projection to 128 features.
///
/// The input is first average-pooled by 2, so a 112 input reaches the
/// projection as a `32 x 7 x 7` map. Sized for CPU-only smoke training.
pub fn tiny_cnn<R: Rng + ?Sized>(input_size: usize, rng: &mut R) -> Sequential {
    let mut net = Sequential::new();
    net.push("pool", AvgPool2d::new(2, 2, 0));
    let mut side = input_size / 2;
    let widths = [(3, 16, 2), (16, 32, 2), (32, 32, 2), (32, 32, 1)];
    for (i, &(cin, cout, stride)) in widths.iter().enumerate() {
        let mut block = Sequential::new();
        conv_bn(&mut block, "", cin, cout, 3, stride, true, rng);
        net.push(format!("block{}", i + 1), block);
        side = conv_out(side, 3, stride, 1);
    }
    net.push("flatten", Flatten::new());
    net.push("fc", Linear::new(32 * side * side, TINY_CNN_FEATURES, rng));
    net.push("relu", Relu::new());
    net
}

pub fn resnet18<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    let mut net = resnet_stem(rng);
    let mut in_ch = 64;
    for (i, (planes, stride)) in [(64, 1), (128, 2), (256, 2), (512, 2)].into_iter().enumerate() {
        let layer = stage(
            2,
            |b, rng| {
                let block = basic_block(in_ch, planes, if b == 0 { stride } else { 1 }, rng);
                in_ch = planes;
                block
            },
            rng,
        );
        net.push(format!("layer{}", i + 1), layer);
    }
    net.push("avgpool", GlobalAvgPool::new());
    net
}

fn bottleneck_stages<R: Rng + ?Sized>(net: &mut Sequential, counts: [usize; 3], rng: &mut R) -> usize {
    let mut in_ch = 64;
    for (i, (planes, stride)) in [(64, 1), (128, 2), (256, 2)].into_iter().enumerate() {
        let layer = stage(
            counts[i],
            |b, rng| {
                let block = bottleneck(in_ch, planes, if b == 0 { stride } else { 1 }, rng);
                in_ch = planes * 4;
                block
            },
            rng,
        );
        net.push(format!("layer{}", i + 1), layer);
    }
    in_ch
}

pub fn resnet101<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    let mut net = resnet_stem(rng);
    let mut in_ch = bottleneck_stages(&mut net, [3, 4, 23], rng);
    let layer4 = stage(
        3,
        |b, rng| {
            let block = bottleneck(in_ch, 512, if b == 0 { 2 } else { 1 }, rng);
            in_ch = 2048;
            block
        },
        rng,
    );
    net.push("layer4", layer4);
    net.push("avgpool", GlobalAvgPool::new());
    net
}

/// ResNet-101 whose final stage replaces the 3x3 convolutions with
/// 4-head self-attention. The strided first block attends at the incoming
/// resolution and then average-pools with stride 2.
pub fn botnet101<R: Rng + ?Sized>(input_size: usize, rng: &mut R) -> Sequential {
    let mut net = resnet_stem(rng);
    let mut in_ch = bottleneck_stages(&mut net, [3, 4, 23], rng);
    let (before, after) = resnet_layer4_sizes(input_size);
    let layer4 = stage(
        3,
        |b, rng| {
            let (side, stride) = if b == 0 { (before, 2) } else { (after, 1) };
            let mut main = Sequential::new();
            conv_bn(&mut main, "1", in_ch, 512, 1, 1, true, rng);
            main.push("mhsa", SelfAttention2d::new(512, 4, side, side, rng));
            if stride == 2 {
                main.push("pool", AvgPool2d::new(3, 2, 1));
            }
            main.push("bn2", BatchNorm2d::new(512));
            main.push("relu2", Relu::new());
            conv_bn(&mut main, "3", 512, 2048, 1, 1, false, rng);
            let shortcut = (stride != 1 || in_ch != 2048).then(|| projection(in_ch, 2048, stride, rng));
            in_ch = 2048;
            Residual::new(main, shortcut)
        },
        rng,
    );
    net.push("layer4", layer4);
    net.push("avgpool", GlobalAvgPool::new());
    net
}

/// Res2Net-101 with 26-wide, 4-scale bottlenecks.
pub fn res2net101<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    let mut net = resnet_stem(rng);
    let mut in_ch = 64;
    let plan = [(64, 1, 3), (128, 2, 4), (256, 2, 23), (512, 2, 3)];
    for (i, (planes, stride, blocks)) in plan.into_iter().enumerate() {
        let layer = stage(
            blocks,
            |b, rng| {
                let first = b == 0;
                let block = res2net_bottleneck(in_ch, planes, if first { stride } else { 1 }, first, 26, 4, rng);
                in_ch = planes * 4;
                block
            },
            rng,
        );
        net.push(format!("layer{}", i + 1), layer);
    }
    net.push("avgpool", GlobalAvgPool::new());
    net
}
