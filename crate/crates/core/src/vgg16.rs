//! The VGG16 convolution stack, embedded so cost reports need no downloads.
//!
//! Thirteen 3x3 stride-1 pad-1 layers at 224x224 input; spatial size halves
//! after layers 2, 4, 7 and 10. Total conv weights: 14,710,464.

use crate::tensor::ConvLayerSpec;

/// `(in_channels, out_channels, input side)` per conv layer.
const STACK: [(usize, usize, usize); 13] = [
    (3, 64, 224),
    (64, 64, 224),
    (64, 128, 112),
    (128, 128, 112),
    (128, 256, 56),
    (256, 256, 56),
    (256, 256, 56),
    (256, 512, 28),
    (512, 512, 28),
    (512, 512, 28),
    (512, 512, 14),
    (512, 512, 14),
    (512, 512, 14),
];

pub fn vgg16_conv_stack() -> Vec<ConvLayerSpec> {
    STACK
        .iter()
        .map(|&(cin, cout, side)| ConvLayerSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: side,
            in_width: side,
        })
        .collect()
}
