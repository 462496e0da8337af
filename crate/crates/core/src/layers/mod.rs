//! Layer primitives with hand-written forward and backward passes. Every
//! layer is independently gradient-checkable against central finite
//! differences (see the gradient_check integration tests).

pub mod act;
pub mod conv;
pub mod dropout;
pub mod linear;
pub mod norm;
pub mod pool;
pub mod sepconv;
pub mod upsample;

pub use act::{
    cross_entropy, relu, relu_backward, relu_mask, sigmoid, sigmoid_backward, softmax,
    softmax_xent_backward,
};
pub use conv::{
    conv_out_extent, depthwise_backward, depthwise_forward, pointwise_backward,
    pointwise_forward, Padding,
};
pub use dropout::{dropout_backward, dropout_forward, DropoutCtx};
pub use linear::{linear_backward, linear_forward};
pub use norm::{BatchNorm, BnCtx, BnUpdate, Mode, BN_EPS, BN_MOMENTUM};
pub use pool::{
    average_pool2d, average_pool2d_backward, global_average_pool, global_average_pool_backward,
    pool_out_extent,
};
pub use sepconv::{BnOrder, SepConvBlock, SepConvCtx, SepConvGrads};
pub use upsample::{nearest_upsample, nearest_upsample_backward};
