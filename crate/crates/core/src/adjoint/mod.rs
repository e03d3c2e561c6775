//! Losses over observed trajectories and their exact parameter gradients.

mod gradient;
mod loss;
mod mask;

pub use gradient::{
    batch_loss, bptt_gradient, fd_gradient, BatchGradient, LearnedRate, RateOptions,
};
pub use loss::{trajectory_loss, LossReport, ADEQUATE_LOSS};
pub use mask::{
    make_mask, mask_schemes, MaskScheme, ObservationMask, S_ONLY_DENSE, XS_DENSE, XS_EVERY_8TH,
};
