//! Neural Donsker–Varadhan estimation of classical mutual information.

mod mlp;
mod smooth;
mod train;

pub use mlp::{
    backward, backward_masked, backward_with_mode, dv_objective, dv_objective_weighted, forward, forward_batch,
    sgd_step, DenseLayer, DropoutMasks, ForwardPass, GradientMode, MlpParams, PartitionAverage, HIDDEN_LAYERS,
    HIDDEN_WIDTH,
};
pub use smooth::{ema_smooth, ma_smooth};
pub use train::{
    estimate_mi, mean_std, train_single, CurveSelection, InputLayout, MiEstimate, ShuffleMode, TrainConfig,
    TrainOutcome, TrainingCurves,
};
