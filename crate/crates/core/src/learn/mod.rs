//! Learning through the cage: a per-vertex predictor head on cage features,
//! losses evaluated on the input mesh through the mapping operator, training
//! with cage-offset augmentation, the cage-signal overfit experiment and
//! finite-difference gradient checks.

mod gradcheck;
mod head;
mod losses;
mod overfit;
mod train;

pub use gradcheck::{grad_check, gradient_suite, GradCheckResult, FD_STEP, GRAD_FLOOR};
pub use head::{ForwardCache, PredictorHead};
pub use losses::{
    build_symmetry_pairs, cross_entropy_with_grad, kl_with_grad, loss_cross_entropy_faces, loss_kl,
    loss_lp, loss_symmetry, lp_with_grad, softmax_backward, softmax_rows, symmetry_with_grad,
    total_skin_loss, total_skin_loss_with_grad, LossBreakdown, SkinLossWeights, LP_EPS, PROB_FLOOR,
    SYM_EPS,
};
pub use overfit::{overfit_cage_signal, OverfitParams, OverfitReport};
pub use train::{
    loss_and_gradient, loss_curve_csv, predict_mesh, train, Adam, CageSample, LossRecord, Target,
    Task, TrainConfig, TrainOutcome, TrainingMesh,
};
