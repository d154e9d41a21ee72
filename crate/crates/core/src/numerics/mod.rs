//! Fixed-point arithmetic, loss families and their analytic oracles.

pub mod fixed;
pub mod loss;
pub mod oracle;

pub use fixed::{norm, norm_sq, norm_sq_raw, Fixed, ModelVec, FRAC_BITS, MAX_RAW};
pub use loss::{
    AgentDataSource, AgentDistribution, GradientSampler, LabeledPoint, Logistic, LossModel,
    Quadratic, Sample,
};
pub use oracle::{check_admissible, global_minimizer, heterogeneity, Admissibility};
