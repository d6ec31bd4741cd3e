//! Mean-field minimizer, Langevin sampling of the Gibbs measure and the
//! entropy rates of `M_N` against `μ̄^{⊗N}`.

pub mod entropy;
pub mod mala;
pub mod minimizer;

pub use entropy::{
    entropy_rates, fit_rate, sample_gibbs, sample_gibbs_beta, EntropyParams, EntropyRow, EntropyTable,
    GibbsRun, GibbsTarget, RateFit,
};
pub use mala::{mala, Evaluation, MalaParams, MalaRun, Target};
pub use minimizer::{
    kernel_square_integral, solve_minimizer, solve_minimizer_from, MeanFieldMinimizer, MinimizerParams,
};
