pub mod baselines;
pub mod diffusion;
pub mod error;
pub mod montecarlo;
pub mod par;
pub mod reporting;
pub mod solver;
pub mod value;
pub mod verification;
