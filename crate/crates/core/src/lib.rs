pub mod ensemble;
pub mod equilibrium;
pub mod graph;
pub mod linalg;
pub mod potential;
pub mod quadrature;
pub mod scalar;
pub mod spectral;

pub use scalar::Real;

pub type ProblemConfigF64 = graph::ProblemConfig<f64>;
pub type ProblemConfigF32 = graph::ProblemConfig<f32>;
pub type EquilibriumSolutionF64 = equilibrium::EquilibriumSolution<f64>;
pub type EquilibriumSolutionF32 = equilibrium::EquilibriumSolution<f32>;
pub type SpectralContextF64 = spectral::SpectralContext<f64>;
pub type SpectralContextF32 = spectral::SpectralContext<f32>;
pub type EnsembleSpecF64 = ensemble::EnsembleSpec<f64>;
pub type EnsembleSpecF32 = ensemble::EnsembleSpec<f32>;
pub type KernelEvaluatorF64 = ensemble::KernelEvaluator<f64>;
pub type KernelEvaluatorF32 = ensemble::KernelEvaluator<f32>;
