pub mod random;
pub mod scalar;
pub mod sparse;
pub mod spatial;
pub mod forward;
pub mod sampler;
pub mod diagnostics;
pub mod baseline;
pub mod study;
pub mod io;
pub mod config;

pub use scalar::Real;

pub type SparseSymMatrixF64 = sparse::SparseSymMatrix<f64>;
pub type SparseMatrixF64 = sparse::SparseMatrix<f64>;
pub type CholeskyFactorF64 = sparse::CholeskyFactor<f64>;
pub type PrecisionModelF64 = spatial::PrecisionModel<f64>;
pub type NodeSetF64 = spatial::NodeSet<f64>;
pub type VoxelGridF64 = forward::VoxelGrid<f64>;
pub type ForwardProblemF64 = forward::ForwardProblem<f64>;
pub type HyperPriorsF64 = sampler::HyperPriors<f64>;
pub type ChainSamplesF64 = sampler::ChainSamples<f64>;

pub type SparseSymMatrixF32 = sparse::SparseSymMatrix<f32>;
pub type SparseMatrixF32 = sparse::SparseMatrix<f32>;
pub type ForwardProblemF32 = forward::ForwardProblem<f32>;
pub type ChainSamplesF32 = sampler::ChainSamples<f32>;
