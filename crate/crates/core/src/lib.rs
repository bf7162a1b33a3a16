//! Low-rank reduction of collections of equally sized matrices.
//!
//! Three reducers share one dataset type:
//!
//! * [`svd_baseline`]: truncated SVD / PCA on vectorized samples,
//! * [`glram`]: one orthonormal pair `(L, R)` with cores `D_i = Lᵀ A_i R`,
//! * [`mpglram`]: `k` unconstrained pairs with a shared least-squares core,
//!   reconstructing `A_i ≈ Σ_j L_j D_i R_jᵀ`.
//!
//! [`eval`] scores them by reconstruction error and by k-fold k-NN accuracy,
//! and [`cli`] wires everything into the `kronfold` binary.
//!
//! Vectorization is column-major throughout, so `vec(L D Rᵀ) = (R ⊗ L) vec(D)`.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod glram;
pub mod kronecker;
pub mod linalg;
pub mod model_file;
pub mod mpglram;
pub mod svd_baseline;

pub use dataset::{FoldPlan, MatrixDataset, SyntheticSpec};
pub use error::{Error, Result};
pub use glram::{GlramConfig, GlramInit, GlramModel};
pub use kronecker::{KronPair, KronPairList};
pub use mpglram::{MpglramConfig, MpglramInit, MpglramModel, PsdSolver, UpdateOrder};
pub use svd_baseline::SvdModel;
