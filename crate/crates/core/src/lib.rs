//! Shared-memory parallel CP-ALS for sparse third-order tensors.
//!
//! Tensors are ingested in coordinate form ([`SparseTensor`]), sorted with a
//! parallel counting sort, and compressed into one or more CSF trees
//! ([`CsfTensor`]). The MTTKRP kernels traverse those trees directly; rows of
//! the output that are not owned by a single task are guarded by a striped
//! [`LockPool`]. [`cp_als`] drives the alternating least squares loop and
//! reports per-routine timings.

pub mod cpals;
pub mod csf;
pub mod dense;
mod error;
pub mod gen;
pub mod lock_pool;
pub mod model_io;
pub mod mttkrp;
pub mod parallel;
pub mod sort;
pub mod tensor;
pub mod timing;

pub use cpals::{compute_fit, cp_als, init_factors, CpAlsConfig, CpAlsRun, KruskalModel, NormSchedule};
pub use csf::{allocate_csfs, build_csf, CsfAllocation, CsfPolicy, CsfTensor, KernelKind, ModeDispatch};
pub use dense::{cholesky_solve, gram, hadamard_accumulate, normalize_columns, FactorMatrix, GramMatrix, NormKind};
pub use error::{Error, Result};
pub use lock_pool::LockPool;
pub use mttkrp::{mttkrp, MttkrpEngine};
pub use parallel::{partition_slices, TaskPartition};
pub use sort::sort_tensor;
pub use tensor::{parse_tns, stats, write_tns, SparseTensor, TensorStats};
pub use timing::{Routine, RoutineTimings, TimingSummary};

/// Tensor order supported throughout the crate.
pub const ORDER: usize = 3;
