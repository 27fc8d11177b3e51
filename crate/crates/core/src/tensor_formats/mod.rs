//! Canonical and Tucker tensors with their conversions and rank truncation.

mod canonical;
mod dense;
mod io;
mod multigrid;
mod truncate;
mod tucker;

#[cfg(test)]
pub(crate) use canonical::random_canonical;
pub use canonical::CanonicalTensor;
pub use dense::{DenseTensor, DENSE_3D_LIMIT};
pub use io::{load_canon, read_canon, save_canon, write_canon};
pub use multigrid::{grid_hierarchy, multigrid_tucker, FnGrid, GridFunction, COARSEST_MAX, MAX_SWEEPS};
pub use truncate::{truncate, truncate_capped, Truncated};
pub use tucker::{
    canonical_to_tucker, full_to_tucker, recompress_tucker, tucker_to_canonical, tucker_to_canonical_capped,
    TuckerTensor, MAX_CORE_RANK,
};
