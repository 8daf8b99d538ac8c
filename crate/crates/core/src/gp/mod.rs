mod kernel;
pub mod linalg;
mod state;

pub use kernel::{
    cosine, cosine_kernel, original_kernel, squared_distance, AuthorGeometry, KernelKind, KernelParams,
};
pub use state::{auc, embedding, gram, network_loglik, GpState, GramFactor, MhStats, PairOptions, PairSet, MAX_JITTER};
