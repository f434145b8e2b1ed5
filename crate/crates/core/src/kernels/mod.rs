//! Sampling kernels: NUTS, slice, exact discrete and conjugate updates, and the
//! graph-backed transitions that wire them into blocks.

mod blocks;
mod conjugate;
mod discrete;
mod nuts;
mod slice;
pub(crate) mod transform;

pub use blocks::{make_transition, GibbsKind, GibbsTransition, NutsTransition, SliceTransition};
pub use conjugate::{
    gibbs_beta, gibbs_dirichlet, gibbs_gamma_poisson, gibbs_inv_gamma, gibbs_normal_mean, stick_breaking_update,
};
pub use discrete::{ffbs_hmm, hmm_log_marginal, sample_binary_vector, sample_categorical};
pub use nuts::{leapfrog, DualAveraging, FnPotential, NutsInfo, NutsSettings, NutsState, Phase, Potential, Welford};
pub use slice::{slice_step_univariate, SliceSettings};
pub use transform::Transform;
