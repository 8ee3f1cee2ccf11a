//! Decentralized SGD by a random walk over a graph.
//!
//! A single model travels from node to node; every node holds one data point
//! and updates the model with its local gradient before passing it on. Which
//! neighbour receives it next is decided by a Markov kernel:
//!
//! * [`transition::mh_uniform`]: Metropolis-Hastings towards the uniform law;
//! * [`transition::mh_importance`]: Metropolis-Hastings towards the
//!   importance law `pi(v) ~ L_v`, paired with `L_bar / L_v` update weights;
//! * the same chain perturbed by Levy jumps ([`walker::WalkerState::step_mhlj`],
//!   with closed-form kernel [`transition::levy_matrix`]).
//!
//! On sparse graphs with a few nodes of very large `L_v` the importance
//! chain gets stuck at those nodes for long stretches; the jumps break this
//! at the price of a small bias. The [`diagnostics`] module measures the
//! trapping, and [`transition`] computes stationary laws, mixing times and
//! reversibility residuals exactly.
//!
//! ```
//! use rwalk::graph::Graph;
//! use rwalk::transition::{mh_importance, stationary, Distribution};
//!
//! let ring = Graph::ring(5)?;
//! let lipschitz = [100.0, 1.0, 1.0, 1.0, 1.0];
//! let p = mh_importance(&ring, &lipschitz)?;
//! assert!((p.get(0, 0) - 0.99).abs() < 1e-15);
//!
//! let pi = stationary(&p, 1e-15, 1_000_000)?;
//! let target = Distribution::importance(&lipschitz)?;
//! assert!(pi.tv_distance(&target)? < 1e-10);
//! # Ok::<(), rwalk::Error>(())
//! ```

pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod model;
pub mod sgd;
pub mod transition;
pub mod walker;

pub use error::{Error, Result};
pub use graph::Graph;
pub use model::{Dataset, GroundTruth, NodeData};
pub use sgd::{RunConfig, SamplerKind, Trace};
pub use transition::{Distribution, RowStochasticMatrix};
pub use walker::{JumpParams, WalkerState};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/sgd.md")]
    mod sgd {}
    #[doc = include_str!("../../../book/src/entrapment.md")]
    mod entrapment {}
    #[doc = include_str!("../../../book/src/levy.md")]
    mod levy {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
