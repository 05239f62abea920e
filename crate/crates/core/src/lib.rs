//! Transductive multi-label node classification.
//!
//! The model fuses three per-node representations and feeds their
//! concatenation to a sigmoid readout:
//!
//! * propagated node features (`Â^K X`, see [`propagation`]),
//! * reset-free label propagation from the training labels,
//! * DeepWalk-style positional embeddings ([`positional`]).
//!
//! Baselines, a synthetic data generator with controllable label homophily,
//! Average Precision evaluation and per-node training-loss instrumentation
//! live in their own modules.

pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod model;
pub mod positional;
pub mod propagation;
pub mod rng;
pub mod sparse;
pub mod structure;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{make_splits, Dataset, Graph, LabelSets, Role, Split};
pub use sparse::{rw_transition, sym_norm_adjacency, SparseMatrix};
pub use structure::{clustering_coefficient, label_homophily};
