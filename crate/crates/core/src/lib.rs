//! Belief propagation on pairwise Markov random fields, including convex
//! combination BP (CCBP), whose update is a contraction and therefore has a
//! unique fixed point reached from any initialization.
//!
//! Costs are stored as negative logs. Messages live on directed edges and are
//! kept either as probabilities or as negative logs, depending on the semiring.

pub mod error;
pub mod experiments;
pub mod image;
pub mod messages;
pub mod model;
pub mod model_file;
pub mod operators;
pub mod oracle;

pub use error::{Error, Result};
pub use image::{corrupt, read_image, restore, write_image, Image, Restoration, RestoreParams};
pub use messages::{
    convert_domain, init_messages, metric_d, normalize, random_messages, Domain, FixedPointReport,
    MessageVector,
};
pub use model::{
    build_model, complete_graph, grid_graph, random_graph, spin_glass_model, uniform_weights,
    CouplingDistribution, Graph, GraphicalModel, PairwiseTable, SpinGlassInstance, WeightTable,
};
pub use model_file::{parse_model, serialize_model};
pub use operators::{
    infer, run_fixed_point, step, Algorithm, Beliefs, Inference, OperatorConfig, Semiring,
};
