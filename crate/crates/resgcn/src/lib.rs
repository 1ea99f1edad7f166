//! Residual-attention graph convolutional anomaly detection on attributed
//! networks, with the anomaly-injection benchmark protocol and a
//! ranking/evaluation harness. Training runs on a small recorded
//! reverse-mode gradient engine built for exactly this model; everything is
//! f64 and deterministic under a seed.
//!
//! The `examples/` directory walks through each capability; the `resgcn`
//! binary wires them into an `inject -> train -> score -> eval -> sweep`
//! pipeline driven by a flat config file.

pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod inject;
pub mod model;
pub mod nn;
pub mod pca;
pub mod pipeline;
pub mod seed;
pub mod selfcheck;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{compare_strategies, evaluate, precision_recall_at, roc_auc, EvalResult};
pub use graph::{
    load_graph, normalize_adjacency, save_graph, AttributedGraph, LoadedDataset,
    NormalizedAdjacency,
};
pub use inject::{inject_benchmark, AnomalyKind, InjectionResult, InjectionSpec};
pub use model::{
    compute_attention, compute_residual, decode_attributes, decode_structure, encode, loss,
    ForwardState, Hyperparams, Model, ModelParams, ScoreReport, Strategy, TrainingHistory,
};
pub use pca::{pca_reduce, Pca};
pub use sparse::CsrMatrix;
