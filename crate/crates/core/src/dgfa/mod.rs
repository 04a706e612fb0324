//! The query decoder: reference points, dynamic graphs, graph feature
//! aggregation, self-attention and the layer stack.

mod attention;
mod decoder;
pub mod gradcheck;
mod graph;
mod mlp;
pub mod params_io;

pub use attention::MultiHeadAttention;
pub use decoder::{
    decoder_forward, output_checksum, predict, seeded_queries, AggregationMode, Decoder, DecoderConfig, DecoderLayer,
    DecoderOutput, DetectionHeads, Prediction, REG_OUTPUTS,
};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GradField, GradPath, PathReport};
pub use graph::{
    baseline_aggregate, build_graph, decode_reference_point, node_features, propagate, DynamicGraph,
    ObjectQuery, QuerySet, SceneBounds, DEFAULT_OFFSET_SCALE,
};
pub use mlp::{Activation, Dense, Mlp, MlpTrace};
pub use params_io::{load_bundle, save_bundle, ParamBundle};
