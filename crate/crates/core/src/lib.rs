//! Attention-annotated sparse graphs from eye-tracking recordings.
//!
//! The pipeline turns a dense stream of gaze samples into a small graph that
//! still carries the reader's visual search structure:
//!
//! 1. [`ingest`] parses gaze/viewport logs (or synthesizes a session) into
//!    stimulus coordinates.
//! 2. [`graph`] builds the raw consecutive-sample chain and provides the
//!    Laplacian machinery.
//! 3. [`cluster`] groups samples with a BIRCH CF-tree and contracts the chain
//!    onto cluster centroids, turning intra-cluster edges into self-loops.
//! 4. [`sparsify`] samples edges by attention weight times effective
//!    resistance and reweights them.
//! 5. [`metrics`] compares clustered and sparsified topology, and [`roi`]
//!    ranks clusters by attention and emits fixed-size VOIs.
//!
//! [`pipeline`] wires the stages together and writes every artifact to disk.

pub mod cluster;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod jsonfmt;
pub mod metrics;
pub mod pipeline;
pub mod roi;
pub mod seed;
pub mod sparsify;

pub use cluster::{birch_cluster, contract_graph, Cluster, ClusterFeature, ClusteredGraph};
pub use error::{Error, Result};
pub use graph::{laplacian, quadratic_form, GazeGraph, GraphEdge, GraphNode, WeightMode};
pub use ingest::{GazeSample, GazeSession, ScreenDescriptor, StimulusPoint, ViewportState};
pub use metrics::{MetricsRow, Spearman};
pub use roi::{AttentionRoi, RoiSelection, Selection};
pub use sparsify::{SampleMode, SparsifiedGraph, SparsifyConfig, SparsifyReport};
