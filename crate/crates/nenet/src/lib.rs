//! NENET: linking detected scene-text character boxes into words with an
//! edge-learnable graph neural network.
//!
//! Characters detected in a scene become nodes of a directed k-NN graph;
//! a message-passing network that learns and propagates *edge* features
//! alongside node features classifies each directed link as
//! same-word-adjacent or not. Connected components of the positive links,
//! their convex hulls and minimum-area rectangles yield word polygons and
//! boxes. Three reference models (a vanilla GCN, a dynamic GCN and the
//! edge-learnable model with frozen initial edge features) share the same
//! training and evaluation harness for comparison.
//!
//! The crate ships:
//! - a procedural desk-scale scene generator and a detector simulator,
//! - graph construction with geometric node/edge features,
//! - IoU-based supervision mapping with skip-link handling,
//! - from-scratch dense numerics (MLPs, analytic gradients, Adam),
//! - a deterministic training loop with online hard negative mining,
//! - word assembly plus edge- and word-level evaluation,
//! - JSONL/JSON file formats, SVG rendering and a thin CLI.
//!
//! See the `examples/` directory for runnable walkthroughs of each
//! capability.

pub mod assembly;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod heatmap;
pub mod models;
pub mod nn;
pub mod render;
pub mod scene;
pub mod supervision;
pub mod trainer;

pub use error::{Error, Result};
