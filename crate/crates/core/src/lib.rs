//! Recoverable single-object tracking.
//!
//! A positive/negative sample tree ([`pn_tree`]) judges whether the target is
//! still being tracked, and a two-mode controller ([`controller`]) hands off
//! between a local tracker and a global detector based on that judgment. The
//! [`sim`] module provides a deterministic synthetic world with mock engines,
//! [`metrics`] scores trajectories, and [`io`] holds the text formats.

pub mod controller;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod pn_tree;
pub mod sim;

pub use controller::{
    run_sequence, run_tracker_only, Controller, ControllerConfig, Detector, Embedder, FrameGeometry,
    FrameResult, Mode, Ports, Source, TargetState, Tracker,
};
pub use embedding::{cosine, normalize, FeatureVector};
pub use error::{Error, PortError, Result};
pub use geometry::BoundingBox;
pub use pn_tree::{PnTree, PositivePathMode, TargetLabel};
