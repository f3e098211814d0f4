//! touchmap: converts recorded 2D pressure-sensor-array sequences of human
//! touch into sparse actuator command signals.
//!
//! The chain has two halves. Trajectory generation treats every upsampled,
//! blurred pixel as a candidate detection with a probability derived from
//! its sequence-wide z-score, then solves the data-association MAP problem
//! exactly as min-cost flow ([`tracking`]). Workspace restriction places the
//! actuator array over the sensor plane, checks which trajectory subsets can
//! be rendered one-per-workspace-per-timestep, and picks the best-scoring
//! placement and subset ([`workspace`]). [`render`] turns the selection into
//! per-actuator command series (neighbor fill, despike, lowpass, scaling).

pub mod config;
pub mod error;
pub mod filter;
pub mod frame;
pub mod geom;
pub mod pipeline;
pub mod plot;
pub mod preprocess;
pub mod render;
pub mod synth;
pub mod tracking;
pub mod workspace;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use frame::{Frame, FrameSequence, SensorLayout, SequenceStats};
pub use geom::Point;
pub use preprocess::{DenseSequence, Detection, DetectionParams};
pub use render::{ActuatorSignal, RenderParams};
pub use tracking::{TrackingParams, Trajectory};
pub use workspace::{SelectionResult, Transform, WorkspaceArray};
