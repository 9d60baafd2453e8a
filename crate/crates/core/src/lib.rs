//! Near-chip filtering and detection for dynamic vision sensors.
//!
//! The crate models a low-bandwidth pedestrian-detection pipeline end to end:
//!
//! - [`events`]: the event model, the `EVS1` event file and the grouped
//!   row/timestamp wire format with its bounded-FIFO parser.
//! - [`filter`]: τ-windowed accumulation, same-polarity coincidence
//!   denoising, temporal OR-aggregation and block max-pooling into
//!   [`filter::FilteredFrame`]s.
//! - [`codec`]: canonical Huffman coding over a 256-symbol dictionary,
//!   Fletcher-32 and packet framing / resynchronizing deframing.
//! - [`bnn`]: a binary-weight convolutional detector evaluated with AND and
//!   popcount, plus a straight-through-estimator trainer.
//! - [`synth`]: a synthetic scene generator standing in for recorded clips.
//! - [`bench`]: bandwidth accounting, F1 and the ablation runner.
//!
//! # Features
//!
//! - `parallel` *(default)*: corpus-level loops (clip filtering, batch
//!   detection, per-sample gradients) run on the rayon thread pool. Results
//!   are identical with the feature disabled; only wall-clock changes.

pub mod bench;
pub mod bitplane;
pub mod bnn;
pub mod codec;
pub mod events;
pub mod exec;
pub mod filter;
pub mod synth;

pub use bitplane::BitPlane;
pub use events::{Event, Polarity, SensorGeometry};
pub use exec::Execution;
pub use filter::{FilterConfig, FilteredFrame};
