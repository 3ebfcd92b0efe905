//! Synthetic poses and recordings, scripted multi-agent scenarios, and the
//! `coaug` command line.

pub mod cli;
pub mod recording;
pub mod runner;
pub mod script;
pub mod synth;

pub use recording::{generate, RecordingParams};
pub use runner::{run_scenario, RunOptions, Transcript};
pub use script::ScenarioScript;
pub use synth::{synth_pose, BodyDims, Posture, SynthParams, SynthesisError};
