//! Monte-Carlo sum-rate sweeps over transmit power, CSI quality and
//! precoding scheme, with confidence-interval stopping per result cell.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ChannelSpec, CsiMode, ExperimentConfig, OutputSpec, Scheme, SweepSpec};
pub use experiment::{run_experiment, CellResult, ExperimentResult, Sample};
pub use output::{csv_text, emit_outputs, PlotData};
