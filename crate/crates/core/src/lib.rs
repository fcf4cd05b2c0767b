//! Human action recognition from depth-map videos.
//!
//! Pipeline: [`mtm`] folds each depth sequence into motion and static history
//! images over three projection planes; [`glac`] describes each template with
//! gradient local auto-correlations; [`representation`] fuses the six vectors
//! and reduces them with PCA; [`crc`] classifies with a distance-weighted
//! l2-regularised collaborative representation; [`evaluation`] runs the split
//! protocols and writes reports.

pub mod cli;
pub mod config;
pub mod crc;
pub mod depth_io;
pub mod evaluation;
pub mod glac;
pub mod grid;
pub mod mtm;
pub mod parallel;
pub mod representation;
pub mod synth;

pub use crc::{classify, CrcDecision, CrcModel};
pub use depth_io::{DepthFrame, DepthSequence, SequenceMeta};
pub use evaluation::{run_experiment, EvalReport, ExperimentConfig, Protocol};
pub use glac::{glac_descriptor, GlacConfig, GradientOperator};
pub use grid::{GrayImage, Grid};
pub use mtm::{compute_mtm, HistoryImage, MtmConfig, MtmOutput};
pub use parallel::Execution;
pub use representation::{build_action_vector, fit_pca, FeatureSet, PcaModel};
