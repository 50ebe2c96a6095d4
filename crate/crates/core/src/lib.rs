//! Semi-supervised mean estimation by Bregman calibration of labeled-sample
//! weights to machine-learning predictions on a larger unlabeled sample.

pub mod bregman;
pub mod calibration;
pub mod cli;
pub mod crossfit;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod io;
pub mod learners;
pub mod simulate;

pub use bregman::Generator;
pub use calibration::{CalibrationProblem, CalibrationSolution, SolveOptions};
pub use crossfit::{cross_predict, FoldAssignment, PredictionSet};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use estimators::{EstimateOptions, EstimateReport, Method};
pub use learners::LearnerSpec;
pub use simulate::{run_monte_carlo, SimulationConfig, SimulationSummary};
