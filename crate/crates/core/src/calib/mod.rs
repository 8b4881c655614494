//! From detuning scans to calibrated rate coefficients.
//!
//! Scans are compiled into normalized PL against intracavity photon number,
//! and the IR- and green-driven coefficients are fitted jointly across
//! datasets taken at different green powers.

mod dataset;
mod fit;

pub use dataset::{
    compile_dataset, normalize_and_correct, synth_dataset, Channel, CompileOptions, CompiledDataset, DataPoint, NoiseModel,
    TAPER_EFFICIENCY_1520, TAPER_EFFICIENCY_980,
};
pub use fit::{joint_fit, FitOptions, FitResult, FittedParameter, Loss, Parameter};
