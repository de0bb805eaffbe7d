//! Stochastic trajectory engine: photodetection (jump) and heterodyne
//! (diffusive) unravelings of the monitored three-level atom, a dense
//! Lindblad integrator used as the ensemble oracle, the measurement-record
//! filter chain, the real-time monitor/catch controller, and the ensemble
//! analysis (conditional tomograms, waiting-time statistics, curve fits,
//! reverse-protocol success rates, SNR budget).

pub mod compile;
pub mod controller;
pub mod ensemble;
pub mod fit;
pub mod heterodyne;
pub mod jump;
pub mod lindblad;
pub mod noclick;
pub mod rng;
pub mod snr;
pub mod sparse;

pub use compile::{CompiledModel, DriveMode, StateMoments};
pub use controller::{
    calibrate_thresholds, controller_step, intervention_unitary, iq_classify, Action, Assign,
    ControllerConfig, ControllerState, FilterThresholds, Phase,
};
pub use ensemble::{
    gd_tomogram_params, run_catch_ensemble, run_reverse_ensemble, CatchOptions,
    ConditionalTomogram, GdTomogramParams, ReverseOptions, ReverseOutcome,
};
pub use fit::{fit_jump_curves, waiting_time_fit, JumpFit, WaitingTimeFit};
pub use heterodyne::{filter_record, HeterodyneRecord, HeterodyneRunner, RecordFilter, TintSample};
pub use jump::{ClickEvent, JumpRunner, TrajectoryState};
pub use lindblad::evolve_lindblad;
pub use noclick::evolve_noclick_linear;
pub use snr::{snr_metrics, SnrReport};

use thiserror::Error;

pub type C64 = num_complex::Complex64;

#[derive(Error, Debug)]
pub enum EngineError {
    #[error(transparent)]
    Core(#[from] qjump_core::CoreError),

    #[error("step size {dt} us exceeds stability bound {bound} us; use dt <= {bound}")]
    StepSize { dt: f64, bound: f64 },

    #[error("integrator diverged: {0}")]
    Diverged(String),

    #[error("trace drifted by {drift:.3e} after {t} us")]
    TraceDrift { drift: f64, t: f64 },

    #[error("record cadence mismatch: {0}")]
    Cadence(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("controller stepped after terminal state")]
    ControllerDone,

    #[error("no surviving samples")]
    Empty,
}
