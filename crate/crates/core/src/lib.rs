//! Grid point allocation for grid-based robust and LPV controller synthesis.
//!
//! The crate covers the full design loop:
//!
//! * uncertain plants in linear fractional form over a box of scalar
//!   parameter blocks ([`lfr`]),
//! * LTI analysis primitives: norms, Lyapunov solves, frequency responses,
//!   and star-product interconnections ([`lti`]),
//! * a Gaussian-process surrogate of the closed-loop cost over the parameter
//!   box ([`gp`]) driven by expected-improvement search ([`bayesopt`]),
//! * derivative-free multi-model controller synthesis ([`synthesis`]),
//! * the outer allocation loop that grows a grid-point selection where the
//!   cost surface is worst ([`allocation`]),
//! * radial-basis interpolation of controller fields for scheduled designs
//!   ([`rbf`]),
//! * benchmark models and a nonlinear closed-loop simulator ([`models`],
//!   [`sim`]).

pub mod allocation;
pub mod bayesopt;
pub mod error;
pub mod gp;
pub mod lfr;
pub mod lti;
pub mod models;
pub mod rbf;
pub mod rng;
pub mod sim;
pub mod synthesis;

pub use allocation::{
    allocate, closed_loop_cost, common_lyapunov_heuristic, corner_init, evaluate_cost,
    random_init, random_selection, sweep_points, worst_case_sweep, AllocTraceRow,
    AllocationConfig, AllocationOutcome, ChannelSel, CostSpec, CostTerm, GridController,
    NormKind, PartialAllocation, PointOrigin, Selection, SweepResult, SweepSample,
};
pub use bayesopt::{
    bo_find_most_informative, expected_improvement, maximize_acquisition, profile,
    AcquisitionConfig, BoOutcome, BoTraceRow,
};
pub use error::{Error, Result};
pub use models::{sinc, FirstOrder};
pub use rbf::{fit_field, rbf_distance, FieldSample, RbfControllerField};
pub use sim::{
    ode_rk45, simulate_closed_loop, waveform, Disturbance, LoopController, NonlinearModel,
    RawSim, SimResult, SolverOptions, SolverStats, Waveform,
};
pub use synthesis::{
    close_loop, multimodel_cost, synthesize, synthesize_each, worst_abscissa, Aggregate,
    ControllerParam, ControllerStructure, SynthesisConfig, SynthesisOutcome,
};
pub use lfr::{
    delta_matrix, evaluate_local, sample_domain, DeltaBlock, DeltaStructure, GridPoint, LfrPlant,
    PlantKind, ReplicationEntry,
};
pub use lti::{
    eval_freq, gen_h2_norm, h2_norm, hinf_norm, lower_lft, lyapunov_solve, sigma_max,
    spectral_abscissa, upper_lft, ChannelGroup, StateSpaceModel,
};
