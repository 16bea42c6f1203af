//! Closed-loop co-simulation of the plant, the device-level current loops and
//! the periodic MPC.

mod dlc;
mod engine;
mod load;

pub use dlc::{
    bumpless_integrator, dlc_pgm_step, settling_time, step_response, DlcGains,
};
pub use engine::{
    mpc_demand, mpc_fleet, run_scenario, run_scenario_with, EnergyTotals, MpcRecord, NullSink, Sample, SampleSink,
    SimError, SimLog, SimOutcome, SimSummary, Violation, ViolationKind,
};
pub use load::{load_at, LoadKind, LoadProfileSpec};
