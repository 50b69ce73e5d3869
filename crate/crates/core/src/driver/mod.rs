//! The coupled time loop, its energy ledger, run artifacts and the
//! sharp-interface sweep.

mod config;
mod io;
mod ledger;
mod run;
mod sweep;

pub use config::{
    AnnealSection, DiffuseSection, GridSection, InitialSection, OutputSection, PhaseShape, PhysicsSection,
    PicardSection, RunConfig, SchemeSection, VelocityShape,
};
pub use io::{pgm_bytes, read_field, write_field, write_pgm, FieldFile};
pub use ledger::{
    energy_ledger_check, ledger_tolerance, step_energy_check, step_energy_sides, EnergyLedger, LedgerParams,
    LedgerRow, LedgerVerdict,
};
pub use run::{initial_state, ledger_params, run_coupled, run_coupled_with_order, RunOutput, StepOrder};
pub use sweep::{diffuse_initial, sharp_limit_experiment, signed_distance, SweepEntry, SweepReport};
