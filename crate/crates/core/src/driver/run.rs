use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use log::{debug, info, warn};

use super::config::{PhaseShape, RunConfig, VelocityShape};
use super::io::{read_field, write_field};
use super::ledger::{
    energy_ledger_check, ledger_tolerance, step_energy_sides, EnergyLedger, LedgerParams, LedgerRow,
};
use crate::error::{Error, Result};
use crate::geometry::{gibbs_thomson_residual, lattice_perimeter, standard_test_fields, BinaryPhase};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::hneg::HNegWorkspace;
use crate::ms_step::{ms_step, MsStepConfig};
use crate::ns_step::{ns_energy_check, ns_step, viscosity_field};
use crate::rng::derive_seed;

/// Final state and ledger of a coupled run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ledger: EnergyLedger,
    pub chi: BinaryPhase,
    pub v: VectorField,
    pub steps: usize,
}

/// Order of the two half steps. Only [`StepOrder::PhaseFirst`] is the
/// scheme; the other exists to show that the ledger notices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOrder {
    /// Phase from `(χ(t−h), v(t−h))`, then velocity from `(v(t−h), χ(t), μ(t))`.
    PhaseFirst,
    /// Velocity from the previous step's `χ, μ`, then the phase using the
    /// new velocity.
    VelocityFirst,
}

pub fn ledger_params(cfg: &RunConfig) -> LedgerParams {
    LedgerParams {
        h: cfg.scheme.h,
        kappa: cfg.physics.kappa,
        mobility: cfg.physics.mobility,
    }
}

/// Initial phase and velocity described by the config.
pub fn initial_state(cfg: &RunConfig) -> Result<(BinaryPhase, VectorField)> {
    let grid = cfg.grid()?;
    let init = &cfg.initial;
    let l = grid.length();
    let chi = match init.phase {
        PhaseShape::Disk => BinaryPhase::disk(grid, init.center_x * l, init.center_y * l, init.radius),
        PhaseShape::Stripe => BinaryPhase::stripe(grid, init.center_y * l, init.width),
        PhaseShape::File => {
            let path = init.phase_file.as_deref().expect("validated");
            BinaryPhase::threshold(&load_scalar(path, grid)?, 0.5)
        }
    };
    let v = match init.velocity {
        VelocityShape::Zero => VectorField::zeros(grid),
        VelocityShape::Shear => {
            let (a, k) = (init.amplitude, 2.0 * PI / l);
            VectorField::from_fn(grid, |_, y| (a * (k * y).sin(), 0.0))
        }
        VelocityShape::File => {
            let x = load_scalar(init.velocity_x_file.as_deref().expect("validated"), grid)?;
            let y = load_scalar(init.velocity_y_file.as_deref().expect("validated"), grid)?;
            let v = VectorField::new(x, y)?;
            // Keep only the solenoidal, dealiased part so that the first
            // step starts inside the solution space.
            let ws = HNegWorkspace::new(grid);
            crate::grid::dealias_vector(&ws.leray_project(&v))
        }
    };
    Ok((chi, v))
}

fn load_scalar(path: &Path, grid: Grid) -> Result<ScalarField> {
    read_field(path)?.into_field(grid).map_err(|e| match e {
        Error::GridMismatch => Error::Config(format!("{} does not match the configured grid", path.display())),
        e => e,
    })
}

/// Runs `⌈T/h⌉` coupled steps, asserting every per-step estimate and the
/// summed ledger inequality. Writes dumps and the ledger when the config
/// names an output directory.
pub fn run_coupled(cfg: &RunConfig) -> Result<RunOutput> {
    run_coupled_with_order(cfg, StepOrder::PhaseFirst)
}

pub fn run_coupled_with_order(cfg: &RunConfig, order: StepOrder) -> Result<RunOutput> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let (chi0, v0) = initial_state(cfg)?;
    if chi0.is_degenerate() {
        return Err(Error::Config(format!(
            "initial phase has {} of {} cells; it must be a proper subset",
            chi0.mass(),
            grid.cells()
        )));
    }
    let base_ms = cfg.ms_config(&grid);
    let ns_cfg = cfg.ns_config();
    let params = ledger_params(cfg);
    let tests = standard_test_fields(grid);
    let dumps = Dumps::new(cfg)?;
    let steps = cfg.steps();
    let h = cfg.scheme.h;

    let mut ledger = EnergyLedger::default();
    ledger.push(LedgerRow {
        t: 0.0,
        kinetic: 0.5 * v0.l2_norm_sq(),
        perimeter: lattice_perimeter(&chi0),
        ..LedgerRow::default()
    })?;
    dumps.write(0, &chi0, &v0, None)?;

    let mass = chi0.mass();
    let (mut chi, mut v) = (chi0, v0);
    let mut mu_prev = ScalarField::zeros(grid);
    info!("coupled run: {steps} steps of h = {h:e} on a {n}² grid", n = grid.n());
    for k in 1..=steps {
        let ms_cfg = MsStepConfig {
            anneal: crate::ms_step::AnnealConfig {
                seed: derive_seed(base_ms.anneal.seed, k as u64),
                ..base_ms.anneal.clone()
            },
            ..base_ms.clone()
        };
        let (ms, ns) = match order {
            StepOrder::PhaseFirst => {
                let ms = ms_step(&chi, &v, &ms_cfg).map_err(|e| e.at_step(k))?;
                let mu = ms.mu();
                let nu = viscosity_field(&ms.chi_new, cfg.physics.nu_minus, cfg.physics.nu_plus, ms_cfg.delta)?;
                let ns = ns_step(&v, &ms.chi_new, &mu, &nu, &ns_cfg).map_err(|e| e.at_step(k))?;
                if !ns_energy_check(&ns, &v, &ms.chi_new, &mu, &nu, h) {
                    return Err(Error::LedgerViolation {
                        step: k,
                        what: "momentum step energy",
                        lhs: ns.kinetic_new,
                        rhs: 0.5 * v.l2_norm_sq(),
                    });
                }
                (ms, ns)
            }
            StepOrder::VelocityFirst => {
                let nu = viscosity_field(&chi, cfg.physics.nu_minus, cfg.physics.nu_plus, ms_cfg.delta)?;
                let ns = ns_step(&v, &chi, &mu_prev, &nu, &ns_cfg).map_err(|e| e.at_step(k))?;
                let ms = ms_step(&chi, &ns.v_new, &ms_cfg).map_err(|e| e.at_step(k))?;
                (ms, ns)
            }
        };
        ms.check_energy(&ms_cfg, k)?;
        if ms.chi_new.mass() != mass {
            return Err(Error::MassMismatch {
                left: mass,
                right: ms.chi_new.mass(),
            });
        }
        if ns.loose_convergence {
            warn!("step {k}: Picard stopped at residual {:e}", ns.final_residual);
        }
        let mu = ms.mu();
        ledger.push(LedgerRow {
            t: k as f64 * h,
            kinetic: ns.kinetic_new,
            perimeter: ms.perimeter_new,
            grad_mu_sq: ms.grad_mu_sq,
            viscous: ns.viscous_dissipation,
            fh_initial: ms.fh_initial,
            fh_final: ms.fh_final,
            lambda: ms.lambda,
            gibbs_thomson_residual: gibbs_thomson_residual(&ms.chi_new, &mu, ms_cfg.delta, ms_cfg.kappa, &tests),
        })?;
        let (lhs, rhs) = step_energy_sides(&ledger, k, &params);
        if lhs > rhs + ledger_tolerance(rhs) {
            return Err(Error::LedgerViolation {
                step: k,
                what: "coupled step energy",
                lhs,
                rhs,
            });
        }
        debug!(
            "step {k}: E = {:.12e}, accepted {} of {} proposals, Picard {} iterations",
            ledger.total_energy(k, params.kappa),
            ms.anneal.accepted,
            ms.anneal.proposals,
            ns.iterations
        );
        chi = ms.chi_new;
        v = ns.v_new;
        mu_prev = mu;
        if dumps.due(k) {
            dumps.write(k, &chi, &v, Some(&mu_prev))?;
        }
    }

    let verdict = energy_ledger_check(&ledger, &params);
    if let Some(k) = verdict.first_failure {
        return Err(Error::LedgerViolation {
            step: k,
            what: "summed energy ledger",
            lhs: verdict.worst_margin,
            rhs: 0.0,
        });
    }
    if let Some(path) = cfg.ledger_file() {
        ledger.write_csv(&path)?;
    }
    Ok(RunOutput { ledger, chi, v, steps })
}

struct Dumps<'a> {
    dir: Option<&'a Path>,
    every: usize,
}

impl<'a> Dumps<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Dumps<'a>> {
        let dir = cfg.output.directory.as_deref();
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Dumps {
            dir,
            every: cfg.output.dump_every,
        })
    }

    fn due(&self, k: usize) -> bool {
        self.every > 0 && k.is_multiple_of(self.every)
    }

    fn write(&self, k: usize, chi: &BinaryPhase, v: &VectorField, mu: Option<&ScalarField>) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        if self.every == 0 {
            return Ok(());
        }
        let name = |kind: &str| dir.join(format!("step{k:06}_{kind}.nsf"));
        write_field(&name("chi"), "chi", &chi.to_field())?;
        write_field(&name("vx"), "vx", &v.x)?;
        write_field(&name("vy"), "vy", &v.y)?;
        if let Some(mu) = mu {
            write_field(&name("mu"), "mu", mu)?;
        }
        Ok(())
    }
}
