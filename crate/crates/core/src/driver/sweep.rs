use std::thread;

use log::info;

use super::config::{steps_for, RunConfig};
use super::run::{initial_state, run_coupled};
use crate::error::{Error, Result};
use crate::geometry::{lattice_perimeter, BinaryPhase};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::model_h::{
    ginzburg_landau_energy, level_set_half, modica_mortola_kappa, nsch_step, optimal_profile, DiffuseState,
    DoubleWell, ViscosityLaw,
};

/// Result of one diffuse run in the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub eps: f64,
    pub steps: usize,
    /// Cells where `{c(T) ≥ 1/2}` and the sharp phase `χ(T)` disagree.
    pub symmetric_difference_cells: usize,
    pub symmetric_difference_area: f64,
    /// `E_ε(c(T))`.
    pub energy: f64,
    /// Lattice perimeter of `{c(T) ≥ 1/2}`.
    pub interface_length: f64,
    pub energy_per_length: f64,
    /// Largest `|mean c(t) − mean c(0)|` over the run.
    pub mass_drift: f64,
    /// Whether `½‖v‖² + E_ε` never increased beyond round-off.
    pub energy_monotone: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    /// Surface tension the sharp run used, `∫₀¹√(2f)`.
    pub kappa: f64,
    /// Area of one cell band along the sharp interface, `Per(χ(T))·dx`.
    pub band_area: f64,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    /// Symmetric-difference areas do not grow as `ε` decreases, up to one
    /// cell band.
    pub fn monotone(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].symmetric_difference_area <= w[0].symmetric_difference_area + self.band_area)
    }
}

/// Signed distance to the phase boundary, positive inside, measured
/// between cell centres and offset by half a cell so that its sign
/// reproduces `χ` exactly.
pub fn signed_distance(chi: &BinaryPhase) -> ScalarField {
    let grid = *chi.grid();
    let n = grid.n();
    let boundary = |value: u8| -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                if chi.get(ix, iy) != value {
                    continue;
                }
                let touches = [(1, 0), (n - 1, 0), (0, 1), (0, n - 1)]
                    .iter()
                    .any(|&(dx, dy)| chi.get((ix + dx) % n, (iy + dy) % n) != value);
                if touches {
                    pts.push((grid.coord(ix), grid.coord(iy)));
                }
            }
        }
        pts
    };
    let inside = boundary(1);
    let outside = boundary(0);
    let half = 0.5 * grid.dx();
    let nearest = |x: f64, y: f64, pts: &[(f64, f64)]| {
        pts.iter()
            .map(|&(px, py)| grid.periodic_delta(x, px).hypot(grid.periodic_delta(y, py)))
            .fold(f64::INFINITY, f64::min)
    };
    let values = (0..grid.cells())
        .map(|i| {
            let (x, y) = (grid.coord(i % n), grid.coord(i / n));
            if chi.cells()[i] == 1 {
                nearest(x, y, &outside) - half
            } else {
                half - nearest(x, y, &inside)
            }
        })
        .collect();
    ScalarField::from_values(grid, values).expect("finite distances")
}

/// `c₀ = 1/(1 + exp(−√2 d/ε))` from the signed distance of `χ₀`.
pub fn diffuse_initial(chi: &BinaryPhase, eps: f64) -> ScalarField {
    signed_distance(chi).map(|d| optimal_profile(d, eps))
}

fn check_eps_list(grid: &Grid, eps_list: &[f64]) -> Result<()> {
    let min = 3.0 * grid.dx();
    for &eps in eps_list {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter(format!("interface width {eps} must be positive")));
        }
        if eps < min {
            return Err(Error::Resolution { eps, min });
        }
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("interface widths must be strictly decreasing".into()));
    }
    Ok(())
}

/// Runs Model H for each `ε` and the sharp scheme with `κ = ∫₀¹√(2f)`,
/// all from the same initial data and to the same horizon, concurrently.
pub fn sharp_limit_experiment(cfg: &RunConfig, eps_list: &[f64]) -> Result<SweepReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    check_eps_list(&grid, eps_list)?;
    let well = DoubleWell::quartic();
    let kappa = modica_mortola_kappa(&well);
    if eps_list.is_empty() {
        return Ok(SweepReport {
            kappa,
            band_area: 0.0,
            entries: Vec::new(),
        });
    }
    let mut sharp_cfg = cfg.clone();
    sharp_cfg.physics.kappa = kappa;
    sharp_cfg.output.directory = None;
    let (chi0, v0) = initial_state(cfg)?;

    let (sharp, diffuse) = thread::scope(|s| {
        let sharp = s.spawn(|| run_coupled(&sharp_cfg));
        let handles: Vec<_> = eps_list
            .iter()
            .map(|&eps| {
                let (chi0, v0, well) = (&chi0, &v0, &well);
                s.spawn(move || diffuse_run(cfg, chi0, v0, eps, well))
            })
            .collect();
        let diffuse: Vec<_> = handles.into_iter().map(|h| h.join().expect("diffuse run panicked")).collect();
        (sharp.join().expect("sharp run panicked"), diffuse)
    });
    let sharp = sharp?;
    let band_area = lattice_perimeter(&sharp.chi) * grid.dx();
    let mut entries = Vec::with_capacity(eps_list.len());
    for run in diffuse {
        let run = run?;
        let level = level_set_half(&run.state.c);
        let cells = level.symmetric_difference(&sharp.chi);
        let length = lattice_perimeter(&level);
        let energy = ginzburg_landau_energy(&run.state.c, run.state.eps, &well);
        info!("ε = {}: {} cells differ, E/length = {:.6}", run.state.eps, cells, energy / length);
        entries.push(SweepEntry {
            eps: run.state.eps,
            steps: run.steps,
            symmetric_difference_cells: cells,
            symmetric_difference_area: cells as f64 * grid.cell_area(),
            energy,
            interface_length: length,
            energy_per_length: energy / length,
            mass_drift: run.mass_drift,
            energy_monotone: run.energy_monotone,
        });
    }
    Ok(SweepReport {
        kappa,
        band_area,
        entries,
    })
}

struct DiffuseRun {
    state: DiffuseState,
    steps: usize,
    mass_drift: f64,
    energy_monotone: bool,
}

fn diffuse_run(cfg: &RunConfig, chi0: &BinaryPhase, v0: &VectorField, eps: f64, well: &DoubleWell) -> Result<DiffuseRun> {
    let dt = cfg.diffuse.dt.unwrap_or(cfg.scheme.h);
    let m = cfg.diffuse.mobility.unwrap_or(cfg.physics.mobility);
    let law = ViscosityLaw {
        nu_minus: cfg.physics.nu_minus,
        nu_plus: cfg.physics.nu_plus,
    };
    let ns_cfg = cfg.ns_config();
    let mut state = DiffuseState::new(diffuse_initial(chi0, eps), v0.clone(), eps, m)?;
    let mean0 = state.c.mean();
    let steps = steps_for(cfg.horizon, dt);
    let mut energy = state.total_energy(well);
    let (mut mass_drift, mut energy_monotone) = (0.0f64, true);
    for k in 1..=steps {
        state = nsch_step(&state, dt, well, &law, &ns_cfg).map_err(|e| e.at_step(k))?;
        mass_drift = mass_drift.max((state.c.mean() - mean0).abs());
        let next = state.total_energy(well);
        energy_monotone &= next <= energy + 1e-8 * (1.0 + energy.abs());
        energy = next;
    }
    Ok(DiffuseRun {
        state,
        steps,
        mass_drift,
        energy_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_distance_reproduces_phase() {
        let g = Grid::new(32, 1.0).unwrap();
        let chi = BinaryPhase::disk(g, 0.5, 0.5, 0.3);
        let d = signed_distance(&chi);
        assert_eq!(BinaryPhase::threshold(&diffuse_initial(&chi, 0.1), 0.5), chi);
        // Centre cell is about r − |offset| away from the circle.
        let centre = d.at(16, 16);
        assert!((centre - 0.3).abs() < 2.0 * g.dx(), "{centre}");
        let stripe = BinaryPhase::stripe(g, 0.5, 0.5);
        let ds = signed_distance(&stripe);
        assert!((ds.at(3, 16) - 0.234375).abs() < 1e-12);
        assert!((ds.at(3, 0) + 0.234375).abs() < 1e-12);
    }

    #[test]
    fn eps_list_validation() {
        let g = Grid::new(64, 1.0).unwrap();
        assert!(check_eps_list(&g, &[]).is_ok());
        assert!(check_eps_list(&g, &[0.2, 0.1, 0.05]).is_ok());
        assert!(matches!(check_eps_list(&g, &[0.1, 0.04]), Err(Error::Resolution { .. })));
        assert!(matches!(check_eps_list(&g, &[0.1, 0.2]), Err(Error::InvalidParameter(_))));
    }
}
