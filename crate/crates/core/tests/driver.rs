use std::fs;

use nsms_core::driver::{
    energy_ledger_check, ledger_params, read_field, run_coupled, run_coupled_with_order, sharp_limit_experiment,
    step_energy_check, write_field, EnergyLedger, RunConfig, StepOrder,
};
use nsms_core::geometry::lattice_perimeter;
use nsms_core::{BinaryPhase, Error, Grid};

fn config(n: usize, steps: usize, h: f64, initial: &str) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
horizon = {horizon}

[grid]
n = {n}

[physics]
nu_minus = 1.0
nu_plus = 2.0

[scheme]
h = {h}

[initial]
{initial}
seed = 11
"#,
        horizon = steps as f64 * h
    ))
    .unwrap()
}

fn disk(n: usize, steps: usize, velocity: &str) -> RunConfig {
    config(n, steps, 5e-4, &format!("phase = \"disk\"\nradius = 0.2\nvelocity = \"{velocity}\""))
}

#[test]
fn flat_stripe_stays_at_rest() {
    let cfg = config(32, 10, 1e-3, "phase = \"stripe\"\nwidth = 0.5\nvelocity = \"zero\"");
    let out = run_coupled(&cfg).unwrap();
    assert_eq!(out.ledger.len(), 11);
    assert!(out.v.max_abs() < 1e-10);
    let p0 = out.ledger.rows[0].perimeter;
    assert!((p0 - 2.0).abs() < 0.03);
    for row in &out.ledger.rows {
        assert!((row.perimeter - p0).abs() < 1e-12);
        assert!(row.grad_mu_sq.abs() < 1e-20);
    }
}

#[test]
fn disk_at_rest_loses_perimeter_and_keeps_mass() {
    let cfg = disk(64, 20, "zero");
    let grid = cfg.grid().unwrap();
    let chi0 = BinaryPhase::disk(grid, 0.5, 0.5, 0.2);
    let out = run_coupled(&cfg).unwrap();
    assert_eq!(out.chi.mass(), chi0.mass());
    assert!(out
        .ledger
        .rows
        .windows(2)
        .all(|w| w[1].perimeter <= w[0].perimeter + 1e-12));
    assert!(energy_ledger_check(&out.ledger, &ledger_params(&cfg)).ok());
}

#[test]
fn disk_with_shear_satisfies_both_ledger_checks() {
    let cfg = disk(32, 30, "shear");
    let out = run_coupled(&cfg).unwrap();
    let p = ledger_params(&cfg);
    assert!(energy_ledger_check(&out.ledger, &p).ok());
    assert_eq!(step_energy_check(&out.ledger, &p), None);
    // The shear decays.
    assert!(out.ledger.rows.last().unwrap().kinetic < out.ledger.rows[0].kinetic);
}

#[test]
fn corrupted_ledger_row_is_reported() {
    let cfg = disk(32, 10, "shear");
    let mut ledger = run_coupled(&cfg).unwrap().ledger;
    ledger.rows[6].kinetic *= 10.0;
    assert_eq!(energy_ledger_check(&ledger, &ledger_params(&cfg)).first_failure, Some(6));
}

#[test]
fn swapping_the_half_steps_breaks_the_ledger() {
    let cfg = disk(32, 20, "zero");
    assert!(run_coupled_with_order(&cfg, StepOrder::PhaseFirst).is_ok());
    match run_coupled_with_order(&cfg, StepOrder::VelocityFirst) {
        Err(Error::LedgerViolation { step, what, .. }) => assert!(step >= 1, "{what}"),
        other => panic!("expected a ledger violation, got {other:?}"),
    }
}

#[test]
fn runs_are_reproducible_and_persisted() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = disk(32, 6, "shear");
    cfg.output.dump_every = 3;
    let mut outputs = Vec::new();
    for dir in [&a, &b] {
        cfg.output.directory = Some(dir.path().to_path_buf());
        run_coupled(&cfg).unwrap();
        outputs.push(fs::read(dir.path().join("ledger.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let ledger = EnergyLedger::from_csv(&outputs[0]).unwrap();
    assert_eq!(ledger.len(), 7);
    for step in [0, 3, 6] {
        for kind in ["chi", "vx", "vy"] {
            let name = format!("step{step:06}_{kind}.nsf");
            let (fa, fb) = (fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
            assert_eq!(fa, fb, "{name}");
        }
    }
    let chi = read_field(&a.path().join("step000006_chi.nsf")).unwrap();
    assert_eq!(chi.kind, "chi");
    assert!(!a.path().join("step000001_chi.nsf").exists());
}

#[test]
fn config_file_with_phase_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new(32, 1.0).unwrap();
    let chi = BinaryPhase::from_fn(grid, |x, y| (x - 0.4).abs() < 0.2 && (y - 0.5).abs() < 0.15);
    write_field(&dir.path().join("box.nsf"), "chi", &chi.to_field()).unwrap();
    let text = r#"
horizon = 2e-3
[grid]
n = 32
[physics]
nu_minus = 1.0
nu_plus = 1.0
[scheme]
h = 1e-3
[initial]
phase = "file"
phase_file = "box.nsf"
velocity = "zero"
[output]
directory = "out"
"#;
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    let out = run_coupled(&cfg).unwrap();
    assert_eq!(out.chi.mass(), chi.mass());
    assert!(out.ledger.rows.last().unwrap().perimeter <= lattice_perimeter(&chi) + 1e-12);
    assert!(dir.path().join("out/ledger.csv").exists());

    let wrong = text.replace("n = 32", "n = 16");
    fs::write(&path, wrong).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert!(matches!(run_coupled(&cfg), Err(Error::Config(_))));
}

#[test]
fn sweep_on_stationary_stripe() {
    let cfg = config(64, 4, 1e-3, "phase = \"stripe\"\nwidth = 0.5\nvelocity = \"zero\"");
    let report = sharp_limit_experiment(&cfg, &[0.2, 0.1]).unwrap();
    assert_eq!(report.entries.len(), 2);
    for e in &report.entries {
        assert!(e.symmetric_difference_area <= report.band_area, "{e:?}");
        assert!(e.energy_monotone && e.mass_drift < 1e-12);
    }
    assert!(report.monotone());
    assert!(sharp_limit_experiment(&cfg, &[]).unwrap().entries.is_empty());
    assert!(matches!(sharp_limit_experiment(&cfg, &[0.04]), Err(Error::Resolution { .. })));
}
