//! Fixtures shared by the criterion benchmarks.

use std::f64::consts::PI;

use nsms_core::driver::diffuse_initial;
use nsms_core::{BinaryPhase, DiffuseState, Grid, ScalarField, VectorField};

pub fn grid(n: usize) -> Grid {
    Grid::new(n, 1.0).expect("valid grid")
}

pub fn disk(n: usize) -> BinaryPhase {
    BinaryPhase::disk(grid(n), 0.5, 0.5, 0.25)
}

/// `v = (a sin 2πy, 0)`.
pub fn shear(n: usize, a: f64) -> VectorField {
    VectorField::from_fn(grid(n), |_, y| (a * (2.0 * PI * y).sin(), 0.0))
}

/// Smooth zero-mean field with a few low modes.
pub fn smooth_source(n: usize) -> ScalarField {
    ScalarField::from_fn(grid(n), |x, y| {
        (2.0 * PI * x).cos() + 0.5 * (4.0 * PI * (x + y)).sin() - 0.25 * (6.0 * PI * y).cos()
    })
}

/// Diffuse disk with velocity `shear(n, 1)`.
pub fn diffuse_disk(n: usize, eps: f64) -> DiffuseState {
    DiffuseState::new(diffuse_initial(&disk(n), eps), shear(n, 1.0), eps, 1.0).expect("valid state")
}
