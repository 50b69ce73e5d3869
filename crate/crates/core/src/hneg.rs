//! Inverse negative Laplacian on mean-zero fields, the `H⁻¹` norm and the
//! Leray projection.
//!
//! On the torus the Neumann Laplacian of a bounded domain becomes the
//! periodic Laplacian restricted to mean-zero functions, which the FFT
//! inverts exactly. The `H⁻¹` norm is
//! `‖f‖² = ⟨f, (-Δ)⁻¹ f⟩ = ‖∇(-Δ)⁻¹ f‖²`, evaluated from the symbol table.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::spectral::Modes;

/// Relative tolerance of the zero-mean solvability condition.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Precomputed inverse symbol `1/|k|²` (zero at `k = 0`).
#[derive(Clone, Debug)]
pub struct HNegWorkspace {
    grid: Grid,
    modes: Modes,
    inv_symbol: Vec<f64>,
}

impl HNegWorkspace {
    pub fn new(grid: Grid) -> HNegWorkspace {
        let modes = Modes::new(&grid);
        let n = grid.n();
        let mut inv_symbol = vec![0.0; n * n];
        for iy in 0..n {
            for ix in 0..n {
                if ix != 0 || iy != 0 {
                    inv_symbol[iy * n + ix] = 1.0 / modes.k2(ix, iy);
                }
            }
        }
        HNegWorkspace {
            grid,
            modes,
            inv_symbol,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn inv_symbol(&self) -> &[f64] {
        &self.inv_symbol
    }

    pub fn check_compatible(&self, f: &ScalarField) -> Result<()> {
        self.grid.check_same(f.grid())?;
        let mean = f.mean();
        let bound = COMPATIBILITY_TOL * f.max_abs();
        if mean.abs() > bound {
            return Err(Error::Compatibility { mean, bound });
        }
        Ok(())
    }

    /// Solves `-Δu = f` with `mean(u) = 0`.
    pub fn inv_neg_laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check_compatible(f)?;
        Ok(self.inv_neg_laplacian_unchecked(f))
    }

    /// Same as [`inv_neg_laplacian`](Self::inv_neg_laplacian) without the
    /// compatibility check; the mean of `f` is silently discarded.
    pub fn inv_neg_laplacian_unchecked(&self, f: &ScalarField) -> ScalarField {
        let mut spec = f.spectrum();
        for (c, s) in spec.iter_mut().zip(&self.inv_symbol) {
            *c *= *s;
        }
        ScalarField::from_spectrum(self.grid, spec)
    }

    /// `‖f‖²_{H⁻¹}` from the symbol table (Parseval).
    pub fn hneg_norm_sq(&self, f: &ScalarField) -> Result<f64> {
        self.check_compatible(f)?;
        Ok(self.hneg_norm_sq_unchecked(f))
    }

    pub(crate) fn hneg_norm_sq_unchecked(&self, f: &ScalarField) -> f64 {
        let spec = f.spectrum();
        self.norm_sq_of_spectrum(&spec)
    }

    pub(crate) fn norm_sq_of_spectrum(&self, spec: &[Complex64]) -> f64 {
        let n2 = self.grid.cells() as f64;
        let sum: f64 = spec
            .iter()
            .zip(&self.inv_symbol)
            .map(|(c, s)| c.norm_sqr() * s)
            .sum();
        sum * self.grid.cell_area() / n2
    }

    pub fn hneg_norm(&self, f: &ScalarField) -> Result<f64> {
        Ok(self.hneg_norm_sq(f)?.sqrt())
    }

    /// Grid function `G` with `G(· - c) = (-Δ)⁻¹(e_c - 1/n²)` for the unit
    /// cell indicator `e_c`; the periodic lattice Green's function.
    pub fn green_column(&self) -> ScalarField {
        let spec: Vec<Complex64> = self
            .inv_symbol
            .iter()
            .map(|&s| Complex64::new(s, 0.0))
            .collect();
        ScalarField::from_spectrum(self.grid, spec)
    }

    /// Orthogonal projection onto spectrally divergence-free fields.
    pub fn leray_project(&self, u: &VectorField) -> VectorField {
        let mut sx = u.x.spectrum();
        let mut sy = u.y.spectrum();
        self.leray_in_spectrum(&mut sx, &mut sy);
        VectorField {
            x: ScalarField::from_spectrum(self.grid, sx),
            y: ScalarField::from_spectrum(self.grid, sy),
        }
    }

    /// In-place Leray projection of a spectral vector field, using the
    /// derivative wavenumbers so that the spectral divergence of the result
    /// vanishes identically.
    pub(crate) fn leray_in_spectrum(&self, sx: &mut [Complex64], sy: &mut [Complex64]) {
        let n = self.grid.n();
        let m = &self.modes;
        for iy in 0..n {
            for ix in 0..n {
                let (kx, ky) = (m.dk[ix], m.dk[iy]);
                let kk = kx * kx + ky * ky;
                if kk == 0.0 {
                    continue;
                }
                let i = iy * n + ix;
                // Stream-function form: the result is built from k⊥, so a
                // pure gradient maps to round-off of the output, not the input.
                let t = (sx[i] * ky - sy[i] * kx) / kk;
                sx[i] = t * ky;
                sy[i] = -t * kx;
            }
        }
    }

    /// `∫|∇f|²` from the symbol `|k|²`, Nyquist modes included; the exact
    /// counterpart of the `H⁻¹` norm, `‖∇(-Δ)⁻¹f‖² = ‖f‖²_{H⁻¹}`.
    pub fn dirichlet_energy(&self, f: &ScalarField) -> f64 {
        self.grid.check_same(f.grid()).expect("field on foreign grid");
        let n = self.grid.n();
        let spec = f.spectrum();
        let mut sum = 0.0;
        for iy in 0..n {
            for ix in 0..n {
                sum += spec[iy * n + ix].norm_sqr() * self.modes.k2(ix, iy);
            }
        }
        sum * self.grid.cell_area() / self.grid.cells() as f64
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::grid::{divergence, gradient};

    fn ws(n: usize) -> HNegWorkspace {
        HNegWorkspace::new(Grid::new(n, 1.0).unwrap())
    }

    #[test]
    fn symbol_zero_mode_is_zero() {
        let w = ws(16);
        assert_eq!(w.inv_symbol()[0], 0.0);
        assert!(w.inv_symbol()[1..].iter().all(|&s| s > 0.0));
    }

    #[test]
    fn cosine_eigenfunction() {
        let w = ws(32);
        let f = ScalarField::from_fn(*w.grid(), |x, _| (2.0 * PI * x).cos());
        let u = w.inv_neg_laplacian(&f).unwrap();
        let expect = &f * (1.0 / (4.0 * PI * PI));
        assert!((&u - &expect).max_abs() < 1e-12);
        let norm = w.hneg_norm(&f).unwrap();
        let analytic = (0.5f64).sqrt() / (2.0 * PI);
        assert!((norm - analytic).abs() < 1e-12);
        assert!((norm - 0.11254).abs() < 1e-5);
    }

    #[test]
    fn zero_in_zero_out() {
        let w = ws(16);
        let z = ScalarField::zeros(*w.grid());
        assert_eq!(w.inv_neg_laplacian(&z).unwrap().max_abs(), 0.0);
        assert_eq!(w.hneg_norm(&z).unwrap(), 0.0);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let w = ws(16);
        let f = ScalarField::from_fn(*w.grid(), |x, _| 0.5 + (2.0 * PI * x).cos());
        assert!(matches!(w.inv_neg_laplacian(&f), Err(Error::Compatibility { .. })));
        assert!(matches!(w.hneg_norm(&f), Err(Error::Compatibility { .. })));
    }

    #[test]
    fn green_column_inverts_cell_impulse() {
        let w = ws(16);
        let g = *w.grid();
        let mut vals = vec![-1.0 / g.cells() as f64; g.cells()];
        vals[0] += 1.0;
        let f = ScalarField::from_values(g, vals).unwrap();
        let u = w.inv_neg_laplacian(&f).unwrap();
        assert!((&u - &w.green_column()).max_abs() < 1e-14);
    }

    #[test]
    fn dirichlet_energy_of_inverse_is_hneg_norm() {
        let w = ws(32);
        let f = ScalarField::from_fn(*w.grid(), |x, y| (2.0 * PI * x).sin() + (6.0 * PI * y).cos() * x);
        let f = f.map(|v| v - f.mean());
        let u = w.inv_neg_laplacian(&f).unwrap();
        let lhs = w.dirichlet_energy(&u);
        let rhs = w.hneg_norm_sq(&f).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn leray_removes_gradients_keeps_shear() {
        let w = ws(32);
        let g = *w.grid();
        let f = ScalarField::from_fn(g, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        assert!(w.leray_project(&gradient(&f)).max_abs() < 1e-12);
        let shear = VectorField::from_fn(g, |_, y| ((2.0 * PI * y).sin(), 0.0));
        assert!((&w.leray_project(&shear) - &shear).max_abs() < 1e-13);
        let mixed = VectorField::from_fn(g, |x, y| ((2.0 * PI * y).sin() + x * (1.0 - x), y * y));
        let p = w.leray_project(&mixed);
        assert!(divergence(&p).max_abs() < 1e-10);
    }
}
