//! Uniform periodic grid on the square torus, cell-valued scalar and
//! vector fields, and the spectral operators everything else is built on.

use std::ops::{Add, Mul, Neg, Sub};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{self, Modes};

/// Periodic `n × n` lattice of side `length`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Grid> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 8"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length {length} must be positive")));
        }
        Ok(Grid { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    /// Cell-centre coordinate of column/row index `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    /// Shortest signed displacement `b - a` on the circle of length `L`.
    #[inline]
    pub fn periodic_delta(&self, a: f64, b: f64) -> f64 {
        let l = self.length;
        let mut d = (b - a) % l;
        if d > 0.5 * l {
            d -= l;
        } else if d < -0.5 * l {
            d += l;
        }
        d
    }

    pub(crate) fn modes(&self) -> Modes {
        Modes::new(self)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real values on the cells of a [`Grid`], row-major with `x` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> ScalarField {
        ScalarField::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        ScalarField {
            grid,
            values: vec![value; grid.cells()],
        }
    }

    /// Samples `f(x, y)` at cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.cells());
        for iy in 0..n {
            let y = grid.coord(iy);
            for ix in 0..n {
                values.push(f(grid.coord(ix), y));
            }
        }
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.cells() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at cell {i}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> ScalarField {
        debug_assert_eq!(values.len(), grid.cells());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `∫ f dx` by the cell rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// `∫ f g dx` by the cell rule.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Cyclic shift by whole cells: the result at `(i, j)` is `self` at `(i - sx, j - sy)`.
    pub fn shifted(&self, sx: isize, sy: isize) -> ScalarField {
        let n = self.grid.n() as isize;
        let mut values = vec![0.0; self.values.len()];
        for iy in 0..n {
            for ix in 0..n {
                let src = ((iy - sy).rem_euclid(n) * n + (ix - sx).rem_euclid(n)) as usize;
                values[(iy * n + ix) as usize] = self.values[src];
            }
        }
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    pub(crate) fn spectrum(&self) -> Vec<Complex64> {
        spectral::forward_real(&self.values, self.grid.n())
    }

    pub(crate) fn from_spectrum(grid: Grid, spec: Vec<Complex64>) -> ScalarField {
        ScalarField {
            grid,
            values: spectral::inverse_real(spec, grid.n()),
        }
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.map(|a| a * rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|a| -a)
    }
}

/// A pair of scalar fields on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<VectorField> {
        x.grid.check_same(&y.grid)?;
        Ok(VectorField { x, y })
    }

    pub fn zeros(grid: Grid) -> VectorField {
        VectorField {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn constant(grid: Grid, vx: f64, vy: f64) -> VectorField {
        VectorField {
            x: ScalarField::constant(grid, vx),
            y: ScalarField::constant(grid, vy),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> VectorField {
        VectorField {
            x: ScalarField::from_fn(grid, |x, y| f(x, y).0),
            y: ScalarField::from_fn(grid, |x, y| f(x, y).1),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.x.grid()
    }

    /// `∫ u·w dx`.
    pub fn dot(&self, other: &VectorField) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn scale(&self, s: f64) -> VectorField {
        VectorField {
            x: &self.x * s,
            y: &self.y * s,
        }
    }

    /// Multiplies both components pointwise by a scalar field.
    pub fn times(&self, f: &ScalarField) -> VectorField {
        VectorField {
            x: &self.x * f,
            y: &self.y * f,
        }
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        self.x.zip_map(&self.y, f64::hypot)
    }

    pub fn shifted(&self, sx: isize, sy: isize) -> VectorField {
        VectorField {
            x: self.x.shifted(sx, sy),
            y: self.y.shifted(sx, sy),
        }
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField {
            x: &self.x + &rhs.x,
            y: &self.y + &rhs.y,
        }
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            x: &self.x - &rhs.x,
            y: &self.y - &rhs.y,
        }
    }
}

/// Spectral gradient of the trigonometric interpolant.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let spec = f.spectrum();
    gradient_of_spectrum(grid, &spec)
}

pub(crate) fn gradient_of_spectrum(grid: Grid, spec: &[Complex64]) -> VectorField {
    let m = grid.modes();
    let n = grid.n();
    let mut gx = vec![Complex64::default(); spec.len()];
    let mut gy = vec![Complex64::default(); spec.len()];
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            let c = spec[i];
            gx[i] = Complex64::new(-c.im, c.re) * m.dk[ix];
            gy[i] = Complex64::new(-c.im, c.re) * m.dk[iy];
        }
    }
    VectorField {
        x: ScalarField::from_spectrum(grid, gx),
        y: ScalarField::from_spectrum(grid, gy),
    }
}

/// Spectral divergence; the result has zero mean.
pub fn divergence(u: &VectorField) -> ScalarField {
    let grid = *u.grid();
    let spec = divergence_spectrum(u);
    ScalarField::from_spectrum(grid, spec)
}

pub(crate) fn divergence_spectrum(u: &VectorField) -> Vec<Complex64> {
    let grid = *u.grid();
    let m = grid.modes();
    let n = grid.n();
    let sx = u.x.spectrum();
    let sy = u.y.spectrum();
    let mut out = vec![Complex64::default(); sx.len()];
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            let c = sx[i] * m.dk[ix] + sy[i] * m.dk[iy];
            out[i] = Complex64::new(-c.im, c.re);
        }
    }
    out
}

/// Spectral Laplacian with multiplier `-|k|²`, Nyquist modes included.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let m = grid.modes();
    let n = grid.n();
    let mut spec = f.spectrum();
    for iy in 0..n {
        for ix in 0..n {
            spec[iy * n + ix] *= -m.k2(ix, iy);
        }
    }
    ScalarField::from_spectrum(grid, spec)
}

/// Gaussian Fourier multiplier `exp(-½ δ² |k|²)`.
#[inline]
pub(crate) fn gaussian_multiplier(delta: f64, k2: f64) -> f64 {
    (-0.5 * delta * delta * k2).exp()
}

/// Periodic convolution with a normalized Gaussian of standard deviation
/// `delta`, applied spectrally.
///
/// # Panics
/// If `delta` is not positive.
pub fn mollify(f: &ScalarField, delta: f64) -> ScalarField {
    assert!(delta > 0.0, "mollification width must be positive");
    let grid = *f.grid();
    let m = grid.modes();
    let n = grid.n();
    let mut spec = f.spectrum();
    for iy in 0..n {
        for ix in 0..n {
            spec[iy * n + ix] *= gaussian_multiplier(delta, m.k2(ix, iy));
        }
    }
    ScalarField::from_spectrum(grid, spec)
}

/// Zeroes every mode outside the 2/3-rule band.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let m = grid.modes();
    let n = grid.n();
    let mut spec = f.spectrum();
    for iy in 0..n {
        for ix in 0..n {
            if !m.kept(ix, iy) {
                spec[iy * n + ix] = Complex64::default();
            }
        }
    }
    ScalarField::from_spectrum(grid, spec)
}

pub fn dealias_vector(u: &VectorField) -> VectorField {
    VectorField {
        x: dealias(&u.x),
        y: dealias(&u.y),
    }
}

/// Pointwise product followed by 2/3-rule truncation.
pub fn dealiased_product(a: &ScalarField, b: &ScalarField) -> ScalarField {
    dealias(&(a * b))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(4, 1.0).is_err());
        assert!(Grid::new(48, 1.0).is_err());
        assert!(Grid::new(16, 0.0).is_err());
        let g = Grid::new(32, 2.0).unwrap();
        assert_eq!(g.dx() * g.n() as f64, g.length());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let f = ScalarField::constant(grid(16), 3.7);
        let g = gradient(&f);
        assert!(g.max_abs() < 1e-13);
    }

    #[test]
    fn gradient_of_sine_matches_cosine() {
        let l = 2.5;
        let g = Grid::new(32, l).unwrap();
        let k = 2.0 * PI / l;
        let f = ScalarField::from_fn(g, |x, _| (k * x).sin());
        let d = gradient(&f);
        let expect = ScalarField::from_fn(g, |x, _| k * (k * x).cos());
        assert!((&d.x - &expect).max_abs() < 1e-12);
        assert!(d.y.max_abs() < 1e-12);
    }

    #[test]
    fn gradient_of_product_mode() {
        let g = grid(32);
        let k = 2.0 * PI;
        let f = ScalarField::from_fn(g, |x, y| (k * x).sin() * (k * y).sin());
        let d = gradient(&f);
        let ex = ScalarField::from_fn(g, |x, y| k * (k * x).cos() * (k * y).sin());
        let ey = ScalarField::from_fn(g, |x, y| k * (k * x).sin() * (k * y).cos());
        assert!((&d.x - &ex).max_abs() < 1e-11);
        assert!((&d.y - &ey).max_abs() < 1e-11);
        assert!(d.x.mean().abs() < 1e-14 && d.y.mean().abs() < 1e-14);
    }

    #[test]
    fn divergence_of_shear_and_constant_vanish() {
        let g = grid(32);
        let shear = VectorField::from_fn(g, |_, y| ((2.0 * PI * y).sin(), 0.0));
        assert!(divergence(&shear).max_abs() < 1e-12);
        assert!(divergence(&VectorField::constant(g, 1.5, -2.0)).max_abs() < 1e-12);
    }

    #[test]
    fn mollify_scales_cosine_by_gaussian_symbol() {
        let g = grid(64);
        let delta = 1.0 / 16.0;
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let out = mollify(&f, delta);
        let factor = (-0.5 * (2.0 * PI * delta).powi(2)).exp();
        assert!((factor - 0.9257).abs() < 1e-4);
        assert!((&out - &(&f * factor)).max_abs() < 1e-10);
    }

    #[test]
    fn mollify_keeps_constants() {
        let f = ScalarField::constant(grid(16), -0.25);
        assert!((&mollify(&f, 0.1) - &f).max_abs() < 1e-14);
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = grid(32);
        let f = ScalarField::from_fn(g, |x, y| (2.0 * PI * 3.0 * x).cos() + (2.0 * PI * 10.0 * y).sin());
        assert!((&dealias(&f) - &f).max_abs() < 1e-12);
        let hi = ScalarField::from_fn(g, |x, _| (2.0 * PI * 12.0 * x).cos());
        assert!(dealias(&hi).max_abs() < 1e-12);
    }

    #[test]
    fn shift_wraps_around() {
        let g = grid(8);
        let f = ScalarField::from_fn(g, |x, y| x + 10.0 * y);
        let s = f.shifted(1, 0);
        assert_eq!(s.at(1, 0), f.at(0, 0));
        assert_eq!(s.at(0, 0), f.at(7, 0));
        assert_eq!(f.shifted(3, -2).shifted(-3, 2), f);
    }

    #[test]
    fn periodic_delta_picks_shortest() {
        let g = grid(8);
        assert!((g.periodic_delta(0.9, 0.1) - 0.2).abs() < 1e-15);
        assert!((g.periodic_delta(0.1, 0.9) + 0.2).abs() < 1e-15);
    }
}
