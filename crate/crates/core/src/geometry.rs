//! Binary phase fields and their interface geometry: mollified perimeter,
//! normals, curvature, the first variation of perimeter, the volume
//! Lagrange multiplier and the Gibbs–Thomson residual.
//!
//! All interface quantities are read off the Gaussian-mollified indicator
//! `χ_δ = χ * φ_δ`. The total variation of `χ_δ` is isotropic to within a
//! few percent for `δ ≈ 2 dx`, unlike edge counting on the raw lattice.

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, mollify, Grid, ScalarField, VectorField};
use crate::hneg::HNegWorkspace;

/// Normals are defined where `|∇χ_δ|` exceeds this fraction of its maximum.
pub const NORMAL_THRESHOLD: f64 = 1e-3;

/// Floor on `|∫χ div ξ|` below which the Lagrange multiplier is refused.
pub const LAMBDA_DENOMINATOR_FLOOR: f64 = 1e-8;

/// Indicator of the `+` phase with exact integer mass bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryPhase {
    grid: Grid,
    chi: Vec<u8>,
    mass: usize,
}

impl BinaryPhase {
    pub fn from_cells(grid: Grid, chi: Vec<u8>) -> Result<BinaryPhase> {
        if chi.len() != grid.cells() {
            return Err(Error::InvalidField(format!(
                "expected {} cells, got {}",
                grid.cells(),
                chi.len()
            )));
        }
        if chi.iter().any(|&c| c > 1) {
            return Err(Error::InvalidField("phase values must be 0 or 1".into()));
        }
        let mass = chi.iter().map(|&c| c as usize).sum();
        Ok(BinaryPhase { grid, chi, mass })
    }

    /// Marks the cells whose centres satisfy `inside(x, y)`.
    pub fn from_fn(grid: Grid, inside: impl Fn(f64, f64) -> bool) -> BinaryPhase {
        let n = grid.n();
        let mut chi = Vec::with_capacity(grid.cells());
        for iy in 0..n {
            let y = grid.coord(iy);
            for ix in 0..n {
                chi.push(inside(grid.coord(ix), y) as u8);
            }
        }
        let mass = chi.iter().map(|&c| c as usize).sum();
        BinaryPhase { grid, chi, mass }
    }

    /// Thresholds a real field at `level` (`≥ level` is inside).
    pub fn threshold(f: &ScalarField, level: f64) -> BinaryPhase {
        let grid = *f.grid();
        let chi: Vec<u8> = f.values().iter().map(|&v| (v >= level) as u8).collect();
        let mass = chi.iter().map(|&c| c as usize).sum();
        BinaryPhase { grid, chi, mass }
    }

    /// Horizontal band `|y - center| < width/2` (periodic), full width in `x`.
    pub fn stripe(grid: Grid, center: f64, width: f64) -> BinaryPhase {
        BinaryPhase::from_fn(grid, |_, y| grid.periodic_delta(center, y).abs() < 0.5 * width)
    }

    /// Periodic disk of radius `r` around `(cx, cy)`.
    pub fn disk(grid: Grid, cx: f64, cy: f64, r: f64) -> BinaryPhase {
        BinaryPhase::from_fn(grid, |x, y| {
            grid.periodic_delta(cx, x).hypot(grid.periodic_delta(cy, y)) < r
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[u8] {
        &self.chi
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> u8 {
        self.chi[self.grid.index(ix, iy)]
    }

    /// Number of cells in the `+` phase.
    pub fn mass(&self) -> usize {
        self.mass
    }

    /// `m₀ = mass · dx²`.
    pub fn physical_mass(&self) -> f64 {
        self.mass as f64 * self.grid.cell_area()
    }

    pub fn is_degenerate(&self) -> bool {
        self.mass == 0 || self.mass == self.grid.cells()
    }

    pub fn set(&mut self, index: usize, value: u8) {
        debug_assert!(value <= 1);
        let old = self.chi[index];
        if old != value {
            self.chi[index] = value;
            if value == 1 {
                self.mass += 1;
            } else {
                self.mass -= 1;
            }
        }
    }

    /// Exchanges a `+` cell with a `-` cell, preserving the mass.
    pub fn swap_pair(&mut self, one: usize, zero: usize) {
        debug_assert_eq!(self.chi[one], 1);
        debug_assert_eq!(self.chi[zero], 0);
        self.chi[one] = 0;
        self.chi[zero] = 1;
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField::from_values_unchecked(
            self.grid,
            self.chi.iter().map(|&c| c as f64).collect(),
        )
    }

    pub fn shifted(&self, sx: isize, sy: isize) -> BinaryPhase {
        let n = self.grid.n() as isize;
        let mut chi = vec![0u8; self.chi.len()];
        for iy in 0..n {
            for ix in 0..n {
                let src = ((iy - sy).rem_euclid(n) * n + (ix - sx).rem_euclid(n)) as usize;
                chi[(iy * n + ix) as usize] = self.chi[src];
            }
        }
        BinaryPhase {
            grid: self.grid,
            chi,
            mass: self.mass,
        }
    }

    /// Number of cells where the two phases disagree.
    pub fn symmetric_difference(&self, other: &BinaryPhase) -> usize {
        self.chi
            .iter()
            .zip(&other.chi)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub(crate) fn check_same_mass(&self, other: &BinaryPhase) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.mass != other.mass {
            return Err(Error::MassMismatch {
                left: self.mass,
                right: other.mass,
            });
        }
        Ok(())
    }
}

/// One representative per undirected edge class of the 16-neighbourhood,
/// ordered by angle in `[0, π)`.
pub(crate) const LATTICE_DIRECTIONS: [(isize, isize); 8] =
    [(1, 0), (2, 1), (1, 1), (1, 2), (0, 1), (-1, 2), (-1, 1), (-2, 1)];

/// Cauchy–Crofton edge weights in units of `dx`: `Δφ_k / (2|e_k|)`, with
/// `Δφ_k` the angular sector assigned to direction `k`.
pub(crate) fn lattice_weights() -> [f64; 8] {
    use std::f64::consts::PI;
    let angle = |k: usize| {
        let (a, b) = LATTICE_DIRECTIONS[k];
        (b as f64).atan2(a as f64)
    };
    let mut w = [0.0; 8];
    for (k, wk) in w.iter_mut().enumerate() {
        let prev = if k == 0 { angle(7) - PI } else { angle(k - 1) };
        let next = if k == 7 { angle(0) + PI } else { angle(k + 1) };
        let (a, b) = LATTICE_DIRECTIONS[k];
        *wk = 0.5 * (next - prev) / (2.0 * (a as f64).hypot(b as f64));
    }
    w
}

/// Number of cut edges per direction class.
pub(crate) fn lattice_edge_counts(chi: &BinaryPhase) -> [i64; 8] {
    let n = chi.grid().n();
    let mut counts = [0i64; 8];
    for (k, &(ex, ey)) in LATTICE_DIRECTIONS.iter().enumerate() {
        for iy in 0..n {
            let qy = (iy as isize + ey).rem_euclid(n as isize) as usize;
            for ix in 0..n {
                let qx = (ix as isize + ex).rem_euclid(n as isize) as usize;
                if chi.chi[iy * n + ix] != chi.chi[qy * n + qx] {
                    counts[k] += 1;
                }
            }
        }
    }
    counts
}

pub(crate) fn lattice_perimeter_from_counts(grid: &Grid, counts: &[i64; 8]) -> f64 {
    let w = lattice_weights();
    counts.iter().zip(w).map(|(&c, wk)| c as f64 * wk).sum::<f64>() * grid.dx()
}

/// Cauchy–Crofton perimeter of the cell boundaries on the 16-neighbourhood.
///
/// Unlike [`perimeter`], this charges for oscillations below the
/// mollification scale, which makes it the right energy for minimizing over
/// binary fields. Its anisotropy is below 2% on straight lines.
pub fn lattice_perimeter(chi: &BinaryPhase) -> f64 {
    lattice_perimeter_from_counts(chi.grid(), &lattice_edge_counts(chi))
}

/// Mollified interface data of a binary phase.
#[derive(Clone, Debug)]
pub struct GeometryReport {
    pub perimeter: f64,
    pub curvature: ScalarField,
    pub normal: VectorField,
}

/// `∇χ_δ`, its magnitude, and the thresholded unit normal.
struct Interface {
    grad: VectorField,
    grad_mag: ScalarField,
    normal: VectorField,
    band: Vec<bool>,
}

fn interface(chi: &BinaryPhase, delta: f64) -> Interface {
    let grid = *chi.grid();
    let grad = gradient(&mollify(&chi.to_field(), delta));
    let grad_mag = grad.magnitude();
    let cutoff = NORMAL_THRESHOLD * grad_mag.max_abs();
    let band: Vec<bool> = grad_mag.values().iter().map(|&g| g > cutoff && g > 0.0).collect();
    let unit = |c: &ScalarField| {
        let vals = c
            .values()
            .iter()
            .zip(grad_mag.values())
            .zip(&band)
            .map(|((&v, &m), &inside)| if inside { v / m } else { 0.0 })
            .collect();
        ScalarField::from_values_unchecked(grid, vals)
    };
    let normal = VectorField {
        x: unit(&grad.x),
        y: unit(&grad.y),
    };
    Interface {
        grad,
        grad_mag,
        normal,
        band,
    }
}

fn check_delta(grid: &Grid, delta: f64) {
    assert!(
        delta >= grid.dx() * (1.0 - 1e-12),
        "mollification width {delta} must be at least dx = {}",
        grid.dx()
    );
}

/// Mollified total variation `∫|∇χ_δ| dx`.
pub fn perimeter(chi: &BinaryPhase, delta: f64) -> f64 {
    check_delta(chi.grid(), delta);
    if chi.is_degenerate() {
        return 0.0;
    }
    let grad = gradient(&mollify(&chi.to_field(), delta));
    grad.magnitude().integral()
}

/// `∫(div η − ñ·Dη ñ) |∇χ_δ| dx`, the first variation of the mollified
/// perimeter along `η` with the interface measure frozen.
pub fn first_variation(chi: &BinaryPhase, eta: &VectorField, delta: f64) -> f64 {
    check_delta(chi.grid(), delta);
    if chi.is_degenerate() {
        return 0.0;
    }
    let iface = interface(chi, delta);
    first_variation_with(&iface, eta)
}

fn first_variation_with(iface: &Interface, eta: &VectorField) -> f64 {
    let grid = *eta.grid();
    let dx_eta = gradient(&eta.x);
    let dy_eta = gradient(&eta.y);
    let mut sum = 0.0;
    for i in 0..grid.cells() {
        let w = iface.grad_mag.values()[i];
        if w == 0.0 {
            continue;
        }
        // Dη[a][b] = ∂_b η_a
        let (a11, a12) = (dx_eta.x.values()[i], dx_eta.y.values()[i]);
        let (a21, a22) = (dy_eta.x.values()[i], dy_eta.y.values()[i]);
        let (nx, ny) = (iface.normal.x.values()[i], iface.normal.y.values()[i]);
        let div = a11 + a22;
        let ndn = nx * (a11 * nx + a12 * ny) + ny * (a21 * nx + a22 * ny);
        sum += (div - ndn) * w;
    }
    sum * grid.cell_area()
}

/// `∫ χ div(μη) dx` with the product `μη` differentiated spectrally.
pub fn potential_pairing(chi: &BinaryPhase, mu: &ScalarField, eta: &VectorField) -> f64 {
    let flux = eta.times(mu);
    chi.to_field().dot(&divergence(&flux))
}

/// Volume Lagrange multiplier from the test field `ξ = ∇ψ`,
/// `Δψ = χ_δ − mean(χ_δ)`:
/// `λ = (∫χ div ξ)⁻¹ [κ δ𝒫(χ)(ξ) − ∫χ div(ξμ₀)]`.
pub fn lagrange_multiplier(
    chi: &BinaryPhase,
    mu0: &ScalarField,
    delta: f64,
    kappa: f64,
) -> Result<f64> {
    chi.grid().check_same(mu0.grid())?;
    check_delta(chi.grid(), delta);
    let ws = HNegWorkspace::new(*chi.grid());
    ws.check_compatible(mu0)?;
    let chi_delta = mollify(&chi.to_field(), delta);
    let mean = chi_delta.mean();
    let source = chi_delta.map(|v| v - mean);
    // Δψ = source  ⇔  ψ = −(−Δ)⁻¹ source
    let psi = -&ws.inv_neg_laplacian_unchecked(&source);
    let xi = gradient(&psi);
    let denominator = chi.to_field().dot(&divergence(&xi));
    if !(denominator.abs() >= LAMBDA_DENOMINATOR_FLOOR) {
        return Err(Error::DegeneratePhase { denominator });
    }
    let iface = interface(chi, delta);
    let variation = kappa * first_variation_with(&iface, &xi);
    Ok((variation - potential_pairing(chi, mu0, &xi)) / denominator)
}

/// `‖η‖_{C¹} = max|η| + max|Dη|` on the grid (Frobenius norm for `Dη`).
pub fn c1_norm(eta: &VectorField) -> f64 {
    let gx = gradient(&eta.x);
    let gy = gradient(&eta.y);
    let mut d = 0.0f64;
    for i in 0..eta.grid().cells() {
        let f = gx.x.values()[i].powi(2)
            + gx.y.values()[i].powi(2)
            + gy.x.values()[i].powi(2)
            + gy.y.values()[i].powi(2);
        d = d.max(f.sqrt());
    }
    eta.magnitude().max_abs() + d
}

/// `max_η |κ δ𝒫(χ)(η) − ∫χ div(μη)| / (1 + ‖η‖_{C¹})`, zero for an empty list.
pub fn gibbs_thomson_residual(
    chi: &BinaryPhase,
    mu: &ScalarField,
    delta: f64,
    kappa: f64,
    test_fields: &[VectorField],
) -> f64 {
    if test_fields.is_empty() {
        return 0.0;
    }
    check_delta(chi.grid(), delta);
    let iface = (!chi.is_degenerate()).then(|| interface(chi, delta));
    test_fields
        .iter()
        .map(|eta| {
            let variation = iface
                .as_ref()
                .map_or(0.0, |f| kappa * first_variation_with(f, eta));
            let rhs = potential_pairing(chi, mu, eta);
            (variation - rhs).abs() / (1.0 + c1_norm(eta))
        })
        .fold(0.0, f64::max)
}

/// Low-mode trigonometric test fields used for the Gibbs–Thomson diagnostic.
pub fn standard_test_fields(grid: Grid) -> Vec<VectorField> {
    use std::f64::consts::PI;
    let k = 2.0 * PI / grid.length();
    vec![
        VectorField::from_fn(grid, |x, _| ((k * x).sin(), 0.0)),
        VectorField::from_fn(grid, |_, y| (0.0, (k * y).sin())),
        VectorField::from_fn(grid, |x, y| ((k * x).cos() * (k * y).sin(), 0.0)),
        VectorField::from_fn(grid, |x, y| (0.0, (k * x).sin() * (k * y).cos())),
        VectorField::from_fn(grid, |x, y| ((k * y).cos(), (k * x).cos())),
        VectorField::from_fn(grid, |x, y| ((k * x).sin() * (k * y).cos(), (k * x).cos() * (k * y).sin())),
    ]
}

/// Scalar curvature `−div ñ` on the interface band, zero elsewhere.
pub fn curvature_field(chi: &BinaryPhase, delta: f64) -> ScalarField {
    check_delta(chi.grid(), delta);
    let grid = *chi.grid();
    if chi.is_degenerate() {
        return ScalarField::zeros(grid);
    }
    let iface = interface(chi, delta);
    curvature_from(&iface, grid)
}

fn curvature_from(iface: &Interface, grid: Grid) -> ScalarField {
    // −div(∇u/|∇u|) expanded in first and second derivatives of u = χ_δ.
    // Differentiating the masked normal directly would ring at the band edge.
    let (ux, uy) = (&iface.grad.x, &iface.grad.y);
    let dux = gradient(ux);
    let duy = gradient(uy);
    let vals = (0..grid.cells())
        .map(|i| {
            if !iface.band[i] {
                return 0.0;
            }
            let (gx, gy) = (ux.values()[i], uy.values()[i]);
            let (uxx, uxy, uyy) = (dux.x.values()[i], dux.y.values()[i], duy.y.values()[i]);
            let m = iface.grad_mag.values()[i];
            -(uxx * gy * gy - 2.0 * gx * gy * uxy + uyy * gx * gx) / (m * m * m)
        })
        .collect();
    ScalarField::from_values_unchecked(grid, vals)
}

pub fn geometry_report(chi: &BinaryPhase, delta: f64) -> GeometryReport {
    check_delta(chi.grid(), delta);
    let grid = *chi.grid();
    if chi.is_degenerate() {
        return GeometryReport {
            perimeter: 0.0,
            curvature: ScalarField::zeros(grid),
            normal: VectorField::zeros(grid),
        };
    }
    let iface = interface(chi, delta);
    GeometryReport {
        perimeter: iface.grad_mag.integral(),
        curvature: curvature_from(&iface, grid),
        normal: iface.normal,
    }
}

/// `|∇χ_δ|`, exposed for band selection in diagnostics.
pub fn interface_density(chi: &BinaryPhase, delta: f64) -> ScalarField {
    gradient(&mollify(&chi.to_field(), delta)).magnitude()
}
