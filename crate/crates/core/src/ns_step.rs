//! One implicit step of the linearized momentum equation
//!
//! ```text
//! (v − ṽ)/h + ṽ·∇v − div(2ν Dv) + ∇p = f,   div v = 0,
//! ```
//!
//! with `Dv` the symmetric gradient and `f = −χ∇μ`. The unknown lives in the
//! space of dealiased, spectrally divergence-free fields; the pressure is
//! eliminated by the Leray projection. The lagged convection `ṽ·∇v` is
//! handled by Picard iteration around a symmetric Stokes operator, which is
//! inverted by conjugate gradients with a constant-viscosity Fourier
//! preconditioner.

use std::cell::RefCell;

use log::warn;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::BinaryPhase;
use crate::grid::{dealias, gradient, mollify, Grid, ScalarField, VectorField};
use crate::spectral::{self, FftWork, Modes};

#[derive(Clone, Debug, PartialEq)]
pub struct NsStepConfig {
    pub h: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub cg_tol: f64,
    pub cg_max: usize,
}

impl NsStepConfig {
    pub fn new(h: f64) -> NsStepConfig {
        NsStepConfig {
            h,
            picard_tol: 1e-8,
            picard_max: 50,
            cg_tol: 1e-10,
            cg_max: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step h = {} must be positive", self.h)));
        }
        if !(self.picard_tol > 0.0 && self.cg_tol > 0.0) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        if self.picard_max == 0 || self.cg_max == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NsStepResult {
    pub v_new: VectorField,
    pub iterations: usize,
    pub final_residual: f64,
    /// Relative residual after each Picard iteration.
    pub residual_history: Vec<f64>,
    /// Set when the cap was hit with a residual within `10·picard_tol`.
    pub loose_convergence: bool,
    /// Whether the Picard residual never increased.
    pub monotone: bool,
    /// `½‖v_new‖²`.
    pub kinetic_new: f64,
    /// `∫2ν|Dv_new|²`.
    pub viscous_dissipation: f64,
}

/// `ν₋ + (ν₊ − ν₋) χ_δ`, with `χ_δ` clamped to `[0, 1]` so that the result
/// never leaves the interval spanned by the two viscosities.
pub fn viscosity_field(chi: &BinaryPhase, nu_minus: f64, nu_plus: f64, delta: f64) -> Result<ScalarField> {
    if !(nu_minus > 0.0 && nu_plus > 0.0 && nu_minus.is_finite() && nu_plus.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "viscosities must be positive, got {nu_minus} and {nu_plus}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    let smooth = mollify(&chi.to_field(), delta);
    Ok(smooth.map(|c| nu_minus + (nu_plus - nu_minus) * c.clamp(0.0, 1.0)))
}

/// Capillary force `−χ∇μ`, dealiased.
pub fn capillary_forcing(chi: &BinaryPhase, mu: &ScalarField) -> Result<VectorField> {
    chi.grid().check_same(mu.grid())?;
    let grad = gradient(mu);
    let c = chi.to_field();
    Ok(VectorField {
        x: dealias(&-&(&c * &grad.x)),
        y: dealias(&-&(&c * &grad.y)),
    })
}

/// Symmetric gradient `(e_xx, e_xy, e_yy)`.
fn strain(v: &VectorField) -> (ScalarField, ScalarField, ScalarField) {
    let gx = gradient(&v.x);
    let gy = gradient(&v.y);
    let exy = gx.y.zip_map(&gy.x, |a, b| 0.5 * (a + b));
    (gx.x, exy, gy.y)
}

/// `∫2ν|Dv|²`.
pub fn viscous_dissipation(v: &VectorField, nu: &ScalarField) -> f64 {
    let (exx, exy, eyy) = strain(v);
    let mut sum = 0.0;
    for i in 0..nu.values().len() {
        let d2 = exx.values()[i].powi(2) + 2.0 * exy.values()[i].powi(2) + eyy.values()[i].powi(2);
        sum += 2.0 * nu.values()[i] * d2;
    }
    sum * nu.grid().cell_area()
}

/// `i k c`.
#[inline]
fn ik(c: Complex64, k: f64) -> Complex64 {
    Complex64::new(-c.im * k, c.re * k)
}

/// A vector field held as the spectra of its two components.
#[derive(Clone, Debug)]
struct Spec {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
}

impl Spec {
    fn zeros(len: usize) -> Spec {
        Spec {
            x: vec![Complex64::default(); len],
            y: vec![Complex64::default(); len],
        }
    }

    fn zip(&self, other: &Spec, f: impl Fn(Complex64, Complex64) -> Complex64) -> Spec {
        let map = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect();
        Spec {
            x: map(&self.x, &other.x),
            y: map(&self.y, &other.y),
        }
    }

    /// `self + a · other`.
    fn axpy(&self, a: f64, other: &Spec) -> Spec {
        self.zip(other, |p, q| p + q * a)
    }

    /// `self += a · other`.
    fn add_scaled(&mut self, a: f64, other: &Spec) {
        for (p, q) in self.x.iter_mut().chain(self.y.iter_mut()).zip(other.x.iter().chain(&other.y)) {
            *p += q * a;
        }
    }

    /// `self = other + b · self`.
    fn scale_add(&mut self, b: f64, other: &Spec) {
        for (p, q) in self.x.iter_mut().chain(self.y.iter_mut()).zip(other.x.iter().chain(&other.y)) {
            *p = q + *p * b;
        }
    }

    fn raw_dot(&self, other: &Spec) -> f64 {
        let dot = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(p, q)| p.re * q.re + p.im * q.im).sum::<f64>();
        dot(&self.x, &other.x) + dot(&self.y, &other.y)
    }
}

/// Buffers reused by every operator application of one step.
struct Scratch {
    fft: FftWork,
    spec: [Vec<Complex64>; 4],
    real: [Vec<f64>; 4],
}

/// Operators of one step in spectral form, sharing the grid tables.
struct StokesSystem<'a> {
    grid: Grid,
    modes: Modes,
    nu: &'a ScalarField,
    /// Inverse of the preconditioner symbol `1/h + ν_ref|k|²` on kept modes, zero elsewhere.
    inv_diag: Vec<f64>,
    h: f64,
    /// Lagged advecting velocity, in physical space.
    w: VectorField,
    scratch: RefCell<Scratch>,
}

impl<'a> StokesSystem<'a> {
    fn new(grid: Grid, nu: &'a ScalarField, h: f64) -> StokesSystem<'a> {
        let n = grid.n();
        let modes = grid.modes();
        let nu_ref = nu.mean();
        let mut inv_diag = vec![0.0; n * n];
        for iy in 0..n {
            for ix in 0..n {
                if modes.kept(ix, iy) {
                    inv_diag[iy * n + ix] = 1.0 / (1.0 / h + nu_ref * modes.k2(ix, iy));
                }
            }
        }
        let scratch = Scratch {
            fft: FftWork::new(n),
            spec: std::array::from_fn(|_| vec![Complex64::default(); n * n]),
            real: std::array::from_fn(|_| vec![0.0; n * n]),
        };
        StokesSystem {
            grid,
            modes,
            nu,
            inv_diag,
            h,
            w: VectorField::zeros(grid),
            scratch: RefCell::new(scratch),
        }
    }
}

impl StokesSystem<'_> {
    fn n(&self) -> usize {
        self.grid.n()
    }

    fn zeros(&self) -> Spec {
        Spec::zeros(self.grid.cells())
    }

    /// Parseval weight: the physical `L²` product is `weight · Σ Re(â* b̂)`.
    fn weight(&self) -> f64 {
        self.grid.cell_area() / self.grid.cells() as f64
    }

    fn dot(&self, a: &Spec, b: &Spec) -> f64 {
        self.weight() * a.raw_dot(b)
    }

    fn norm(&self, a: &Spec) -> f64 {
        self.dot(a, a).sqrt()
    }

    fn to_spec(&self, v: &VectorField) -> Spec {
        let mut out = self.zeros();
        let fft = &mut self.scratch.borrow_mut().fft;
        spectral::forward_real_pair_into(v.x.values(), v.y.values(), &mut out.x, &mut out.y, fft);
        out
    }

    fn to_field(&self, s: &Spec) -> VectorField {
        let cells = self.grid.cells();
        let (mut x, mut y) = (vec![0.0; cells], vec![0.0; cells]);
        spectral::inverse_real_pair_into(&s.x, &s.y, &mut x, &mut y, &mut self.scratch.borrow_mut().fft);
        VectorField {
            x: ScalarField::from_values_unchecked(self.grid, x),
            y: ScalarField::from_values_unchecked(self.grid, y),
        }
    }

    /// Dealiasing followed by the Leray projection, in place.
    fn project(&self, s: &mut Spec) {
        let n = self.n();
        let (dk, keep) = (&self.modes.dk, &self.modes.keep);
        for iy in 0..n {
            let ky = dk[iy];
            for ix in 0..n {
                let i = iy * n + ix;
                if !(keep[ix] && keep[iy]) {
                    s.x[i] = Complex64::default();
                    s.y[i] = Complex64::default();
                    continue;
                }
                let kx = dk[ix];
                let kk = kx * kx + ky * ky;
                if kk == 0.0 {
                    continue;
                }
                // Stream-function form, as in the workspace projection.
                let t = (s.x[i] * ky - s.y[i] * kx) / kk;
                s.x[i] = t * ky;
                s.y[i] = -t * kx;
            }
        }
    }

    /// `P(v/h − div(2ν Dv))`, symmetric positive definite on the solution space.
    #[cfg(test)]
    fn stokes(&self, v: &Spec) -> Spec {
        let mut out = self.zeros();
        self.stokes_into(v, &mut out);
        out
    }

    fn stokes_into(&self, v: &Spec, out: &mut Spec) {
        let n = self.n();
        let dk = &self.modes.dk;
        let mut guard = self.scratch.borrow_mut();
        let Scratch { fft, spec, real } = &mut *guard;
        let [exx, eyy, exy, _] = spec;
        for iy in 0..n {
            let ky = dk[iy];
            for ix in 0..n {
                let (kx, i) = (dk[ix], iy * n + ix);
                let (a, b) = (v.x[i], v.y[i]);
                exx[i] = ik(a, kx);
                eyy[i] = ik(b, ky);
                exy[i] = (ik(a, ky) + ik(b, kx)) * 0.5;
            }
        }
        let [sxx, syy, sxy, _] = real;
        spectral::inverse_real_pair_into(exx, eyy, sxx, syy, fft);
        spectral::inverse_real_into(exy, sxy, fft);
        for (i, &m) in self.nu.values().iter().enumerate() {
            sxx[i] *= 2.0 * m;
            syy[i] *= 2.0 * m;
            sxy[i] *= 2.0 * m;
        }
        let (fxx, fyy, fxy) = (exx, eyy, exy);
        spectral::forward_real_pair_into(sxx, syy, fxx, fyy, fft);
        spectral::forward_real_into(sxy, fxy, fft);
        let inv_h = 1.0 / self.h;
        for iy in 0..n {
            let ky = dk[iy];
            for ix in 0..n {
                let (kx, i) = (dk[ix], iy * n + ix);
                out.x[i] = v.x[i] * inv_h - ik(fxx[i], kx) - ik(fxy[i], ky);
                out.y[i] = v.y[i] * inv_h - ik(fxy[i], kx) - ik(fyy[i], ky);
            }
        }
        drop(guard);
        self.project(out);
    }

    /// `P(w·∇v)`.
    fn convection(&self, v: &Spec) -> Spec {
        let n = self.n();
        let dk = &self.modes.dk;
        let mut out = self.zeros();
        let mut guard = self.scratch.borrow_mut();
        let Scratch { fft, spec, real } = &mut *guard;
        let [gxx, gxy, gyx, gyy] = spec;
        for iy in 0..n {
            let ky = dk[iy];
            for ix in 0..n {
                let (kx, i) = (dk[ix], iy * n + ix);
                gxx[i] = ik(v.x[i], kx);
                gxy[i] = ik(v.x[i], ky);
                gyx[i] = ik(v.y[i], kx);
                gyy[i] = ik(v.y[i], ky);
            }
        }
        let [cx, vx_y, cy, vy_y] = real;
        spectral::inverse_real_pair_into(gxx, gxy, cx, vx_y, fft);
        spectral::inverse_real_pair_into(gyx, gyy, cy, vy_y, fft);
        let (wx, wy) = (self.w.x.values(), self.w.y.values());
        for i in 0..n * n {
            cx[i] = wx[i] * cx[i] + wy[i] * vx_y[i];
            cy[i] = wx[i] * cy[i] + wy[i] * vy_y[i];
        }
        spectral::forward_real_pair_into(cx, cy, &mut out.x, &mut out.y, fft);
        drop(guard);
        self.project(&mut out);
        out
    }

    /// Fourier-diagonal approximate inverse `1/(1/h + ν_ref|k|²)`.
    fn precondition_into(&self, r: &Spec, out: &mut Spec) {
        for (i, &d) in self.inv_diag.iter().enumerate() {
            out.x[i] = r.x[i] * d;
            out.y[i] = r.y[i] * d;
        }
    }

    /// Preconditioned conjugate gradients for `stokes(x) = b`. Returns the
    /// solution and its residual `b − stokes(x)`.
    fn solve(&self, b: &Spec, x0: Spec, tol: f64, max_iter: usize) -> Result<(Spec, Spec)> {
        let b_norm = self.norm(b);
        if b_norm == 0.0 {
            return Ok((self.zeros(), b.clone()));
        }
        let mut x = x0;
        let mut r = self.zeros();
        self.stokes_into(&x, &mut r);
        r.scale_add(-1.0, b);
        let mut z = self.zeros();
        self.precondition_into(&r, &mut z);
        let mut p = z.clone();
        let mut ap = self.zeros();
        let mut rz = self.dot(&r, &z);
        for _ in 0..max_iter {
            if self.norm(&r) <= tol * b_norm {
                return Ok((x, r));
            }
            self.stokes_into(&p, &mut ap);
            let alpha = rz / self.dot(&p, &ap);
            x.add_scaled(alpha, &p);
            r.add_scaled(-alpha, &ap);
            self.precondition_into(&r, &mut z);
            let rz_new = self.dot(&r, &z);
            p.scale_add(rz_new / rz, &z);
            rz = rz_new;
        }
        let residual = self.norm(&r) / b_norm;
        if residual <= tol {
            Ok((x, r))
        } else {
            Err(Error::NoConvergence {
                iterations: max_iter,
                residual,
            })
        }
    }
}

/// One step driven by the capillary force `−χ∇μ`.
pub fn ns_step(
    v_prev: &VectorField,
    chi: &BinaryPhase,
    mu: &ScalarField,
    nu: &ScalarField,
    cfg: &NsStepConfig,
) -> Result<NsStepResult> {
    let forcing = capillary_forcing(chi, mu)?;
    ns_step_with_forcing(v_prev, &forcing, nu, cfg)
}

/// One step with an arbitrary body force.
pub fn ns_step_with_forcing(
    v_prev: &VectorField,
    forcing: &VectorField,
    nu: &ScalarField,
    cfg: &NsStepConfig,
) -> Result<NsStepResult> {
    cfg.validate()?;
    let grid = *v_prev.grid();
    grid.check_same(forcing.grid())?;
    grid.check_same(nu.grid())?;
    if nu.min() <= 0.0 {
        return Err(Error::InvalidParameter("viscosity must be positive".into()));
    }
    let mut system = StokesSystem::new(grid, nu, cfg.h);
    let mut w = system.to_spec(v_prev);
    system.project(&mut w);
    system.w = system.to_field(&w);
    let mut source = system.to_spec(forcing);
    system.project(&mut source);
    let source = source.axpy(1.0 / cfg.h, &w);
    let source_norm = system.norm(&source);

    let mut v = w;
    let mut history = Vec::new();
    if source_norm > 0.0 {
        let mut conv = system.convection(&v);
        for _ in 0..cfg.picard_max {
            let rhs = source.axpy(-1.0, &conv);
            let (next, cg_residual) = system.solve(&rhs, v, cfg.cg_tol, cfg.cg_max)?;
            v = next;
            let conv_new = system.convection(&v);
            // stokes(v) = rhs − r, so stokes(v) + conv(v) − source = conv(v) − conv_old − r.
            let defect = conv_new.axpy(-1.0, &conv).axpy(-1.0, &cg_residual);
            let residual = system.norm(&defect) / source_norm;
            conv = conv_new;
            history.push(residual);
            if residual <= cfg.picard_tol {
                break;
            }
        }
    } else {
        v = system.zeros();
        history.push(0.0);
    }
    let v = system.to_field(&v);

    let iterations = history.len();
    let final_residual = *history.last().expect("at least one iteration");
    let monotone = history.windows(2).all(|p| p[1] <= p[0]);
    if !monotone {
        warn!("Picard residual increased: {history:?}");
    }
    let mut loose_convergence = false;
    if final_residual > cfg.picard_tol {
        if final_residual > 10.0 * cfg.picard_tol {
            return Err(Error::NoConvergence {
                iterations,
                residual: final_residual,
            });
        }
        warn!("Picard stopped at residual {final_residual:e} after {iterations} iterations");
        loose_convergence = true;
    }
    Ok(NsStepResult {
        kinetic_new: 0.5 * v.l2_norm_sq(),
        viscous_dissipation: viscous_dissipation(&v, nu),
        v_new: v,
        iterations,
        final_residual,
        residual_history: history,
        loose_convergence,
        monotone,
    })
}

/// Both sides of `½‖v‖² + h∫2ν|Dv|² ≤ ½‖ṽ‖² + h∫f·v`.
pub fn ns_energy_sides(
    v_new: &VectorField,
    v_prev: &VectorField,
    forcing: &VectorField,
    nu: &ScalarField,
    h: f64,
) -> (f64, f64) {
    let lhs = 0.5 * v_new.l2_norm_sq() + h * viscous_dissipation(v_new, nu);
    let rhs = 0.5 * v_prev.l2_norm_sq() + h * forcing.dot(v_new);
    (lhs, rhs)
}

/// The step energy inequality for the force `−χ∇μ`, with tolerance
/// `1e-8·(1 + |rhs|)`.
pub fn ns_energy_check(
    result: &NsStepResult,
    v_prev: &VectorField,
    chi: &BinaryPhase,
    mu: &ScalarField,
    nu: &ScalarField,
    h: f64,
) -> bool {
    let grad = gradient(mu);
    let c = chi.to_field();
    let force = VectorField {
        x: -&(&c * &grad.x),
        y: -&(&c * &grad.y),
    };
    let (lhs, rhs) = ns_energy_sides(&result.v_new, v_prev, &force, nu, h);
    lhs <= rhs + 1e-8 * (1.0 + rhs.abs())
}
