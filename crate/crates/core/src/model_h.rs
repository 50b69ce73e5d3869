//! Diffuse-interface Model H: Cahn–Hilliard coupled to the momentum
//! equation through the capillary force, and the Γ-limit diagnostics.
//!
//! The concentration update is the stabilized linear splitting
//!
//! ```text
//! (c⁺ − c)/dt + div(c v) = m Δμ,   μ = f'(c)/ε + (S/ε)(c⁺ − c) − εΔc⁺,
//! ```
//!
//! diagonal in frequency. The momentum step then uses the force `−c∇μ`,
//! which differs from `μ∇c` by a gradient. With these choices the discrete
//! energy `½‖v‖² + E_ε(c)` cannot increase as long as `dt · max c² ≤ 2m`,
//! see [`coupled_dt_limit`].

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, Grid, ScalarField, VectorField};
use crate::hneg::HNegWorkspace;
use crate::ns_step::{ns_step_with_forcing, NsStepConfig, NsStepResult};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Double-well potential with its first two derivatives and the splitting
/// constant `S`.
#[derive(Clone)]
pub struct DoubleWell {
    f: RealFn,
    df: RealFn,
    d2f: RealFn,
    stabilization: f64,
}

impl fmt::Debug for DoubleWell {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("DoubleWell")
            .field("f(1/2)", &(self.f)(0.5))
            .field("stabilization", &self.stabilization)
            .finish()
    }
}

impl DoubleWell {
    /// Builds a well from `f, f', f''`; `S` defaults to
    /// `2 · max f''` over `[−0.2, 1.2]`.
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> DoubleWell {
        let samples = 1400;
        let max_d2 = (0..=samples)
            .map(|i| d2f(-0.2 + 1.4 * i as f64 / samples as f64))
            .fold(0.0, f64::max);
        DoubleWell {
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
            stabilization: 2.0 * max_d2,
        }
    }

    /// `f(c) = c²(1 − c)²`.
    pub fn quartic() -> DoubleWell {
        DoubleWell::scaled_quartic(1.0)
    }

    /// `a · c²(1 − c)²`.
    pub fn scaled_quartic(a: f64) -> DoubleWell {
        DoubleWell::new(
            move |c| a * (c * (1.0 - c)).powi(2),
            move |c| a * 2.0 * c * (1.0 - c) * (1.0 - 2.0 * c),
            move |c| a * (2.0 - 12.0 * c + 12.0 * c * c),
        )
    }

    pub fn with_stabilization(mut self, s: f64) -> DoubleWell {
        self.stabilization = s;
        self
    }

    pub fn f(&self, c: f64) -> f64 {
        (self.f)(c)
    }

    pub fn df(&self, c: f64) -> f64 {
        (self.df)(c)
    }

    pub fn d2f(&self, c: f64) -> f64 {
        (self.d2f)(c)
    }

    pub fn stabilization(&self) -> f64 {
        self.stabilization
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffuseState {
    pub c: ScalarField,
    pub v: VectorField,
    pub eps: f64,
    pub m_eps: f64,
    pub t: f64,
}

impl DiffuseState {
    pub fn new(c: ScalarField, v: VectorField, eps: f64, m_eps: f64) -> Result<DiffuseState> {
        c.grid().check_same(v.grid())?;
        check_eps(eps)?;
        if !(m_eps > 0.0 && m_eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("mobility {m_eps} must be positive")));
        }
        Ok(DiffuseState { c, v, eps, m_eps, t: 0.0 })
    }

    pub fn grid(&self) -> &Grid {
        self.c.grid()
    }

    /// `½‖v‖² + E_ε(c)`.
    pub fn total_energy(&self, well: &DoubleWell) -> f64 {
        0.5 * self.v.l2_norm_sq() + ginzburg_landau_energy(&self.c, self.eps, well)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("interface width {eps} must be positive")))
    }
}

/// Viscosity law `ν(c) = ν₋ + (ν₊ − ν₋) clamp(c, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViscosityLaw {
    pub nu_minus: f64,
    pub nu_plus: f64,
}

impl ViscosityLaw {
    pub fn field(&self, c: &ScalarField) -> ScalarField {
        c.map(|v| self.nu_minus + (self.nu_plus - self.nu_minus) * v.clamp(0.0, 1.0))
    }
}

/// Largest `dt` for which the coupled step is energy stable.
pub fn coupled_dt_limit(state: &DiffuseState) -> f64 {
    let cmax = state.c.max_abs().max(1e-300);
    2.0 * state.m_eps / (cmax * cmax)
}

/// One stabilized Cahn–Hilliard step with explicit advection by `state.v`.
/// Returns `(c_new, μ)`.
pub fn ch_step(state: &DiffuseState, dt: f64, well: &DoubleWell) -> Result<(ScalarField, ScalarField)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    let grid = *state.grid();
    let n = grid.n();
    let modes = grid.modes();
    let (eps, m) = (state.eps, state.m_eps);
    let s = well.stabilization();

    let explicit = state.c.map(|c| well.df(c) / eps - s * c / eps);
    let flux = state.v.times(&state.c);
    let adv = divergence(&flux).spectrum();
    let mut c_hat = state.c.spectrum();
    let e_hat = explicit.spectrum();
    let mut mu_hat = vec![Complex64::default(); c_hat.len()];
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            let k2 = modes.k2(ix, iy);
            let implicit = s / eps + eps * k2;
            let new = (c_hat[i] - adv[i] * dt - e_hat[i] * (dt * m * k2)) / (1.0 + dt * m * k2 * implicit);
            mu_hat[i] = e_hat[i] + new * implicit;
            c_hat[i] = new;
        }
    }
    // The zero mode is carried exactly; this only removes FFT round-off.
    let mut c_new = ScalarField::from_spectrum(grid, c_hat);
    let drift = c_new.mean() - state.c.mean();
    if drift != 0.0 {
        c_new = c_new.map(|v| v - drift);
    }
    Ok((c_new, ScalarField::from_spectrum(grid, mu_hat)))
}

/// Everything produced by one coupled step.
#[derive(Clone, Debug)]
pub struct NschReport {
    pub state: DiffuseState,
    pub mu: ScalarField,
    pub momentum: NsStepResult,
}

/// One coupled step: concentration first with the current velocity, then
/// momentum with the force `−c∇μ`.
pub fn nsch_step(
    state: &DiffuseState,
    dt: f64,
    well: &DoubleWell,
    viscosity: &ViscosityLaw,
    cfg: &NsStepConfig,
) -> Result<DiffuseState> {
    Ok(nsch_step_detailed(state, dt, well, viscosity, cfg)?.state)
}

pub fn nsch_step_detailed(
    state: &DiffuseState,
    dt: f64,
    well: &DoubleWell,
    viscosity: &ViscosityLaw,
    cfg: &NsStepConfig,
) -> Result<NschReport> {
    let (c_new, mu) = ch_step(state, dt, well)?;
    let grad = gradient(&mu);
    let force = VectorField {
        x: -&(&state.c * &grad.x),
        y: -&(&state.c * &grad.y),
    };
    let nu = viscosity.field(&c_new);
    let ns_cfg = NsStepConfig { h: dt, ..cfg.clone() };
    let momentum = ns_step_with_forcing(&state.v, &force, &nu, &ns_cfg)?;
    let next = DiffuseState {
        c: c_new,
        v: momentum.v_new.clone(),
        eps: state.eps,
        m_eps: state.m_eps,
        t: state.t + dt,
    };
    Ok(NschReport {
        state: next,
        mu,
        momentum,
    })
}

/// `E_ε(c) = (ε/2)∫|∇c|² + ε⁻¹∫f(c)`, with the gradient part taken from
/// the same Laplacian symbol the scheme uses.
pub fn ginzburg_landau_energy(c: &ScalarField, eps: f64, well: &DoubleWell) -> f64 {
    let grad_part = HNegWorkspace::new(*c.grid()).dirichlet_energy(c);
    let bulk = c.map(|v| well.f(v)).integral();
    0.5 * eps * grad_part + bulk / eps
}

/// Energy density `(ε/2)|∇c|² + ε⁻¹f(c)`.
pub fn energy_density(c: &ScalarField, eps: f64, well: &DoubleWell) -> ScalarField {
    let g = gradient(c).magnitude();
    g.zip_map(c, |gv, cv| 0.5 * eps * gv * gv + well.f(cv) / eps)
}

/// `ξ = (ε/2)|∇c|² − ε⁻¹f(c)`.
pub fn discrepancy(c: &ScalarField, eps: f64, well: &DoubleWell) -> ScalarField {
    let g = gradient(c).magnitude();
    g.zip_map(c, |gv, cv| 0.5 * eps * gv * gv - well.f(cv) / eps)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `κ = ∫₀¹ √(2f(s)) ds`.
pub fn modica_mortola_kappa(well: &DoubleWell) -> f64 {
    let integrand = |s: f64| (2.0 * well.f(s).max(0.0)).sqrt();
    adaptive_simpson(&integrand, 0.0, 1.0, 1e-12)
}

/// Monotone piecewise-cubic table of `W(c) = ∫₀^c √(2 f̃(s)) ds` with
/// `f̃ = min(f, 1 + s²)`.
#[derive(Clone, Debug)]
pub struct WTable {
    /// Index of the first node; node `i` sits at `(lo + i) · step`.
    lo: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl WTable {
    /// Table on `[lo, hi]` with `per_unit` cells per unit length; `0` and
    /// `1` are always nodes.
    pub fn new(well: &DoubleWell, lo: f64, hi: f64, per_unit: usize) -> WTable {
        assert!(lo <= 0.0 && hi >= 1.0 && per_unit >= 1);
        let integrand = |s: f64| (2.0 * well.f(s).max(0.0).min(1.0 + s * s)).sqrt();
        let k = per_unit as f64;
        let first = (lo * k).floor() as i64;
        let last = (hi * k).ceil() as i64;
        let xs: Vec<f64> = (first..=last).map(|i| i as f64 / k).collect();
        let nodes = xs.len();
        let zero = (-first) as usize;
        let mut values = vec![0.0; nodes];
        for i in zero + 1..nodes {
            values[i] = values[i - 1] + adaptive_simpson(&integrand, xs[i - 1], xs[i], 1e-14);
        }
        for i in (0..zero).rev() {
            values[i] = values[i + 1] - adaptive_simpson(&integrand, xs[i], xs[i + 1], 1e-14);
        }
        let step = 1.0 / k;
        let lo = first as f64;
        let mut slopes: Vec<f64> = xs.iter().map(|&s| integrand(s)).collect();
        // Fritsch–Carlson limiter: keeps each cubic piece monotone.
        for i in 0..nodes - 1 {
            let secant = (values[i + 1] - values[i]) / step;
            if secant <= 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let (a, b) = (slopes[i] / secant, slopes[i + 1] / secant);
            let r = a.hypot(b);
            if r > 3.0 {
                slopes[i] = 3.0 * a / r * secant;
                slopes[i + 1] = 3.0 * b / r * secant;
            }
        }
        WTable { lo, step, values, slopes }
    }

    pub fn eval(&self, c: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = (c / self.step - self.lo).clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last - 1);
        let t = pos - i as f64;
        let (h00, h10) = ((1.0 + 2.0 * t) * (1.0 - t).powi(2), t * (1.0 - t).powi(2));
        let (h01, h11) = (t * t * (3.0 - 2.0 * t), t * t * (t - 1.0));
        let base = h00 * self.values[i]
            + h10 * self.step * self.slopes[i]
            + h01 * self.values[i + 1]
            + h11 * self.step * self.slopes[i + 1];
        // Linear continuation outside the table.
        let overshoot = c - (self.lo + pos) * self.step;
        base + overshoot * if overshoot > 0.0 { self.slopes[last] } else { self.slopes[0] }
    }
}

/// Pointwise `W(c)`, with a table covering `[min(0, min c), max(1, max c)]`.
pub fn w_transform(c: &ScalarField, well: &DoubleWell) -> ScalarField {
    let lo = c.min().min(0.0) - 1e-3;
    let hi = c.max().max(1.0) + 1e-3;
    let table = WTable::new(well, lo, hi, 1024);
    c.map(|v| table.eval(v))
}

/// Optimal profile `1/(1 + exp(−√2 d/ε))` of a signed distance `d`
/// (positive inside the phase).
pub fn optimal_profile(d: f64, eps: f64) -> f64 {
    1.0 / (1.0 + (-(2f64).sqrt() * d / eps).exp())
}

/// `∫|∇w|` by the cell rule.
pub fn w_gradient_l1(w: &ScalarField) -> f64 {
    gradient(w).magnitude().integral()
}

/// Shortcut used by the sweep: the diffuse phase thresholded at `1/2`.
pub fn level_set_half(c: &ScalarField) -> crate::geometry::BinaryPhase {
    crate::geometry::BinaryPhase::threshold(c, 0.5)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 1.0).unwrap()
    }

    fn state(c: ScalarField, eps: f64) -> DiffuseState {
        let g = *c.grid();
        DiffuseState::new(c, VectorField::zeros(g), eps, 1.0).unwrap()
    }

    fn stripe_profile(g: Grid, eps: f64) -> ScalarField {
        ScalarField::from_fn(g, |_, y| optimal_profile((y - 0.25).min(0.75 - y), eps))
    }

    #[test]
    fn default_stabilization() {
        let w = DoubleWell::quartic();
        assert!((w.stabilization() - 9.76).abs() < 1e-9);
        assert_eq!(w.f(0.0), 0.0);
        assert_eq!(w.f(1.0), 0.0);
        assert_eq!(w.df(0.5), 0.0);
    }

    #[test]
    fn critical_constants_are_fixed_points() {
        let g = grid(16);
        let w = DoubleWell::quartic();
        for c0 in [0.5, 0.0] {
            let (c, mu) = ch_step(&state(ScalarField::constant(g, c0), 0.1), 1e-3, &w).unwrap();
            assert!((&c - &ScalarField::constant(g, c0)).max_abs() < 1e-15);
            assert!(mu.max_abs() < 1e-14);
        }
    }

    #[test]
    fn linear_amplification_matches_symbol() {
        let g = grid(32);
        let w = DoubleWell::quartic();
        let (a, eps, dt) = (1e-4, 0.1, 1e-3);
        let c0 = ScalarField::from_fn(g, |x, _| 0.5 + a * (2.0 * PI * x).cos());
        let (c1, _) = ch_step(&state(c0, eps), dt, &w).unwrap();
        let amp = c1.dot(&ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos())) * 2.0;
        let s = 4.0 * PI * PI;
        let st = w.stabilization();
        // f''(1/2) = −1.
        let expect = a * (1.0 + dt * s * (1.0 + st) / eps) / (1.0 + dt * s * (st / eps + eps * s));
        assert!((amp - expect).abs() < 1e-6 * expect.abs(), "{amp} vs {expect}");
        assert!(expect > a, "mode of wavelength 1 is unstable at ε = 0.1");
    }

    #[test]
    fn energy_of_uniform_mixture() {
        let g = grid(16);
        let w = DoubleWell::quartic();
        assert_eq!(ginzburg_landau_energy(&ScalarField::zeros(g), 0.1, &w), 0.0);
        let e = ginzburg_landau_energy(&ScalarField::constant(g, 0.5), 0.1, &w);
        assert!((e - 0.625).abs() < 1e-12);
    }

    #[test]
    fn optimal_profile_energy_is_kappa_per_length() {
        let g = grid(256);
        let w = DoubleWell::quartic();
        let c = stripe_profile(g, 0.04);
        let e = ginzburg_landau_energy(&c, 0.04, &w);
        let target = 2.0 * 2f64.sqrt() / 6.0;
        assert!((target - 0.4714).abs() < 1e-4);
        assert!((e / target - 1.0).abs() < 0.02, "{e}");
        let xi = discrepancy(&c, 0.04, &w);
        let dens = energy_density(&c, 0.04, &w);
        assert!(xi.max_abs() < 0.05 * dens.max_abs());
    }

    #[test]
    fn discrepancy_of_constants() {
        let g = grid(16);
        let w = DoubleWell::quartic();
        assert_eq!(discrepancy(&ScalarField::constant(g, 1.0), 0.1, &w).max_abs(), 0.0);
        let half = discrepancy(&ScalarField::constant(g, 0.5), 0.1, &w);
        assert!(half.values().iter().all(|&v| (v + 0.625).abs() < 1e-12));
    }

    #[test]
    fn kappa_of_quartic_family() {
        let k = modica_mortola_kappa(&DoubleWell::quartic());
        assert!((k - 2f64.sqrt() / 6.0).abs() < 1e-10);
        let k4 = modica_mortola_kappa(&DoubleWell::scaled_quartic(4.0));
        assert!((k4 - 2.0 * k).abs() < 1e-10);
        assert_eq!(modica_mortola_kappa(&DoubleWell::scaled_quartic(0.0)), 0.0);
    }

    #[test]
    fn w_transform_endpoints_and_monotonicity() {
        let g = grid(32);
        let w = DoubleWell::quartic();
        assert!(w_transform(&ScalarField::zeros(g), &w).max_abs() < 1e-14);
        let one = w_transform(&ScalarField::constant(g, 1.0), &w);
        assert!((one.values()[0] - 2f64.sqrt() / 6.0).abs() < 1e-10);
        let ramp = ScalarField::from_fn(g, |x, y| -0.3 + 1.6 * (x + y / 32.0));
        let mut pairs: Vec<(f64, f64)> = ramp
            .values()
            .iter()
            .copied()
            .zip(w_transform(&ramp, &w).values().iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|p| p[1].1 >= p[0].1));
    }

    #[test]
    fn w_table_matches_closed_form_on_unit_interval() {
        // W(c) = √2 (c²/2 − c³/3) on [0, 1].
        let t = WTable::new(&DoubleWell::quartic(), -0.1, 1.1, 512);
        for i in 0..=100 {
            let c = i as f64 / 100.0;
            let exact = 2f64.sqrt() * (c * c / 2.0 - c * c * c / 3.0);
            assert!((t.eval(c) - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn w_gradient_is_bounded_by_energy() {
        let g = grid(128);
        let w = DoubleWell::quartic();
        let eps = 0.05;
        let c = ScalarField::from_fn(g, |x, y| optimal_profile(0.3 - ((x - 0.5).hypot(y - 0.5)), eps));
        let wt = w_transform(&c, &w);
        assert!(w_gradient_l1(&wt) <= ginzburg_landau_energy(&c, eps, &w) + 1e-8);
    }

    #[test]
    fn ch_conserves_mass_and_energy() {
        let g = grid(64);
        let w = DoubleWell::quartic();
        let eps = 0.05;
        let c0 = ScalarField::from_fn(g, |x, y| optimal_profile(0.2 - ((x - 0.5).hypot(y - 0.45)), eps) + 0.05 * (6.0 * PI * x).sin());
        let mut st = state(c0, eps);
        let m0 = st.c.mean();
        let mut e = ginzburg_landau_energy(&st.c, eps, &w);
        for _ in 0..50 {
            let (c, _) = ch_step(&st, 1e-4, &w).unwrap();
            st.c = c;
            let e_new = ginzburg_landau_energy(&st.c, eps, &w);
            assert!(e_new <= e + 1e-10 * (1.0 + e));
            e = e_new;
            assert!((st.c.mean() - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_energy_is_non_increasing() {
        let g = grid(64);
        let w = DoubleWell::quartic();
        let eps = 0.05;
        let c0 = ScalarField::from_fn(g, |x, y| optimal_profile(0.2 - ((x - 0.5).hypot(y - 0.5) * (1.0 + 0.2 * (3.0 * (y - 0.5).atan2(x - 0.5)).cos())), eps));
        let v0 = VectorField::from_fn(g, |_, y| (0.3 * (2.0 * PI * y).sin(), 0.0));
        let mut st = DiffuseState::new(c0, v0, eps, 1.0).unwrap();
        let law = ViscosityLaw { nu_minus: 0.5, nu_plus: 1.0 };
        let cfg = NsStepConfig::new(1e-3);
        let dt = 1e-3;
        assert!(dt <= coupled_dt_limit(&st));
        let mut e = st.total_energy(&w);
        for k in 0..30 {
            st = nsch_step(&st, dt, &w, &law, &cfg).unwrap();
            let e_new = st.total_energy(&w);
            assert!(e_new <= e + 1e-8 * (1.0 + e), "step {k}: {e_new} > {e}");
            e = e_new;
        }
    }

    #[test]
    fn constant_phase_leaves_state_or_decays_shear() {
        let g = grid(32);
        let w = DoubleWell::quartic();
        let law = ViscosityLaw { nu_minus: 0.4, nu_plus: 0.4 };
        let cfg = NsStepConfig::new(0.01);
        let rest = DiffuseState::new(ScalarField::constant(g, 1.0), VectorField::zeros(g), 0.05, 1.0).unwrap();
        let next = nsch_step(&rest, 0.01, &w, &law, &cfg).unwrap();
        assert!((&next.c - &rest.c).max_abs() < 1e-14 && next.v.max_abs() == 0.0);

        let shear = VectorField::from_fn(g, |_, y| ((2.0 * PI * y).sin(), 0.0));
        let moving = DiffuseState { v: shear.clone(), ..rest };
        let next = nsch_step(&moving, 0.01, &w, &law, &cfg).unwrap();
        let factor = 1.0 / (1.0 + 0.01 * 0.4 * 4.0 * PI * PI);
        assert!((&next.v - &shear.scale(factor)).max_abs() < 1e-9);
    }
}
