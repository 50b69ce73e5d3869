//! One minimizing-movement step for the phase indicator.
//!
//! Given the previous phase `χ̃` and velocity `ṽ`, the new phase minimizes
//!
//! ```text
//! F^h(σ) = κ Per(σ) + 1/(2 m h) ‖σ − χ̃ + h ṽ·∇χ̃‖²_{H⁻¹}
//! ```
//!
//! over binary fields with the mass of `χ̃`, where `Per` is the lattice
//! perimeter of [`lattice_perimeter`]. The mollified estimator cannot serve
//! here: it is nearly blind to mixing below the mollification scale, so its
//! minimizers over binary fields are speckle.
//!
//! The search is simulated annealing over mass-preserving swaps of
//! interface cells. A proposal is priced in O(1): the `H⁻¹` part from the
//! maintained potential `u = (−Δ)⁻¹(σ − χ̃ + hT)` and the lattice Green's
//! function, the perimeter part from the 32 edges touching the two cells.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{
    lagrange_multiplier, lattice_edge_counts, lattice_perimeter, lattice_weights, BinaryPhase,
    LATTICE_DIRECTIONS,
};
use crate::grid::{dealias_vector, divergence, Grid, ScalarField, VectorField};
use crate::hneg::HNegWorkspace;
use crate::rng::SplitMix64;

/// Annealing schedule. Temperatures are in units of `κ dx`, roughly the
/// perimeter cost of a one-cell bump.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealConfig {
    pub sweeps: usize,
    pub temp_init: f64,
    pub temp_decay: f64,
    pub seed: u64,
    /// Stop after this many consecutive sweeps without a new incumbent.
    pub no_improve_window: usize,
}

impl Default for AnnealConfig {
    fn default() -> AnnealConfig {
        AnnealConfig {
            sweeps: 24,
            temp_init: 0.2,
            temp_decay: 0.8,
            seed: 0x5EED_0F_F1E1D,
            no_improve_window: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsStepConfig {
    pub h: f64,
    pub delta: f64,
    pub kappa: f64,
    pub mobility: f64,
    pub anneal: AnnealConfig,
}

impl MsStepConfig {
    /// Unit surface tension and mobility, `δ = 2 dx`, default schedule.
    pub fn new(grid: &Grid, h: f64) -> MsStepConfig {
        MsStepConfig {
            h,
            delta: 2.0 * grid.dx(),
            kappa: 1.0,
            mobility: 1.0,
            anneal: AnnealConfig::default(),
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("time step h = {} must be positive", self.h));
        }
        if !(self.delta >= grid.dx() * (1.0 - 1e-12) && self.delta.is_finite()) {
            return bad(format!("delta = {} must be at least dx = {}", self.delta, grid.dx()));
        }
        if !(self.kappa > 0.0 && self.mobility > 0.0) {
            return bad("kappa and mobility must be positive".into());
        }
        let a = &self.anneal;
        if a.sweeps == 0 {
            return bad("annealing needs at least one sweep".into());
        }
        if !(a.temp_decay > 0.0 && a.temp_decay < 1.0) {
            return bad(format!("temp_decay = {} must lie in (0, 1)", a.temp_decay));
        }
        if !(a.temp_init >= 0.0 && a.temp_init.is_finite()) {
            return bad(format!("temp_init = {} must be non-negative", a.temp_init));
        }
        Ok(())
    }
}

/// Summary of one annealing run.
#[derive(Clone, Debug)]
pub struct AnnealReport {
    pub chi: BinaryPhase,
    pub fh_initial: f64,
    pub fh_final: f64,
    pub sweeps: usize,
    pub proposals: u64,
    pub accepted: u64,
    /// Largest relative gap between the incrementally tracked `F^h` and a
    /// fresh evaluation, over all sweep boundaries.
    pub max_drift: f64,
}

#[derive(Clone, Debug)]
pub struct MsStepResult {
    pub chi_new: BinaryPhase,
    pub mu0: ScalarField,
    pub lambda: f64,
    pub fh_initial: f64,
    pub fh_final: f64,
    pub perimeter_prev: f64,
    pub perimeter_new: f64,
    /// `‖∇μ₀‖²`.
    pub grad_mu_sq: f64,
    /// `‖∇(−Δ)⁻¹(ṽ·∇χ̃)‖`.
    pub transport_norm: f64,
    /// `‖ṽ‖`.
    pub velocity_norm: f64,
    pub anneal: AnnealReport,
}

impl MsStepResult {
    /// `μ = μ₀ + λ`.
    pub fn mu(&self) -> ScalarField {
        self.mu0.map(|v| v + self.lambda)
    }

    /// Asserts the transport bound and the step energy estimate
    /// `κ Per(χ) + (hm/2)‖∇μ₀‖² ≤ κ Per(χ̃) + h/(2m) ‖ṽ‖²`.
    pub fn check_energy(&self, cfg: &MsStepConfig, step: usize) -> Result<()> {
        let tol = |rhs: f64| 1e-8 * (1.0 + rhs.abs());
        if self.fh_final > self.fh_initial + tol(self.fh_initial) {
            return Err(Error::LedgerViolation {
                step,
                what: "F^h decrease",
                lhs: self.fh_final,
                rhs: self.fh_initial,
            });
        }
        if self.transport_norm > self.velocity_norm + tol(self.velocity_norm) {
            return Err(Error::LedgerViolation {
                step,
                what: "transport bound",
                lhs: self.transport_norm,
                rhs: self.velocity_norm,
            });
        }
        let (lhs, rhs) = self.energy_sides(cfg);
        if lhs > rhs + tol(rhs) {
            return Err(Error::LedgerViolation {
                step,
                what: "phase step energy",
                lhs,
                rhs,
            });
        }
        Ok(())
    }

    /// Both sides of the step energy estimate.
    pub fn energy_sides(&self, cfg: &MsStepConfig) -> (f64, f64) {
        let (h, m, k) = (cfg.h, cfg.mobility, cfg.kappa);
        let lhs = k * self.perimeter_new + 0.5 * h * m * self.grad_mu_sq;
        let rhs = k * self.perimeter_prev + 0.5 * h / m * self.velocity_norm.powi(2);
        (lhs, rhs)
    }
}

/// `ṽ·∇χ = div(χ ṽ)` for divergence-free `ṽ`, with the product dealiased.
pub fn transport_term(chi: &BinaryPhase, v: &VectorField) -> Result<ScalarField> {
    chi.grid().check_same(v.grid())?;
    let flux = dealias_vector(&v.times(&chi.to_field()));
    Ok(divergence(&flux))
}

/// `χ̃ − h ṽ·∇χ̃`, the point the `H⁻¹` penalty pulls towards.
fn anchor(chi_prev: &BinaryPhase, v_prev: &VectorField, h: f64) -> Result<ScalarField> {
    let t = transport_term(chi_prev, v_prev)?;
    Ok(chi_prev.to_field().zip_map(&t, |c, tv| c - h * tv))
}

fn check_inputs(sigma: &BinaryPhase, chi_prev: &BinaryPhase, v_prev: &VectorField) -> Result<()> {
    sigma.grid().check_same(chi_prev.grid())?;
    sigma.grid().check_same(v_prev.grid())?;
    sigma.check_same_mass(chi_prev)
}

/// `F^h(σ)` evaluated from scratch.
pub fn fh_energy(
    sigma: &BinaryPhase,
    chi_prev: &BinaryPhase,
    v_prev: &VectorField,
    cfg: &MsStepConfig,
) -> Result<f64> {
    check_inputs(sigma, chi_prev, v_prev)?;
    let ws = HNegWorkspace::new(*sigma.grid());
    let base = anchor(chi_prev, v_prev, cfg.h)?;
    let arg = &sigma.to_field() - &base;
    let hneg = ws.hneg_norm_sq(&arg)?;
    Ok(cfg.kappa * lattice_perimeter(sigma) + hneg / (2.0 * cfg.mobility * cfg.h))
}

/// `μ₀ = −(1/m)(−Δ)⁻¹((χ − χ̃)/h + ṽ·∇χ̃)`.
pub fn chemical_potential(
    chi_new: &BinaryPhase,
    chi_prev: &BinaryPhase,
    v_prev: &VectorField,
    h: f64,
    mobility: f64,
) -> Result<ScalarField> {
    check_inputs(chi_new, chi_prev, v_prev)?;
    if !(h > 0.0 && mobility > 0.0) {
        return Err(Error::InvalidParameter("h and mobility must be positive".into()));
    }
    let ws = HNegWorkspace::new(*chi_new.grid());
    let rate = rate_of_change(chi_new, chi_prev, v_prev, h)?;
    let u = ws.inv_neg_laplacian(&rate)?;
    Ok(&u * (-1.0 / mobility))
}

/// `(χ − χ̃)/h + ṽ·∇χ̃`.
fn rate_of_change(
    chi_new: &BinaryPhase,
    chi_prev: &BinaryPhase,
    v_prev: &VectorField,
    h: f64,
) -> Result<ScalarField> {
    let t = transport_term(chi_prev, v_prev)?;
    let diff = &chi_new.to_field() - &chi_prev.to_field();
    Ok(diff.zip_map(&t, |d, tv| d / h + tv))
}

/// Returns the annealing incumbent; never worse than `chi_prev`.
pub fn minimize_fh(
    chi_prev: &BinaryPhase,
    v_prev: &VectorField,
    cfg: &MsStepConfig,
) -> Result<BinaryPhase> {
    Ok(anneal(chi_prev, v_prev, cfg, None)?.chi)
}

/// Annealing with full statistics. If `trace` is given, one CSV row
/// `iteration,fh,accepted` is written per proposal.
pub fn anneal(
    chi_prev: &BinaryPhase,
    v_prev: &VectorField,
    cfg: &MsStepConfig,
    mut trace: Option<&mut dyn Write>,
) -> Result<AnnealReport> {
    let grid = *chi_prev.grid();
    grid.check_same(v_prev.grid())?;
    cfg.validate(&grid)?;
    let base = anchor(chi_prev, v_prev, cfg.h)?;
    let mut search = Search::new(chi_prev.clone(), base, cfg);
    let fh_initial = search.energy();
    let trivial = AnnealReport {
        chi: chi_prev.clone(),
        fh_initial,
        fh_final: fh_initial,
        sweeps: 0,
        proposals: 0,
        accepted: 0,
        max_drift: 0.0,
    };
    if chi_prev.is_degenerate() || search.ones.is_empty() || search.zeros.is_empty() {
        return Ok(trivial);
    }
    if let Some(w) = trace.as_deref_mut() {
        writeln!(w, "iteration,fh,accepted")?;
    }

    let mut rng = SplitMix64::new(cfg.anneal.seed);
    let mut best = chi_prev.clone();
    let mut best_f = fh_initial;
    let mut temp = cfg.anneal.temp_init * cfg.kappa * grid.dx();
    let mut stale = 0;
    let mut report = trivial;
    for _ in 0..cfg.anneal.sweeps {
        let mut improved = false;
        let moves = search.ones.len() + search.zeros.len();
        for _ in 0..moves {
            let a = search.ones.items[rng.below(search.ones.len())];
            let b = search.zeros.items[rng.below(search.zeros.len())];
            let (dc, dper, dk) = search.delta(a, b);
            let df = cfg.kappa * dper + dk * search.hneg_weight;
            let accept = df <= 0.0 || (temp > 0.0 && rng.uniform() < (-df / temp).exp());
            report.proposals += 1;
            if accept {
                search.apply(a, b, &dc, dk);
                report.accepted += 1;
                let f = search.energy();
                if f < best_f {
                    best_f = f;
                    best.clone_from(&search.sigma);
                    improved = true;
                }
            }
            if let Some(w) = trace.as_deref_mut() {
                writeln!(w, "{},{:.16e},{}", report.proposals, search.energy(), accept as u8)?;
            }
        }
        report.sweeps += 1;
        let tracked = search.energy();
        let fresh = search.resync();
        report.max_drift = report.max_drift.max((tracked - fresh).abs() / fresh.abs().max(1e-300));
        temp *= cfg.anneal.temp_decay;
        stale = if improved { 0 } else { stale + 1 };
        if stale >= cfg.anneal.no_improve_window || search.ones.is_empty() || search.zeros.is_empty() {
            break;
        }
    }

    // Rounding in the incremental bookkeeping must never let the returned
    // phase be worse than the start under a fresh evaluation.
    let fh_best = Search::new(best.clone(), search.base, cfg).energy();
    if fh_best <= fh_initial {
        report.chi = best;
        report.fh_final = fh_best;
    }
    Ok(report)
}

/// Set of cell indices with O(1) insert, remove and uniform sampling.
struct IndexSet {
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl IndexSet {
    const ABSENT: usize = usize::MAX;

    fn new(cells: usize) -> IndexSet {
        IndexSet {
            items: Vec::new(),
            pos: vec![Self::ABSENT; cells],
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn insert(&mut self, i: usize) {
        if self.pos[i] == Self::ABSENT {
            self.pos[i] = self.items.len();
            self.items.push(i);
        }
    }

    fn remove(&mut self, i: usize) {
        let p = self.pos[i];
        if p == Self::ABSENT {
            return;
        }
        let last = self.items.pop().expect("non-empty");
        if last != i {
            self.items[p] = last;
            self.pos[last] = p;
        }
        self.pos[i] = Self::ABSENT;
    }

    fn clear(&mut self) {
        for &i in &self.items {
            self.pos[i] = Self::ABSENT;
        }
        self.items.clear();
    }
}

/// Annealing state with incrementally maintained `F^h`.
struct Search {
    n: usize,
    cell_area: f64,
    kappa: f64,
    /// Crofton weights times `dx`.
    weights: [f64; 8],
    hneg_weight: f64,
    ws: HNegWorkspace,
    sigma: BinaryPhase,
    base: ScalarField,
    /// Lattice Green's function, `(−Δ)⁻¹(e₀ − 1/n²)`.
    green: Vec<f64>,
    /// `u = (−Δ)⁻¹(σ − base)`.
    u: Vec<f64>,
    counts: [i64; 8],
    hneg: f64,
    ones: IndexSet,
    zeros: IndexSet,
}

impl Search {
    fn new(sigma: BinaryPhase, base: ScalarField, cfg: &MsStepConfig) -> Search {
        let grid = *sigma.grid();
        let ws = HNegWorkspace::new(grid);
        let green = ws.green_column().into_values();
        let cells = grid.cells();
        let mut s = Search {
            n: grid.n(),
            cell_area: grid.cell_area(),
            kappa: cfg.kappa,
            weights: lattice_weights().map(|w| w * grid.dx()),
            hneg_weight: 1.0 / (2.0 * cfg.mobility * cfg.h),
            ws,
            sigma,
            base,
            green,
            u: Vec::new(),
            counts: [0; 8],
            hneg: 0.0,
            ones: IndexSet::new(cells),
            zeros: IndexSet::new(cells),
        };
        s.resync();
        s
    }

    fn perimeter_of(&self, counts: &[i64; 8]) -> f64 {
        counts.iter().zip(&self.weights).map(|(&c, w)| c as f64 * w).sum()
    }

    fn energy(&self) -> f64 {
        self.kappa * self.perimeter_of(&self.counts) + self.hneg_weight * self.hneg
    }

    /// Rebuilds all derived state from `sigma`; returns the fresh `F^h`.
    fn resync(&mut self) -> f64 {
        let arg = &self.sigma.to_field() - &self.base;
        self.hneg = self.ws.hneg_norm_sq_unchecked(&arg);
        self.u = self.ws.inv_neg_laplacian_unchecked(&arg).into_values();
        self.counts = lattice_edge_counts(&self.sigma);
        self.ones.clear();
        self.zeros.clear();
        for i in 0..self.sigma.cells().len() {
            self.classify(i);
        }
        self.energy()
    }

    #[inline]
    fn neighbour(&self, c: usize, ex: isize, ey: isize) -> usize {
        let mask = self.n - 1;
        let x = (c & mask).wrapping_add_signed(ex) & mask;
        let y = (c / self.n).wrapping_add_signed(ey) & mask;
        y * self.n + x
    }

    fn classify(&mut self, i: usize) {
        self.ones.remove(i);
        self.zeros.remove(i);
        let c = self.sigma.cells()[i];
        let boundary = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|&(ex, ey)| self.sigma.cells()[self.neighbour(i, ex, ey)] != c);
        if boundary {
            if c == 1 {
                self.ones.insert(i);
            } else {
                self.zeros.insert(i);
            }
        }
    }

    /// Change of the cut-edge counts when `a` turns to 0 and `b` to 1.
    fn count_change(&self, a: usize, b: usize) -> [i64; 8] {
        let old = |c: usize| self.sigma.cells()[c];
        let new = |c: usize| {
            if c == a {
                0
            } else if c == b {
                1
            } else {
                old(c)
            }
        };
        let cut = |f: &dyn Fn(usize) -> u8, p: usize, q: usize| (f(p) != f(q)) as i64;
        let mut d = [0i64; 8];
        for (k, &(ex, ey)) in LATTICE_DIRECTIONS.iter().enumerate() {
            for c in [a, b] {
                for q in [self.neighbour(c, ex, ey), self.neighbour(c, -ex, -ey)] {
                    // The edge a–b is seen from both ends; count it once.
                    if c == b && q == a {
                        continue;
                    }
                    d[k] += cut(&new, c, q) - cut(&old, c, q);
                }
            }
        }
        d
    }

    /// `(Δcounts, ΔPer, Δ‖·‖²_{H⁻¹})` for moving one cell of phase from `a` to `b`.
    fn delta(&self, a: usize, b: usize) -> ([i64; 8], f64, f64) {
        let dc = self.count_change(a, b);
        let dper = self.perimeter_of(&dc);
        let n = self.n;
        let mask = n - 1;
        let off = ((b / n).wrapping_sub(a / n) & mask) * n + ((b & mask).wrapping_sub(a & mask) & mask);
        let dk = 2.0 * (self.u[b] - self.u[a]) + 2.0 * (self.green[0] - self.green[off]);
        (dc, dper, dk * self.cell_area)
    }

    fn apply(&mut self, a: usize, b: usize, dc: &[i64; 8], dk: f64) {
        self.sigma.swap_pair(a, b);
        let n = self.n;
        let mask = n - 1;
        let (ax, ay, bx, by) = (a & mask, a / n, b & mask, b / n);
        for py in 0..n {
            let row_a = &self.green[((py + n - ay) & mask) * n..][..n];
            let row_b = &self.green[((py + n - by) & mask) * n..][..n];
            let u = &mut self.u[py * n..(py + 1) * n];
            for (px, up) in u.iter_mut().enumerate() {
                *up += row_b[(px + n - bx) & mask] - row_a[(px + n - ax) & mask];
            }
        }
        for (c, d) in self.counts.iter_mut().zip(dc) {
            *c += d;
        }
        self.hneg += dk;
        for c in [a, b] {
            for (ex, ey) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                self.classify(self.neighbour(c, ex, ey));
            }
        }
    }
}

/// Minimizes `F^h`, then recovers `μ₀` and the volume multiplier `λ`.
pub fn ms_step(chi_prev: &BinaryPhase, v_prev: &VectorField, cfg: &MsStepConfig) -> Result<MsStepResult> {
    let grid = *chi_prev.grid();
    let report = anneal(chi_prev, v_prev, cfg, None)?;
    let chi_new = report.chi.clone();
    let mu0 = chemical_potential(&chi_new, chi_prev, v_prev, cfg.h, cfg.mobility)?;
    let lambda = lagrange_multiplier(&chi_new, &mu0, cfg.delta, cfg.kappa)?;
    let ws = HNegWorkspace::new(grid);
    let transport = transport_term(chi_prev, v_prev)?;
    Ok(MsStepResult {
        lambda,
        fh_initial: report.fh_initial,
        fh_final: report.fh_final,
        perimeter_prev: lattice_perimeter(chi_prev),
        perimeter_new: lattice_perimeter(&chi_new),
        grad_mu_sq: ws.dirichlet_energy(&mu0),
        transport_norm: ws.hneg_norm_sq_unchecked(&transport).sqrt(),
        velocity_norm: v_prev.l2_norm(),
        chi_new,
        mu0,
        anneal: report,
    })
}
