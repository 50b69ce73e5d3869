use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One ledger row. Row 0 describes the initial state; its step columns are
/// zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    /// `½‖v‖²`.
    pub kinetic: f64,
    /// Lattice perimeter of the phase.
    pub perimeter: f64,
    /// `‖∇μ₀‖²`.
    pub grad_mu_sq: f64,
    /// `∫2ν|Dv|²`.
    pub viscous: f64,
    pub fh_initial: f64,
    pub fh_final: f64,
    pub lambda: f64,
    pub gibbs_thomson_residual: f64,
}

/// Parameters the ledger inequalities depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerParams {
    pub h: f64,
    pub kappa: f64,
    pub mobility: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

/// Outcome of [`energy_ledger_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerVerdict {
    /// First row whose inequality fails.
    pub first_failure: Option<usize>,
    /// Largest `lhs − rhs` over all rows (negative when everything holds
    /// with room to spare).
    pub worst_margin: f64,
}

impl LedgerVerdict {
    pub fn ok(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Absolute slack on every ledger comparison.
pub fn ledger_tolerance(rhs: f64) -> f64 {
    1e-8 * (1.0 + rhs.abs())
}

impl EnergyLedger {
    pub fn push(&mut self, row: LedgerRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::InvalidParameter(format!(
                    "ledger time {} does not advance past {}",
                    row.t, last.t
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `½‖v‖² + κ Per` at row `k`.
    pub fn total_energy(&self, k: usize, kappa: f64) -> f64 {
        self.rows[k].kinetic + kappa * self.rows[k].perimeter
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER)?;
        for r in &self.rows {
            let fields = [
                r.t,
                r.kinetic,
                r.perimeter,
                r.grad_mu_sq,
                r.viscous,
                r.fh_initial,
                r.fh_final,
                r.lambda,
                r.gibbs_thomson_residual,
            ];
            w.write_record(fields.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn from_csv(bytes: &[u8]) -> Result<EnergyLedger> {
        let mut r = csv::Reader::from_reader(bytes);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != HEADER {
            return Err(Error::InvalidField(format!("unexpected ledger header {header:?}")));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<LedgerRow>, _>>()?;
        Ok(EnergyLedger { rows })
    }

    pub fn read_csv(path: &Path) -> Result<EnergyLedger> {
        let bytes = std::fs::read(path)?;
        EnergyLedger::from_csv(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

const HEADER: [&str; 9] = [
    "t",
    "kinetic",
    "perimeter",
    "grad_mu_sq",
    "viscous",
    "fh_initial",
    "fh_final",
    "lambda",
    "gibbs_thomson_residual",
];

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Error {
        Error::InvalidField(format!("ledger csv: {e}"))
    }
}

/// Checks the summed estimate at every row `K ≥ 1`:
///
/// ```text
/// ½‖v_K‖² + κ Per_K + Σ_{k=1..K} [h ∫2ν|Dv_k|² + (hm/2)‖∇μ₀,k‖²]
///   ≤ ½‖v₀‖² + κ Per₀ + (2h/m) Σ_{k=0..K} ‖v_k‖² + (hm/4) Σ_{k=1..K} ‖∇μ₀,k‖² + tol.
/// ```
pub fn energy_ledger_check(ledger: &EnergyLedger, p: &LedgerParams) -> LedgerVerdict {
    let mut verdict = LedgerVerdict {
        first_failure: None,
        worst_margin: f64::NEG_INFINITY,
    };
    let Some(first) = ledger.rows.first() else {
        return verdict;
    };
    let (h, m, kappa) = (p.h, p.mobility, p.kappa);
    let base = first.kinetic + kappa * first.perimeter;
    let mut velocity_sum = 2.0 * first.kinetic;
    let (mut dissipated, mut grad_sum) = (0.0, 0.0);
    for (k, row) in ledger.rows.iter().enumerate().skip(1) {
        velocity_sum += 2.0 * row.kinetic;
        dissipated += h * row.viscous + 0.5 * h * m * row.grad_mu_sq;
        grad_sum += row.grad_mu_sq;
        let lhs = row.kinetic + kappa * row.perimeter + dissipated;
        let rhs = base + 2.0 * h / m * velocity_sum + 0.25 * h * m * grad_sum;
        let margin = lhs - rhs;
        verdict.worst_margin = verdict.worst_margin.max(margin);
        if margin > ledger_tolerance(rhs) && verdict.first_failure.is_none() {
            verdict.first_failure = Some(k);
        }
    }
    verdict
}

/// Both sides of the per-step estimate at row `k ≥ 1`:
///
/// ```text
/// E_k + h∫2ν|Dv_k|² + (hm/4)‖∇μ₀,k‖² ≤ E_{k−1} + h/(2m)‖v_{k−1}‖² + (h/m)‖v_k‖²,
/// ```
///
/// with `E = ½‖v‖² + κ Per`. It chains the phase step estimate with the
/// momentum estimate, bounding the capillary work by Young's inequality.
pub fn step_energy_sides(ledger: &EnergyLedger, k: usize, p: &LedgerParams) -> (f64, f64) {
    let (prev, row) = (&ledger.rows[k - 1], &ledger.rows[k]);
    let (h, m) = (p.h, p.mobility);
    let lhs = ledger.total_energy(k, p.kappa) + h * row.viscous + 0.25 * h * m * row.grad_mu_sq;
    let rhs = ledger.total_energy(k - 1, p.kappa) + h / m * prev.kinetic + 2.0 * h / m * row.kinetic;
    (lhs, rhs)
}

/// First row at which the per-step estimate fails, if any.
pub fn step_energy_check(ledger: &EnergyLedger, p: &LedgerParams) -> Option<usize> {
    (1..ledger.len()).find(|&k| {
        let (lhs, rhs) = step_energy_sides(ledger, k, p);
        lhs > rhs + ledger_tolerance(rhs)
    })
}
