use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ms_step::{AnnealConfig, MsStepConfig};
use crate::ns_step::NsStepConfig;

/// A full run description, read from a TOML file.
///
/// ```toml
/// horizon = 0.01
///
/// [grid]
/// n = 64
/// length = 1.0
///
/// [physics]
/// nu_minus = 1.0
/// nu_plus = 1.0
/// kappa = 1.0
/// mobility = 1.0
///
/// [scheme]
/// h = 5e-4
///
/// [initial]
/// phase = "disk"
/// radius = 0.2
/// velocity = "zero"
/// seed = 7
///
/// [output]
/// directory = "out"
/// dump_every = 10
/// ledger_path = "ledger.csv"
/// ```
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Final time `T`.
    pub horizon: f64,
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub scheme: SchemeSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub diffuse: DiffuseSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    #[serde(default = "one")]
    pub length: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub nu_minus: f64,
    pub nu_plus: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "one")]
    pub mobility: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub h: f64,
    /// Mollification width; defaults to `2 dx`.
    pub delta: Option<f64>,
    #[serde(default)]
    pub anneal: AnnealSection,
    #[serde(default)]
    pub picard: PicardSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealSection {
    pub sweeps: usize,
    pub temp_init: f64,
    pub temp_decay: f64,
    pub no_improve_window: usize,
}

impl Default for AnnealSection {
    fn default() -> Self {
        let a = AnnealConfig::default();
        AnnealSection {
            sweeps: a.sweeps,
            temp_init: a.temp_init,
            temp_decay: a.temp_decay,
            no_improve_window: a.no_improve_window,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSection {
    pub tol: f64,
    pub max_iterations: usize,
    pub cg_tol: f64,
    pub cg_max_iterations: usize,
}

impl Default for PicardSection {
    fn default() -> Self {
        let c = NsStepConfig::new(1.0);
        PicardSection {
            tol: c.picard_tol,
            max_iterations: c.picard_max,
            cg_tol: c.cg_tol,
            cg_max_iterations: c.cg_max,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PhaseShape {
    Stripe,
    Disk,
    File,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum VelocityShape {
    Zero,
    Shear,
    File,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub phase: PhaseShape,
    /// Disk radius.
    #[serde(default = "quarter")]
    pub radius: f64,
    /// Stripe width.
    #[serde(default = "half")]
    pub width: f64,
    /// Centre of the disk, or the stripe's `y` centre, as fractions of `L`.
    #[serde(default = "half")]
    pub center_x: f64,
    #[serde(default = "half")]
    pub center_y: f64,
    /// Field file for `phase = "file"` (values ≥ 1/2 are inside).
    pub phase_file: Option<PathBuf>,
    pub velocity: VelocityShape,
    /// Amplitude of the shear mode `(A sin(2πy/L), 0)`.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Velocity component files for `velocity = "file"`.
    pub velocity_x_file: Option<PathBuf>,
    pub velocity_y_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Where dumps go; `None` keeps the run in memory.
    pub directory: Option<PathBuf>,
    /// Dump fields every this many steps; 0 disables dumps.
    pub dump_every: usize,
    /// Ledger file, relative to `directory`.
    pub ledger_path: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: None,
            dump_every: 0,
            ledger_path: PathBuf::from("ledger.csv"),
        }
    }
}

/// Parameters of the diffuse-interface runs in the `ε` sweep.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiffuseSection {
    /// Time step; defaults to `scheme.h`.
    pub dt: Option<f64>,
    /// Cahn–Hilliard mobility; defaults to `physics.mobility`.
    pub mobility: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn quarter() -> f64 {
    0.25
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative file paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut Option<PathBuf>| {
                if let Some(q) = p.as_mut() {
                    if q.is_relative() {
                        *q = base.join(&*q);
                    }
                }
            };
            fix(&mut cfg.initial.phase_file);
            fix(&mut cfg.initial.velocity_x_file);
            fix(&mut cfg.initial.velocity_y_file);
            fix(&mut cfg.output.directory);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("horizon", self.horizon)?;
        positive("grid.length", self.grid.length)?;
        positive("physics.nu_minus", self.physics.nu_minus)?;
        positive("physics.nu_plus", self.physics.nu_plus)?;
        positive("physics.kappa", self.physics.kappa)?;
        positive("physics.mobility", self.physics.mobility)?;
        positive("scheme.h", self.scheme.h)?;
        if let Some(d) = self.scheme.delta {
            positive("scheme.delta", d)?;
        }
        if let Some(dt) = self.diffuse.dt {
            positive("diffuse.dt", dt)?;
        }
        if let Some(m) = self.diffuse.mobility {
            positive("diffuse.mobility", m)?;
        }
        let grid = self.grid().map_err(|e| Error::Config(e.to_string()))?;
        self.ms_config(&grid).validate(&grid).map_err(|e| Error::Config(e.to_string()))?;
        self.ns_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        let init = &self.initial;
        match init.phase {
            PhaseShape::Disk => positive("initial.radius", init.radius)?,
            PhaseShape::Stripe => positive("initial.width", init.width)?,
            PhaseShape::File if init.phase_file.is_none() => {
                return Err(Error::Config("initial.phase = \"file\" needs initial.phase_file".into()))
            }
            PhaseShape::File => {}
        }
        if init.velocity == VelocityShape::File && (init.velocity_x_file.is_none() || init.velocity_y_file.is_none()) {
            return Err(Error::Config(
                "initial.velocity = \"file\" needs velocity_x_file and velocity_y_file".into(),
            ));
        }
        if !init.amplitude.is_finite() {
            return Err(Error::Config("initial.amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n, self.grid.length)
    }

    /// Number of steps, `⌈T/h⌉`.
    pub fn steps(&self) -> usize {
        steps_for(self.horizon, self.scheme.h)
    }

    pub fn ms_config(&self, grid: &Grid) -> MsStepConfig {
        let a = &self.scheme.anneal;
        MsStepConfig {
            h: self.scheme.h,
            delta: self.scheme.delta.unwrap_or(2.0 * grid.dx()),
            kappa: self.physics.kappa,
            mobility: self.physics.mobility,
            anneal: AnnealConfig {
                sweeps: a.sweeps,
                temp_init: a.temp_init,
                temp_decay: a.temp_decay,
                seed: self.initial.seed,
                no_improve_window: a.no_improve_window,
            },
        }
    }

    pub fn ns_config(&self) -> NsStepConfig {
        let p = &self.scheme.picard;
        NsStepConfig {
            h: self.scheme.h,
            picard_tol: p.tol,
            picard_max: p.max_iterations,
            cg_tol: p.cg_tol,
            cg_max: p.cg_max_iterations,
        }
    }

    /// Where the ledger is written, if the run persists anything.
    pub fn ledger_file(&self) -> Option<PathBuf> {
        self.output.directory.as_ref().map(|d| d.join(&self.output.ledger_path))
    }
}

pub(crate) fn steps_for(horizon: f64, h: f64) -> usize {
    // Guard against `T/h` landing a hair above an integer.
    let ratio = horizon / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
horizon = 0.005

[grid]
n = 32

[physics]
nu_minus = 1.0
nu_plus = 2.0

[scheme]
h = 5e-4

[initial]
phase = "disk"
velocity = "zero"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.steps(), 10);
        assert_eq!(cfg.physics.kappa, 1.0);
        assert_eq!(cfg.initial.radius, 0.25);
        assert_eq!(cfg.output.ledger_path, PathBuf::from("ledger.csv"));
        assert!(cfg.ledger_file().is_none());
        let g = cfg.grid().unwrap();
        assert_eq!(cfg.ms_config(&g).delta, 2.0 * g.dx());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("nu_plus = 2.0", "nu_plus = 2.0\nsurface_tension = 3.0");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = format!("{MINIMAL}\n[extras]\nx = 1\n");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (from, to) in [
            ("horizon = 0.005", "horizon = -1.0"),
            ("nu_minus = 1.0", "nu_minus = 0.0"),
            ("n = 32", "n = 30"),
            ("phase = \"disk\"", "phase = \"file\""),
            ("phase = \"disk\"", "phase = \"square\""),
        ] {
            let bad = MINIMAL.replace(from, to);
            assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn step_count_is_ceiling() {
        assert_eq!(steps_for(0.1, 0.01), 10);
        assert_eq!(steps_for(0.105, 0.01), 11);
        assert_eq!(steps_for(1e-3, 1.0), 1);
    }
}
