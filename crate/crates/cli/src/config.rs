//! Run configuration, read from JSON and validated before any compute.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use bcwave::dtn::TimePlan;
use bcwave::grid::{GridSpec, ScalarField, SpatialGrid};
use bcwave::io::read_field;
use bcwave::observability::{CertifyConfig, ConvexWeight};
use bcwave::recon::{ReconConfig, XiLattice};
use bcwave::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedSpec {
    Constant {
        value: f64,
    },
    /// `background + amplitude · exp(−|x − center|² / width)`.
    Bump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        #[serde(default = "one")]
        background: f64,
    },
    /// A real `.bcw` field on the configured grid.
    File {
        path: PathBuf,
    },
}

impl SpeedSpec {
    pub fn build(&self, grid: &SpatialGrid, base: &Path) -> Result<ScalarField> {
        match self {
            SpeedSpec::Constant { value } => Ok(ScalarField::constant(grid, *value)),
            SpeedSpec::Bump { center, width, amplitude, background } => {
                if center.len() != grid.dim() {
                    return Err(Error::Config(format!("bump center has {} entries on a {}D grid", center.len(), grid.dim())));
                }
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("bump width {width} must be positive")));
                }
                Ok(ScalarField::from_fn(grid, |x| {
                    let r2: f64 = center.iter().enumerate().map(|(a, c)| (x[a] - c).powi(2)).sum();
                    background + amplitude * (-r2 / width).exp()
                }))
            }
            SpeedSpec::File { path } => {
                let f = read_field(&base.join(path))?;
                grid.check_same(f.grid())?;
                Ok(f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTime {
    #[serde(rename = "auto-certified")]
    AutoCertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    Final { t_final: f64 },
    Auto(AutoTime),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Defaults to `2π / (2 · longest side)`.
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default = "one_usize")]
    pub half_width: usize,
    #[serde(default)]
    pub xi_max: Option<f64>,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec { spacing: None, half_width: 1, xi_max: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySpec {
    #[serde(default = "default_convexity")]
    pub convexity: f64,
    #[serde(default = "default_friedrichs")]
    pub friedrichs: f64,
    /// Fraction of the CFL limit used by the solver.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

impl Default for SafetySpec {
    fn default() -> Self {
        SafetySpec { convexity: default_convexity(), friedrichs: default_friedrichs(), cfl: default_cfl() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    pub delta: SpeedSpec,
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        StabilitySpec {
            delta: SpeedSpec::Bump { center: vec![0.45, 0.5], width: 0.03, amplitude: 1.0, background: 0.0 },
            amplitudes: default_amplitudes(),
        }
    }
}

/// Gaussian pulse control `exp(−((t−t0)/width_t)²) exp(−|x−center|²/width_x)` for `forward`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSpec {
    pub t0: f64,
    pub center: Vec<f64>,
    #[serde(default = "default_width_t")]
    pub width_t: f64,
    #[serde(default = "default_width_x")]
    pub width_x: f64,
    /// Snapshot times; rounded to the nearest solver step. Defaults to `T/2` and `T`.
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

impl Default for ForwardSpec {
    fn default() -> Self {
        ForwardSpec { t0: 0.5, center: vec![0.5, 0.0], width_t: default_width_t(), width_x: default_width_x(), snapshots: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default = "default_speed")]
    pub speed: SpeedSpec,
    #[serde(default = "default_time")]
    pub time: TimeSpec,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default = "default_sigma_cut")]
    pub sigma_cut: f64,
    #[serde(default)]
    pub floor: Option<f64>,
    #[serde(default)]
    pub safety: SafetySpec,
    /// Convex weight for `certify`; defaults to `|x|²/2`.
    #[serde(default)]
    pub weight: Option<ConvexWeight>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Number of seeded observability trials run by `certify`.
    #[serde(default)]
    pub trials: usize,
    /// Trials run at `trial_factor · T_min`.
    #[serde(default = "default_trial_factor")]
    pub trial_factor: f64,
    #[serde(default)]
    pub stability: StabilitySpec,
    #[serde(default)]
    pub forward: ForwardSpec,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_convexity() -> f64 {
    0.99
}
fn default_friedrichs() -> f64 {
    1.05
}
fn default_cfl() -> f64 {
    0.9
}
fn default_amplitudes() -> Vec<f64> {
    vec![0.01, 0.02, 0.04]
}
fn default_width_t() -> f64 {
    0.12
}
fn default_width_x() -> f64 {
    0.08
}
fn default_speed() -> SpeedSpec {
    SpeedSpec::Constant { value: 1.0 }
}
fn default_time() -> TimeSpec {
    TimeSpec::Final { t_final: 1.6 }
}
fn default_substeps() -> usize {
    3
}
fn default_sigma_cut() -> f64 {
    1e-3
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_trial_factor() -> f64 {
    1.2
}

/// Signal steps above which an auto-certified horizon is refused.
const MAX_SIGNAL_STEPS: f64 = 1e6;

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str(r#"{"grid": {"dim": 2, "origin": [0, 0], "lengths": [1, 1], "n_cells": [32, 32]}}"#)
            .expect("default config parses")
    }
}

/// Configuration after validation, with the fields every command needs.
pub struct Resolved {
    pub grid: SpatialGrid,
    pub speed: ScalarField,
}

impl RunConfig {
    pub fn weight(&self) -> ConvexWeight {
        self.weight.clone().unwrap_or_else(|| ConvexWeight::quadratic(&vec![0.0; self.grid.dim]))
    }

    pub fn certify_config(&self) -> CertifyConfig {
        CertifyConfig { safety: self.safety.convexity, friedrichs_safety: self.safety.friedrichs }
    }

    pub fn recon_config(&self, grid: &SpatialGrid) -> ReconConfig {
        let longest = (0..grid.dim()).map(|a| grid.length(a)).fold(0.0, f64::max);
        let spacing = self.lattice.spacing.unwrap_or(2.0 * PI / (2.0 * longest));
        ReconConfig {
            lattice: XiLattice { spacing, half_width: self.lattice.half_width, xi_max: self.lattice.xi_max },
            sigma_cut: self.sigma_cut,
            floor: self.floor,
        }
    }

    /// Checks every cross-field constraint and builds the grid and speed.
    pub fn validate(&self, base: &Path) -> Result<Resolved> {
        let grid = self.grid.build()?;
        let speed = self.speed.build(&grid, base)?;
        speed.check_wave_speed(None)?;
        if let TimeSpec::Final { t_final } = self.time {
            if !(t_final > 0.0 && t_final.is_finite()) {
                return Err(Error::Config(format!("t_final = {t_final} must be positive")));
            }
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be positive".into()));
        }
        if !(self.sigma_cut > 0.0 && self.sigma_cut < 1.0) {
            return Err(Error::Config(format!("sigma_cut = {} must lie in (0, 1)", self.sigma_cut)));
        }
        let s = &self.safety;
        if !(s.convexity > 0.0 && s.convexity <= 1.0) || !(s.friedrichs >= 1.0) || !(s.cfl > 0.0 && s.cfl <= 1.0) {
            return Err(Error::Config("safety factors need convexity, cfl in (0, 1] and friedrichs ≥ 1".into()));
        }
        if let Some(h) = self.lattice.spacing {
            if !(h > 0.0) {
                return Err(Error::Config(format!("lattice spacing {h} must be positive")));
            }
        }
        if !(self.trial_factor > 1.0) {
            return Err(Error::Config(format!("trial_factor = {} must exceed 1", self.trial_factor)));
        }
        if let Some(f) = self.floor {
            if !(f > 0.0) {
                return Err(Error::Config(format!("floor = {f} must be positive")));
            }
        }
        let delta = self.stability.delta.build(&grid, base)?;
        for &a in &self.stability.amplitudes {
            if speed.zip_map(&delta, |c, d| c + a * d)?.min() <= 0.0 {
                return Err(Error::Config(format!("c + {a}·δ is not positive")));
            }
        }
        if self.forward.center.len() != grid.dim() {
            return Err(Error::Config("forward.center has the wrong dimension".into()));
        }
        if grid.dim() == 1 && self.lattice.half_width > 0 {
            // only ξ = 0 has a CGO partner in one dimension
            return Err(Error::Config("one-dimensional grids need lattice.half_width = 0".into()));
        }
        Ok(Resolved { grid, speed })
    }

    /// Time plan for horizon `t_final`; the solver step honours the CFL safety factor.
    pub fn plan(&self, r: &Resolved, t_final: f64) -> Result<TimePlan> {
        let steps = t_final / (bcwave::solver::stable_timestep(&r.speed, self.safety.cfl) * self.substeps as f64);
        if steps > MAX_SIGNAL_STEPS {
            return Err(Error::Config(format!("horizon T = {t_final:.3e} needs {steps:.3e} signal steps")));
        }
        TimePlan::auto(r.speed.max(), &r.grid, t_final, self.substeps, self.safety.cfl)
    }
}
