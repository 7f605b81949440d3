//! JSON run configuration and its translation into solver types.

use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};

use osm_core::fem::{Grid, Nonlinearity, PotentialField};
use osm_core::gpe::{GpeConfig, GpeSetup};
use osm_core::linalg::{KrylovConfig, KrylovMethod, C64};
use osm_core::schwarz::{Algorithm, DomainProblem, Execution, InitMode, OuterBoundary, SchwarzConfig};
use osm_core::subdomain::{FixedPointConfig, NonlinearForm, PadeSystem};
use osm_core::transmission::{PadeSum, TransmissionSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nls,
    Gpe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_left: f64,
    pub x_right: f64,
    pub y_bottom: f64,
    pub y_top: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transmission {
    Robin {
        p: f64,
    },
    Pade {
        m: usize,
        #[serde(default = "default_theta")]
        theta: f64,
        /// Start the diagonal sum at `s = 1` instead of `s = 0`.
        #[serde(default)]
        sum_from_one: bool,
    },
}

fn default_theta() -> f64 {
    FRAC_PI_4
}

impl Transmission {
    pub fn to_spec(self) -> Result<TransmissionSpec> {
        Ok(match self {
            Transmission::Robin { p } => TransmissionSpec::robin(p)?,
            Transmission::Pade { m, theta, sum_from_one } => {
                let sum = if sum_from_one { PadeSum::FromOne } else { PadeSum::FromZero };
                TransmissionSpec::pade_with_sum(m, theta, sum)?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    Classical,
    Preconditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterName {
    Transmission,
    Neumann,
}

/// Initial datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initial {
    /// `e^{−x²−y²−0.5ix}`.
    MovingGaussian,
    /// `π^{−1/4} e^{−(x²+2y²)/2}`.
    AnisotropicGaussian,
    /// `π^{−1/2} e^{−(x²+y²)/2}`, the harmonic ground state.
    HarmonicGround,
    /// Snapshot file on the run grid, renormalized to unit mass.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpeParams {
    pub beta: f64,
    pub omega: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
}

impl Default for GpeParams {
    fn default() -> Self {
        Self {
            beta: 10.15,
            omega: 0.4,
            gamma_x: 1.0,
            gamma_y: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrylovSettings {
    pub method: KrylovName,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrylovName {
    Gmres,
    Bicgstab,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        let k = KrylovConfig::default();
        Self {
            method: KrylovName::Gmres,
            tolerance: k.tolerance,
            max_iterations: k.max_iterations,
            restart: k.restart,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormName {
    Consistent,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub form: FormName,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        let f = FixedPointConfig::default();
        Self {
            tolerance: f.tolerance,
            max_iterations: f.max_iterations,
            form: FormName::Consistent,
        }
    }
}

/// One run. Every field has a default, so a config file only needs the
/// fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub domain: Domain,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    /// Final time.
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_sub: usize,
    pub transmission: Transmission,
    pub algorithm: AlgorithmName,
    pub init: InitName,
    pub seed: u64,
    pub outer_boundary: OuterName,
    /// Strength `s` of `f(u) = s|u|²` in NLS mode.
    pub nonlinearity: f64,
    pub initial: Initial,
    pub gpe: GpeParams,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub warm_start: bool,
    pub parallel: bool,
    pub krylov: KrylovSettings,
    pub fixed_point: FixedPointSettings,
    pub output: PathBuf,
    /// Write a snapshot every this many steps (0: only the final one).
    pub snapshot_every: usize,
    /// Parameter lists used by the experiments.
    pub n_list: Vec<usize>,
    pub p_list: Vec<f64>,
    pub m_list: Vec<usize>,
    /// Valid-zone output spacing for GPE density snapshots.
    pub zone_spacing: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Nls,
            domain: Domain {
                x_left: -16.0,
                x_right: 16.0,
                y_bottom: -8.0,
                y_top: 8.0,
            },
            dx: 1.0 / 32.0,
            dy: 1.0 / 8.0,
            dt: 0.01,
            t_final: 0.01,
            n_sub: 2,
            transmission: Transmission::Pade {
                m: 6,
                theta: FRAC_PI_4,
                sum_from_one: false,
            },
            algorithm: AlgorithmName::Classical,
            init: InitName::Zero,
            seed: 0,
            outer_boundary: OuterName::Transmission,
            nonlinearity: 1.0,
            initial: Initial::MovingGaussian,
            gpe: GpeParams::default(),
            tolerance: 1e-10,
            max_iterations: 1000,
            warm_start: true,
            parallel: false,
            krylov: KrylovSettings::default(),
            fixed_point: FixedPointSettings::default(),
            output: PathBuf::from("out"),
            snapshot_every: 0,
            n_list: vec![2, 4, 8],
            p_list: (1..=10).map(|k| 5.0 * k as f64).collect(),
            m_list: vec![1, 2, 4, 6, 8],
            zone_spacing: 0.25,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(self.dt > 0.0) || !(self.t_final >= self.dt) {
            return bad(format!("need dt > 0 and T >= dt, got dt={} T={}", self.dt, self.t_final));
        }
        if self.n_sub == 0 {
            return bad("n_sub must be at least 1".into());
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return bad("Schwarz tolerance and iteration cap must be positive".into());
        }
        self.grid()?;
        self.transmission.to_spec()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let d = self.domain;
        Ok(Grid::with_spacing(d.x_left, d.x_right, d.y_bottom, d.y_top, self.dx, self.dy)?)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn laplace_coefficient(&self) -> f64 {
        match self.mode {
            Mode::Nls => 1.0,
            Mode::Gpe => 0.5,
        }
    }

    pub fn outer(&self) -> OuterBoundary {
        match self.outer_boundary {
            OuterName::Transmission => OuterBoundary::Transmission,
            OuterName::Neumann => OuterBoundary::Neumann,
        }
    }

    pub fn schwarz_config(&self) -> SchwarzConfig {
        SchwarzConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            init: match self.init {
                InitName::Zero => InitMode::Zero,
                InitName::Random => InitMode::Random { seed: self.seed },
            },
            algorithm: match self.algorithm {
                AlgorithmName::Classical => Algorithm::Classical,
                AlgorithmName::Preconditioned => Algorithm::Preconditioned,
            },
            execution: if self.parallel { Execution::Parallel } else { Execution::Sequential },
            warm_start: self.warm_start,
            krylov: KrylovConfig {
                method: match self.krylov.method {
                    KrylovName::Gmres => KrylovMethod::Gmres,
                    KrylovName::Bicgstab => KrylovMethod::BiCgStab,
                },
                tolerance: self.krylov.tolerance,
                max_iterations: self.krylov.max_iterations,
                restart: self.krylov.restart,
            },
            fixed_point: FixedPointConfig {
                tolerance: self.fixed_point.tolerance,
                max_iterations: self.fixed_point.max_iterations,
                form: match self.fixed_point.form {
                    FormName::Consistent => NonlinearForm::Consistent,
                    FormName::Literal => NonlinearForm::Literal,
                },
                ..FixedPointConfig::default()
            },
            precond_mode: Default::default(),
        }
    }

    /// NLS problem with `W = 0` and `f = s|u|²`.
    pub fn nls_problem(&self) -> Result<DomainProblem> {
        let g = self.grid()?;
        let nl = if self.nonlinearity == 0.0 {
            Nonlinearity::None
        } else {
            Nonlinearity::Cubic { strength: self.nonlinearity }
        };
        Ok(DomainProblem {
            grid: g,
            dt: self.dt,
            laplace_coefficient: 1.0,
            spec: self.transmission.to_spec()?,
            outer_boundary: self.outer(),
            pade_system: PadeSystem::Block,
            potential: PotentialField::new(&g, vec![0.0; g.node_count()], nl)?,
        })
    }

    pub fn gpe_config(&self) -> GpeConfig {
        GpeConfig {
            beta: self.gpe.beta,
            omega: self.gpe.omega,
            gamma_x: self.gpe.gamma_x,
            gamma_y: self.gpe.gamma_y,
            t_final: self.t_final,
            dt: self.dt,
        }
    }

    pub fn gpe_setup(&self) -> Result<GpeSetup> {
        Ok(GpeSetup {
            grid: self.grid()?,
            spec: self.transmission.to_spec()?,
            outer_boundary: self.outer(),
            pade_system: PadeSystem::Block,
            n_sub: self.n_sub,
            schwarz: self.schwarz_config(),
        })
    }

    /// Nodal initial datum on the run grid.
    pub fn initial_field(&self) -> Result<Vec<C64>> {
        let g = self.grid()?;
        Ok(match &self.initial {
            Initial::MovingGaussian => {
                g.map_nodes(|x, y| (-x * x - y * y).exp() * C64::from_polar(1.0, -0.5 * x))
            }
            Initial::AnisotropicGaussian => g.map_nodes(|x, y| {
                C64::new((-(x * x + 2.0 * y * y) / 2.0).exp() / std::f64::consts::PI.powf(0.25), 0.0)
            }),
            Initial::HarmonicGround => g.map_nodes(|x, y| {
                C64::new((-(x * x + y * y) / 2.0).exp() / std::f64::consts::PI.sqrt(), 0.0)
            }),
            Initial::File { path } => crate::io::load_ground_state(path, &g)?.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn transmission_is_tagged() {
        let c = RunConfig::from_json(r#"{"transmission": {"kind": "robin", "p": 12.5}}"#).unwrap();
        assert_eq!(c.transmission, Transmission::Robin { p: 12.5 });
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(RunConfig::from_json(r#"{"dx": 0.3}"#).is_err());
    }
}
