//! Run configurations and the bundled experiment presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{sample_field, FomConfig};
use crate::operators::FomOperators;
use crate::physics::{ConservationLaw, LawKind};
use crate::rom::{HyperReductionOptions, RomConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `ρ = 2 + ½g`, `u = g/10`, `p = ρ^γ` with `g = exp(−100(x − ½)²)`.
    EulerPulse1d,
    /// Smoothed Kelvin–Helmholtz shear layers, `p = 2.5`; the transverse
    /// perturbation is Gaussian in `y ± ½`.
    KelvinHelmholtz { alpha: f64, sigma: f64 },
    /// `ρ = 1 + exp(−50(x² + (y + ½)²))`, `u = 0`, `p = ρ^γ`.
    GaussianPulse2d,
    /// `u = −sin(πx)`.
    BurgersSine,
    /// A uniform conservative state.
    Constant { state: Vec<f64> },
}

impl InitialCondition {
    /// Conservative state at `x`.
    pub fn state(&self, x: [f64; 2], gamma: f64) -> Vec<f64> {
        let euler = |rho: f64, vel: &[f64], p: f64| -> Vec<f64> {
            let ke: f64 = 0.5 * rho * vel.iter().map(|v| v * v).sum::<f64>();
            let mut s = vec![rho];
            s.extend(vel.iter().map(|v| rho * v));
            s.push(p / (gamma - 1.0) + ke);
            s
        };
        match self {
            Self::EulerPulse1d => {
                let g = (-100.0 * (x[0] - 0.5).powi(2)).exp();
                let rho = 2.0 + 0.5 * g;
                euler(rho, &[0.1 * g], rho.powf(gamma))
            }
            Self::KelvinHelmholtz { alpha, sigma } => {
                let s2 = sigma * sigma;
                let lo = 1.0 / (1.0 + (-(x[1] + 0.5) / s2).exp());
                let hi = 1.0 / (1.0 + (-(x[1] - 0.5) / s2).exp());
                let rho = 1.0 + lo - hi;
                let u = lo - hi - 0.5;
                let v = alpha
                    * (2.0 * std::f64::consts::PI * x[0]).sin()
                    * ((-(x[1] + 0.5).powi(2) / s2).exp() - (-(x[1] - 0.5).powi(2) / s2).exp());
                euler(rho, &[u, v], 2.5)
            }
            Self::GaussianPulse2d => {
                let rho = 1.0 + (-50.0 * (x[0] * x[0] + (x[1] + 0.5).powi(2))).exp();
                euler(rho, &[0.0, 0.0], rho.powf(gamma))
            }
            Self::BurgersSine => vec![-(std::f64::consts::PI * x[0]).sin()],
            Self::Constant { state } => state.clone(),
        }
    }

    /// Component-major field sampled at the cell centers.
    pub fn field<L: ConservationLaw>(&self, law: &L, ops: &FomOperators, lo: f64, gamma: f64) -> Result<Vec<f64>> {
        sample_field(law, ops, lo, |x| self.state(x, gamma))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisOptions {
    pub modes: usize,
    /// Keep every `stride`-th snapshot.
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "yes")]
    pub enrich: bool,
    #[serde(default = "yes")]
    pub constant_mode: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// A complete pipeline description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Option<String>,
    pub law: LawKind,
    pub fom: FomConfig,
    pub initial: InitialCondition,
    pub basis: BasisOptions,
    #[serde(default)]
    pub hyperreduction: HyperReductionOptions,
    pub rom: RomConfig,
    /// Seed for randomized checks only; the pipeline is deterministic.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fom.validate()?;
        self.rom.validate()?;
        if self.law == LawKind::Burgers && self.fom.dim != 1 {
            return Err(Error::Config("Burgers is only available in one dimension".into()));
        }
        if self.basis.modes == 0 {
            return Err(Error::Config("modes must be at least 1".into()));
        }
        if self.basis.stride == 0 {
            return Err(Error::Config("basis stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Shrinks (or grows) the grid by `factor`, keeping the physical setup.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::Config(format!("scale must be positive, got {factor}")));
        }
        self.fom.cells = ((self.fom.cells as f64 * factor).round() as usize).max(3);
        self.fom.snapshot_stride = ((self.fom.snapshot_stride as f64 * factor).round() as usize).max(1);
        self.validate()?;
        Ok(self)
    }
}

const EULER1D_WALL: &str = r#"{
  "preset": "euler1d-wall",
  "law": "euler",
  "fom": {"dim": 1, "cells": 2500, "domain": [-1.0, 1.0], "cfl": 0.75, "epsilon": 2e-4,
          "final_time": 0.7, "boundary": "wall", "snapshot_stride": 1},
  "initial": {"kind": "euler_pulse1d"},
  "basis": {"modes": 25, "stride": 10, "enrich": true},
  "rom": {"final_time": 0.7, "cfl": 0.75, "epsilon": 2e-4, "viscosity": "v2"}
}"#;

const KH2D: &str = r#"{
  "preset": "kh2d",
  "law": "euler",
  "fom": {"dim": 2, "cells": 200, "domain": [-1.0, 1.0], "cfl": 0.5, "epsilon": 1e-3,
          "final_time": 3.0, "boundary": "periodic", "snapshot_stride": 4},
  "initial": {"kind": "kelvin_helmholtz", "alpha": 0.1, "sigma": 0.1},
  "basis": {"modes": 75, "stride": 1, "enrich": true},
  "rom": {"final_time": 3.0, "cfl": 0.5, "epsilon": 1e-3, "viscosity": "v3"}
}"#;

const PULSE2D: &str = r#"{
  "preset": "pulse2d",
  "law": "euler",
  "fom": {"dim": 2, "cells": 150, "domain": [-1.0, 1.0], "cfl": 0.5, "epsilon": 1e-3,
          "final_time": 0.25, "boundary": "wall", "snapshot_stride": 1},
  "initial": {"kind": "gaussian_pulse2d"},
  "basis": {"modes": 25, "stride": 1, "enrich": true},
  "rom": {"final_time": 0.25, "cfl": 0.5, "epsilon": 1e-3, "viscosity": "v2"}
}"#;

const BURGERS1D: &str = r#"{
  "preset": "burgers1d",
  "law": "burgers",
  "fom": {"dim": 1, "cells": 500, "domain": [-1.0, 1.0], "cfl": 0.5, "epsilon": 1e-3,
          "final_time": 0.5, "boundary": "periodic", "snapshot_stride": 1},
  "initial": {"kind": "burgers_sine"},
  "basis": {"modes": 10, "stride": 5, "enrich": false},
  "rom": {"final_time": 0.5, "cfl": 0.5, "epsilon": 1e-3, "viscosity": "v2"}
}"#;

/// `(name, description, JSON)` of every bundled preset.
pub const PRESETS: [(&str, &str, &str); 4] = [
    ("euler1d-wall", "1D Euler, reflective walls, viscous shock (2500 cells)", EULER1D_WALL),
    ("kh2d", "2D Euler, periodic smoothed Kelvin-Helmholtz (200x200)", KH2D),
    ("pulse2d", "2D Euler, reflective walls, Gaussian pulse (150x150)", PULSE2D),
    ("burgers1d", "1D periodic Burgers, stationary decaying shock (500 cells)", BURGERS1D),
];

pub fn preset(name: &str) -> Result<RunConfig> {
    PRESETS
        .iter()
        .find(|p| p.0 == name)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            Error::Config(format!("unknown preset '{name}' (available: {})", names.join(", ")))
        })
        .and_then(|p| RunConfig::from_json(p.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{Euler1d, Euler2d};

    #[test]
    fn presets_parse_and_validate() {
        for (name, _, _) in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.preset.as_deref(), Some(name));
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = EULER1D_WALL.replace("\"stride\": 10", "\"stride\": 10, \"bogus\": 1");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn scaling_shrinks_grid() {
        let cfg = preset("euler1d-wall").unwrap().scaled(0.2).unwrap();
        assert_eq!(cfg.fom.cells, 500);
        assert!(preset("kh2d").unwrap().scaled(0.0).is_err());
    }

    #[test]
    fn initial_conditions_are_admissible() {
        let e1 = Euler1d::default();
        let ops = FomOperators::new(1, 50, 0.04, crate::operators::BoundaryKind::Wall).unwrap();
        let u = InitialCondition::EulerPulse1d.field(&e1, &ops, -1.0, 1.4).unwrap();
        // Far from the pulse: ρ = 2, u = 0, p = 2^γ.
        assert!((u[0] - 2.0).abs() < 1e-12);
        assert!((u[100] - 2f64.powf(1.4) / 0.4).abs() < 1e-12);
        let e2 = Euler2d::default();
        let ops2 = FomOperators::new(2, 16, 0.125, crate::operators::BoundaryKind::Periodic).unwrap();
        let kh = InitialCondition::KelvinHelmholtz { alpha: 0.1, sigma: 0.1 };
        assert!(kh.field(&e2, &ops2, -1.0, 1.4).is_ok());
        assert!(InitialCondition::GaussianPulse2d.field(&e2, &ops2, -1.0, 1.4).is_ok());
    }
}
