//! End-to-end stages driven by a [`RunConfig`], dispatching on the law.

use serde::Serialize;

use crate::basis::{build_basis, ReducedBasis};
use crate::error::{Error, Result};
use crate::fom::{Fom, SnapshotSet};
use crate::physics::{Burgers, ConservationLaw, Euler1d, Euler2d, LawKind};
use crate::presets::RunConfig;
use crate::rom::{hyperreduce, DenseGalerkin, HyperReduction, Rom, RomOperators, RomRun, Viscosity};

/// Runs `$body` with `$law` bound to the concrete law of `$cfg`.
macro_rules! with_law {
    ($cfg:expr, |$law:ident| $body:expr) => {
        match ($cfg.law, $cfg.fom.dim) {
            (LawKind::Burgers, 1) => {
                let $law = Burgers;
                $body
            }
            (LawKind::Euler, 1) => {
                let $law = Euler1d::new($cfg.fom.gamma);
                $body
            }
            (LawKind::Euler, 2) => {
                let $law = Euler2d::new($cfg.fom.gamma);
                $body
            }
            (law, dim) => Err(Error::Config(format!("{law:?} is not available in {dim} dimensions"))),
        }
    };
}

fn fom_for<L: ConservationLaw>(law: L, cfg: &RunConfig) -> Result<Fom<L>> {
    Fom::from_config(law, &cfg.fom)
}

/// Full-order run from the configured initial condition.
pub fn run_fom(cfg: &RunConfig) -> Result<SnapshotSet> {
    with_law!(cfg, |law| {
        let fom = fom_for(law.clone(), cfg)?;
        let u0 = cfg.initial.field(&law, &fom.ops, cfg.fom.domain[0], cfg.fom.gamma)?;
        fom.integrate(&u0, &cfg.fom)
    })
}

pub fn run_pod(cfg: &RunConfig, snaps: &SnapshotSet) -> Result<ReducedBasis> {
    check_snapshots(cfg, snaps)?;
    let b = &cfg.basis;
    with_law!(cfg, |law| build_basis(snaps, &law, b.modes, b.stride, b.enrich, b.constant_mode))
}

pub fn run_hyperreduce(cfg: &RunConfig, basis: &ReducedBasis) -> Result<HyperReduction> {
    let ops = cfg.fom.operators()?;
    if ops.n_points() != basis.n_points() {
        return Err(Error::Config(format!(
            "basis has {} points but the grid has {}",
            basis.n_points(),
            ops.n_points()
        )));
    }
    hyperreduce(basis, &ops, &cfg.hyperreduction)
}

/// Hyper-reduced ROM run started from the first snapshot.
pub fn run_rom(cfg: &RunConfig, basis: &ReducedBasis, hr: &HyperReduction, u0: &[f64]) -> Result<RomRun> {
    if hr.basis_fingerprint != basis.fingerprint() {
        return Err(Error::Fingerprint {
            expected: basis.fingerprint(),
            found: hr.basis_fingerprint.clone(),
        });
    }
    let ops = cfg.fom.operators()?;
    let rops = RomOperators::build(basis, &ops, hr)?;
    with_law!(cfg, |law| {
        let rom = Rom::new(law, rops, cfg.rom.epsilon, cfg.rom.viscosity, cfg.rom.wall_penalty)?;
        let un0 = rom.initial_coefficients(basis, u0, cfg.rom.initial);
        rom.integrate(&un0, &cfg.rom)
    })
}

/// Galerkin ROM on the full grid, without hyper-reduction.
pub fn run_dense_rom(cfg: &RunConfig, basis: &ReducedBasis, u0: &[f64]) -> Result<RomRun> {
    if cfg.rom.viscosity == Viscosity::None && cfg.rom.epsilon > 0.0 {
        return Err(Error::Config("the dense ROM always applies the full viscosity".into()));
    }
    with_law!(cfg, |law| {
        let fom = Fom::new(law, cfg.fom.operators()?, cfg.rom.epsilon, cfg.rom.wall_penalty)?;
        let dense = DenseGalerkin::new(fom, basis)?;
        dense.integrate(&basis.project(u0), &cfg.rom)
    })
}

fn check_snapshots(cfg: &RunConfig, snaps: &SnapshotSet) -> Result<()> {
    let np = cfg.fom.cells.pow(cfg.fom.dim as u32);
    if snaps.points_per_component() != np || snaps.dim != cfg.fom.dim {
        return Err(Error::Config(format!(
            "snapshots have {} points in {}D, the configuration expects {np} in {}D",
            snaps.points_per_component(),
            snaps.dim,
            cfg.fom.dim
        )));
    }
    Ok(())
}

/// `‖a − b‖ / ‖b‖` over all components.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointCounts {
    pub volume: usize,
    pub stabilizing: usize,
    pub viscous: Option<usize>,
    pub boundary: Option<usize>,
    pub test_mass_condition: Vec<f64>,
}

impl PointCounts {
    pub fn of(hr: &HyperReduction) -> Self {
        Self {
            volume: hr.volume.len(),
            stabilizing: hr.stabilized.len() - hr.volume.len(),
            viscous: hr.viscous.as_ref().map(|r| r.len()),
            boundary: hr.boundary.as_ref().map(|r| r.len()),
            test_mass_condition: hr.stabilization.cond_after.clone(),
        }
    }
}

/// `(j, σ_j / σ_1)` at roughly logarithmic spacing, always including the
/// last retained mode.
pub fn singular_value_table(sigma: &[f64], n_modes: usize) -> Vec<(usize, f64)> {
    let s1 = sigma.first().copied().unwrap_or(0.0);
    if s1 == 0.0 {
        return Vec::new();
    }
    let mut js: Vec<usize> = [1, 2, 5, 10, 25, 50, 75, 100, 125, 150, 200, 300, 500]
        .into_iter()
        .filter(|&j| j <= sigma.len())
        .collect();
    if n_modes >= 1 && n_modes <= sigma.len() && !js.contains(&n_modes) {
        js.push(n_modes);
        js.sort_unstable();
    }
    js.into_iter().map(|j| (j, sigma[j - 1] / s1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn burgers_pipeline_runs() {
        let mut cfg = preset("burgers1d").unwrap().scaled(0.1).unwrap();
        cfg.fom.final_time = 0.1;
        cfg.rom.final_time = 0.1;
        cfg.basis.modes = 4;
        cfg.basis.stride = 1;
        let snaps = run_fom(&cfg).unwrap();
        let basis = run_pod(&cfg, &snaps).unwrap();
        let hr = run_hyperreduce(&cfg, &basis).unwrap();
        let run = run_rom(&cfg, &basis, &hr, snaps.data.col(0)).unwrap();
        assert!((run.times.last().unwrap() - 0.1).abs() < 1e-14);
        let err = relative_l2(&basis.reconstruct(&run.u_n), snaps.data.col(snaps.n_snapshots() - 1));
        assert!(err < 0.5, "{err}");
    }

    #[test]
    fn mismatched_basis_is_rejected() {
        let mut cfg = preset("burgers1d").unwrap().scaled(0.1).unwrap();
        cfg.fom.final_time = 0.05;
        cfg.basis.modes = 3;
        cfg.basis.stride = 1;
        let snaps = run_fom(&cfg).unwrap();
        let basis = run_pod(&cfg, &snaps).unwrap();
        let mut hr = run_hyperreduce(&cfg, &basis).unwrap();
        hr.basis_fingerprint = "0".repeat(64);
        assert!(matches!(run_rom(&cfg, &basis, &hr, snaps.data.col(0)), Err(Error::Fingerprint { .. })));
        let mut other = cfg.clone();
        other.fom.cells = 60;
        assert!(matches!(run_pod(&other, &snaps), Err(Error::Config(_))));
    }

    #[test]
    fn relative_error_and_table() {
        assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_l2(&[0.0, 0.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        let t = singular_value_table(&[4.0, 2.0, 1.0], 3);
        assert_eq!(t, vec![(1, 1.0), (2, 0.5), (3, 0.25)]);
    }
}
