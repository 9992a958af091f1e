use std::sync::OnceLock;

use esrom::cubature::{empirical_cubature, Selection};
use esrom::fom::Fom;
use esrom::io::{read_snapshots, write_snapshots};
use esrom::numerics::{nnls, orthonormal_range, DenseMatrix};
use esrom::operators::BoundaryKind;
use esrom::physics::Euler1d;
use esrom::pipeline::{run_fom, run_hyperreduce, run_pod};
use esrom::presets::preset;
use esrom::rom::{Rom, RomOperators, Viscosity};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
    DenseMatrix::from_col_major(rows, cols, data[..rows * cols].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nnls_satisfies_kkt(data in prop::collection::vec(-1.0f64..1.0, 12 * 6 + 12)) {
        let a = matrix(12, 6, &data);
        let b = &data[72..];
        let x = nnls(&a, b).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let g = a.t_matvec(&r);
        for (xi, gi) in x.iter().zip(&g) {
            prop_assert!(*xi >= 0.0);
            // Gradient of ½‖Ax − b‖² is −g: nonnegative off the support, zero on it.
            prop_assert!(*gi <= 1e-10);
            if *xi > 0.0 {
                prop_assert!(gi.abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn cubature_meets_tolerance(data in prop::collection::vec(-1.0f64..1.0, 60 * 5), tol in 1e-6f64..1e-2) {
        let raw = matrix(60, 5, &data);
        let mut cols = vec![vec![1.0; 60]];
        cols.extend((0..5).map(|j| raw.col(j).to_vec()));
        let v = orthonormal_range(&DenseMatrix::from_columns(&cols), 1e-12).unwrap();
        let w = vec![1.0 / 60.0; 60];
        let rule = empirical_cubature(&v, &w, tol, Selection::MostPositive).unwrap();
        let exact = v.t_matvec(&w);
        let approx = v.select_rows(&rule.indices).t_matvec(&rule.weights);
        let err: f64 = exact.iter().zip(&approx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(err <= tol * norm * (1.0 + 1e-12));
        prop_assert!(rule.weights.iter().all(|&x| x > 0.0));
        let mut idx = rule.indices.clone();
        idx.dedup();
        prop_assert_eq!(idx.len(), rule.indices.len());
    }

    #[test]
    fn fom_convective_entropy_vanishes(
        rho in prop::collection::vec(0.5f64..2.0, 16),
        m in prop::collection::vec(-1.0f64..1.0, 16),
        p in prop::collection::vec(0.5f64..2.0, 16),
    ) {
        let ops = esrom::operators::FomOperators::new(1, 16, 0.125, BoundaryKind::Periodic).unwrap();
        let fom = Fom::new(Euler1d::new(1.4), ops, 0.0, true).unwrap();
        let e: Vec<f64> = (0..16).map(|i| p[i] / 0.4 + 0.5 * m[i] * m[i] / rho[i]).collect();
        let u: Vec<f64> = rho.iter().chain(&m).chain(&e).copied().collect();
        let b = fom.entropy_balance(&u).unwrap();
        prop_assert!(b.convective.abs() <= 1e-12 * b.scale);
        // Periodic: total mass, momentum and energy are stationary.
        let du = fom.rhs(&u).unwrap();
        for c in 0..3 {
            let s: f64 = du[c * 16..(c + 1) * 16].iter().sum();
            prop_assert!(s.abs() <= 1e-12 * du.iter().fold(1.0f64, |a, x| a.max(x.abs())));
        }
    }
}

struct Setup {
    rom: Rom<Euler1d>,
    center: Vec<f64>,
}

fn periodic_rom() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let mut cfg = preset("euler1d-wall").unwrap().scaled(0.04).unwrap();
        cfg.fom.boundary = BoundaryKind::Periodic;
        cfg.basis.modes = 6;
        cfg.basis.stride = 1;
        let snaps = run_fom(&cfg).unwrap();
        let basis = run_pod(&cfg, &snaps).unwrap();
        let hr = run_hyperreduce(&cfg, &basis).unwrap();
        let ops = RomOperators::build(&basis, &cfg.fom.operators().unwrap(), &hr).unwrap();
        let rom = Rom::new(Euler1d::new(cfg.fom.gamma), ops, 0.0, Viscosity::None, true).unwrap();
        let center = basis.project(snaps.data.col(snaps.n_snapshots() / 2));
        Setup { rom, center }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rom_entropy_and_mass_are_conserved(shift in prop::collection::vec(-1.0f64..1.0, 64)) {
        let s = periodic_rom();
        let amp = 1e-3 * s.center.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let un: Vec<f64> = s.center.iter().zip(&shift).map(|(c, d)| c + amp * d).collect();
        let parts = s.rom.rhs_parts(&un).unwrap();
        prop_assert!(parts.convective_entropy.abs() <= 1e-11 * parts.scale);
        let du = s.rom.rhs(&un).unwrap();
        // The conserved totals are linear in u_N, so this is their rate of change.
        let rate = s.rom.conserved(&du);
        let scale = s.rom.conserved(&un).iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for r in rate {
            prop_assert!(r.abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn snapshot_files_round_trip_bitwise() {
    let mut cfg = preset("burgers1d").unwrap().scaled(0.1).unwrap();
    cfg.fom.final_time = 0.05;
    let snaps = run_fom(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.esnap");
    write_snapshots(&path, &snaps).unwrap();
    let back = read_snapshots(&path).unwrap();
    assert_eq!(back.data.data(), snaps.data.data());
    assert_eq!(back.times, snaps.times);
    assert_eq!(back.fingerprint(), snaps.fingerprint());
}
