//! `esrom`: command-line driver for the entropy-stable ROM pipeline.
//!
//! Each stage reads its inputs from and writes its outputs to one working
//! directory (`--out`, default `esrom-out`):
//!
//! | stage         | writes                                                  |
//! |---------------|---------------------------------------------------------|
//! | `fom`         | `config.json`, `snapshots.esnap`                        |
//! | `pod`         | `basis.ebasis`, `singular_values.csv`                   |
//! | `hyperreduce` | `rules.ecuba`                                           |
//! | `rom`         | `rom.eromb`, `rom_diagnostics.csv`, `rom_trajectory.csv` |
//! | `diagnose`    | `report.json`                                           |

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esrom::basis::ReducedBasis;
use esrom::fom::SnapshotSet;
use esrom::io;
use esrom::pipeline::{self, PointCounts};
use esrom::presets::{preset, RunConfig, PRESETS};
use esrom::rom::{diagnostics_csv, Viscosity};
use esrom::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "esrom", version, about = "Entropy-stable hyper-reduced reduced-order models")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and record snapshots.
    Fom(StageArgs),
    /// Build the POD basis from recorded snapshots.
    Pod(StageArgs),
    /// Compute the hyper-reduced points and weights.
    Hyperreduce(StageArgs),
    /// Run the hyper-reduced ROM.
    Rom(StageArgs),
    /// Compare the ROM against the full-order snapshots.
    Diagnose(DiagnoseArgs),
    /// Bundled experiment presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List the preset names.
    List,
    /// Print a preset as JSON.
    Show { name: String },
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Grid scale factor applied to the configuration.
    #[arg(long)]
    scale: Option<f64>,
    /// Number of POD modes.
    #[arg(long)]
    modes: Option<usize>,
    /// Viscosity treatment in the ROM.
    #[arg(long, value_parser = ["none", "v1", "v2", "v3"])]
    visc: Option<String>,
    /// Build the basis from conservative snapshots only.
    #[arg(long)]
    no_enrich: bool,
    /// Working directory.
    #[arg(long, default_value = "esrom-out")]
    out: PathBuf,
    /// Also write gnuplot scripts next to the CSV files.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, default_value = "esrom-out")]
    out: PathBuf,
    /// Trajectory to evaluate: a ROM trajectory CSV or a snapshot file.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Reference snapshots (default: `<out>/snapshots.esnap`).
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        e if e.is_numerical() => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fom(a) => cmd_fom(&a),
        Command::Pod(a) => cmd_pod(&a),
        Command::Hyperreduce(a) => cmd_hyperreduce(&a),
        Command::Rom(a) => cmd_rom(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Preset { action } => cmd_preset(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

type Result<T> = esrom::Result<T>;

fn file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Explicit `--config`/`--preset`, else the configuration saved by `fom`.
fn load_config(a: &StageArgs) -> Result<RunConfig> {
    let mut cfg = if let Some(p) = &a.config {
        RunConfig::from_json(&fs::read_to_string(p)?)?
    } else if let Some(name) = &a.preset {
        preset(name)?
    } else {
        let p = file(&a.out, "config.json");
        if !p.exists() {
            return Err(Error::Config(format!(
                "no --config or --preset given and {} does not exist",
                p.display()
            )));
        }
        RunConfig::from_json(&fs::read_to_string(p)?)?
    };
    if let Some(f) = a.scale {
        cfg = cfg.scaled(f)?;
    }
    if let Some(n) = a.modes {
        cfg.basis.modes = n;
    }
    if let Some(v) = &a.visc {
        cfg.rom.viscosity = v.parse::<Viscosity>()?;
    }
    if a.no_enrich {
        cfg.basis.enrich = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_snapshots_for(cfg: &RunConfig, dir: &Path) -> Result<SnapshotSet> {
    let snaps = io::read_snapshots(&file(dir, "snapshots.esnap"))?;
    let expected = io::fingerprint(&serde_json::to_value(&cfg.fom)?);
    let found = io::fingerprint(&snaps.metadata);
    if expected != found {
        return Err(Error::Fingerprint { expected, found });
    }
    Ok(snaps)
}

fn read_basis_for(snaps: &SnapshotSet, dir: &Path) -> Result<ReducedBasis> {
    let basis = io::read_basis(&file(dir, "basis.ebasis"))?;
    if basis.source != snaps.fingerprint() {
        return Err(Error::Fingerprint {
            expected: snaps.fingerprint(),
            found: basis.source.clone(),
        });
    }
    Ok(basis)
}

fn cmd_fom(a: &StageArgs) -> Result<()> {
    let cfg = load_config(a)?;
    fs::create_dir_all(&a.out)?;
    let snaps = pipeline::run_fom(&cfg)?;
    fs::write(file(&a.out, "config.json"), serde_json::to_string_pretty(&cfg)?)?;
    io::write_snapshots(&file(&a.out, "snapshots.esnap"), &snaps)?;
    println!(
        "fom: {} steps, {} snapshots of {} points, t = {}",
        snaps.steps,
        snaps.n_snapshots(),
        snaps.points_per_component(),
        snaps.times.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_pod(a: &StageArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let snaps = read_snapshots_for(&cfg, &a.out)?;
    let basis = pipeline::run_pod(&cfg, &snaps)?;
    io::write_basis(&file(&a.out, "basis.ebasis"), &basis, snaps.dx, snaps.dim)?;
    let mut csv = String::from("index,singular_value\n");
    for (j, s) in basis.singular_values.iter().enumerate() {
        csv.push_str(&format!("{},{s:e}\n", j + 1));
    }
    fs::write(file(&a.out, "singular_values.csv"), csv)?;
    if a.gnuplot {
        fs::write(
            file(&a.out, "singular_values.gp"),
            "set logscale y\nset datafile separator ','\nset key autotitle columnhead\n\
             plot 'singular_values.csv' using 1:2 with linespoints\npause -1\n",
        )?;
    }
    println!(
        "pod: {} modes (constant mode added: {}), tol = {:.3e}",
        basis.n_modes(),
        basis.constant_augmented,
        basis.tol
    );
    Ok(())
}

fn cmd_hyperreduce(a: &StageArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let snaps = read_snapshots_for(&cfg, &a.out)?;
    let basis = read_basis_for(&snaps, &a.out)?;
    let hr = pipeline::run_hyperreduce(&cfg, &basis)?;
    io::write_rules(&file(&a.out, "rules.ecuba"), &hr, &serde_json::to_value(&cfg)?)?;
    let c = PointCounts::of(&hr);
    println!(
        "hyperreduce: {} volume, {} stabilizing, {} viscous, {} boundary points; test-mass condition {:?}",
        c.volume,
        c.stabilizing,
        c.viscous.unwrap_or(0),
        c.boundary.unwrap_or(0),
        c.test_mass_condition
    );
    Ok(())
}

fn cmd_rom(a: &StageArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let snaps = read_snapshots_for(&cfg, &a.out)?;
    let basis = read_basis_for(&snaps, &a.out)?;
    let hr = io::read_rules(&file(&a.out, "rules.ecuba"))?;
    let run = pipeline::run_rom(&cfg, &basis, &hr, snaps.data.col(0))?;
    let ops = esrom::rom::RomOperators::build(&basis, &cfg.fom.operators()?, &hr)?;
    io::write_bundle(
        &file(&a.out, "rom.eromb"),
        &ops,
        json!({
            "basis": basis.fingerprint(),
            "snapshots": snaps.fingerprint(),
            "config": serde_json::to_value(&cfg)?,
        }),
    )?;
    fs::write(file(&a.out, "rom_diagnostics.csv"), diagnostics_csv(&run.diagnostics))?;
    let mut csv = String::from("time");
    for j in 0..run.u_n.len() {
        csv.push_str(&format!(",c{j}"));
    }
    csv.push('\n');
    for (t, u) in run.times.iter().zip(&run.trajectory) {
        csv.push_str(&format!("{t:e}"));
        for x in u {
            csv.push_str(&format!(",{x:e}"));
        }
        csv.push('\n');
    }
    fs::write(file(&a.out, "rom_trajectory.csv"), csv)?;
    if a.gnuplot {
        fs::write(
            file(&a.out, "rom_entropy.gp"),
            "set datafile separator ','\nset key autotitle columnhead\nset multiplot layout 2,1\n\
             plot 'rom_diagnostics.csv' using 2:3 with lines\n\
             plot 'rom_diagnostics.csv' using 2:4 with lines, '' using 2:5 with lines\n\
             unset multiplot\npause -1\n",
        )?;
    }
    println!(
        "rom: {} steps to t = {}, final entropy {:.10e}",
        run.steps,
        run.times.last().copied().unwrap_or(0.0),
        run.diagnostics.last().map_or(f64::NAN, |d| d.total_entropy)
    );
    Ok(())
}

/// Last row of a ROM trajectory CSV: `(time, coefficients)`.
fn last_trajectory_row(path: &Path) -> Result<(f64, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let bad = |d: String| Error::Format {
        kind: "trajectory",
        detail: d,
    };
    let line = text.lines().skip(1).filter(|l| !l.trim().is_empty()).last().ok_or_else(|| bad("no rows".into()))?;
    let vals: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
        .collect::<Result<_>>()?;
    Ok((vals[0], vals[1..].to_vec()))
}

fn cmd_diagnose(a: &DiagnoseArgs) -> Result<()> {
    let reference = io::read_snapshots(&a.reference.clone().unwrap_or_else(|| file(&a.out, "snapshots.esnap")))?;
    let u_ref = reference.data.col(reference.n_snapshots() - 1);
    let t_ref = reference.times.last().copied().unwrap_or(0.0);
    let traj = a.trajectory.clone().unwrap_or_else(|| file(&a.out, "rom_trajectory.csv"));
    let mut report = json!({});
    let (t, u) = if traj.extension().is_some_and(|e| e == "esnap") {
        let s = io::read_snapshots(&traj)?;
        (s.times.last().copied().unwrap_or(0.0), s.data.col(s.n_snapshots() - 1).to_vec())
    } else {
        let basis = read_basis_for(&reference, &a.out)?;
        let (t, u_n) = last_trajectory_row(&traj)?;
        report["singular_values"] = json!(pipeline::singular_value_table(&basis.singular_values, basis.n_modes()));
        report["basis_tol"] = json!(basis.tol);
        report["modes"] = json!(basis.n_modes());
        (t, basis.reconstruct(&u_n))
    };
    if u.len() != u_ref.len() {
        return Err(Error::Config(format!(
            "trajectory has {} values per state, reference has {}",
            u.len(),
            u_ref.len()
        )));
    }
    if (t - t_ref).abs() > 1e-12 * t_ref.abs().max(1.0) {
        return Err(Error::Config(format!("trajectory ends at t = {t}, reference at t = {t_ref}")));
    }
    let err = pipeline::relative_l2(&u, u_ref);
    report["relative_l2_error"] = json!(err);
    report["time"] = json!(t);
    let rules = file(&a.out, "rules.ecuba");
    if rules.exists() {
        report["points"] = serde_json::to_value(PointCounts::of(&io::read_rules(&rules)?))?;
    }
    let diag = file(&a.out, "rom_diagnostics.csv");
    if a.trajectory.is_none() && diag.exists() {
        report["entropy"] = entropy_summary(&fs::read_to_string(diag)?)?;
    }
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(file(&a.out, "report.json"), &text)?;
    println!("{text}");
    Ok(())
}

/// Extremes of the per-step entropy diagnostics.
fn entropy_summary(csv: &str) -> Result<serde_json::Value> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(s), Some(c), Some(d), Some(sc)) = (
        col("total_entropy"),
        col("convective_entropy_term"),
        col("viscous_dissipation"),
        col("entropy_scale"),
    ) else {
        return Err(Error::Format {
            kind: "diagnostics",
            detail: "missing entropy columns".into(),
        });
    };
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    let first = rows.first().map_or(f64::NAN, |r| r[s]);
    let last = rows.last().map_or(f64::NAN, |r| r[s]);
    Ok(json!({
        "initial_total_entropy": first,
        "final_total_entropy": last,
        "max_relative_convective_term": rows.iter().map(|r| (r[c] / r[sc]).abs()).fold(0.0, f64::max),
        "min_viscous_dissipation": rows.iter().map(|r| r[d]).fold(f64::INFINITY, f64::min),
        "steps": rows.len().saturating_sub(1),
    }))
}

fn cmd_preset(action: PresetAction) -> Result<()> {
    match action {
        PresetAction::List => {
            for (name, desc, _) in PRESETS {
                println!("{name:<14} {desc}");
            }
        }
        PresetAction::Show { name } => println!("{}", serde_json::to_string_pretty(&preset(&name)?)?),
    }
    Ok(())
}
