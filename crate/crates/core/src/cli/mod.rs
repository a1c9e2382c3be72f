//! Command-line front end: `run`, `check` and `diag`.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{stationarity_report, test_function_library};
use crate::dynamics::{run as run_dynamics, FieldCoupling, SchemeConfig, SimState};
use crate::energetics::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::DomainGeometry;
use crate::maxwell::{init_divfree, EMState, H0Spec, StaggeredField, YeeBox};
use crate::vec3::{norm, scale, Vec3};

pub use config::{parse_config, print_config, RunConfig};
use config::InitialCondition;
use output::{read_snapshot, write_atomic, write_snapshot, CsvWriter, FieldId, RunLock, Snapshot};

pub const ENERGY_FILE: &str = "energy.csv";
pub const CONFIG_FILE: &str = "effective_config.toml";
const STATE_DIR: &str = "state";
const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Parser)]
#[command(name = "spinlayer", version, about = "Landau-Lifshitz-Maxwell bilayer simulator")]
pub struct Cli {
    /// Worker threads, 0 for one per core. Falls back to SPINLAYER_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Steps between energy rows; overrides `output.every`.
    #[arg(long, global = true)]
    pub log_every: Option<usize>,
    #[arg(long, global = true)]
    pub snapshots: Option<Toggle>,
    /// Seed for the random initial condition.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a configuration and write its artifacts.
    Run { config: PathBuf },
    /// Validate a configuration without writing anything.
    Check { config: PathBuf },
    /// Recompute final-state diagnostics of a finished run.
    Diag { dir: PathBuf },
}

/// Entry point; returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.or_else(|| std::env::var("SPINLAYER_THREADS").ok().and_then(|s| s.parse().ok()));
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Validation { field: "threads".into(), reason: e.to_string() })
        .and_then(|pool| pool.install(|| dispatch(&cli)));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: kind={} code={} message={}", e.kind(), e.exit_code(), e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Check { config } => {
            let config = load_config(config, cli)?;
            let geom = config.geometry()?;
            initial_magnetization(&config, &geom)?;
            print!("{}", print_config(&config));
            Ok(())
        }
        Command::Run { config } => {
            let config = load_config(config, cli)?;
            let summary = run_config(&config)?;
            println!("ok steps={} t={:.16e} total={:.16e}", summary.steps, summary.t, summary.total);
            Ok(())
        }
        Command::Diag { dir } => {
            let report = diagnose(dir)?;
            println!(
                "ok final_row_match=true max_stationarity={:.16e} divergence_drift={:.16e}",
                report.max_stationarity, report.divergence_drift
            );
            Ok(())
        }
    }
}

/// Reads a configuration file and applies command-line overrides.
pub fn load_config(path: &Path, cli: &Cli) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let mut config = parse_config(&text)?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    if let Some(every) = cli.log_every {
        config.output.every = every;
    }
    if let Some(t) = cli.snapshots {
        config.output.snapshots = t == Toggle::On;
    }
    if let Some(seed) = cli.seed {
        match &mut config.initial {
            InitialCondition::Random { seed: s } => *s = seed,
            _ => {
                return Err(Error::Validation {
                    field: "seed".into(),
                    reason: "--seed needs the random initial preset".into(),
                })
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Uniform random unit vector from two uniform deviates.
pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

pub fn initial_magnetization(config: &RunConfig, geom: &DomainGeometry) -> Result<VectorField> {
    let dims = geom.dims();
    match &config.initial {
        InitialCondition::Uniform { direction } => Ok(VectorField::uniform(dims, scale(1.0 / norm(*direction), *direction))),
        InitialCondition::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(VectorField::from_fn(dims, |_, _, _| random_unit(&mut rng)))
        }
        InitialCondition::Vortexish => {
            let (cx, cy) = (0.5 * geom.base_lx, 0.5 * geom.base_ly);
            let core = 0.25 * geom.base_lx.min(geom.base_ly);
            Ok(VectorField::from_fn(dims, |i, j, k| {
                let c = geom.cell_center(i, j, k);
                let (x, y) = (c[0] - cx, c[1] - cy);
                let r = x.hypot(y);
                let mz = (-(r / core).powi(2)).exp();
                let s = (1.0 - mz * mz).sqrt();
                if r > 0.0 {
                    [-s * y / r, s * x / r, mz]
                } else {
                    [0.0, 0.0, 1.0]
                }
            }))
        }
        InitialCondition::Snapshot { path } => {
            let snap = read_snapshot(path)?;
            let m = snap.to_vector().map_err(|e| Error::Snapshot { path: path.clone(), reason: e.to_string() })?;
            if m.dims() != dims {
                return Err(Error::ShapeMismatch { expected: dims, found: m.dims() });
            }
            if !m.is_finite() {
                return Err(Error::NonFinite { step: 0, what: format!("snapshot {}", path.display()) });
            }
            Ok(m)
        }
    }
}

fn substep(scheme: &SchemeConfig) -> f64 {
    scheme.dt / scheme.subcycles as f64
}

/// Builds the initial simulation state of a configuration.
pub fn build_state(config: &RunConfig) -> Result<(SimState, SchemeConfig)> {
    let geom = config.geometry()?;
    let params = config.material_params(&geom)?;
    let scheme = config.scheme_config()?;
    let m0 = initial_magnetization(config, &geom)?;
    let coupling = if config.maxwell.enabled {
        let em = init_divfree(&m0, &geom, config.maxwell.padding, &H0Spec::Magnetostatic, config.maxwell.bc, substep(&scheme))?;
        FieldCoupling::Maxwell(em)
    } else {
        FieldCoupling::Static(VectorField::uniform(geom.dims(), config.maxwell.applied_field))
    };
    let state = SimState::new(geom, params, m0, coupling)?;
    state.check_scheme(&scheme)?;
    Ok((state, scheme))
}

/// One energy.csv row.
pub fn energy_row(state: &SimState, e: &EnergyBreakdown) -> [f64; 15] {
    let i = state.integrals;
    [
        state.t,
        e.exchange,
        e.anisotropy,
        e.maxwell_h,
        e.maxwell_e,
        e.surf_anis,
        e.superexch_q,
        e.superexch_biq,
        e.penalty,
        e.total,
        i.dissipation,
        i.ohmic,
        i.source,
        state.saturation_deviation(),
        state.divergence_drift(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub t: f64,
    pub total: f64,
}

const FACE_IDS: [FieldId; 3] = [FieldId::FaceX, FieldId::FaceY, FieldId::FaceZ];
const EDGE_IDS: [FieldId; 3] = [FieldId::EdgeX, FieldId::EdgeY, FieldId::EdgeZ];
const AXES: [&str; 3] = ["x", "y", "z"];

fn write_state(dir: &Path, tag: &str, state: &SimState) -> Result<()> {
    let spacing = state.geom.spacings();
    write_snapshot(&dir.join(format!("{tag}_m.bin")), &Snapshot::from_vector(FieldId::Magnetization, &state.m, spacing, state.t))?;
    if let Some(em) = state.em() {
        for a in 0..3 {
            let h = Snapshot::from_scalar(FACE_IDS[a], &em.h.comps[a], em.yee.spacing, state.t);
            write_snapshot(&dir.join(format!("{tag}_h_{}.bin", AXES[a])), &h)?;
            let e = Snapshot::from_scalar(EDGE_IDS[a], &em.e.comps[a], em.yee.spacing, state.t);
            write_snapshot(&dir.join(format!("{tag}_e_{}.bin", AXES[a])), &e)?;
        }
    }
    Ok(())
}

fn read_staggered(dir: &Path, tag: &str, kind: char, yee: &YeeBox) -> Result<StaggeredField> {
    let mut f = if kind == 'h' { StaggeredField::faces(yee) } else { StaggeredField::edges(yee) };
    for a in 0..3 {
        let path = dir.join(format!("{tag}_{kind}_{}.bin", AXES[a]));
        let g = read_snapshot(&path)?.to_scalar()?;
        if g.dims != f.comps[a].dims {
            return Err(Error::ShapeMismatch { expected: f.comps[a].dims, found: g.dims });
        }
        f.comps[a] = g;
    }
    Ok(f)
}

/// Integrates `config` and writes its artifacts under `output.directory`.
pub fn run_config(config: &RunConfig) -> Result<RunSummary> {
    let (mut state, scheme) = build_state(config)?;
    let dir = config.output.directory.clone();
    let _lock = RunLock::acquire(&dir)?;
    write_atomic(&dir.join(CONFIG_FILE), print_config(config).as_bytes())?;
    let state_dir = dir.join(STATE_DIR);
    fs::create_dir_all(&state_dir)?;
    write_state(&state_dir, "initial", &state)?;
    let snap_dir = dir.join(SNAPSHOT_DIR);
    if config.output.snapshots {
        fs::create_dir_all(&snap_dir)?;
    }

    let mut csv = CsvWriter::create(&dir.join(ENERGY_FILE))?;
    let mut total = 0.0;
    run_dynamics(&mut state, &scheme, config.t_end, config.output.every, |s| {
        let e = s.energy(&scheme)?;
        let row = energy_row(s, &e);
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: s.step, what: "energy row".into() });
        }
        total = e.total;
        csv.row(&row)?;
        if config.output.snapshots {
            let snap = Snapshot::from_vector(FieldId::Magnetization, &s.m, s.geom.spacings(), s.t);
            write_snapshot(&snap_dir.join(format!("m_{:08}.bin", s.step)), &snap)?;
        }
        Ok(())
    })?;
    write_state(&state_dir, "final", &state)?;
    csv.finish()?;
    Ok(RunSummary { steps: state.step, t: state.t, total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagReport {
    /// Recomputed final row, formatted as in energy.csv.
    pub final_row: String,
    pub max_stationarity: f64,
    pub divergence_drift: f64,
}

/// Columns of the final row that depend only on the final state.
const STATE_COLUMNS: [usize; 11] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 13];

/// Rebuilds the final state of a finished run and checks it against the last
/// energy row.
pub fn diagnose(dir: &Path) -> Result<DiagReport> {
    let config = parse_config(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let geom = config.geometry()?;
    let params = config.material_params(&geom)?;
    let scheme = config.scheme_config()?;
    let state_dir = dir.join(STATE_DIR);
    let m_snap = read_snapshot(&state_dir.join("final_m.bin"))?;
    let m = m_snap.to_vector()?;
    let coupling = if config.maxwell.enabled {
        let m0 = read_snapshot(&state_dir.join("initial_m.bin"))?.to_vector()?;
        let yee = YeeBox::around(&geom, config.maxwell.padding);
        let mut em = EMState::new(yee, config.maxwell.bc, substep(&scheme));
        em.h = read_staggered(&state_dir, "initial", 'h', &yee)?;
        em.reset_div_ref(&m0);
        em.h = read_staggered(&state_dir, "final", 'h', &yee)?;
        em.e = read_staggered(&state_dir, "final", 'e', &yee)?;
        FieldCoupling::Maxwell(em)
    } else {
        FieldCoupling::Static(VectorField::uniform(geom.dims(), config.maxwell.applied_field))
    };
    let mut state = SimState::new(geom, params, m, coupling)?;
    state.t = m_snap.t;
    let e = state.energy(&scheme)?;
    let row = output::format_row(&energy_row(&state, &e));

    let csv = fs::read_to_string(dir.join(ENERGY_FILE))?;
    let stored = csv.lines().last().unwrap_or_default();
    let stored: Vec<&str> = stored.split(',').collect();
    let fresh: Vec<&str> = row.split(',').collect();
    if stored.len() != fresh.len() {
        return Err(Error::Validation { field: ENERGY_FILE.into(), reason: "final row has the wrong column count".into() });
    }
    for c in STATE_COLUMNS.into_iter().chain((state.em().is_some()).then_some(14)) {
        if stored[c] != fresh[c] {
            return Err(Error::Validation {
                field: format!("{ENERGY_FILE}:{}", output::CSV_COLUMNS[c]),
                reason: format!("stored {} but recomputed {}", stored[c], fresh[c]),
            });
        }
    }
    let h = state.h_cells();
    let report = stationarity_report(&state.m, &h, &state.params, &state.geom, &test_function_library())?;
    let max_stationarity = report.iter().fold(0.0_f64, |a, &(_, r)| a.max(r));
    Ok(DiagReport { final_row: row, max_stationarity, divergence_drift: state.divergence_drift() })
}
