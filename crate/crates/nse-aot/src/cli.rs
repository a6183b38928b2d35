//! Command-line interface: six subcommands over the solver, the nudging
//! layer, and the record/replay machinery.
//!
//! Exit codes: 0 success; 1 when a computation completes but reaches a
//! negative verdict (tracking failure, infeasible schedule, blow-up);
//! 2 for configuration or usage errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adaptive::{run_adaptive, AdaptiveOptions};
use crate::assimilation::{
    compute_data_bound, find_k_inf, mu_window, tracking_report, DataBound, TrackingOptions,
    WindowPurpose,
};
use crate::dynamics::{
    integrate, low_mode_forcing, steady_beltrami_forcing, stokes_steady_state, Integrator,
    NudgeConfig, RunKind, RunOptions, SolverConfig,
};
use crate::error::{Error, Result};
use crate::field::{beltrami_field, random_div_free_field, SpectralField};
use crate::grid::{Dealias, GridSpec};
use crate::interpolant::{decode, estimate_type1_constants, InterpolantKind, InterpolantSpec};
use crate::io::{
    parse_length, read_series_csv, read_snapshot, write_series_csv, write_snapshot, FlatConfig,
    ObservationRecordReader, ObservationRecordWriter, OutputEntry, RecordHeader, RunManifest,
};

#[derive(Parser)]
#[command(
    name = "nse-aot",
    version,
    about = "Pseudo-spectral incompressible Navier-Stokes on a periodic box, \
             with feedback-nudging data assimilation"
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the reference flow; optionally record observations.
    Simulate(SimulateArgs),
    /// Twin experiment: truth plus nudged surrogate with live observations.
    Assimilate(AssimilateArgs),
    /// Interval-wise adaptive gain scheduling (modal observations).
    Adaptive(AdaptiveArgs),
    /// Analyses over records and series: cutoff scan, gain window, tracking.
    Analyze(AnalyzeArgs),
    /// Estimate interpolant bounding constants on random fields.
    InterpCheck(InterpCheckArgs),
    /// Re-run assimilation from a recorded observation stream.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file (`key = value` lines, dotted keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, repeatable: --set solver.nu=0.1
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Base RNG seed (forcing uses seed, initial data seed+1, unless the
    /// config pins them).
    #[arg(long)]
    seed: Option<u64>,
    /// Zero wall-clock fields in the manifest so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
    /// Directory for outputs (created if missing).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write an observation record of the run to this file (requires the
    /// interp.* keys to define the observation operator).
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct AssimilateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also record the live observation stream to this file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Write the tracking report JSON here (default tracking_report.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AdaptiveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Interval boundaries t1,t2,...,t_end (0 is implicit).
    #[arg(long)]
    boundaries: Option<String>,
    /// Modal observation cutoff eigenvalue.
    #[arg(long)]
    lambda_cutoff: Option<f64>,
    /// Write the schedule/report JSON here (default adaptive_report.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Observation record to analyze (kinf and window modes; optional extra
    /// data bound for tracking mode).
    #[arg(long)]
    record: Option<PathBuf>,
    /// kinf | window | tracking
    #[arg(long)]
    mode: String,
    /// Interpolant constant for the cutoff scan (default 1, the modal value).
    #[arg(long)]
    c: Option<f64>,
    /// Override the viscosity (default: the record's).
    #[arg(long)]
    nu: Option<f64>,
    /// Time window t0:t1 (default: the whole record).
    #[arg(long)]
    window: Option<String>,
    /// weak | regular (window mode; default regular).
    #[arg(long)]
    purpose: Option<String>,
    /// Diagnostics CSV (tracking mode).
    #[arg(long)]
    series: Option<PathBuf>,
    /// Gain used by the run under analysis (tracking mode).
    #[arg(long)]
    mu: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct InterpCheckArgs {
    /// modal | volume | mollified-volume
    #[arg(long)]
    kind: String,
    /// Cell size, `L/8` or a number (volume kinds).
    #[arg(long)]
    h: Option<String>,
    /// Cutoff eigenvalue (modal; `inf` allowed).
    #[arg(long)]
    lambda_cutoff: Option<String>,
    /// Mollifier radius as a fraction of h, in (0, 1/2].
    #[arg(long)]
    eps_fraction: Option<f64>,
    #[arg(long, default_value_t = 32)]
    grid_n: usize,
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    box_len: f64,
    #[arg(long, default_value_t = 120)]
    samples: usize,
    #[arg(long, default_value_t = 12345)]
    seed: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Observation record driving the run.
    #[arg(long)]
    record: PathBuf,
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Assimilate(a) => cmd_assimilate(a),
        Cmd::Adaptive(a) => cmd_adaptive(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::InterpCheck(a) => cmd_interp_check(a),
        Cmd::Replay(a) => cmd_replay(a),
    }
}

/// Process exit code for an error, per the documented convention.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Verdict(_)
        | Error::Infeasible(_)
        | Error::Blowup { .. }
        | Error::Unstable { .. } => 1,
        _ => 2,
    }
}

// --- config assembly ---------------------------------------------------------

struct Setup {
    cfg: FlatConfig,
    grid: GridSpec,
    solver: SolverConfig,
    ic: SpectralField,
    seed: u64,
    emit_every: usize,
    obs_every: usize,
}

fn load_config(common: &CommonArgs) -> Result<FlatConfig> {
    let mut cfg = match &common.config {
        Some(p) => FlatConfig::load(p)?,
        None => FlatConfig::default(),
    };
    for kv in &common.sets {
        cfg.set_override(kv)?;
    }
    Ok(cfg)
}

fn parse_f64_str(key: &str, s: &str) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf")
        || t.eq_ignore_ascii_case("+inf")
        || t.eq_ignore_ascii_case("infinity")
    {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| Error::Config(format!("`{key}` must be a number, got {s:?}")))
}

fn build_grid(cfg: &FlatConfig) -> Result<GridSpec> {
    let n = cfg.get_usize("grid.n", 0)?;
    if n == 0 {
        return Err(Error::Config("missing required config key `grid.n`".into()));
    }
    let box_len = cfg.get_f64("grid.box_len", std::f64::consts::TAU)?;
    let dealias = match cfg.get("grid.dealias").unwrap_or("two-thirds") {
        "two-thirds" => Dealias::TwoThirds,
        "none" => Dealias::None,
        other => {
            return Err(Error::Config(format!(
                "grid.dealias must be two-thirds or none, got {other:?}"
            )))
        }
    };
    GridSpec::new(n, box_len, dealias)
}

fn build_forcing(cfg: &FlatConfig, grid: GridSpec, nu: f64, seed: u64) -> Result<SpectralField> {
    match cfg.get("forcing.kind").unwrap_or("none") {
        "none" => Ok(SpectralField::zeros(grid)),
        "steady-beltrami" => {
            let a = cfg.get_f64("forcing.a", 1.0)?;
            let b = cfg.get_f64("forcing.b", 1.0)?;
            let c = cfg.get_f64("forcing.c", 1.0)?;
            Ok(steady_beltrami_forcing(grid, nu, a, b, c).0)
        }
        "low-mode" => {
            let amplitude = cfg.require_f64("forcing.amplitude")?;
            let k_max = cfg.get_usize("forcing.k_max", 2)? as i64;
            let spectrum = cfg.get_f64("forcing.spectrum", 1.0)?;
            let fseed = cfg.get_u64("forcing.seed", seed)?;
            low_mode_forcing(grid, fseed, spectrum, k_max, amplitude)
        }
        other => Err(Error::Config(format!("unknown forcing.kind {other:?}"))),
    }
}

/// Build an initial state from `<prefix>.kind` and friends. `prefix` is `ic`
/// for the reference flow and `w0` for the assimilating flow.
fn build_state(
    cfg: &FlatConfig,
    grid: GridSpec,
    forcing: &SpectralField,
    nu: f64,
    seed: u64,
    prefix: &str,
    default_kind: &str,
) -> Result<SpectralField> {
    let key = |s: &str| format!("{prefix}.{s}");
    let kind = cfg.get(&key("kind")).unwrap_or(default_kind).to_string();
    let mut state = match kind.as_str() {
        "zero" => SpectralField::zeros(grid),
        "beltrami" => {
            let a = cfg.get_f64(&key("a"), 1.0)?;
            let b = cfg.get_f64(&key("b"), 1.0)?;
            let c = cfg.get_f64(&key("c"), 1.0)?;
            beltrami_field(grid, a, b, c)
        }
        "random" => {
            let rseed = cfg.get_u64(&key("seed"), seed.wrapping_add(1))?;
            let k_max = cfg.get_usize(&key("k_max"), 3)? as i64;
            let spectrum = cfg.get_f64(&key("spectrum"), 1.5)?;
            random_div_free_field(grid, rseed, spectrum, k_max)?
        }
        "stokes-steady" => stokes_steady_state(forcing, nu),
        "snapshot" => {
            let path = cfg.require(&key("path"))?;
            let (field, _) = read_snapshot(path)?;
            if field.grid != grid {
                return Err(Error::Config(format!(
                    "snapshot {path} grid does not match the configured grid"
                )));
            }
            field
        }
        other => return Err(Error::Config(format!("unknown {prefix}.kind {other:?}"))),
    };
    if let Some(amp) = cfg.get(&key("amplitude")) {
        let target = parse_f64_str(&key("amplitude"), amp)?;
        let norm = state.sobolev_norm(0.0);
        if norm == 0.0 && target != 0.0 {
            return Err(Error::Config(format!(
                "{prefix}.amplitude set but the state has zero norm"
            )));
        }
        if norm > 0.0 {
            state.scale(target / norm);
        }
    }
    Ok(state)
}

fn build_solver(cfg: &FlatConfig, grid: GridSpec, forcing: SpectralField) -> Result<SolverConfig> {
    let nu = cfg.require_f64("solver.nu")?;
    let dt = cfg.require_f64("solver.dt")?;
    let t_end = cfg.require_f64("solver.t_end")?;
    let integrator = match cfg.get("solver.integrator").unwrap_or("if-rk4") {
        "if-rk2" => Integrator::IfRk2,
        "if-rk4" => Integrator::IfRk4,
        other => {
            return Err(Error::Config(format!(
                "solver.integrator must be if-rk2 or if-rk4, got {other:?}"
            )))
        }
    };
    let mut solver = SolverConfig::new(grid, nu, dt, t_end, integrator).with_forcing(forcing);
    solver.cfl = cfg.get_f64("solver.cfl", 0.5)?;
    solver.advection = cfg.get_bool("solver.advection", true)?;
    solver.validate()?;
    solver.n_steps()?;
    Ok(solver)
}

fn build_interpolant(cfg: &FlatConfig, grid: &GridSpec) -> Result<InterpolantSpec> {
    let kind = cfg.require("interp.kind")?;
    let mut spec = match kind {
        "modal" => {
            let lambda =
                parse_f64_str("interp.lambda_cutoff", cfg.require("interp.lambda_cutoff")?)?;
            InterpolantSpec::modal(lambda)
        }
        "volume" => {
            let h = cfg
                .get_length("interp.h", grid.box_len)?
                .ok_or_else(|| Error::Config("missing required config key `interp.h`".into()))?;
            InterpolantSpec::volume(h)
        }
        "mollified-volume" => {
            let h = cfg
                .get_length("interp.h", grid.box_len)?
                .ok_or_else(|| Error::Config("missing required config key `interp.h`".into()))?;
            let eps = cfg.get_f64("interp.eps_fraction", 0.5)?;
            InterpolantSpec::mollified_volume(h, eps)
        }
        other => return Err(Error::Config(format!("unknown interp.kind {other:?}"))),
    };
    for (key, slot) in [("interp.c1", 0usize), ("interp.c2", 1), ("interp.c3", 2)] {
        if let Some(v) = cfg.get(key) {
            let parsed = parse_f64_str(key, v)?;
            match slot {
                0 => spec.c1 = Some(parsed),
                1 => spec.c2 = Some(parsed),
                _ => spec.c3 = Some(parsed),
            }
        }
    }
    spec.validate(grid)?;
    if cfg.get_bool("interp.estimate", false)? {
        let samples = cfg.get_usize("interp.estimate_samples", 120)?;
        let eseed = cfg.get_u64("interp.estimate_seed", 9001)?;
        estimate_type1_constants(&mut spec, grid, samples, eseed)?;
    }
    Ok(spec)
}

fn build_setup(common: &CommonArgs) -> Result<Setup> {
    let cfg = load_config(common)?;
    let seed = match common.seed {
        Some(s) => s,
        None => cfg.get_u64("run.seed", 0)?,
    };
    let grid = build_grid(&cfg)?;
    let nu = cfg.require_f64("solver.nu")?;
    let forcing = build_forcing(&cfg, grid, nu, seed)?;
    let solver = build_solver(&cfg, grid, forcing)?;
    let ic = build_state(&cfg, grid, &solver.forcing, nu, seed, "ic", "zero")?;
    let emit_every = cfg.get_usize("output.emit_every", 1)?;
    let obs_every = cfg.get_usize("obs.every", 1)?;
    Ok(Setup { cfg, grid, solver, ic, seed, emit_every, obs_every })
}

/// L² norm of the forcing exactly as the stepper sees it (dealiased,
/// mean-free, divergence-free); this is what the data bounds should use.
fn sanitized_f_norm(solver: &SolverConfig) -> f64 {
    let mut f = solver.forcing.clone();
    crate::operators::dealias_in_place(&mut f);
    f.zero_mean();
    f.zero_nyquist();
    crate::operators::leray_project(&mut f);
    f.sobolev_norm(0.0)
}

fn resolve_out(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn start_manifest(command: &str, setup: &Setup) -> RunManifest {
    let mut config: BTreeMap<String, String> = setup.cfg.0.clone();
    config.insert("run.seed".into(), setup.seed.to_string());
    RunManifest::new(command, config, Some(setup.seed))
}

fn finish_manifest(
    mut manifest: RunManifest,
    common: &CommonArgs,
    started: std::time::Instant,
) -> Result<()> {
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    if common.deterministic {
        manifest.started_at = 0.0;
        manifest.wall_seconds = 0.0;
    }
    manifest.save(common.out_dir.join("run.json"))
}

fn make_record_writer(
    path: &Path,
    spec: &InterpolantSpec,
    setup: &Setup,
    run_hash: &str,
) -> Result<ObservationRecordWriter> {
    let header = RecordHeader {
        spec: spec.clone(),
        dt_obs: setup.solver.dt * setup.obs_every.max(1) as f64,
        grid: setup.grid,
        f_norm: sanitized_f_norm(&setup.solver),
        nu: setup.solver.nu,
        run_hash: run_hash.to_string(),
    };
    ObservationRecordWriter::create(path, &header)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("report does not serialize: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Print to stdout, treating a closed pipe (e.g. `| head`) as success.
fn emit_line(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(e.into()),
    }
}

// --- subcommands ---------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let setup = build_setup(&args.common)?;
    std::fs::create_dir_all(&args.common.out_dir)?;
    let mut manifest = start_manifest("simulate", &setup);

    let record_path = args.record.as_ref().map(|p| resolve_out(&args.common.out_dir, p));
    let record_spec = match &record_path {
        Some(_) => Some(build_interpolant(&setup.cfg, &setup.grid)?),
        None => None,
    };
    let mut writer = match (&record_path, &record_spec) {
        (Some(path), Some(spec)) => {
            Some(make_record_writer(path, spec, &setup, &manifest.run_hash)?)
        }
        _ => None,
    };
    let mut sink_fn;
    let obs_sink: Option<&mut dyn FnMut(f64, &[u8]) -> Result<()>> = match writer.as_mut() {
        Some(w) => {
            sink_fn = |t: f64, payload: &[u8]| w.append(t, payload);
            Some(&mut sink_fn)
        }
        None => None,
    };

    let out = integrate(
        &setup.ic,
        &setup.solver,
        RunKind::Reference,
        RunOptions {
            emit_every: setup.emit_every,
            obs_every: setup.obs_every,
            obs_sink,
            row_sink: None,
            record_spec,
        },
    )?;

    let series_path = args.common.out_dir.join("series.csv");
    write_series_csv(&series_path, &out.series)?;
    manifest
        .outputs
        .push(OutputEntry { path: series_path.display().to_string(), kind: "series-csv".into() });
    if let Some(path) = &record_path {
        manifest.outputs.push(OutputEntry {
            path: path.display().to_string(),
            kind: "observation-record".into(),
        });
    }
    if let Some(u) = &out.final_u {
        let snap = args.common.out_dir.join("final_state.nse3");
        write_snapshot(&snap, u, setup.solver.t_end)?;
        manifest
            .outputs
            .push(OutputEntry { path: snap.display().to_string(), kind: "snapshot".into() });
    }
    manifest.verdicts = serde_json::json!({
        "steps": out.steps_taken,
        "final_l2": out.series.rows.last().map(|r| r.l2_u),
    });
    finish_manifest(manifest, &args.common, started)?;
    emit_line(&format!(
        "simulate: {} steps, outputs in {}",
        out.steps_taken,
        args.common.out_dir.display()
    ))?;
    Ok(())
}

fn cmd_assimilate(args: AssimilateArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let setup = build_setup(&args.common)?;
    std::fs::create_dir_all(&args.common.out_dir)?;
    let mut manifest = start_manifest("assimilate", &setup);

    let spec = build_interpolant(&setup.cfg, &setup.grid)?;
    let mu = setup.cfg.require_f64("nudge.mu")?;
    let nudge = NudgeConfig { mu, interpolant: spec.clone() };
    let w0 = build_state(
        &setup.cfg,
        setup.grid,
        &setup.solver.forcing,
        setup.solver.nu,
        setup.seed,
        "w0",
        "zero",
    )?;

    let record_path = args.record.as_ref().map(|p| resolve_out(&args.common.out_dir, p));
    let mut writer = match &record_path {
        Some(path) => Some(make_record_writer(path, &spec, &setup, &manifest.run_hash)?),
        None => None,
    };
    let mut sink_fn;
    let obs_sink: Option<&mut dyn FnMut(f64, &[u8]) -> Result<()>> = match writer.as_mut() {
        Some(w) => {
            sink_fn = |t: f64, payload: &[u8]| w.append(t, payload);
            Some(&mut sink_fn)
        }
        None => None,
    };

    let out = integrate(
        &setup.ic,
        &setup.solver,
        RunKind::LiveTwin { nudge, w0 },
        RunOptions {
            emit_every: setup.emit_every,
            obs_every: setup.obs_every,
            obs_sink,
            row_sink: None,
            record_spec: None,
        },
    )?;

    let series_path = args.common.out_dir.join("series.csv");
    write_series_csv(&series_path, &out.series)?;
    manifest
        .outputs
        .push(OutputEntry { path: series_path.display().to_string(), kind: "series-csv".into() });
    if let Some(path) = &record_path {
        manifest.outputs.push(OutputEntry {
            path: path.display().to_string(),
            kind: "observation-record".into(),
        });
    }
    for (state, name) in [(&out.final_u, "final_state.nse3"), (&out.final_w, "final_nudged.nse3")]
    {
        if let Some(s) = state {
            let p = args.common.out_dir.join(name);
            write_snapshot(&p, s, setup.solver.t_end)?;
            manifest
                .outputs
                .push(OutputEntry { path: p.display().to_string(), kind: "snapshot".into() });
        }
    }

    // Tracking verdict against the run's own observed data.
    let f_norm = sanitized_f_norm(&setup.solver);
    let bound = compute_data_bound(
        out.series.rows.iter().map(|r| (r.time, r.obs_h1)),
        (0.0, setup.solver.t_end),
        f_norm,
        setup.solver.nu,
        setup.grid.lambda1(),
    )?;
    let report = tracking_report(&out.series, mu, Some(&bound), TrackingOptions::default())?;
    let report_path = resolve_out(
        &args.common.out_dir,
        args.report.as_deref().unwrap_or(Path::new("tracking_report.json")),
    );
    write_json(
        &report_path,
        &serde_json::to_value(&report).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    manifest.outputs.push(OutputEntry {
        path: report_path.display().to_string(),
        kind: "tracking-report".into(),
    });
    manifest.verdicts = serde_json::json!({
        "tracking": report.verdict,
        "envelope_ok": report.envelope_ok,
        "h1_bound_ok": report.h1_bound_ok,
        "fitted_rate": report.fitted_rate,
        "data_bound_m": bound.m,
    });
    finish_manifest(manifest, &args.common, started)?;
    emit_line(&format!("assimilate: {}", report.verdict))?;
    if report.envelope_ok == Some(false) || report.h1_bound_ok == Some(false) {
        return Err(Error::Verdict(report.verdict));
    }
    Ok(())
}

fn cmd_adaptive(args: AdaptiveArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let setup = build_setup(&args.common)?;
    std::fs::create_dir_all(&args.common.out_dir)?;
    let mut manifest = start_manifest("adaptive", &setup);

    let lambda_cutoff = match args.lambda_cutoff {
        Some(l) => l,
        None => {
            parse_f64_str("interp.lambda_cutoff", setup.cfg.require("interp.lambda_cutoff")?)?
        }
    };
    let boundary_text = match &args.boundaries {
        Some(b) => b.clone(),
        None => setup.cfg.require("adaptive.boundaries")?.to_string(),
    };
    let mut boundaries = vec![0.0];
    for part in boundary_text.split(',') {
        let t: f64 = part.trim().parse().map_err(|_| {
            Error::Config(format!("cannot parse boundary {part:?} in {boundary_text:?}"))
        })?;
        boundaries.push(t);
    }

    let mut opts = AdaptiveOptions {
        emit_every: setup.emit_every,
        obs_every: setup.obs_every,
        ..AdaptiveOptions::default()
    };
    if let Some(l) = setup.cfg.get("adaptive.lambda_upper") {
        opts.lambda_upper = Some(parse_f64_str("adaptive.lambda_upper", l)?);
    }
    opts.c = setup.cfg.get_f64("adaptive.c", opts.c)?;
    opts.tol = setup.cfg.get_f64("adaptive.tol", opts.tol)?;
    opts.floor_factor = setup.cfg.get_f64("adaptive.floor_factor", opts.floor_factor)?;

    let outcome = run_adaptive(&setup.ic, &setup.solver, &boundaries, lambda_cutoff, opts)?;

    let series_path = args.common.out_dir.join("series.csv");
    write_series_csv(&series_path, &outcome.series)?;
    manifest
        .outputs
        .push(OutputEntry { path: series_path.display().to_string(), kind: "series-csv".into() });
    let report_json = serde_json::json!({
        "schedule": outcome.schedule,
        "assumption": outcome.assumption,
        "envelope_ok": outcome.envelope_ok,
        "bound_ok": outcome.bound_ok,
    });
    let report_path = resolve_out(
        &args.common.out_dir,
        args.report.as_deref().unwrap_or(Path::new("adaptive_report.json")),
    );
    write_json(&report_path, &report_json)?;
    manifest.outputs.push(OutputEntry {
        path: report_path.display().to_string(),
        kind: "adaptive-report".into(),
    });
    manifest.verdicts = report_json;
    finish_manifest(manifest, &args.common, started)?;
    emit_line(&format!(
        "adaptive: {} intervals, assumption_ok = {}, envelope_ok = {}, bound_ok = {}",
        outcome.schedule.intervals.len(),
        outcome.assumption.ok,
        outcome.envelope_ok,
        outcome.bound_ok
    ))?;
    if !outcome.envelope_ok || !outcome.bound_ok {
        return Err(Error::Verdict(
            "adaptive run violated its decay envelope or data bound".into(),
        ));
    }
    Ok(())
}

fn parse_window(s: Option<&str>) -> Result<(f64, f64)> {
    match s {
        None => Ok((f64::NEG_INFINITY, f64::INFINITY)),
        Some(t) => {
            let Some((a, b)) = t.split_once(':') else {
                return Err(Error::Config(format!("--window expects t0:t1, got {t:?}")));
            };
            Ok((parse_f64_str("--window t0", a)?, parse_f64_str("--window t1", b)?))
        }
    }
}

/// H¹ norms of the decoded observations, streamed from a record.
fn record_h1_samples(reader: &ObservationRecordReader) -> Result<Vec<(f64, f64)>> {
    let header = reader.header();
    let mut samples = Vec::new();
    for b in reader.blocks()? {
        let (t, payload) = b?;
        let field = decode(&header.spec, header.grid, &payload)?;
        samples.push((t, field.sobolev_norm(1.0)));
    }
    Ok(samples)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let window = parse_window(args.window.as_deref())?;
    let need_record = |mode: &str| -> Result<ObservationRecordReader> {
        let p = args
            .record
            .as_ref()
            .ok_or_else(|| Error::Config(format!("analyze --mode {mode} needs --record")))?;
        ObservationRecordReader::open(p)
    };
    let report: serde_json::Value = match args.mode.as_str() {
        "kinf" => {
            let reader = need_record("kinf")?;
            let header = reader.header().clone();
            if !matches!(header.spec.kind, InterpolantKind::Modal { .. }) {
                return Err(Error::Config(
                    "the cutoff scan needs a modal observation record".into(),
                ));
            }
            let spec = header.spec.clone();
            let grid = header.grid;
            let nu = args.nu.unwrap_or(header.nu);
            let c = args.c.unwrap_or(1.0);
            let blocks = reader
                .blocks()?
                .map(|b| b.and_then(|(t, payload)| Ok((t, decode(&spec, grid, &payload)?))));
            let scan = find_k_inf(blocks, grid, nu, header.f_norm, c, window)?;
            serde_json::json!({
                "mode": "kinf",
                "lambda_star": scan.lambda_star,
                "M_K_curve": scan.curve,
                "window": null,
                "verdict": scan.verdict,
                "fitted_rate": null,
                "samples_used": scan.samples_used,
            })
        }
        "window" => {
            let reader = need_record("window")?;
            let header = reader.header().clone();
            let samples = record_h1_samples(&reader)?;
            let nu = args.nu.unwrap_or(header.nu);
            let bound =
                compute_data_bound(samples, window, header.f_norm, nu, header.grid.lambda1())?;
            let purpose = match args.purpose.as_deref().unwrap_or("regular") {
                "weak" => WindowPurpose::Weak,
                "regular" => WindowPurpose::Regular,
                other => {
                    return Err(Error::Config(format!(
                        "--purpose must be weak or regular, got {other:?}"
                    )))
                }
            };
            let w = mu_window(&header.spec, &bound, purpose)?;
            serde_json::json!({
                "mode": "window",
                "lambda_star": null,
                "M_K_curve": null,
                "window": w,
                "data_bound": bound,
                "recommended_mu": w.recommended_mu(),
                "verdict": if w.feasible { "feasible" } else { "infeasible" },
                "fitted_rate": null,
            })
        }
        "tracking" => {
            let series_path = args
                .series
                .as_ref()
                .ok_or_else(|| Error::Config("analyze --mode tracking needs --series".into()))?;
            let mu = args
                .mu
                .ok_or_else(|| Error::Config("analyze --mode tracking needs --mu".into()))?;
            let series = read_series_csv(series_path)?;
            let bound: Option<DataBound> = match &args.record {
                None => None,
                Some(_) => {
                    let reader = need_record("tracking")?;
                    let header = reader.header().clone();
                    let samples = record_h1_samples(&reader)?;
                    Some(compute_data_bound(
                        samples,
                        window,
                        header.f_norm,
                        args.nu.unwrap_or(header.nu),
                        header.grid.lambda1(),
                    )?)
                }
            };
            let report = tracking_report(&series, mu, bound.as_ref(), TrackingOptions::default())?;
            serde_json::json!({
                "mode": "tracking",
                "lambda_star": null,
                "M_K_curve": null,
                "window": null,
                "verdict": report.verdict,
                "fitted_rate": report.fitted_rate,
                "report": report,
            })
        }
        other => {
            return Err(Error::Config(format!(
                "--mode must be kinf, window, or tracking, got {other:?}"
            )))
        }
    };
    match &args.report {
        Some(p) => write_json(p, &report)?,
        None => emit_line(
            &serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Format(format!("report does not serialize: {e}")))?,
        )?,
    }
    Ok(())
}

fn cmd_interp_check(args: InterpCheckArgs) -> Result<()> {
    let grid = GridSpec::new(args.grid_n, args.box_len, Dealias::TwoThirds)?;
    let mut spec = match args.kind.as_str() {
        "modal" => {
            let lambda = parse_f64_str(
                "--lambda-cutoff",
                args.lambda_cutoff.as_deref().unwrap_or("inf"),
            )?;
            InterpolantSpec::modal(lambda)
        }
        "volume" => {
            let h_text = args
                .h
                .as_deref()
                .ok_or_else(|| Error::Config("--h is required for volume kinds".into()))?;
            InterpolantSpec::volume(parse_length("--h", h_text, grid.box_len)?)
        }
        "mollified-volume" => {
            let h_text = args
                .h
                .as_deref()
                .ok_or_else(|| Error::Config("--h is required for volume kinds".into()))?;
            InterpolantSpec::mollified_volume(
                parse_length("--h", h_text, grid.box_len)?,
                args.eps_fraction.unwrap_or(0.5),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "--kind must be modal, volume, or mollified-volume, got {other:?}"
            )))
        }
    };
    spec.validate(&grid)?;
    let (c1, c2, c3) = estimate_type1_constants(&mut spec, &grid, args.samples, args.seed)?;
    let out = serde_json::json!({
        "kind": args.kind,
        "grid_n": args.grid_n,
        "box_len": args.box_len,
        "h_effective": spec.h_effective(),
        "c1": c1,
        "c2": c2,
        "c3": if spec.c3.is_some() { serde_json::json!(c3) } else { serde_json::Value::Null },
        "worst_case_c": spec.worst_case_c()?,
        "protocol": spec.protocol,
    });
    emit_line(
        &serde_json::to_string_pretty(&out)
            .map_err(|e| Error::Format(format!("report does not serialize: {e}")))?,
    )?;
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let setup = build_setup(&args.common)?;
    std::fs::create_dir_all(&args.common.out_dir)?;
    let mut manifest = start_manifest("replay", &setup);

    let reader = ObservationRecordReader::open(&args.record)?;
    let header = reader.header().clone();
    if header.grid != setup.grid {
        return Err(Error::Config(format!(
            "record grid (n = {}, L = {}) does not match configured grid (n = {}, L = {})",
            header.grid.n, header.grid.box_len, setup.grid.n, setup.grid.box_len
        )));
    }
    let mu = setup.cfg.require_f64("nudge.mu")?;
    let nudge = NudgeConfig { mu, interpolant: header.spec.clone() };
    let w0 = build_state(
        &setup.cfg,
        setup.grid,
        &setup.solver.forcing,
        setup.solver.nu,
        setup.seed,
        "w0",
        "zero",
    )?;
    let mut blocks = reader.blocks()?;
    let out = integrate(
        &SpectralField::zeros(setup.grid),
        &setup.solver,
        RunKind::Replay { nudge, w0, blocks: &mut blocks, hold_dt: header.dt_obs },
        RunOptions {
            emit_every: setup.emit_every,
            obs_every: setup.obs_every,
            obs_sink: None,
            row_sink: None,
            record_spec: None,
        },
    )?;

    let series_path = args.common.out_dir.join("series.csv");
    write_series_csv(&series_path, &out.series)?;
    manifest
        .outputs
        .push(OutputEntry { path: series_path.display().to_string(), kind: "series-csv".into() });
    if let Some(w) = &out.final_w {
        let final_time = out.series.rows.last().map(|r| r.time).unwrap_or(0.0);
        let p = args.common.out_dir.join("final_nudged.nse3");
        write_snapshot(&p, w, final_time)?;
        manifest
            .outputs
            .push(OutputEntry { path: p.display().to_string(), kind: "snapshot".into() });
    }
    manifest.verdicts = serde_json::json!({
        "steps": out.steps_taken,
        "record": args.record.display().to_string(),
        "record_hash": header.run_hash,
    });
    finish_manifest(manifest, &args.common, started)?;
    emit_line(&format!("replay: {} steps from {}", out.steps_taken, args.record.display()))?;
    Ok(())
}
