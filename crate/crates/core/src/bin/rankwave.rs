//! Command-line entry point: simulation, evolution, frame and wave
//! solving, verification, and plot-data export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rankwave::config::RunConfig;
use rankwave::frame::{apply_operator_mc, fixed_point_with, FixedPointOpts, FrameSpec};
use rankwave::grid::GridCdf;
use rankwave::io;
use rankwave::kernels::{rate_smooth, wave_speed};
use rankwave::meanfield::{
    conservation_residual, integrate_with_snapshots, l1_distance_to_wave, IntegrateOpts, MeanFieldState, WindowPolicy,
};
use rankwave::particle::{empirical_sup_distance, run as particle_run};
use rankwave::verify;
use rankwave::wave::{solve_wave, wave_residual, SolveOpts, TuneOpts};
use rankwave::{Error, Result};

#[derive(Parser)]
#[command(name = "rankwave", version, about = "Quantile-interaction particle system: simulation and wave solvers")]
struct Cli {
    /// JSON run configuration (model, numerics, seed).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory (command-specific); overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for multi-replica commands (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Event-driven n-particle simulation with periodic snapshots.
    Simulate(SimulateArgs),
    /// Integrate the deterministic evolution of a CDF from a CSV.
    Evolve(EvolveArgs),
    /// Solve the finite-frame steady profile at a fixed drift speed.
    FrameSolve(FrameSolveArgs),
    /// Monte Carlo occupancy of the single-particle process in a fixed
    /// environment profile.
    FrameMc(FrameMcArgs),
    /// Compute the wave profile by growing frames and tuning the speed.
    WaveSolve(WaveSolveArgs),
    /// Evaluate the steady-profile residual of a profile CSV.
    WaveCheck(WaveCheckArgs),
    /// Run the verification suite; nonzero exit if any check fails.
    Verify,
    /// Align profiles and snapshots into plot-ready CSV tables.
    Plotdata(PlotdataArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    horizon: f64,
    /// Number of evenly spaced snapshots over (0, horizon].
    #[arg(long, default_value_t = 0)]
    snapshots: usize,
    /// Reference profile CSV; snapshots are recentered at their median
    /// and compared against it.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Use the binomially smoothed acceptance curve of this order as the
    /// finite-n curve.
    #[arg(long)]
    eta_smooth: Option<u32>,
    /// Start all particles at this point (default 0).
    #[arg(long, conflicts_with = "init_uniform")]
    init_point: Option<f64>,
    /// Start from seeded uniform draws on [A, B].
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    init_uniform: Option<Vec<f64>>,
}

#[derive(Args)]
struct EvolveArgs {
    /// Initial CDF as a two-column (x, F) CSV.
    #[arg(long)]
    initial: PathBuf,
    #[arg(long = "T")]
    t: f64,
    /// Grid step override; must agree with the initial CSV's grid.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 10)]
    snapshots: usize,
    /// Reference wave profile for the L1-distance series.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Keep the window fixed instead of tracking the profile.
    #[arg(long, default_value_t = false)]
    fixed_window: bool,
}

#[derive(Args)]
struct FrameSolveArgs {
    #[arg(long)]
    w: f64,
    #[arg(long = "BL")]
    bl: f64,
    #[arg(long = "BR")]
    br: f64,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct FrameMcArgs {
    /// Environment profile CSV (from frame-solve).
    #[arg(long)]
    gamma: PathBuf,
    /// Drift speed of the simulated particle.
    #[arg(long)]
    w: f64,
    /// Number of urge events, e.g. 1e7.
    #[arg(long)]
    events: f64,
}

#[derive(Args)]
struct WaveSolveArgs {
    /// Comma-separated frame half-widths, e.g. 5,10,20.
    #[arg(long, value_delimiter = ',')]
    frames: Vec<f64>,
    /// Stop when consecutive profiles agree to this sup distance.
    #[arg(long, default_value_t = 5e-3)]
    tol: f64,
}

#[derive(Args)]
struct WaveCheckArgs {
    #[arg(long)]
    phi: PathBuf,
    /// Interior margin in cells for the residual sup.
    #[arg(long)]
    margin: Option<usize>,
}

#[derive(Args)]
struct PlotdataArgs {
    /// Wave profile CSV.
    #[arg(long)]
    phi: Option<PathBuf>,
    /// Particle snapshot CSVs (one position column each).
    #[arg(long, num_args = 1..)]
    empirical: Vec<PathBuf>,
    /// Grid CDF CSVs (x, F).
    #[arg(long, num_args = 1..)]
    meanfield: Vec<PathBuf>,
    /// Directory of evolve snapshots for a long-format (t, x, F) table.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Recenter empirical CDFs at their median before aligning.
    #[arg(long, default_value_t = false)]
    recenter: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: failed to set up {t} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn out_path(cfg: &RunConfig, what: &str) -> Result<PathBuf> {
    cfg.out
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} needs --out (or an out entry in the config)")))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match &cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(&load_config(&cli)?, args),
        Cmd::Evolve(args) => cmd_evolve(&load_config(&cli)?, args),
        Cmd::FrameSolve(args) => cmd_frame_solve(&load_config(&cli)?, args),
        Cmd::FrameMc(args) => cmd_frame_mc(&load_config(&cli)?, args),
        Cmd::WaveSolve(args) => cmd_wave_solve(&load_config(&cli)?, args),
        Cmd::WaveCheck(args) => cmd_wave_check(&load_config(&cli)?, args),
        Cmd::Verify => cmd_verify(&load_config(&cli)?),
        Cmd::Plotdata(args) => cmd_plotdata(cli.out.as_deref(), args),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    n: usize,
    horizon: f64,
    seed: u64,
    urges: u64,
    accepted_jumps: u64,
    stream2_jumps: u64,
    mean_speed: f64,
    speed_stderr: f64,
    model_speed: f64,
    snapshot_times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sup_distance_to_reference: Option<Vec<f64>>,
}

fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<ExitCode> {
    let out = out_path(cfg, "simulate")?;
    let initial = match (&args.init_point, &args.init_uniform) {
        (_, Some(ab)) => {
            use rand::Rng;
            let (a, b) = (ab[0], ab[1]);
            let mut rng = rankwave::rng::stream(cfg.seed, "simulate-init");
            (0..args.n).map(|_| a + rng.gen::<f64>() * (b - a)).collect()
        }
        (p, None) => vec![p.unwrap_or(0.0); args.n],
    };
    let eta_n = match args.eta_smooth {
        Some(k) => rate_smooth(&cfg.model.rate, k),
        None => cfg.model.rate.clone(),
    };
    let schedule: Vec<f64> = (1..=args.snapshots)
        .map(|k| args.horizon * k as f64 / args.snapshots.max(1) as f64)
        .collect();
    let log = particle_run(&cfg.model, initial, &eta_n, args.horizon, cfg.seed, &schedule)?;

    let reference = args.reference.as_ref().map(|p| io::read_grid_csv(p)).transpose()?;
    let mut sups = Vec::new();
    let width = args.snapshots.max(1).to_string().len().max(2);
    for (i, snap) in log.snapshots.iter().enumerate() {
        io::write_positions_csv(&out.join(format!("snapshot_{:0width$}.csv", i + 1)), snap.cdf.positions())?;
        if let Some(reference) = &reference {
            sups.push(empirical_sup_distance(&snap.cdf.recenter_median(), reference));
        }
    }
    let summary = SimulateSummary {
        n: log.n,
        horizon: args.horizon,
        seed: cfg.seed,
        urges: log.urges,
        accepted_jumps: log.accepted,
        stream2_jumps: log.stream2,
        mean_speed: log.mean_speed(),
        speed_stderr: log.speed_stderr(),
        model_speed: wave_speed(&cfg.model),
        snapshot_times: log.snapshots.iter().map(|s| s.t).collect(),
        sup_distance_to_reference: reference.map(|_| sups),
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    println!("simulate: {} events over horizon {}; summary in {}", log.events(), args.horizon, out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvolveDiagnostics {
    t: Vec<f64>,
    conservation_residual: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l1_to_reference: Option<Vec<f64>>,
    /// Largest |d/dt f| seen: the empirical time-Lipschitz rate of the
    /// evolution (reported, not asserted).
    observed_max_rate: f64,
}

fn cmd_evolve(cfg: &RunConfig, args: &EvolveArgs) -> Result<ExitCode> {
    let out = out_path(cfg, "evolve")?;
    let f0 = io::read_grid_csv(&args.initial)?;
    if let Some(h) = args.h {
        if (h - f0.step()).abs() > 1e-9 * h {
            return Err(Error::Config(format!(
                "--h {} disagrees with the initial CSV's grid step {}",
                h,
                f0.step()
            )));
        }
    }
    let dt = args.dt.unwrap_or_else(|| cfg.numerics.dt());
    let reference = args.reference.as_ref().map(|p| io::read_grid_csv(p)).transpose()?;
    let opts = IntegrateOpts {
        dt,
        tail_tol: cfg.numerics.tail_tol,
        window: if args.fixed_window { WindowPolicy::Fixed } else { WindowPolicy::Moving { interval: 1.0 } },
    };
    let times: Vec<f64> = (1..=args.snapshots.max(1))
        .map(|k| args.t * k as f64 / args.snapshots.max(1) as f64)
        .collect();

    let mut max_rate = 0.0f64;
    let mut diag = EvolveDiagnostics {
        t: Vec::new(),
        conservation_residual: Vec::new(),
        l1_to_reference: reference.as_ref().map(|_| Vec::new()),
        observed_max_rate: 0.0,
    };
    let mut io_error: Option<Error> = None;
    let state0 = MeanFieldState::new(f0.clone());
    integrate_with_snapshots(state0, &times, &cfg.model, &opts, |state| {
        let rate = rankwave::meanfield::rhs(&state.f, &cfg.model).iter().fold(0.0f64, |m, r| m.max(r.abs()));
        max_rate = max_rate.max(rate);
        if let Err(e) = io::write_grid_csv(&out.join(format!("snapshot_t{:.3}.csv", state.t)), &state.f, "F") {
            io_error.get_or_insert(e);
        }
        diag.t.push(state.t);
        diag.conservation_residual.push(conservation_residual(&f0, &state.f, state.t, &cfg.model));
        if let (Some(reference), Some(series)) = (&reference, diag.l1_to_reference.as_mut()) {
            if let Ok(d) = l1_distance_to_wave(state, reference, &cfg.model) {
                series.push(d);
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    diag.observed_max_rate = max_rate;
    io::write_json(&out.join("diagnostics.json"), &diag)?;
    println!(
        "evolve: T={} in steps of {}; max conservation residual {:.3e}; outputs in {}",
        args.t,
        dt,
        diag.conservation_residual.iter().cloned().fold(0.0, f64::max),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_frame_solve(cfg: &RunConfig, args: &FrameSolveArgs) -> Result<ExitCode> {
    let out = out_path(cfg, "frame-solve")?;
    let h = args.h.unwrap_or(cfg.numerics.h);
    let spec = FrameSpec::new(args.w, args.bl, args.br, h)?;
    let opts = FixedPointOpts { fp_tol: cfg.numerics.fp_tol, zeta_min: cfg.numerics.zeta_min, ..Default::default() };
    let gamma = fixed_point_with(&spec, &cfg.model, &opts)?;
    io::write_grid_csv(&out, &gamma, "gamma")?;
    println!(
        "frame-solve: atom {:.6e}, median {:.6}; profile in {}",
        gamma.atom_mass(),
        gamma.median(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_frame_mc(cfg: &RunConfig, args: &FrameMcArgs) -> Result<ExitCode> {
    let out = out_path(cfg, "frame-mc")?;
    let gamma = io::read_grid_csv(&args.gamma)?;
    let spec = FrameSpec::new(args.w, -gamma.left(), gamma.right(), gamma.step())?;
    let events = args.events.round();
    if !(1.0..=1e12).contains(&events) {
        return Err(Error::Config(format!("--events must be in [1, 1e12], got {}", args.events)));
    }
    let occ = apply_operator_mc(&gamma, &spec, &cfg.model, events as u64, cfg.seed)?;
    io::write_grid_csv(&out, &occ, "gamma")?;
    println!(
        "frame-mc: {} events, atom {:.6e}, sup distance to the input {:.4e}; profile in {}",
        events as u64,
        occ.atom_mass(),
        gamma.sup_distance(&occ),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct WaveSolveJson<'a> {
    frames: &'a [rankwave::wave::FrameRecord],
    w_final: f64,
    v: f64,
    converged: bool,
    proper: bool,
    tol: f64,
    median: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stopped_early: Option<String>,
}

fn cmd_wave_solve(cfg: &RunConfig, args: &WaveSolveArgs) -> Result<ExitCode> {
    let out = out_path(cfg, "wave-solve")?;
    let opts = SolveOpts {
        tol: args.tol,
        tail_tol: cfg.numerics.tail_tol,
        tune: TuneOpts {
            median_tol: cfg.numerics.median_tol,
            fp: FixedPointOpts { fp_tol: cfg.numerics.fp_tol, zeta_min: cfg.numerics.zeta_min, ..Default::default() },
            ..Default::default()
        },
    };
    let report = solve_wave(&args.frames, cfg.numerics.h, &cfg.model, &opts)?;
    io::write_grid_csv(&out.join("phi.csv"), &report.phi, "phi")?;
    io::write_json(
        &out.join("report.json"),
        &WaveSolveJson {
            frames: &report.frames,
            w_final: report.w_final,
            v: report.v,
            converged: report.converged,
            proper: report.proper,
            tol: report.tol,
            median: report.phi.median(),
            stopped_early: report.stopped_early.clone(),
        },
    )?;
    println!(
        "wave-solve: w_B = {:.6} (v = {:.6}), converged = {}, profile on [{:.2}, {:.2}] in {}",
        report.w_final,
        report.v,
        report.converged,
        report.phi.left(),
        report.phi.right(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct WaveCheckJson {
    residual: f64,
    h: f64,
    window: (f64, f64),
    v: f64,
}

fn cmd_wave_check(cfg: &RunConfig, args: &WaveCheckArgs) -> Result<ExitCode> {
    let phi = io::read_grid_csv(&args.phi)?;
    let residual = wave_residual(&phi, &cfg.model, args.margin)?;
    let result =
        WaveCheckJson { residual, h: phi.step(), window: (phi.left(), phi.right()), v: wave_speed(&cfg.model) };
    println!("{}", serde_json::to_string_pretty(&result).expect("serializable"));
    if let Some(out) = &cfg.out {
        io::write_json(out, &result)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cfg: &RunConfig) -> Result<ExitCode> {
    let checks = verify::run_all(cfg);
    let mut summary = String::new();
    for c in &checks {
        println!("{}", c.line());
        summary.push_str(&c.line());
        summary.push('\n');
    }
    let ok = verify::all_passed(&checks);
    summary.push_str(if ok { "RESULT: PASS\n" } else { "RESULT: FAIL\n" });
    println!("RESULT: {}", if ok { "PASS" } else { "FAIL" });
    if let Some(out) = &cfg.out {
        io::write_json(&out.join("report.json"), &checks)?;
        std::fs::write(out.join("summary.txt"), summary)
            .map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_plotdata(out: Option<&Path>, args: &PlotdataArgs) -> Result<ExitCode> {
    let out = out.ok_or_else(|| Error::Config("plotdata needs --out".into()))?;
    let mut grids: Vec<(String, GridCdf)> = Vec::new();
    if let Some(p) = &args.phi {
        grids.push(("phi".into(), io::read_grid_csv(p)?));
    }
    for (i, p) in args.meanfield.iter().enumerate() {
        grids.push((format!("meanfield_{}", i + 1), io::read_grid_csv(p)?));
    }
    let mut empiricals: Vec<(String, rankwave::particle::EmpiricalCdf)> = Vec::new();
    for (i, p) in args.empirical.iter().enumerate() {
        let positions = io::read_positions_csv(p)?;
        let cdf = rankwave::particle::EmpiricalCdf::new(positions);
        empiricals.push((format!("empirical_{}", i + 1), if args.recenter { cdf.recenter_median() } else { cdf }));
    }
    if grids.is_empty() && empiricals.is_empty() && args.series.is_none() {
        return Err(Error::Config(
            "plotdata needs at least one input (--phi/--meanfield/--empirical/--series)".into(),
        ));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;

    let mut emitted: Vec<String> = Vec::new();
    if !grids.is_empty() || !empiricals.is_empty() {
        // Overlap window across all inputs.
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut windows: Vec<(String, f64, f64)> = Vec::new();
        for (name, g) in &grids {
            lo = lo.max(g.left());
            hi = hi.min(g.right());
            windows.push((name.clone(), g.left(), g.right()));
        }
        for (name, e) in &empiricals {
            let (a, b) = (e.positions()[0], *e.positions().last().unwrap());
            lo = lo.max(a);
            hi = hi.min(b);
            windows.push((name.clone(), a, b));
        }
        if lo >= hi {
            let listing =
                windows.iter().map(|(n, a, b)| format!("{n}: [{a:.4}, {b:.4}]")).collect::<Vec<_>>().join("; ");
            return Err(Error::Config(format!("input windows do not overlap: {listing}")));
        }
        // Sample on the finest grid step among the grid inputs.
        let step = grids.iter().map(|(_, g)| g.step()).fold(f64::INFINITY, f64::min);
        let step = if step.is_finite() { step } else { (hi - lo) / 400.0 };
        let n = ((hi - lo) / step).floor() as usize + 1;
        let mut table = String::from("x");
        for (name, _) in &grids {
            table.push(',');
            table.push_str(name);
        }
        for (name, _) in &empiricals {
            table.push(',');
            table.push_str(name);
        }
        table.push('\n');
        for i in 0..n {
            let x = lo + i as f64 * step;
            table.push_str(&io::fmt_sig(x));
            for (_, g) in &grids {
                table.push(',');
                table.push_str(&io::fmt_sig(g.eval(x)));
            }
            for (_, e) in &empiricals {
                table.push(',');
                table.push_str(&io::fmt_sig(e.eval(x)));
            }
            table.push('\n');
        }
        let path = out.join("overlay.csv");
        std::fs::write(&path, table).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        emitted.push("overlay.csv".into());
    }

    if let Some(dir) = &args.series {
        let mut rows: Vec<(f64, GridCdf)> = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::Io { path: dir.display().to_string(), source: e })?;
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(t) = name.strip_prefix("snapshot_t").and_then(|s| s.strip_suffix(".csv")) {
                if let Ok(t) = t.parse::<f64>() {
                    rows.push((t, io::read_grid_csv(&entry.path())?));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Config(format!("no snapshot_t*.csv files in {}", dir.display())));
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut table = String::from("t,x,F\n");
        for (t, g) in &rows {
            for (i, v) in g.values().iter().enumerate() {
                table.push_str(&io::fmt_sig(*t));
                table.push(',');
                table.push_str(&io::fmt_sig(g.node(i)));
                table.push(',');
                table.push_str(&io::fmt_sig(*v));
                table.push('\n');
            }
        }
        let path = out.join("series.csv");
        std::fs::write(&path, table).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        emitted.push("series.csv".into());
    }

    // A gnuplot script referencing only the files written above.
    let mut gp = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x'\nset ylabel 'F'\n",
    );
    if emitted.iter().any(|f| f == "overlay.csv") {
        gp.push_str("plot for [i=2:*] 'overlay.csv' using 1:i with lines\n");
    }
    if emitted.iter().any(|f| f == "series.csv") {
        gp.push_str("# series.csv is long-format (t, x, F); e.g.:\n# plot 'series.csv' using 2:3 with dots\n");
    }
    let path = out.join("plot.gp");
    std::fs::write(&path, gp).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    println!("plotdata: wrote {} and plot.gp in {}", emitted.join(", "), out.display());
    Ok(ExitCode::SUCCESS)
}
