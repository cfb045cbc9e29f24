use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tssp::experiments::{convergence_study, find_threshold, gaussian_init, Ladder};
use tssp::io::{parse_config, write_snapshot, write_timeseries_file};
use tssp::stepper::{aligned_steps, evolve};
use tssp::{selftest, Error, InitSpec, SimConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "tssp", version, about = "Time-splitting spectral solver for damped NLS/GPE/CGL equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve a configuration, writing the diagnostics CSV and optional snapshots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated times at which to write field snapshots.
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Vec<f64>,
        /// Exit 0 even if the field diverges.
        #[arg(long)]
        allow_divergence: bool,
    },
    /// Search the damping strength that arrests blowup.
    Threshold {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        delta_lo: f64,
        #[arg(long)]
        delta_hi: f64,
        #[arg(long, default_value_t = 0.005)]
        tol: f64,
        /// Concurrent probes per round.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Self-convergence table over a k or M ladder.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// `k` halves the time step per level, `M` doubles the mesh.
        #[arg(long)]
        ladder: Ladder,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Check transforms and flow maps against independent oracles.
    Selftest,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Snapshot { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn load(path: &Path) -> Result<SimConfig, Error> {
    let text = fs::read_to_string(path)?;
    let cfg = parse_config(&text)?;
    if let InitSpec::Gaussian(spec) = &cfg.init {
        if let Some(tail) = gaussian_init(&cfg.grid()?, spec).1 {
            eprintln!("warning: initial Gaussian is {tail:.3e} on the domain boundary; enlarge the domain");
        }
    }
    Ok(cfg)
}

fn snapshot_path(prefix: &Path, step: u64) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_{step:09}.dnls"));
    PathBuf::from(name)
}

fn simulate(config: &Path, snapshot_times: &[f64], allow_divergence: bool) -> Result<u8, Error> {
    let cfg = load(config)?;
    let mut times = snapshot_times.to_vec();
    times.sort_by(f64::total_cmp);
    for &t in &times {
        if !(0.0..=cfg.t_end).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "snapshot time {t} lies outside [0, {}]",
                cfg.t_end
            )));
        }
        aligned_steps(0.0, t, cfg.k)?;
    }
    let mut state = cfg.build_state()?;
    let mut records = Vec::new();
    let mut written = Vec::new();
    let mut diverged_at = None;
    for t in times.iter().copied().chain(std::iter::once(cfg.t_end)) {
        let out = evolve(&mut state, t, cfg.stride, &mut [])?;
        let skip = usize::from(!records.is_empty());
        records.extend(out.records.into_iter().skip(skip));
        if out.diverged_at.is_some() {
            diverged_at = out.diverged_at;
            break;
        }
        if written.len() < times.len() {
            let path = snapshot_path(&cfg.output.snapshot_prefix, state.step_index());
            write_snapshot(state.field(), state.schedule().beta(state.time()), &path)?;
            written.push(path);
        }
    }
    write_timeseries_file(&records, &cfg.output.timeseries)?;
    eprintln!("wrote {} ({} rows)", cfg.output.timeseries.display(), records.len());
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    match diverged_at {
        Some(t) if !allow_divergence => {
            eprintln!("error: field diverged at t = {t}");
            Ok(EXIT_DIVERGED)
        }
        Some(t) => {
            eprintln!("note: field diverged at t = {t}");
            Ok(0)
        }
        None => Ok(0),
    }
}

fn run(args: impl IntoIterator<Item = OsString>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            snapshot_times,
            allow_divergence,
        } => simulate(&config, &snapshot_times, allow_divergence),
        Command::Threshold {
            config,
            delta_lo,
            delta_hi,
            tol,
            jobs,
        } => load(&config)
            .and_then(|cfg| find_threshold(&cfg, delta_lo, delta_hi, tol, jobs))
            .map(|r| {
                print!("{r}");
                if !r.monotone {
                    eprintln!("warning: classification is not monotone in delta (criterion instability)");
                }
                if !r.robust {
                    eprintln!("warning: doubling rho_cap changes the lower-end classification");
                }
                0
            }),
        Command::Convergence { config, ladder, levels } => load(&config)
            .and_then(|cfg| convergence_study(&cfg, ladder, levels))
            .map(|table| {
                print!("{table}");
                0
            }),
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { EXIT_USAGE })
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
