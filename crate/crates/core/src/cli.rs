//! Command-line front end.
//!
//! | flag | meaning |
//! |------|---------|
//! | `--config <path>` | TOML run configuration (see [`crate::config`]) |
//! | `--set key=value` | override a configuration key, repeatable |
//! | `--out <dir>` | directory for CSV and manifest output |
//! | `--seed <u64>` | RNG seed, overrides the configuration |
//! | `--format csv` | output format (CSV is the only format) |
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 invalid physical
//! parameters or no solution, 4 numerical failure or tolerance violation,
//! 5 failed cross-check, 6 I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::checks::run_checks;
use crate::config::{load_config, parse_config_with, Engine, SweepSpec};
use crate::error::Error;
use crate::fcs::{cumulants, fully_mixed_line, CumulantResult, FdOptions, QUADRATURE_NOISE_FLOOR};
use crate::generators::{generator, Observable};
use crate::operators::{FeedbackMode, PureState, SystemParams};
use crate::steady::{overlap, stationary_limit, stationary_segment_ends, steady_state, DensityMatrix};
use crate::sweep::run_sweep;
use crate::trajectories::{homodyne_sme, jump_monte_carlo, TrajectoryConfig};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARAMS: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_CHECK: u8 = 5;
pub const EXIT_IO: u8 = 6;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "CHIRALFB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "chiralfb", version, about = "Feedback-controlled chiral atom chains: steady states, photon statistics, trajectories")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files and manifests.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed (overrides the configuration).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Override a configuration key, e.g. `--set rabi=2 --set feedback_strength=pi/2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary state: purity, overlaps, null-space dimension.
    Steady,
    /// Rate and fluctuations from the tilted generator.
    Fcs {
        /// Set the feedback gain on the fully mixed line for the configured
        /// chirality and quadrature angle.
        #[arg(long)]
        fully_mixed_line: bool,
    },
    /// Monte Carlo trajectory estimates next to the exact values.
    Traj,
    /// Evaluate the configured parameter grid.
    Sweep,
    /// Cross-oracle suite.
    Check,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_USAGE,
            Error::Io(_) => EXIT_IO,
            Error::InvalidParams(_)
            | Error::IndexOutOfRange { .. }
            | Error::WrongFeedbackMode { .. }
            | Error::NoFullyMixedSolution { .. }
            | Error::StepTooLarge(_)
            | Error::DimensionMismatch { .. } => EXIT_PARAMS,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", Cli::command().render_long_help());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

fn load_spec(common: &Common) -> Result<SweepSpec, Failure> {
    let mut spec = match &common.config {
        Some(path) => load_config(path, &common.overrides)?,
        None => parse_config_with("", &common.overrides).map_err(Error::from)?,
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn dispatch(cli: &Cli) -> CmdResult {
    let spec = load_spec(&cli.common)?;
    match &cli.command {
        Command::Steady => cmd_steady(&spec, &cli.common),
        Command::Fcs { fully_mixed_line } => cmd_fcs(&spec, &cli.common, *fully_mixed_line),
        Command::Traj => cmd_traj(&spec, &cli.common),
        Command::Sweep => cmd_sweep(&spec, &cli.common),
        Command::Check => cmd_check(&spec, &cli.common),
    }
}

/// Prints a CSV table to stdout and, with `--out`, writes it to `<out>/<name>.csv`.
fn emit(common: &Common, name: &str, header: &[&str], rows: &[Vec<String>]) -> CmdResult {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    print!("{text}");
    std::io::stdout().flush()?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{name}.csv")), &text)?;
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn state_row(label: &str, rho: &DensityMatrix, n: usize) -> Result<Vec<String>, Failure> {
    let gg = overlap(rho, &PureState::ground(n))?;
    let s = if n == 2 {
        num(overlap(rho, &PureState::singlet())?)
    } else {
        String::new()
    };
    Ok(vec![label.to_string(), num(rho.purity()), num(gg), s])
}

fn cmd_steady(spec: &SweepSpec, common: &Common) -> CmdResult {
    let p = &spec.base;
    let l = generator(p)?;
    let ss = steady_state(&l)?;
    let n = p.n_atoms;
    let mut rows = vec![state_row("stationary", &ss.state, n)?];
    if ss.is_degenerate() {
        eprintln!(
            "warning: degenerate stationary manifold (null-space dimension {}); the long-time state depends on the initial state",
            ss.null_space_dimension
        );
        rows[0][0] = "projected_maximally_mixed".into();
        let from_ground = stationary_limit(&l, &DensityMatrix::from_pure(&PureState::ground(n)))?;
        rows.push(state_row("limit_from_ground", &from_ground, n)?);
        if ss.null_space_dimension == 2 {
            let mut other = from_ground.clone();
            if crate::linalg::max_abs_diff(other.matrix(), ss.state.matrix()) < 1e-8 {
                let excited: Vec<usize> = (1..=n).collect();
                other = stationary_limit(&l, &DensityMatrix::from_pure(&PureState::product(n, &excited)?))?;
            }
            match stationary_segment_ends(&ss.state, &other) {
                Ok((a, b)) => {
                    rows.push(state_row("basin_extreme_1", &a, n)?);
                    rows.push(state_row("basin_extreme_2", &b, n)?);
                }
                Err(e) => eprintln!("warning: could not locate the extreme stationary states: {e}"),
            }
        }
    }
    for r in rows.iter_mut() {
        r.push(ss.null_space_dimension.to_string());
        r.push(num(ss.residual));
    }
    emit(
        common,
        "steady",
        &["state", "purity", "overlap_gg", "overlap_S", "nullspace_dim", "residual"],
        &rows,
    )
}

fn cumulant_row(c: &CumulantResult) -> Vec<String> {
    let name = match c.observable {
        Observable::Counting => "counting",
        Observable::Quadrature { .. } => "quadrature",
    };
    vec![
        name.to_string(),
        num(c.first_cumulant),
        num(c.second_cumulant),
        num(c.second_cumulant_excess()),
        format!("{:?}", c.method),
        num(c.fd_step),
        num(c.eigen_gap),
        (c.degenerate as u8).to_string(),
    ]
}

fn observables_for(p: &SystemParams) -> Vec<Observable> {
    match p.feedback_mode {
        FeedbackMode::None => vec![
            Observable::Counting,
            Observable::Quadrature {
                angle: p.quadrature_angle,
            },
        ],
        FeedbackMode::Counting => vec![Observable::Counting],
        FeedbackMode::Homodyne => vec![Observable::Quadrature {
            angle: p.quadrature_angle,
        }],
    }
}

fn cmd_fcs(spec: &SweepSpec, common: &Common, on_line: bool) -> CmdResult {
    let mut p = spec.base;
    if on_line {
        let g = match fully_mixed_line(p.delta_gamma(), p.gamma(), p.quadrature_angle) {
            Ok(g) => g,
            Err(e @ Error::NoFullyMixedSolution { .. }) => {
                eprintln!(
                    "no solution: the fully mixed line needs sin(alpha) != 0, got alpha = {}",
                    p.quadrature_angle
                );
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        };
        eprintln!("fully mixed line: g = {g}");
        p = p.with_homodyne_feedback(g, p.quadrature_angle);
    }
    let rows = observables_for(&p)
        .into_iter()
        .map(|o| cumulants(&p, o, FdOptions::default()).map(|c| cumulant_row(&c)))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(r) = rows.iter().find(|r| r[7] == "1") {
        eprintln!("warning: degenerate dominant eigenvalue for {}; finite differences used", r[0]);
    }
    if p.feedback_mode == FeedbackMode::Homodyne || p.feedback_mode == FeedbackMode::None {
        eprintln!("note: quadrature second cumulant includes the white-noise floor {QUADRATURE_NOISE_FLOOR}");
    }
    emit(
        common,
        "fcs",
        &[
            "observable",
            "first_cumulant",
            "second_cumulant",
            "second_cumulant_excess",
            "method",
            "fd_step",
            "eigen_gap",
            "degenerate",
        ],
        &rows,
    )
}

fn cmd_traj(spec: &SweepSpec, common: &Common) -> CmdResult {
    let p = spec.base;
    let t = &spec.trajectory;
    let cfg = TrajectoryConfig::new(p, t.t_final, t.dt, t.n_traj, spec.seed).with_burn_in(t.burn_in);
    let mut rows = Vec::new();
    if p.feedback_mode != FeedbackMode::Homodyne {
        let est = jump_monte_carlo(&cfg)?;
        let exact = cumulants(&p, Observable::Counting, FdOptions::default())?;
        rows.push(vec![
            "k_over_gamma".into(),
            num(est.mean),
            num(est.std_error),
            num(exact.first_cumulant),
        ]);
        rows.push(vec![
            "dk2_over_gamma".into(),
            num(est.variance_per_time),
            num(est.variance_std_error),
            num(exact.second_cumulant),
        ]);
    }
    if p.feedback_mode != FeedbackMode::Counting {
        let est = homodyne_sme(&cfg)?;
        let exact = cumulants(
            &p,
            Observable::Quadrature {
                angle: p.quadrature_angle,
            },
            FdOptions::default(),
        )?;
        rows.push(vec![
            "x_alpha_gamma_3_2".into(),
            num(est.mean / 2.0),
            num(est.std_error / 2.0),
            num(exact.first_cumulant),
        ]);
        rows.push(vec![
            "dx2_alpha_gamma_2".into(),
            num(est.variance_per_time / 4.0),
            num(est.variance_std_error / 4.0),
            num(exact.second_cumulant),
        ]);
    }
    emit(common, "traj", &["quantity", "trajectory", "stderr", "exact"], &rows)
}

fn cmd_sweep(spec: &SweepSpec, common: &Common) -> CmdResult {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let stem = common
        .config
        .as_deref()
        .and_then(Path::file_stem)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    if spec.engine != Engine::Exact && spec.len() > 1 {
        eprintln!("running {} points with {} trajectories each", spec.len(), spec.trajectory.n_traj);
    }
    let outcome = run_sweep(spec, &out, &stem)?;
    eprintln!(
        "wrote {} and {}",
        outcome.csv_path.display(),
        outcome.manifest_path.display()
    );
    if outcome.failed_points > 0 {
        eprintln!("warning: {} point(s) failed, see the manifest", outcome.failed_points);
    }
    if outcome.tolerance_violations > 0 {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("{} point(s) exceeded the residual tolerance", outcome.tolerance_violations),
        });
    }
    Ok(())
}

fn cmd_check(spec: &SweepSpec, common: &Common) -> CmdResult {
    let outcomes = run_checks(&spec.base, spec.seed);
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                if c.passed { "pass" } else { "FAIL" }.into(),
                format!("{:.3e}", c.value),
                format!("{:.1e}", c.tolerance),
                format!("\"{}\"", c.detail.replace('"', "'")),
            ]
        })
        .collect();
    emit(common, "check", &["check", "status", "value", "tolerance", "detail"], &rows)?;
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: EXIT_CHECK,
            message: format!("{failed} check(s) failed"),
        });
    }
    Ok(())
}
