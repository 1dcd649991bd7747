//! `lapwave`: runs propagation scenarios from flat config files.

mod check;
mod config;
mod runner;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use lapwave::{GaussianPacket, PotentialSpec, QuadratureSpec, SeriesPolicy, UnitSystem};

use config::{ConfigError, Method, PacketSource, Scenario};

/// Environment variable that overrides the output root of the config file.
const OUTPUT_ENV: &str = "LAPWAVE_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "lapwave_runs";

#[derive(Parser)]
#[command(name = "lapwave", version, about = "Wave-packet propagation in piecewise-constant potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario and write snapshots, diagnostics and a manifest.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set p0=12`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output root; the run goes to `<out>/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a scenario with two methods and report their distance.
    Compare {
        config: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce one of the two step figures.
    Figure {
        which: Figure,
        /// Method for the curves; the captions use the approximations.
        #[arg(long, default_value = "step_approx")]
        method: String,
        #[arg(long)]
        n_points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in self-tests.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    /// Packet climbing a step: V = 10⁴/3, p0 = 100.
    Fig1,
    /// Packet below a step: V = 200, p0 = 10.
    Fig2,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("lapwave: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 bad configuration, 3 accuracy, 4 violated precondition, 1 anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<lapwave::Error>() {
        Some(
            lapwave::Error::InvalidArgument(_)
            | lapwave::Error::DegenerateInput(_)
            | lapwave::Error::DomainError(_),
        ) => 2,
        Some(
            lapwave::Error::AccuracyFailure { .. }
            | lapwave::Error::DomainOverrun { .. }
            | lapwave::Error::Singularity(_),
        ) => 3,
        Some(lapwave::Error::PreconditionViolation(_)) => 4,
        None => 1,
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, overrides, out } => {
            let s = load(&config, &overrides)?;
            let dir = output_root(out, &s).join(&s.name);
            run_one(&s, &dir, None)
        }
        Command::Compare {
            config,
            a,
            b,
            overrides,
            out,
        } => {
            let s = load(&config, &overrides)?;
            let (a, b): (Method, Method) = (a.parse()?, b.parse()?);
            let dir = output_root(out, &s).join(format!("{}_compare", s.name));
            compare(&s, a, b, &dir)
        }
        Command::Figure {
            which,
            method,
            n_points,
            out,
        } => {
            let s = figure(which, method.parse()?, n_points)?;
            let dir = output_root(out, &s).join(&s.name);
            let scale = match s.packet {
                PacketSource::Gaussian(g) => Some((std::f64::consts::PI * g.alpha).sqrt()),
                PacketSource::File(_) => None,
            };
            run_one(&s, &dir, scale)
        }
        Command::Check => {
            let results = check::run_all();
            for r in &results {
                let verdict = if r.passed { "PASS" } else { "FAIL" };
                println!("check {} {verdict}: {}", r.name, r.detail);
            }
            Ok(if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = config::parse(&text)?;
    config::apply_overrides(&mut entries, overrides)?;
    let mut s = Scenario::from_entries(&entries)?;
    // Relative packet files are resolved against the config file.
    if let PacketSource::File(p) = &s.packet {
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            s.packet = PacketSource::File(base.join(p));
        }
    }
    Ok(s)
}

/// `--out` beats the environment variable, which beats `output_dir`.
fn output_root(flag: Option<PathBuf>, s: &Scenario) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| s.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn run_one(s: &Scenario, dir: &Path, scale: Option<f64>) -> Result<ExitCode> {
    let run = runner::execute(s)?;
    runner::write_run(&run, dir, scale)?;
    println!("{}: {} snapshots written to {}", s.name, run.snapshots.len(), dir.display());
    for snap in &run.snapshots {
        if let Some(r) = snap.report {
            println!(
                "  t = {:<10} norm {:.6} <x> {:+.4} <p> {:+.4} left {:.6} right {:.6}",
                config::num(r.t),
                r.norm,
                r.mean_x,
                r.mean_p,
                r.left_mass,
                r.right_mass
            );
        }
    }
    Ok(status_code(&[&run]))
}

fn status_code(runs: &[&runner::Run]) -> ExitCode {
    let flagged: usize = runs.iter().map(|r| r.flagged_count()).sum();
    if flagged > 0 {
        eprintln!("lapwave: {flagged} points missed the quadrature tolerance; best estimates kept");
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn compare(s: &Scenario, a: Method, b: Method, dir: &Path) -> Result<ExitCode> {
    s.check_method(a)?;
    s.check_method(b)?;
    let sa = Scenario { method: a, ..s.clone() };
    let sb = Scenario { method: b, ..s.clone() };
    let ra = runner::execute(&sa)?;
    let rb = runner::execute(&sb)?;
    runner::write_run(&ra, &dir.join(format!("a_{a}")), None)?;
    runner::write_run(&rb, &dir.join(format!("b_{b}")), None)?;

    let mut csv = String::from("t,l2,linf,norm_a,norm_b,left_a,left_b\n");
    println!("{}: {a} vs {b}", s.name);
    for (x, y) in ra.snapshots.iter().zip(&rb.snapshots) {
        let (l2, linf) = x.field.distance(&y.field)?;
        let (na, nb) = (x.field.norm(), y.field.norm());
        let left = |r: &Option<lapwave::diagnostics::ObservableReport>| r.map_or(0.0, |r| r.left_mass);
        let _ = writeln!(
            csv,
            "{:.16e},{l2:.16e},{linf:.16e},{na:.16e},{nb:.16e},{:.16e},{:.16e}",
            x.field.t,
            left(&x.report),
            left(&y.report)
        );
        println!("  t = {:<10} L2 {l2:.3e} Linf {linf:.3e}", config::num(x.field.t));
    }
    fs::write(dir.join("compare.csv"), csv).with_context(|| format!("writing into {}", dir.display()))?;
    Ok(status_code(&[&ra, &rb]))
}

fn figure(which: Figure, method: Method, n_points: Option<usize>) -> Result<Scenario> {
    let u = UnitSystem::natural();
    let (name, v, p0, x_min, x_max, n, times) = match which {
        // Classical reflection at t = 0.1.
        Figure::Fig1 => ("fig1", 1e4 / 3.0, 100.0, -20.0, 12.0, 6401, vec![0.0, 0.1, 0.2]),
        Figure::Fig2 => ("fig2", 200.0, 10.0, -20.0, 3.0, 2301, vec![0.0, 1.0, 2.0]),
    };
    let s = Scenario {
        name: name.into(),
        potential: PotentialSpec::step(v)?,
        packet: PacketSource::Gaussian(GaussianPacket::new(1.0, -10.0, p0)?),
        method,
        times,
        x_min,
        x_max,
        n_points: n_points.unwrap_or(n),
        split_at: 0.0,
        units: u,
        policy: SeriesPolicy::default(),
        quad: QuadratureSpec::default(),
        cn: Default::default(),
        n_max: 400,
        output_dir: None,
    };
    if s.n_points < 2 {
        return Err(ConfigError("n_points must be at least 2".into()).into());
    }
    s.check_method(method)?;
    Ok(s)
}
