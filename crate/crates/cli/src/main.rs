use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use pfmpm_core::config::{DtSetting, PolarConfig, SimConfig};
use pfmpm_core::diagnostics::TipSpec;
use pfmpm_core::output::{write_constraint_report, write_polar, OutputWriter};
use pfmpm_core::solver::{run, Observer, Simulation};
use pfmpm_core::surface_energy::polar_sweep;
use pfmpm_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pfmpm", version, about = "Phase-field MPM fracture simulator")]
struct Cli {
    /// Worker threads; falls back to PFMPM_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write snapshots, energies and diagnostics.
    Simulate {
        config: PathBuf,
        /// Output directory; defaults to `output.directory` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of steps; overrides `solver.n_steps`.
        #[arg(long)]
        steps: Option<usize>,
        /// Time step in µs or `auto`; overrides `solver.dt`.
        #[arg(long, value_parser = DtSetting::parse)]
        dt: Option<DtSetting>,
    },
    /// Evaluate G_c(θ) and write `theta_rad,gc,gc_reciprocal`.
    Polar {
        /// TOML file with Gc, l0, [gamma], samples, x_lb, n_1d.
        config: Option<PathBuf>,
        #[command(flatten)]
        inline: PolarArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run steps with every contact constraint verified; exits 1 on any violation.
    Check {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// Write `constraints.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PolarArgs {
    /// Ḡc in N/mm (= kN/m).
    #[arg(long = "gc")]
    gc: Option<f64>,
    #[arg(long)]
    l0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    g1111: f64,
    #[arg(long, default_value_t = 0.0)]
    g2222: f64,
    #[arg(long, default_value_t = 0.0)]
    g1122: f64,
    #[arg(long, default_value_t = 0.0)]
    g1212: f64,
    #[arg(long, default_value_t = 0.0)]
    g1112: f64,
    #[arg(long, default_value_t = 0.0)]
    g1222: f64,
    #[arg(long)]
    samples: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> std::result::Result<ExitCode, Failure> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate { config, out, steps, dt } => simulate(&config, out, steps, dt),
        Command::Polar { config, inline, out } => polar(config.as_deref(), inline, &out),
        Command::Check { config, steps, out } => check(&config, steps, out),
    }
}

fn configure_threads(flag: Option<usize>) -> std::result::Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("PFMPM_THREADS") {
            Ok(s) => Some(
                s.trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("PFMPM_THREADS must be a positive integer, got {s:?}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn simulate(
    path: &Path,
    out: Option<PathBuf>,
    steps: Option<usize>,
    dt: Option<DtSetting>,
) -> std::result::Result<ExitCode, Failure> {
    let mut cfg = SimConfig::load(path)?;
    if let Some(n) = steps {
        cfg.solver.n_steps = n;
    }
    if let Some(dt) = dt {
        cfg.solver.dt = dt;
    }
    cfg.validate()?;
    let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let n_steps = cfg.solver.n_steps;
    let mut sim = Simulation::new(cfg.build()?)?;
    info!(
        "{} points, {} fields, {} nodes, dt = {:.6} us, {} steps",
        sim.points.len(),
        sim.n_fields,
        sim.grid.node_count(),
        sim.dt,
        n_steps
    );
    let mut writer = OutputWriter::new(dir.clone(), cfg.output.clone(), n_steps)?;
    writer.tip = cfg.diagnostics.tip.as_ref().map(TipSpec::from);
    writer.fragments = cfg.diagnostics.fragments;
    let mut progress = Progress {
        inner: &mut writer,
        every: (n_steps / 10).max(1),
    };
    let summary = run(&mut sim, n_steps, &mut progress)?;
    let e = sim.energy;
    info!(
        "done: {} steps in {:.2} s, t = {:.4} us, elastic {:.6e} mJ, fracture {:.6e} mJ, kinetic {:.6e} mJ",
        summary.steps,
        summary.wall_time.as_secs_f64(),
        sim.t,
        e.elastic,
        e.fracture,
        e.kinetic
    );
    if summary.violations > 0 {
        log::warn!(
            "{} contact constraint violation(s); see {}",
            summary.violations,
            dir.join("constraints.csv").display()
        );
    }
    println!("wrote {} snapshot(s) to {}", writer.snapshots.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

struct Progress<'a> {
    inner: &'a mut OutputWriter,
    every: usize,
}

impl Observer for Progress<'_> {
    fn observe(&mut self, sim: &Simulation) -> Result<()> {
        if sim.step > 0 && sim.step.is_multiple_of(self.every) {
            info!(
                "step {} t = {:.4} us total energy {:.6e} mJ",
                sim.step,
                sim.t,
                sim.energy.total()
            );
        }
        self.inner.observe(sim)
    }

    fn finish(&mut self, sim: &Simulation) -> Result<()> {
        self.inner.finish(sim)
    }
}

fn polar(path: Option<&Path>, a: PolarArgs, out: &Path) -> std::result::Result<ExitCode, Failure> {
    let cfg = match (path, a.gc, a.l0) {
        (Some(p), None, None) => PolarConfig::parse(&pfmpm_core::config::read_file(p)?)?,
        (None, Some(gc), Some(l0)) => {
            let mut text = format!("Gc = {gc:e}\nl0 = {l0:e}\n");
            if let Some(n) = a.samples {
                text += &format!("samples = {n}\n");
            }
            text += "[gamma]\n";
            for (k, v) in [
                ("g1111", a.g1111),
                ("g2222", a.g2222),
                ("g1122", a.g1122),
                ("g1212", a.g1212),
                ("g1112", a.g1112),
                ("g1222", a.g1222),
            ] {
                text += &format!("{k} = {v:e}\n");
            }
            PolarConfig::parse(&text)?
        }
        (Some(_), _, _) => {
            return Err(Failure::Usage(
                "give either a polar config file or --gc/--l0, not both".into(),
            ))
        }
        _ => return Err(Failure::Usage("polar needs a config file or both --gc and --l0".into())),
    };
    let sweep = polar_sweep(&cfg.query()?)?;
    write_polar(out, &sweep.results)?;
    println!(
        "G_c min = {:.3} kN/m at theta = {:.4} rad, max = {:.3} kN/m at theta = {:.4} rad ({} samples)",
        sweep.min.gc,
        sweep.min.theta,
        sweep.max.gc,
        sweep.max.theta,
        sweep.results.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn check(path: &Path, steps: usize, out: Option<PathBuf>) -> std::result::Result<ExitCode, Failure> {
    let mut cfg = SimConfig::load(path)?;
    cfg.solver.check_every = 1;
    let mut sim = Simulation::new(cfg.build()?)?;
    let mut recorder = Recorder::default();
    let summary = run(&mut sim, steps, &mut recorder)?;
    if let Some(dir) = out {
        write_constraint_report(&dir.join("constraints.csv"), &recorder.violations)?;
    }
    for (step, v) in recorder.violations.iter().take(20) {
        println!("step {step}: {v}");
    }
    let invariants = &recorder.invariants;
    for msg in invariants.iter().take(20) {
        println!("invariant: {msg}");
    }
    let max_contacts = recorder.max_contacts;
    if recorder.violations.is_empty() && invariants.is_empty() {
        println!(
            "check passed: {} step(s), up to {} contact node(s) per step, {} degenerate normal(s), 0 violations",
            summary.steps, max_contacts, summary.degenerate_normals
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!(
            "check failed: {} constraint violation(s), {} invariant failure(s) over {} step(s)",
            recorder.violations.len(),
            invariants.len(),
            summary.steps
        );
        Ok(ExitCode::from(1))
    }
}

#[derive(Default)]
struct Recorder {
    violations: Vec<(usize, pfmpm_core::contact::Violation)>,
    invariants: Vec<String>,
    max_contacts: usize,
}

impl Observer for Recorder {
    fn observe(&mut self, sim: &Simulation) -> Result<()> {
        self.violations
            .extend(sim.last.violations.iter().map(|v| (sim.step, v.clone())));
        self.max_contacts = self.max_contacts.max(sim.last.contacts.len());
        for (i, p) in sim.points.iter().enumerate() {
            // c is not clamped by the discrete scheme; only finiteness is an invariant.
            if !(p.c.is_finite() && p.x.iter().all(|x| x.is_finite()) && p.v.iter().all(|v| v.is_finite())) {
                self.invariants
                    .push(format!("step {}: point {i} has a non-finite state", sim.step));
            }
        }
        Ok(())
    }
}
