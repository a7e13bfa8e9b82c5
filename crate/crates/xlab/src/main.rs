use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cwlab::config::Config;
use cwlab::error::{Result, XlabError};
use cwlab::expected::Expected;
use cwlab::experiments::{self, Experiment, Report};
use cwlab::plot::{emit_plot, PlotOptions};
use cwlab::rows::{self, Row};
use cwlab_core::evolution::conditional_law;
use cwlab_core::sampler::{mc_conditional_expectation, SimConfig};
use cwlab_core::spectral::{killed_spectrum, PerronOptions};
use cwlab_core::{integrate_limit, DiscreteLaw, ModelParams};

#[derive(Parser)]
#[command(name = "cwlab", version, about = "Killed Curie-Weiss chain: spectra, evolutions, simulations and experiments")]
struct Cli {
    #[command(flatten)]
    model: ModelArgs,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// `key = value` file applied before `--set` and the flags above.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Perron eigenpair of the killed generator.
    Spectrum,
    /// Conditioned law at time `t` from `m0`.
    Evolve {
        #[arg(long)]
        m0: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Monte Carlo estimate of the conditioned mean at time `t`.
    Simulate {
        #[arg(long)]
        m0: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Mean-field limit on `[0, t]`.
    Ode {
        #[arg(long)]
        m0: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        /// Number of output intervals.
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Run a named experiment, or `all`.
    Experiment {
        name: String,
        /// Print a regenerated threshold table instead of running checks.
        #[arg(long)]
        calibrate: bool,
        /// Threshold table to use instead of the bundled one.
        #[arg(long)]
        expected: Option<PathBuf>,
    },
    /// Render an experiment CSV as SVG.
    Plot {
        csv: PathBuf,
        svg: PathBuf,
        #[arg(long)]
        logx: bool,
        #[arg(long)]
        logy: bool,
    },
}

fn build_config(args: &ModelArgs) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(path) = &args.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    for pair in &args.set {
        cfg.apply_override(pair)?;
    }
    let flags = [
        ("n", args.n.map(|v| v.to_string())),
        ("beta", args.beta.map(|v| v.to_string())),
        ("eps", args.eps.map(|v| v.to_string())),
        ("eta", args.eta.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("out", args.out.clone()),
        ("tol", args.tol.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    Ok(cfg)
}

fn params(cfg: &Config) -> Result<ModelParams> {
    Ok(ModelParams::new(cfg.n, cfg.beta, cfg.eps)?.with_eta(cfg.eta)?)
}

fn write_table(path: &Path, header: &[&str], records: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let csv_err = |e: csv::Error| XlabError::Csv { path: path.to_path_buf(), line: 0, msg: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(r.iter().map(f64::to_string)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn spectrum(cfg: &Config) -> Result<()> {
    let p = params(cfg)?;
    let (gen, pack) = killed_spectrum(&p, &PerronOptions::with_tol(cfg.tol))?;
    println!("n = {}  b_n = {:.15e}", p.n(), pack.b_n);
    println!("residuals: right {:.3e}, left {:.3e} after {} iterations", pack.resid_right, pack.resid_left, pack.iterations);
    let path = Path::new(&cfg.out).join("spectrum.csv");
    let records = (0..gen.dim()).map(|k| vec![gen.grid().points()[k], pack.h_n[k], pack.qsd[k]]);
    write_table(&path, &["m", "h", "qsd"], records)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn evolve(cfg: &Config, m0: f64, t: f64) -> Result<()> {
    let p = params(cfg)?;
    let gen = p.build_generator(true)?;
    let k = gen.grid().position(m0)?;
    let (law, survival) = conditional_law(&gen, &DiscreteLaw::dirac_on_grid(gen.grid(), k), t, cfg.tol)?;
    println!("P(survive to {t}) = {survival:.12e}  conditioned mean = {:.12}", law.mean());
    let path = Path::new(&cfg.out).join("evolve.csv");
    let records = law.points().iter().zip(law.weights()).map(|(&m, &w)| vec![m, w]);
    write_table(&path, &["m", "weight"], records)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(cfg: &Config, m0: f64, t: f64, replicas: usize) -> Result<()> {
    let p = params(cfg)?;
    let sim = SimConfig::new(cfg.seed, replicas, t)?;
    let est = mc_conditional_expectation(&p, m0, |m| m, t, &sim)?;
    println!(
        "E(m_t | survival) = {:.8} +- {:.2e}  ({} of {} survived)",
        est.estimate, est.stderr, est.survivors, est.replicas
    );
    let row = Row::new("simulate", "conditioned_mean", est.estimate).model(p.n(), p.beta(), p.epsilon()).at(t).with_stderr(est.stderr);
    let path = Path::new(&cfg.out).join("simulate.csv");
    std::fs::create_dir_all(&cfg.out)?;
    rows::write_file(&path, &[row])?;
    println!("wrote {}", path.display());
    Ok(())
}

fn ode(cfg: &Config, m0: f64, t: f64, points: usize) -> Result<()> {
    let grid: Vec<f64> = (0..=points).map(|k| t * k as f64 / points as f64).collect();
    let sol = integrate_limit(cfg.beta, m0, &grid, cfg.step)?;
    println!("m({t}) = {:.12}  (half-step gap {:.1e})", sol.terminal, sol.richardson);
    let data: Vec<Row> = sol.times.iter().zip(&sol.values).map(|(&s, &m)| Row::new("ode", "m", m).at(s)).collect();
    let path = Path::new(&cfg.out).join("ode.csv");
    std::fs::create_dir_all(&cfg.out)?;
    rows::write_file(&path, &data)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Returns whether every check passed.
fn experiment(cfg: &Config, name: &str, calibrate: bool, table: Option<&Path>) -> Result<bool> {
    if calibrate {
        print!("{}", experiments::calibrate(cfg)?);
        return Ok(true);
    }
    let exp = match table {
        Some(path) => Expected::parse(&std::fs::read_to_string(path)?)?,
        None => Expected::bundled(),
    };
    let selected: Vec<Experiment> = if name == "all" { Experiment::ALL.to_vec() } else { vec![name.parse()?] };
    let mut reports: Vec<Report> = Vec::new();
    for e in selected {
        let report = experiments::run(e, cfg, &exp)?;
        print!("{}", experiments::summary_block(&report));
        reports.push(report);
    }
    experiments::write_artifacts(&reports, Path::new(&cfg.out))?;
    Ok(reports.iter().all(Report::passed))
}

fn configure_threads() {
    if let Some(k) = std::env::var("CWLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let cfg = build_config(&cli.model)?;
    if cli.model.dump_config {
        print!("{}", cfg.dump());
        return Ok(true);
    }
    match cli.command {
        None => {
            println!("no command given; see --help");
            Ok(true)
        }
        Some(Command::Spectrum) => spectrum(&cfg).map(|_| true),
        Some(Command::Evolve { m0, t }) => evolve(&cfg, m0.unwrap_or(cfg.m0), t.unwrap_or(cfg.t)).map(|_| true),
        Some(Command::Simulate { m0, t, replicas }) => {
            simulate(&cfg, m0.unwrap_or(cfg.m0), t.unwrap_or(cfg.t), replicas.unwrap_or(cfg.replicas)).map(|_| true)
        }
        Some(Command::Ode { m0, t, points }) => ode(&cfg, m0.unwrap_or(cfg.m0), t.unwrap_or(cfg.t), points.max(1)).map(|_| true),
        Some(Command::Experiment { name, calibrate, expected }) => experiment(&cfg, &name, calibrate, expected.as_deref()),
        Some(Command::Plot { csv, svg, logx, logy }) => emit_plot(&csv, &svg, PlotOptions { logx, logy }).map(|_| true),
    }
}

fn main() -> ExitCode {
    configure_threads();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
