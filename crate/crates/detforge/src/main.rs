use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use detforge::config::{ParamInit, RunConfig, Workflow};
use detforge::{io, workflows, CliError, CliResult};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "detforge", version, about = "Selected CI, LUCJ sampling and phaseless AFQMC at desk scale")]
struct Cli {
    /// Worker threads for walker propagation and matrix products.
    #[arg(long, global = true, env = "DETFORGE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    fcidump: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct CiOutputs {
    /// Result JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the CI vector as CSV with a JSON sidecar.
    #[arg(long)]
    wavefunction: Option<PathBuf>,
    /// Also write the subspace Hamiltonian as `row,col,value`.
    #[arg(long)]
    dump_ham: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact diagonalization in the full determinant space.
    Fci {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        outputs: CiOutputs,
    },
    /// Heat-bath selected CI from the RHF determinant.
    Hci {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon1: Option<f64>,
        #[command(flatten)]
        outputs: CiOutputs,
    },
    /// Sample an LUCJ state, recover configurations and diagonalize.
    Sqd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Draw random parameters from the seed when no file is given.
        #[arg(long)]
        random_params: bool,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        flip_prob: Option<f64>,
        #[command(flatten)]
        outputs: CiOutputs,
    },
    /// Draw configurations from an LUCJ state into `bitstring,count` CSV.
    LucjSample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        random_params: bool,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        flip_prob: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phaseless AFQMC with a CI trial; writes the block series CSV and a
    /// JSON summary next to it.
    Afqmc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trial: Option<PathBuf>,
        #[arg(long)]
        walkers: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Linear fit of energy against variance.
    Extrapolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        points: Option<PathBuf>,
        /// Ignore point errors and fit uniformly.
        #[arg(long)]
        unweighted: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// LUCJ → SQD → truncation → AFQMC → extrapolation with one JSON report.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Energy-error tables over the geometries listed in the config.
    PlotData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common, workflow: Workflow) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = cfg.workflow {
        if w != workflow {
            return Err(CliError::Config(format!("config is for workflow {w:?}, not {workflow:?}")));
        }
    }
    if let Some(p) = &common.fcidump {
        cfg.fcidump = Some(p.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn set_params(cfg: &mut RunConfig, params: &Option<PathBuf>, random: bool) {
    if let Some(p) = params {
        cfg.params = Some(p.clone());
    }
    if random {
        cfg.lucj.init = ParamInit::Random;
    }
}

/// Run facts that vary between identical runs; kept out of result files.
#[derive(Serialize)]
struct Metadata {
    command: &'static str,
    version: &'static str,
    started_unix: u64,
    elapsed_seconds: f64,
    threads: Option<usize>,
}

fn metadata_path(out: &Path) -> PathBuf {
    if out.extension().is_none() && out.is_dir() {
        out.join("metadata.json")
    } else {
        out.with_extension("meta.json")
    }
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let (name, out): (&'static str, PathBuf) = match cli.command {
        Command::Fci { common, outputs } => {
            let cfg = load(&common, Workflow::Fci)?;
            cfg.validate()?;
            workflows::fci(&cfg, &outputs.out, outputs.wavefunction.as_deref(), outputs.dump_ham.as_deref())?;
            ("fci", outputs.out)
        }
        Command::Hci { common, epsilon1, outputs } => {
            let mut cfg = load(&common, Workflow::Hci)?;
            if let Some(e) = epsilon1 {
                cfg.hci.epsilon1 = e;
            }
            cfg.validate()?;
            workflows::hci_run(&cfg, &outputs.out, outputs.wavefunction.as_deref(), outputs.dump_ham.as_deref())?;
            ("hci", outputs.out)
        }
        Command::Sqd { common, params, random_params, samples, flip_prob, outputs } => {
            let mut cfg = load(&common, Workflow::Sqd)?;
            set_params(&mut cfg, &params, random_params);
            if let Some(n) = samples {
                cfg.sqd.n_samples = n;
            }
            if let Some(p) = flip_prob {
                cfg.sqd.flip_prob = p;
            }
            cfg.validate()?;
            workflows::sqd(&cfg, &outputs.out, outputs.wavefunction.as_deref(), outputs.dump_ham.as_deref())?;
            ("sqd", outputs.out)
        }
        Command::LucjSample { common, params, random_params, shots, flip_prob, out } => {
            let mut cfg = load(&common, Workflow::LucjSample)?;
            set_params(&mut cfg, &params, random_params);
            if let Some(n) = shots {
                cfg.lucj.shots = n;
            }
            if let Some(p) = flip_prob {
                cfg.lucj.flip_prob = p;
            }
            cfg.validate()?;
            workflows::lucj_sample(&cfg, &out)?;
            ("lucj-sample", out)
        }
        Command::Afqmc { common, trial, walkers, blocks, out } => {
            let mut cfg = load(&common, Workflow::Afqmc)?;
            if let Some(t) = trial {
                cfg.trial = Some(t);
            }
            if let Some(n) = walkers {
                cfg.afqmc.n_walkers = n;
            }
            if let Some(n) = blocks {
                cfg.afqmc.n_blocks = n;
            }
            cfg.validate()?;
            workflows::afqmc(&cfg, &out)?;
            ("afqmc", out)
        }
        Command::Extrapolate { common, points, unweighted, out } => {
            let mut cfg = load(&common, Workflow::Extrapolate)?;
            if let Some(p) = points {
                cfg.points = Some(p);
            }
            if unweighted {
                cfg.extrapolate.weighted = false;
            }
            cfg.validate()?;
            workflows::extrapolate(&cfg, &out)?;
            ("extrapolate", out)
        }
        Command::Pipeline { common, out_dir } => {
            let cfg = load(&common, Workflow::Pipeline)?;
            cfg.validate()?;
            workflows::pipeline(&cfg, &out_dir)?;
            ("pipeline", out_dir)
        }
        Command::PlotData { common, out } => {
            let cfg = load(&common, Workflow::PlotData)?;
            cfg.validate()?;
            workflows::plot_data(&cfg, &out)?;
            ("plot-data", out)
        }
    };
    let meta = Metadata {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        started_unix: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        threads: cli.threads,
    };
    io::write_json(&metadata_path(&out), &meta)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("detforge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
