//! `frictionsim` command line: network export, single runs, sweeps and
//! re-aggregation of raw sweep output.

pub mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use frictionsim::netgen::{self, Network, NetworkError};
use frictionsim::output::{self, OutputError, RawRow};
use frictionsim::runner::{self, RunError, SweepConfig};
use frictionsim::sampling::{network_seed, run_seed};
use log::info;
use thiserror::Error;

use crate::config::{ActivationMode, Config, ConfigError, Overrides, TauMode, SEED_ENV};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "frictionsim", version, about = "Friction and learning on a simulated social network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a follower network and write it as an edge list.
    GenerateNetwork {
        #[command(flatten)]
        sim: SimArgs,
        /// Which network of a sweep with this master seed to reproduce.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute one run to convergence and print its raw CSV row.
    Run {
        #[command(flatten)]
        sim: SimArgs,
        /// Edge list to simulate on instead of generating network 0.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Write the per-post `post_id,quality,popularity` table here.
        #[arg(long)]
        dump_posts: Option<PathBuf>,
    },
    /// Run the full (f, ell) sweep and write raw and aggregated CSVs.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        grid: SweepArgs,
    },
    /// Recompute the aggregated CSV from a raw results CSV.
    Aggregate {
        raw: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    /// Config file (JSON object or `key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub alpha: Option<usize>,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub clustering_target: Option<f64>,
    /// Master seed; falls back to the config file, then FRICTIONSIM_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub step_cap: Option<u64>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationMode>,
    #[arg(long, value_enum)]
    pub tau_population: Option<TauMode>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    /// Comma-separated friction values (default: 0..0.2 by 0.01, 0.3..1 by 0.1).
    #[arg(long, value_delimiter = ',')]
    pub f_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ell_values: Option<Vec<f64>>,
    #[arg(long)]
    pub networks: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Keep a single cell at f = 1 (813 instead of 841 default cells).
    #[arg(long)]
    pub collapse_f1: bool,
    /// Directory for per-run post dumps.
    #[arg(long)]
    pub dump_posts: Option<PathBuf>,
    #[arg(long)]
    pub raw_out: Option<PathBuf>,
    #[arg(long)]
    pub agg_out: Option<PathBuf>,
}

impl SimArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            m: self.m,
            p: self.p,
            alpha: self.alpha,
            f: self.f,
            ell: self.ell,
            rho: self.rho,
            epsilon: self.epsilon,
            clustering_target: self.clustering_target,
            seed: self.seed,
            warmup: self.warmup,
            step_cap: self.step_cap,
            activation: self.activation,
            tau_population: self.tau_population,
            ..Overrides::default()
        }
    }
}

impl SweepArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            f_values: self.f_values.clone(),
            ell_values: self.ell_values.clone(),
            n_networks: self.networks,
            runs_per_network: self.runs,
            workers: self.workers,
            collapse_f1: self.collapse_f1.then_some(true),
            dump_posts: self.dump_posts.clone(),
            raw_out: self.raw_out.clone(),
            agg_out: self.agg_out.clone(),
            ..Overrides::default()
        }
    }
}

/// Resolve and log the effective configuration.
pub fn load_config(sim: &SimArgs, extra: Overrides) -> Result<Config, CliError> {
    let file = match &sim.config {
        Some(path) => Overrides::from_file(path)?,
        None => Overrides::default(),
    };
    let flags = sim.overrides().over(extra);
    let cfg = Config::resolve(flags, file, std::env::var(SEED_ENV).ok())?;
    info!("resolved config: {}", serde_json::to_string(&cfg).expect("config serialises"));
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenerateNetwork { sim, index, out } => {
            let cfg = load_config(&sim, Overrides::default())?;
            let net = netgen::generate(cfg.n, cfg.m, cfg.clustering_target, network_seed(cfg.seed, index))?;
            info!(
                "network {index}: {} edges, clustering {:.4}",
                net.edge_count(),
                netgen::undirected_clustering(&net)
            );
            net.write_edge_list(create(&out)?)
                .map_err(|source| CliError::Io { path: out, source })?;
        }
        Command::Run { sim, network, dump_posts } => {
            let cfg = load_config(&sim, Overrides::default())?;
            let params = cfg.sim_params();
            let net = match &network {
                Some(path) => Network::read_edge_list(open(path)?, Some(cfg.n))?,
                None => netgen::generate(cfg.n, cfg.m, cfg.clustering_target, network_seed(cfg.seed, 0))?,
            };
            let result = runner::run_once(&params, &net, run_seed(cfg.seed, 0, 0, cfg.f, cfg.ell))?;
            if let Some(path) = dump_posts {
                output::write_posts(create(&path)?, &result.post_records)?;
            }
            output::write_raw(stdout, &[RawRow::from_result(&result)])?;
        }
        Command::Sweep { sim, grid } => {
            let cfg = load_config(&sim, grid.overrides())?;
            let raw_out = cfg
                .raw_out
                .clone()
                .ok_or_else(|| CliError::Usage("sweep needs --raw-out (or raw_out in the config)".into()))?;
            let agg_out = cfg
                .agg_out
                .clone()
                .ok_or_else(|| CliError::Usage("sweep needs --agg-out (or agg_out in the config)".into()))?;
            if let Some(dir) = &cfg.dump_posts {
                std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
            }
            let checkpoint = checkpoint_path(&raw_out);
            let sweep_cfg = SweepConfig {
                params: cfg.sim_params(),
                grid: runner::build_grid(&cfg.f_axis(), &cfg.ell_axis(), cfg.collapse_f1)?,
                n_networks: cfg.n_networks,
                runs_per_network: cfg.runs_per_network,
                workers: cfg.workers,
                checkpoint: Some(checkpoint.clone()),
                dump_posts: cfg.dump_posts.clone(),
            };
            info!(
                "sweep: {} cells x {} networks x {} runs on {} workers",
                sweep_cfg.grid.len(),
                cfg.n_networks,
                cfg.runs_per_network,
                cfg.workers
            );
            let out = runner::sweep(&sweep_cfg)?;
            output::write_raw(create(&raw_out)?, &out.rows)?;
            output::write_aggregated(create(&agg_out)?, &out.cells)?;
            std::fs::remove_file(&checkpoint).map_err(|source| CliError::Io { path: checkpoint, source })?;
            info!("wrote {} and {}", raw_out.display(), agg_out.display());
        }
        Command::Aggregate { raw, out } => {
            let rows = output::read_raw(open(&raw)?, true)?;
            let cells = output::aggregate(&rows);
            match out {
                Some(path) => output::write_aggregated(create(&path)?, &cells)?,
                None => output::write_aggregated(stdout, &cells)?,
            }
        }
    }
    Ok(())
}

/// Where a sweep appends finished runs until it completes.
pub fn checkpoint_path(raw_out: &Path) -> PathBuf {
    let mut name = raw_out.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}
