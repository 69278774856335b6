//! Single runs to convergence and the parallel (f, ell) sweep.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{ParamError, SimParams, SimState, TauPopulation};
use crate::metrics::{feed_avg_quality, kendall_tau_b, QualityTracker};
use crate::netgen::{generate, Network, NetworkError};
use crate::output::{self, aggregate, OutputError, RawRow, RunKey, SweepCell};
use crate::sampling::{network_seed, run_seed};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no convergence after {steps} steps (q_hat = {q_hat:.6}, {n_posts} posts)")]
    Timeout { steps: u64, q_hat: f64, n_posts: u64 },
    #[error("grid value {0} is outside [0, 1]")]
    GridValue(f64),
    #[error("invalid sweep setting: {0}")]
    Sweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostRecord {
    pub id: u32,
    pub quality: f64,
    pub popularity: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub f: f64,
    pub ell: f64,
    pub network_index: usize,
    pub run_index: usize,
    /// Convergence step T.
    pub steps: u64,
    pub q_hat: f64,
    /// `None` when every post has the same popularity (or quality).
    pub tau: Option<f64>,
    pub n_posts: u64,
    pub reshares: u64,
    pub post_records: Vec<PostRecord>,
}

/// Simulate until the moving-average feed quality settles.
pub fn run_once(params: &SimParams, network: &Network, sub_seed: u64) -> Result<RunResult, RunError> {
    let mut state = SimState::new(network, params.clone(), sub_seed)?;
    let mut tracker = QualityTracker::new(params.rho);
    loop {
        state.step();
        tracker.observe(feed_avg_quality(&state));
        if tracker.is_converged(params.epsilon, params.warmup) {
            break;
        }
        if state.current_step() >= params.step_cap {
            return Err(RunError::Timeout {
                steps: state.current_step(),
                q_hat: tracker.ema().unwrap_or(0.0),
                n_posts: state.counters().posts,
            });
        }
    }

    let post_records: Vec<PostRecord> = state
        .posts()
        .iter()
        .map(|p| PostRecord {
            id: p.id.0,
            quality: p.quality,
            popularity: p.popularity,
        })
        .collect();
    let tau = rank_correlation(&state, &post_records, params.tau_population);
    let counters = state.counters();
    Ok(RunResult {
        f: params.friction,
        ell: params.learning,
        network_index: 0,
        run_index: 0,
        steps: state.current_step(),
        q_hat: tracker.ema().expect("at least one observation"),
        tau,
        n_posts: counters.posts,
        reshares: counters.reshares,
        post_records,
    })
}

fn rank_correlation(state: &SimState<'_>, records: &[PostRecord], population: TauPopulation) -> Option<f64> {
    let chosen: Vec<&PostRecord> = match population {
        TauPopulation::AllPosts => records.iter().collect(),
        TauPopulation::InFeeds => {
            let live: HashSet<u32> = state.feeds().iter().flat_map(|f| f.iter()).map(|id| id.0).collect();
            records.iter().filter(|r| live.contains(&r.id)).collect()
        }
    };
    let popularity: Vec<f64> = chosen.iter().map(|r| f64::from(r.popularity)).collect();
    let quality: Vec<f64> = chosen.iter().map(|r| r.quality).collect();
    // Fewer than two posts leaves nothing to rank.
    kendall_tau_b(&popularity, &quality).ok().flatten()
}

/// Arithmetic mean with one correction pass, so constant inputs come back exact.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    Some(rough + values.iter().map(|v| v - rough).sum::<f64>() / n)
}

/// Sample standard deviation over `sqrt(n)`; undefined below two values.
pub fn standard_error(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = mean(values)?;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((var / n as f64).sqrt())
}

/// One axis of the intervention grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Axis {
    /// 0.00..=0.20 in steps of 0.01, then 0.3..=1.0 in steps of 0.1.
    #[default]
    Default,
    Explicit(Vec<f64>),
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Default => default_axis(),
            Axis::Explicit(v) => v.clone(),
        }
    }
}

pub fn default_axis() -> Vec<f64> {
    (0..=20)
        .map(|i| f64::from(i) / 100.0)
        .chain((3..=10).map(|i| f64::from(i) / 10.0))
        .collect()
}

/// Cartesian product of the two axes, f-major. With `collapse_f1`, the
/// f = 1 column keeps only its first ell value, since nothing is re-shared there.
pub fn build_grid(f_axis: &Axis, ell_axis: &Axis, collapse_f1: bool) -> Result<Vec<(f64, f64)>, RunError> {
    let fs = f_axis.values();
    let ells = ell_axis.values();
    if let Some(&bad) = fs.iter().chain(&ells).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(RunError::GridValue(bad));
    }
    let mut grid = Vec::with_capacity(fs.len() * ells.len());
    for &f in &fs {
        for (j, &ell) in ells.iter().enumerate() {
            if collapse_f1 && f == 1.0 && j > 0 {
                continue;
            }
            grid.push((f, ell));
        }
    }
    if *f_axis == Axis::Default && *ell_axis == Axis::Default && !collapse_f1 {
        info!(
            "default grid has {} cells; collapsing the f = 1 column (--collapse-f1) gives 813",
            grid.len()
        );
    }
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub params: SimParams,
    pub grid: Vec<(f64, f64)>,
    pub n_networks: usize,
    pub runs_per_network: usize,
    pub workers: usize,
    /// Completed runs are appended here and skipped when resuming.
    pub checkpoint: Option<PathBuf>,
    /// Directory for per-run post dumps.
    pub dump_posts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<RawRow>,
    pub cells: Vec<SweepCell>,
}

/// File name of a per-run post dump.
pub fn post_dump_name(f: f64, ell: f64, network: usize, run: usize) -> String {
    format!(
        "posts_f{}_ell{}_net{network}_run{run}.csv",
        output::format_float(f),
        output::format_float(ell)
    )
}

pub fn write_post_dump(dir: &Path, result: &RunResult) -> Result<(), RunError> {
    let name = post_dump_name(result.f, result.ell, result.network_index, result.run_index);
    let file = File::create(dir.join(name))?;
    output::write_posts(std::io::BufWriter::new(file), &result.post_records)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Vec<RawRow>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let rows = output::read_raw(BufReader::new(File::open(path)?), false)?;
    info!("resuming from {} completed runs in {}", rows.len(), path.display());
    Ok(rows)
}

/// Every (cell, network, run) of the protocol, in output order.
fn work_list(cfg: &SweepConfig) -> Vec<(f64, f64, usize, usize)> {
    let mut grid = cfg.grid.clone();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    grid.dedup_by(|a, b| a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits());
    let mut work = Vec::new();
    for &(f, ell) in &grid {
        for net in 0..cfg.n_networks {
            for run in 0..cfg.runs_per_network {
                work.push((f, ell, net, run));
            }
        }
    }
    work
}

/// Run the full protocol: generate networks, execute every run in a bounded
/// pool, then sort and aggregate. The output depends only on the config and
/// master seed, never on worker count or scheduling.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepOutput, RunError> {
    cfg.params.validate()?;
    if cfg.n_networks < 1 || cfg.runs_per_network < 1 {
        return Err(RunError::Sweep("need at least one network and one run per network".into()));
    }
    if cfg.workers < 1 {
        return Err(RunError::Sweep("need at least one worker".into()));
    }
    if let Some(&(f, ell)) = cfg.grid.iter().find(|(f, l)| !(0.0..=1.0).contains(f) || !(0.0..=1.0).contains(l)) {
        return Err(RunError::GridValue(if (0.0..=1.0).contains(&f) { ell } else { f }));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RunError::Sweep(e.to_string()))?;
    let params = &cfg.params;
    let master = params.seed;

    let work = work_list(cfg);
    let mut done: Vec<RawRow> = match &cfg.checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => Vec::new(),
    };
    let wanted: HashSet<RunKey> = work
        .iter()
        .map(|&(f, ell, net, run)| key_of(f, ell, net, run))
        .collect();
    let before = done.len();
    done.retain(|r| wanted.contains(&r.key()));
    if done.len() < before {
        warn!("ignoring {} checkpoint rows outside this sweep", before - done.len());
    }
    let finished: HashSet<RunKey> = done.iter().map(RawRow::key).collect();
    let pending: Vec<_> = work
        .into_iter()
        .filter(|&(f, ell, net, run)| !finished.contains(&key_of(f, ell, net, run)))
        .collect();

    let networks: Vec<Network> = pool.install(|| {
        (0..cfg.n_networks)
            .into_par_iter()
            .map(|i| generate(params.n, params.m, params.clustering_target, network_seed(master, i)))
            .collect::<Result<_, _>>()
    })?;
    info!(
        "{} networks ready; {} runs pending, {} from checkpoint",
        networks.len(),
        pending.len(),
        done.len()
    );

    let checkpoint = match &cfg.checkpoint {
        Some(path) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?)),
        None => None,
    };

    let fresh: Vec<RawRow> = pool.install(|| {
        pending
            .par_iter()
            .map(|&(f, ell, net, run)| {
                let p = params.with_intervention(f, ell);
                let mut result = run_once(&p, &networks[net], run_seed(master, net, run, f, ell))?;
                result.network_index = net;
                result.run_index = run;
                if let Some(dir) = &cfg.dump_posts {
                    write_post_dump(dir, &result)?;
                }
                let row = RawRow::from_result(&result);
                if let Some(file) = &checkpoint {
                    let mut file = file.lock().expect("checkpoint lock poisoned");
                    output::append_raw(&mut *file, std::slice::from_ref(&row))?;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, RunError>>()
    })?;

    let mut rows = done;
    rows.extend(fresh);
    rows.sort_by(RawRow::sort_key_cmp);
    let cells = aggregate(&rows);
    Ok(SweepOutput { rows, cells })
}

fn key_of(f: f64, ell: f64, network: usize, run: usize) -> RunKey {
    RunKey {
        f: output::format_float(f),
        ell: output::format_float(ell),
        network,
        run,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> SimParams {
        SimParams {
            n: 120,
            warmup: 50,
            ..SimParams::default()
        }
    }

    #[test]
    fn standard_error_examples() {
        assert_eq!(standard_error(&[1.0, 1.0, 1.0]), Some(0.0));
        // sd = sqrt(0.5), se = sd / sqrt(2) = 0.5
        assert!((standard_error(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(standard_error(&[0.3]), None);
        assert_eq!(standard_error(&[]), None);
        assert_eq!(standard_error(&[0.4, 0.4, 0.4]), Some(0.0));
        assert_eq!(mean(&[0.4, 0.4, 0.4]), Some(0.4));
    }

    #[test]
    fn default_axis_has_29_values() {
        let axis = default_axis();
        assert_eq!(axis.len(), 29);
        assert_eq!(axis[0], 0.0);
        assert_eq!(axis[7], 0.07);
        assert_eq!(axis[20], 0.2);
        assert_eq!(axis[21], 0.3);
        assert_eq!(*axis.last().unwrap(), 1.0);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(build_grid(&Axis::Default, &Axis::Default, false).unwrap().len(), 841);
        assert_eq!(build_grid(&Axis::Default, &Axis::Default, true).unwrap().len(), 813);
        let g = build_grid(&Axis::Explicit(vec![0.1]), &Axis::Explicit(vec![0.0, 1.0]), false).unwrap();
        assert_eq!(g, vec![(0.1, 0.0), (0.1, 1.0)]);
        assert!(matches!(
            build_grid(&Axis::Explicit(vec![1.2]), &Axis::Default, false),
            Err(RunError::GridValue(v)) if v == 1.2
        ));
    }

    #[test]
    fn full_friction_run_has_untied_nothing() {
        let net = generate(120, 3, 0.29, 1).unwrap();
        let r = run_once(&small_params().with_intervention(1.0, 0.3), &net, 5).unwrap();
        assert!(r.post_records.iter().all(|p| p.popularity == 1));
        assert_eq!(r.tau, None);
        assert_eq!(r.reshares, 0);
        assert!(r.steps >= 50);
    }

    #[test]
    fn zero_friction_ignores_learning() {
        let net = generate(120, 3, 0.29, 2).unwrap();
        let a = run_once(&small_params().with_intervention(0.0, 0.0), &net, 9).unwrap();
        let b = run_once(&small_params().with_intervention(0.0, 1.0), &net, 9).unwrap();
        assert_eq!(
            (a.steps, a.q_hat, a.tau, a.n_posts, &a.post_records),
            (b.steps, b.q_hat, b.tau, b.n_posts, &b.post_records)
        );
    }

    #[test]
    fn run_bookkeeping() {
        let net = generate(120, 3, 0.29, 3).unwrap();
        let r = run_once(&small_params().with_intervention(0.1, 0.5), &net, 11).unwrap();
        assert_eq!(r.n_posts as usize, r.post_records.len());
        let extra: u64 = r.post_records.iter().map(|p| u64::from(p.popularity - 1)).sum();
        assert_eq!(extra, r.reshares);
        assert!((0.0..=1.0).contains(&r.q_hat));
        assert!(r.steps >= 50);
    }

    #[test]
    fn timeout_reports_partial_state() {
        let net = generate(120, 3, 0.29, 3).unwrap();
        let p = SimParams {
            warmup: 1_000,
            step_cap: 20,
            ..small_params()
        };
        match run_once(&p, &net, 1) {
            Err(RunError::Timeout { steps, n_posts, .. }) => {
                assert_eq!(steps, 20);
                assert!(n_posts > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn in_feed_population_is_a_subset() {
        let net = generate(120, 3, 0.29, 4).unwrap();
        let p = SimParams {
            tau_population: TauPopulation::InFeeds,
            ..small_params().with_intervention(0.1, 1.0)
        };
        let r = run_once(&p, &net, 3).unwrap();
        assert!(r.tau.is_some());
    }

    fn sweep_cfg(workers: usize) -> SweepConfig {
        SweepConfig {
            params: small_params(),
            grid: build_grid(
                &Axis::Explicit(vec![0.0, 0.1, 1.0]),
                &Axis::Explicit(vec![0.0, 1.0]),
                false,
            )
            .unwrap(),
            n_networks: 2,
            runs_per_network: 2,
            workers,
            checkpoint: None,
            dump_posts: None,
        }
    }

    #[test]
    fn sweep_independent_of_workers() {
        let a = sweep(&sweep_cfg(1)).unwrap();
        let b = sweep(&sweep_cfg(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6 * 4);
        assert_eq!(a.cells.len(), 6);
        assert!(a.cells.iter().all(|c| c.n_runs == 4));
        let f1: Vec<_> = a.cells.iter().filter(|c| c.f == 1.0).collect();
        assert!(f1.iter().all(|c| c.n_tau_defined == 0 && c.mean_tau.is_none()));
    }

    #[test]
    fn sweep_resumes_from_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let full = sweep(&sweep_cfg(2)).unwrap();

        // Pretend the first half of the runs finished before an interruption.
        let ckpt = dir.path().join("raw.csv.partial");
        let half: Vec<RawRow> = full.rows.iter().step_by(2).cloned().collect();
        output::append_raw(File::create(&ckpt).unwrap(), &half).unwrap();

        let mut cfg = sweep_cfg(2);
        cfg.checkpoint = Some(ckpt.clone());
        let resumed = sweep(&cfg).unwrap();
        assert_eq!(resumed, full);
        let all = output::read_raw(File::open(&ckpt).unwrap(), false).unwrap();
        assert_eq!(all.len(), full.rows.len());
    }

    #[test]
    fn sweep_dumps_posts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sweep_cfg(2);
        cfg.grid = vec![(0.1, 1.0)];
        cfg.n_networks = 1;
        cfg.runs_per_network = 1;
        cfg.dump_posts = Some(dir.path().to_path_buf());
        sweep(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join(post_dump_name(0.1, 1.0, 0, 0))).unwrap();
        assert!(text.starts_with("post_id,quality,popularity\n"));
        assert!(text.lines().count() > 10);
    }

    #[test]
    fn sweep_rejects_bad_settings() {
        let mut cfg = sweep_cfg(1);
        cfg.n_networks = 0;
        assert!(matches!(sweep(&cfg), Err(RunError::Sweep(_))));
        let mut cfg = sweep_cfg(1);
        cfg.grid.push((0.5, 2.0));
        assert!(matches!(sweep(&cfg), Err(RunError::GridValue(v)) if v == 2.0));
    }
}
