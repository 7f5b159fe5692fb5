use std::fs;
use std::path::Path;

use gsgd_core::diagnostics::stationarity_measure;
use gsgd_core::fields::TiePolicy;
use gsgd_core::optimizer::{run, GsgdConfig, Method, RunRecord};
use gsgd_core::problems::{make_counterexample, FiniteSumProblem, Side};
use gsgd_core::schedules::{validate, EtaRule, Regime, StepsizeSchedule, ValidationReport};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::{create, write_probes_csv, write_run_csv, write_summary_csv, Summary};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;

pub struct Experiment {
    pub record: RunRecord,
    pub summary: Summary,
}

/// Build the problem and run the configured method; no files are touched.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let problem = cfg.problem.build()?;
    let gsgd = cfg.gsgd_config();
    let record = run(problem.as_ref(), &gsgd)?;
    let summary = summarize(problem.as_ref(), &gsgd, &record)?;
    Ok(Experiment { record, summary })
}

fn summarize(
    problem: &dyn FiniteSumProblem,
    gsgd: &GsgdConfig,
    record: &RunRecord,
) -> Result<Summary, CliError> {
    let final_stationarity = match record.last_probe() {
        Some(p) if p.k == record.rows.len() - 1 => p.stationarity,
        _ => stationarity_measure(problem, &record.final_x, gsgd.stationarity_radius)?.value,
    };
    let final_f = record.rows.last().map(|r| r.f).unwrap_or(f64::NAN);
    Ok(Summary {
        seed: gsgd.seed,
        c: gsgd.schedule.scale,
        final_f,
        final_stationarity,
        diverged: record.diverged(),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Writes `run.csv`, `probes.csv`, `summary.csv` and `config.echo` under the output directory.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let exp = run_experiment(cfg)?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    write_run_csv(create(&dir.join("run.csv"))?, &exp.record.rows)?;
    write_probes_csv(create(&dir.join("probes.csv"))?, &exp.record.probes)?;
    write_summary_csv(
        create(&dir.join("summary.csv"))?,
        std::slice::from_ref(&exp.summary),
    )?;
    let mut echo = cfg.clone();
    echo.output.dir = dir.clone();
    fs::write(dir.join("config.echo"), echo.to_json() + "\n")?;
    Ok(exp)
}

/// All `(seed, c)` pairs of the sweep block, ordered by seed then `c`.
pub fn sweep_grid(cfg: &ExperimentConfig) -> Result<Vec<(u64, f64)>, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Invalid("sweep needs a `sweep` block".into()))?;
    if sweep.seeds.is_empty() || sweep.scales.is_empty() {
        return Err(CliError::Invalid(
            "sweep needs at least one seed and one scale".into(),
        ));
    }
    let mut grid: Vec<(u64, f64)> = sweep
        .seeds
        .iter()
        .flat_map(|&s| sweep.scales.iter().map(move |&c| (s, c)))
        .collect();
    grid.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(grid)
}

/// Runs the grid in parallel. A diverged run is a row, not an error.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<Summary>, CliError> {
    let variants = sweep_grid(cfg)?
        .into_iter()
        .map(|(s, c)| cfg.variant(s, c))
        .collect::<Result<Vec<_>, _>>()?;
    variants
        .par_iter()
        .map(|v| run_experiment(v).map(|e| e.summary))
        .collect()
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<Summary>, CliError> {
    let rows = run_sweep(cfg)?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    write_summary_csv(create(&dir.join("sweep.csv"))?, &rows)?;
    Ok(rows)
}

/// Schedule checks over the run horizon (at least 100 steps).
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<ValidationReport, CliError> {
    Ok(validate(&cfg.schedule, cfg.method.horizon.max(100))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub max_diagonal_gap: f64,
    pub max_abs_u: f64,
    pub terminal: Vec<f64>,
    pub terminal_stationarity: f64,
    pub distance_to_minimizer: f64,
}

impl CounterexampleReport {
    pub fn stays_on_segment(&self) -> bool {
        self.max_diagonal_gap == 0.0 && self.max_abs_u <= 1.0
    }
}

pub const COUNTEREXAMPLE_MINIMIZER: [f64; 2] = [-10.0, 20.0];

/// signSGD with `theta = 1` and the diagonal tie rule on `|2u + v| + |u + 10|` from `(eps0, eps0)`.
pub fn counterexample(
    eps0: f64,
    eta0: f64,
    horizon: usize,
) -> Result<CounterexampleReport, CliError> {
    if !(eps0 > 0.0 && eps0 < 1.0 / 3.0) {
        return Err(CliError::OutOfRange(format!(
            "eps0 must lie in (0, 1/3), got {eps0}"
        )));
    }
    if !(eta0 > 0.0 && eta0 <= 1.0 / 3.0) {
        return Err(CliError::OutOfRange(format!(
            "eta0 must lie in (0, 1/3], got {eta0}"
        )));
    }
    let problem = make_counterexample(Side::Plus);
    // eta0 <= 1/3 already keeps eta0 / sqrt(k + 1) below 1/3
    let schedule = StepsizeSchedule::new(
        Regime::Fixed { theta0: 1.0 },
        EtaRule::Power { eta0, p: 0.5 },
    )?;
    let mut gsgd = GsgdConfig::new(Method::SignSgd, schedule, horizon);
    gsgd.tie = TiePolicy::Diagonal;
    gsgd.probe_period = 0;
    gsgd.record_trajectory = true;
    gsgd.x0 = Some(vec![eps0, eps0]);
    let record = run(&problem, &gsgd)?;
    let path = record.trajectory.as_deref().unwrap_or_default();
    let max_diagonal_gap = path.iter().map(|p| (p[0] - p[1]).abs()).fold(0.0, f64::max);
    let max_abs_u = path.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
    let terminal = record.final_x.clone();
    let terminal_stationarity = stationarity_measure(&problem, &terminal, 0.0)?.value;
    let distance_to_minimizer = gsgd_core::linalg::dist(&terminal, &COUNTEREXAMPLE_MINIMIZER);
    Ok(CounterexampleReport {
        max_diagonal_gap,
        max_abs_u,
        terminal,
        terminal_stationarity,
        distance_to_minimizer,
    })
}
