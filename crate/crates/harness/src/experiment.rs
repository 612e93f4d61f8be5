//! Runs a configured experiment and writes its artifacts.
//!
//! Every mode writes `history_<mode>.csv` and `summary_<mode>.txt` into the
//! output directory; the sweeps add their own tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use csysid_core::analytic_moments::{moment_sum, theoretical_step_size};
use csysid_core::baselines::{least_squares_pooled, pooled_run, single_agent_run};
use csysid_core::clustered::{run, warm_init, ModelSet, Reference, RunHistory, StepRule};
use csysid_core::lti_sim::{generate_batches, stream_rng, INIT_STREAM};
use csysid_core::metrics::{
    assumption_diagnostics, separation, snr, spectral_error, DIAGNOSTICS_NOTE,
};
use csysid_core::{BatchData, ClusterGroundTruth, SystemSpec};
use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode, StepConfig};
use crate::error::{HarnessError, Result};

/// Stream from which replicate seeds of the sweeps are drawn.
pub const REPLICATE_STREAM: u64 = (1 << 63) + 1;

pub const HISTORY_HEADER: &str = "iteration,cluster,spectral_error,misclassified_total,step_size";

/// One row of a run history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub cluster: usize,
    pub spectral_error: f64,
    pub misclassified_total: usize,
    pub step_size: f64,
}

/// Key/value lines of a summary file, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Summary {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Summary { entries }
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub mode: Mode,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

/// Seed of replicate `index`; replicate 0 is the master seed itself.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    if index == 0 {
        return master;
    }
    let mut rng = stream_rng(master, REPLICATE_STREAM);
    let mut seed = master;
    for _ in 0..index {
        seed = rng.next_u64();
    }
    seed
}

fn rt(context: &str) -> impl FnOnce(csysid_core::SysIdError) -> HarnessError {
    HarnessError::runtime(context.to_string())
}

pub fn history_rows(history: &RunHistory) -> Vec<HistoryRow> {
    history
        .records
        .iter()
        .flat_map(|rec| {
            rec.errors
                .iter()
                .enumerate()
                .map(move |(j, &e)| HistoryRow {
                    iteration: rec.iteration,
                    cluster: j,
                    spectral_error: e,
                    misclassified_total: rec.misclassified,
                    // a shared model reports one step size for every cluster
                    step_size: rec.step_sizes.get(j).copied().unwrap_or(rec.step_sizes[0]),
                })
        })
        .collect()
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    if rows.is_empty() {
        w.write_record(HISTORY_HEADER.split(','))
            .map_err(|e| csv_io(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_io(path, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != HISTORY_HEADER {
        return Err(HarnessError::Data {
            path: path.into(),
            message: format!("unexpected header '{header}'"),
        });
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<HistoryRow>, _>>()
        .map_err(|e| HarnessError::Data {
            path: path.into(),
            message: e.to_string(),
        })
}

fn csv_io(path: &Path, e: csv::Error) -> HarnessError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => HarnessError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        HarnessError::Data {
            path: path.into(),
            message: e.to_string(),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Everything a single clustered/baseline run needs.
struct Setup {
    truths: Vec<ClusterGroundTruth>,
    specs: Vec<SystemSpec>,
    batches: Vec<BatchData>,
    init: ModelSet,
}

fn setup(cfg: &ExperimentConfig, specs: Vec<SystemSpec>, seed: u64) -> Result<Setup> {
    let truths = cfg.truths();
    let batches = generate_batches(&specs, &truths, seed).map_err(rt("generating data"))?;
    let init = warm_init(&truths, cfg.alpha0, &mut stream_rng(seed, INIT_STREAM))
        .map_err(rt("warm initialization"))?;
    Ok(Setup {
        truths,
        specs,
        batches,
        init,
    })
}

fn clustered_history(cfg: &ExperimentConfig, s: &Setup) -> Result<RunHistory> {
    let rule = match cfg.step {
        StepConfig::Fixed { value } => StepRule::Fixed(value),
        StepConfig::Theoretical => StepRule::Theoretical(
            s.specs
                .iter()
                .map(|spec| moment_sum(spec, &s.truths[spec.cluster_id]))
                .collect::<csysid_core::Result<Vec<_>>>()
                .map_err(rt("moment sums"))?,
        ),
    };
    let labels: Vec<usize> = s.specs.iter().map(|spec| spec.cluster_id).collect();
    run(
        Reference {
            truths: &s.truths,
            labels: &labels,
        },
        &s.batches,
        s.init.clone(),
        &rule,
        cfg.iterations,
    )
    .map_err(rt("clustered run"))
}

fn mean_model(models: &ModelSet) -> DMatrix<f64> {
    let sum = models.thetas().iter().fold(
        DMatrix::zeros(models.shape().0, models.shape().1),
        |acc, t| acc + t,
    );
    sum / models.k() as f64
}

fn pooled_history(cfg: &ExperimentConfig, s: &Setup) -> Result<RunHistory> {
    let eta = match cfg.step {
        StepConfig::Fixed { value } => value,
        StepConfig::Theoretical => {
            theoretical_step_size(&s.specs, &s.truths).map_err(rt("pooled step size"))?
        }
    };
    pooled_run(
        &s.batches,
        &s.truths,
        &mean_model(&s.init),
        eta,
        cfg.iterations,
    )
    .map_err(rt("pooled run"))
}

/// Per-cluster single-agent runs on each cluster's first member, merged
/// into one history with one error per cluster.
fn single_agent_rows(cfg: &ExperimentConfig, s: &Setup) -> Result<Vec<HistoryRow>> {
    let mut per_cluster = Vec::new();
    for (j, truth) in s.truths.iter().enumerate() {
        let idx = s
            .specs
            .iter()
            .position(|spec| spec.cluster_id == j)
            .ok_or_else(|| HarnessError::Runtime {
                context: "single-agent run".into(),
                source: csysid_core::SysIdError::Config(format!("cluster {j} has no members")),
            })?;
        let eta = match cfg.step {
            StepConfig::Fixed { value } => value,
            StepConfig::Theoretical => {
                theoretical_step_size(std::slice::from_ref(&s.specs[idx]), &s.truths)
                    .map_err(rt("single-agent step size"))?
            }
        };
        let h = single_agent_run(&s.batches[idx], truth, s.init.theta(j), eta, cfg.iterations)
            .map_err(rt("single-agent run"))?;
        per_cluster.push((eta, h));
    }
    let mut rows = Vec::new();
    for r in 0..cfg.iterations {
        for (j, (eta, h)) in per_cluster.iter().enumerate() {
            rows.push(HistoryRow {
                iteration: r + 1,
                cluster: j,
                spectral_error: h.records[r].errors[0],
                misclassified_total: 0,
                step_size: *eta,
            });
        }
    }
    Ok(rows)
}

fn final_rows(rows: &[HistoryRow]) -> Vec<&HistoryRow> {
    let last = rows.iter().map(|r| r.iteration).max().unwrap_or(0);
    rows.iter().filter(|r| r.iteration == last).collect()
}

fn describe_setup(cfg: &ExperimentConfig, mode: Mode, seed: u64, summary: &mut Summary) {
    summary.push("mode", mode);
    summary.push("seed", seed);
    summary.push("num_systems", cfg.num_systems);
    summary.push("num_clusters", cfg.num_clusters);
    summary.push("horizon", cfg.horizon);
    summary.push("iterations", cfg.iterations);
    summary.push("alpha0", cfg.alpha0);
}

fn describe_geometry(cfg: &ExperimentConfig, summary: &mut Summary) {
    let truths = cfg.truths();
    let specs = cfg.system_specs();
    match separation(&truths) {
        Ok(sep) => {
            summary.push("delta_min", sep.delta_min);
            summary.push("delta_max", sep.delta_max);
            for j in 0..cfg.clusters.len() {
                let spec = specs.iter().find(|s| s.cluster_id == j).expect("validated");
                match snr(spec, sep.delta_min) {
                    Ok(rho) => summary.push(format!("snr_cluster_{j}"), rho),
                    Err(e) => {
                        summary.push(format!("snr_cluster_{j}"), format!("unavailable ({e})"))
                    }
                }
            }
            match assumption_diagnostics(&specs, &truths, cfg.alpha0, cfg.delta) {
                Ok(d) => {
                    summary.push("diagnostics_min_ratio", d.min_ratio);
                    summary.push("diagnostics_tail_sum", d.tail_sum);
                    summary.push("diagnostics_separation_margin", d.separation_margin);
                }
                Err(e) => summary.push("diagnostics", format!("unavailable ({e})")),
            }
            summary.push("diagnostics_note", DIAGNOSTICS_NOTE);
        }
        Err(e) => summary.push("separation", format!("unavailable ({e})")),
    }
}

fn describe_rows(rows: &[HistoryRow], summary: &mut Summary) {
    for r in final_rows(rows) {
        summary.push(
            format!("final_error_cluster_{}", r.cluster),
            r.spectral_error,
        );
    }
    for r in final_rows(rows) {
        summary.push(format!("step_size_cluster_{}", r.cluster), r.step_size);
    }
    let per_iter: Vec<(usize, usize)> = rows
        .iter()
        .filter(|r| r.cluster == 0)
        .map(|r| (r.iteration, r.misclassified_total))
        .collect();
    summary.push(
        "misclassified_final",
        per_iter.last().map_or(0, |&(_, m)| m),
    );
    summary.push(
        "misclassified_total",
        per_iter.iter().map(|&(_, m)| m).sum::<usize>(),
    );
    let settled = per_iter
        .iter()
        .rposition(|&(_, m)| m != 0)
        .map_or(Some(1), |p| per_iter.get(p + 1).map(|&(it, _)| it));
    summary.push(
        "misclassification_zero_from_iteration",
        settled.map_or_else(|| "never".to_string(), |it| it.to_string()),
    );
}

/// Runs one of the single-run modes and returns its history rows.
pub fn single_run_rows(cfg: &ExperimentConfig, mode: Mode, seed: u64) -> Result<Vec<HistoryRow>> {
    let s = setup(cfg, cfg.system_specs(), seed)?;
    match mode {
        Mode::Clustered => Ok(history_rows(&clustered_history(cfg, &s)?)),
        Mode::Pooled => Ok(history_rows(&pooled_history(cfg, &s)?)),
        Mode::SingleAgent => single_agent_rows(cfg, &s),
        Mode::SweepRollouts | Mode::SweepClusterSize => {
            unreachable!("sweeps are not single runs")
        }
    }
}

/// Runs the configured mode and writes artifacts (plot data included) into
/// `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let started = Instant::now();
    let outcome = match cfg.mode {
        Mode::Clustered | Mode::Pooled | Mode::SingleAgent => single_mode(cfg, out)?,
        Mode::SweepRollouts => sweep_rollouts(cfg, out)?,
        Mode::SweepClusterSize => sweep_cluster_size(cfg, out)?,
    };
    log::info!(
        "{} finished in {:.2} s",
        cfg.mode,
        started.elapsed().as_secs_f64()
    );
    let mut outcome = outcome;
    match crate::plot::emit_plot_data(out, out) {
        Ok(mut files) => outcome.files.append(&mut files),
        Err(e) => log::warn!("plot data not written: {e}"),
    }
    Ok(outcome)
}

fn single_mode(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mode = cfg.mode;
    let rows = single_run_rows(cfg, mode, cfg.seed)?;
    let history = out.join(format!("history_{mode}.csv"));
    write_history(&history, &rows)?;

    let mut summary = Summary::default();
    describe_setup(cfg, mode, cfg.seed, &mut summary);
    describe_geometry(cfg, &mut summary);
    describe_rows(&rows, &mut summary);
    let summary_path = out.join(format!("summary_{mode}.txt"));
    write_text(&summary_path, &summary.render())?;
    Ok(Outcome {
        mode,
        files: vec![history, summary_path],
        summary,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Serialize)]
struct MisclassificationRow {
    num_rollouts: usize,
    replicate: usize,
    seed: u64,
    iteration: usize,
    misclassified: usize,
}

fn sweep_rollouts(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mode = Mode::SweepRollouts;
    let dir = out.join("sweep_N");
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let sizes: Vec<usize> = cfg.clusters.iter().map(|c| c.members).collect();

    let mut summary = Summary::default();
    describe_setup(cfg, mode, cfg.seed, &mut summary);
    summary.push("replicates", cfg.seeds);
    describe_geometry(cfg, &mut summary);

    let table = dir.join("misclassification.csv");
    let mut w = csv::Writer::from_path(&table).map_err(|e| csv_io(&table, e))?;
    let mut files = Vec::new();
    for &n in &cfg.sweep.num_rollouts {
        let specs = cfg.specs_with_sizes(&sizes, Some(n));
        let mut first = Vec::with_capacity(cfg.seeds);
        for rep in 0..cfg.seeds {
            let seed = replicate_seed(cfg.seed, rep);
            let s = setup(cfg, specs.clone(), seed)?;
            let h = clustered_history(cfg, &s)?;
            for rec in &h.records {
                w.serialize(MisclassificationRow {
                    num_rollouts: n,
                    replicate: rep,
                    seed,
                    iteration: rec.iteration,
                    misclassified: rec.misclassified,
                })
                .map_err(|e| csv_io(&table, e))?;
            }
            first.push(h.records[0].misclassified as f64);
            if rep == 0 {
                let path = dir.join(format!("history_N{n}.csv"));
                write_history(&path, &history_rows(&h))?;
                files.push(path);
            }
        }
        summary.push(
            format!("median_first_iteration_misclassified_N{n}"),
            median(&mut first),
        );
        let total: f64 = first.iter().sum();
        summary.push(
            format!("first_iteration_misclassification_rate_N{n}"),
            total / (cfg.seeds * cfg.num_systems) as f64,
        );
    }
    w.flush().map_err(|e| HarnessError::io(&table, e))?;
    files.push(table);

    let summary_path = out.join(format!("summary_{mode}.txt"));
    write_text(&summary_path, &summary.render())?;
    files.push(summary_path);
    Ok(Outcome {
        mode,
        files,
        summary,
    })
}

#[derive(Serialize)]
struct ScalingRow {
    cluster_size: usize,
    total_rollouts: usize,
    replicate: usize,
    seed: u64,
    least_squares_error: f64,
}

/// Least-squares error of the first cluster's dynamics pooled over `m`
/// identical systems, for each configured `m`.
fn sweep_cluster_size(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mode = Mode::SweepClusterSize;
    let truths = cfg.truths();
    let mut summary = Summary::default();
    describe_setup(cfg, mode, cfg.seed, &mut summary);
    summary.push("replicates", cfg.seeds);

    let table = out.join("sweep_cluster_size.csv");
    let mut w = csv::Writer::from_path(&table).map_err(|e| csv_io(&table, e))?;
    let mut medians = Vec::new();
    for &m in &cfg.sweep.cluster_sizes {
        let mut sizes = vec![0; cfg.clusters.len()];
        sizes[0] = m;
        let specs = cfg.specs_with_sizes(&sizes, None);
        let total_rollouts: usize = specs.iter().map(|s| s.num_rollouts).sum();
        let mut errors = Vec::with_capacity(cfg.seeds);
        for rep in 0..cfg.seeds {
            let seed = replicate_seed(cfg.seed, rep);
            let batches = generate_batches(&specs, &truths, seed).map_err(rt("generating data"))?;
            let refs: Vec<&BatchData> = batches.iter().collect();
            let est = least_squares_pooled(&refs).map_err(rt("pooled least squares"))?;
            let err = spectral_error(&est, truths[0].theta()).map_err(rt("spectral error"))?;
            w.serialize(ScalingRow {
                cluster_size: m,
                total_rollouts,
                replicate: rep,
                seed,
                least_squares_error: err,
            })
            .map_err(|e| csv_io(&table, e))?;
            errors.push(err);
        }
        let med = median(&mut errors);
        summary.push(format!("median_error_m{m}"), med);
        medians.push((m, med));
    }
    w.flush().map_err(|e| HarnessError::io(&table, e))?;
    for pair in medians.windows(2) {
        let ((m0, e0), (m1, e1)) = (pair[0], pair[1]);
        summary.push(format!("shrink_factor_m{m0}_to_m{m1}"), e0 / e1);
    }

    let summary_path = out.join(format!("summary_{mode}.txt"));
    write_text(&summary_path, &summary.render())?;
    Ok(Outcome {
        mode,
        files: vec![table, summary_path],
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_seeds_are_distinct_and_stable() {
        let seeds: Vec<_> = (0..20).map(|i| replicate_seed(7, i)).collect();
        assert_eq!(seeds[0], 7);
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        assert_eq!(replicate_seed(7, 13), seeds[13]);
    }

    #[test]
    fn summary_round_trips() {
        let mut s = Summary::default();
        s.push("a", 1.5);
        s.push("diagnostics_note", DIAGNOSTICS_NOTE);
        assert_eq!(Summary::parse(&s.render()), s);
        assert_eq!(s.get("a"), Some("1.5"));
    }

    #[test]
    fn history_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let rows = vec![
            HistoryRow {
                iteration: 1,
                cluster: 0,
                spectral_error: 0.1 + 0.2,
                misclassified_total: 3,
                step_size: 1e-3,
            },
            HistoryRow {
                iteration: 1,
                cluster: 1,
                spectral_error: 1.0 / 3.0,
                misclassified_total: 3,
                step_size: 2.5e-17,
            },
        ];
        write_history(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), HISTORY_HEADER);
        assert_eq!(read_history(&path).unwrap(), rows);
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        fs::write(&path, "iter,cluster\n1,0\n").unwrap();
        assert!(matches!(
            read_history(&path),
            Err(HarnessError::Data { .. })
        ));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
