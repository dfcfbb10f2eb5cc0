//! Experiment grids over synthetic workloads.
//!
//! Each grid sweeps batch sizes and workload shapes, runs the schedulers it
//! compares, and aggregates one row per metric and cell. Trials draw from
//! independent seeded streams so runs are reproducible and can execute
//! concurrently.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{fixpart_best, fixpart_schedule, miso_schedule, partition_from_sizes};
use crate::error::{Error, Result};
use crate::metrics::{mean_stddev, percent_gain, rho, sigma, MetricKind, MetricRow};
use crate::model::{builtin_model, GpuModel};
use crate::multibatch::{run_stream, StreamOptions};
use crate::oracle::lower_bound;
use crate::refine::{refine, RefineOptions};
use crate::sched::{far_schedule, FarOptions, ScheduleOptions};
use crate::workload::{generate_with_rng, SyntheticConfig, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// Tasks exploit only the two smallest sizes.
    Poor,
    /// Even shares across all sizes.
    Mixed,
    /// Tasks exploit the two largest sizes.
    Good,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeRange {
    /// 1 to 100 seconds.
    Wide,
    /// 90 to 100 seconds.
    Narrow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub scaling: Scaling,
    pub times: TimeRange,
}

impl Cell {
    pub fn label(&self) -> String {
        let s = match self.scaling {
            Scaling::Poor => "poor",
            Scaling::Mixed => "mixed",
            Scaling::Good => "good",
        };
        let t = match self.times {
            TimeRange::Wide => "wide",
            TimeRange::Narrow => "narrow",
        };
        format!("{s}+{t}")
    }
}

pub fn scaling_shares(model: &GpuModel, scaling: Scaling) -> BTreeMap<u32, f64> {
    let sizes = &model.sizes;
    let mut shares: BTreeMap<u32, f64> = sizes.iter().map(|&s| (s, 0.0)).collect();
    match scaling {
        Scaling::Poor => {
            shares.insert(sizes[0], 50.0);
            shares.insert(sizes[1], 50.0);
        }
        Scaling::Good => {
            shares.insert(sizes[sizes.len() - 2], 50.0);
            shares.insert(sizes[sizes.len() - 1], 50.0);
        }
        Scaling::Mixed => {
            let even = 100.0 / sizes.len() as f64;
            for &s in sizes {
                shares.insert(s, even);
            }
        }
    }
    shares
}

fn time_range(times: TimeRange) -> (f64, f64) {
    match times {
        TimeRange::Wide => (1.0, 100.0),
        TimeRange::Narrow => (90.0, 100.0),
    }
}

pub fn cell_config(model: &GpuModel, cell: Cell, n: usize, seed: u64) -> SyntheticConfig {
    let (t_min, t_max) = time_range(cell.times);
    SyntheticConfig::new(n, scaling_shares(model, cell.scaling), 50.0, t_min, t_max, seed)
}

fn trial_rng(seed: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell.wrapping_mul(1 << 24).wrapping_add(trial + 1));
    rng
}

fn gen_tasks(
    model: &Arc<GpuModel>,
    cell: Cell,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Task>> {
    let cfg = cell_config(model, cell, n, 0);
    generate_with_rng(&cfg, model, rng)
}

const ALL_SCALINGS: [Scaling; 3] = [Scaling::Poor, Scaling::Mixed, Scaling::Good];
const BOTH_RANGES: [TimeRange; 2] = [TimeRange::Wide, TimeRange::Narrow];

fn row(metric: MetricKind, cell: Cell, n: usize, values: &[f64]) -> MetricRow {
    let (mean, stddev) = mean_stddev(values);
    MetricRow {
        metric,
        config: cell.label(),
        n,
        trials: values.len(),
        mean,
        stddev,
    }
}

/// Mean makespan-over-baseline of the full scheduler.
pub fn grid_makespan_ratio(
    model: &Arc<GpuModel>,
    cells: &[Cell],
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for (ci, &cell) in cells.iter().enumerate() {
        for (ni, &n) in ns.iter().enumerate() {
            let cell_id = (ci * 64 + ni) as u64;
            let values = (0..trials as u64)
                .into_par_iter()
                .map(|t| -> Result<f64> {
                    let mut rng = trial_rng(seed, cell_id, t);
                    let tasks = gen_tasks(model, cell, n, &mut rng)?;
                    let (s, _) = far_schedule(&tasks, model, &FarOptions::default())?;
                    rho(s.makespan, lower_bound(&tasks, model))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row(MetricKind::Rho, cell, n, &values));
        }
    }
    Ok(rows)
}

/// Makespans of the alternatives relative to the full scheduler.
pub fn grid_alternatives(
    model: &Arc<GpuModel>,
    cells: &[Cell],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let ones: Vec<u32> = vec![1; model.num_slices as usize];
    let full = vec![model.max_size()];
    let part_ones = partition_from_sizes(model, &ones)?;
    let part_full = partition_from_sizes(model, &full)?;

    let mut rows = Vec::new();
    for (ci, &cell) in cells.iter().enumerate() {
        let cell_id = 4096 + ci as u64;
        let values = (0..trials as u64)
            .into_par_iter()
            .map(|t| -> Result<[f64; 4]> {
                let mut rng = trial_rng(seed, cell_id, t);
                let tasks = gen_tasks(model, cell, n, &mut rng)?;
                let (far, _) = far_schedule(&tasks, model, &FarOptions::default())?;
                let miso = miso_schedule(&tasks, model, &ScheduleOptions::default())?;
                let fp_ones = fixpart_schedule(&tasks, model, &part_ones)?;
                let (_, fp_best) = fixpart_best(&tasks, model)?;
                let fp_full = fixpart_schedule(&tasks, model, &part_full)?;
                Ok([
                    sigma(miso.makespan, far.makespan)?,
                    sigma(fp_ones.makespan, far.makespan)?,
                    sigma(fp_best.makespan, far.makespan)?,
                    sigma(fp_full.makespan, far.makespan)?,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let col = |i: usize| values.iter().map(|v| v[i]).collect::<Vec<_>>();
        rows.push(row(MetricKind::SigmaMiso, cell, n, &col(0)));
        rows.push(row(MetricKind::SigmaFixPartOnes, cell, n, &col(1)));
        rows.push(row(MetricKind::SigmaFixPartBest, cell, n, &col(2)));
        rows.push(row(MetricKind::SigmaFixPartFull, cell, n, &col(3)));
    }
    Ok(rows)
}

/// Refinement gain and operation counts.
pub fn grid_refinement(
    model: &Arc<GpuModel>,
    cells: &[Cell],
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for (ci, &cell) in cells.iter().enumerate() {
        for (ni, &n) in ns.iter().enumerate() {
            let cell_id = 8192 + (ci * 64 + ni) as u64;
            let values = (0..trials as u64)
                .into_par_iter()
                .map(|t| -> Result<[f64; 3]> {
                    let mut rng = trial_rng(seed, cell_id, t);
                    let tasks = gen_tasks(model, cell, n, &mut rng)?;
                    let opts = FarOptions {
                        refine: false,
                        ..FarOptions::default()
                    };
                    let (unrefined, _) = far_schedule(&tasks, model, &opts)?;
                    let (refined, rep) = refine(&unrefined, &RefineOptions::default());
                    Ok([
                        percent_gain(unrefined.makespan, refined.makespan)?,
                        rep.moves as f64,
                        rep.swaps as f64,
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            let col = |i: usize| values.iter().map(|v| v[i]).collect::<Vec<_>>();
            rows.push(row(MetricKind::PRef, cell, n, &col(0)));
            rows.push(row(MetricKind::Moves, cell, n, &col(1)));
            rows.push(row(MetricKind::Swaps, cell, n, &col(2)));
        }
    }
    Ok(rows)
}

/// Concatenation gains (and operation counts) over a stream of batches;
/// `trials` is the number of seams, using `trials + 1` batches.
pub fn grid_concatenation(
    model: &Arc<GpuModel>,
    cells: &[Cell],
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let cases: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| ns.iter().enumerate().map(move |(ni, _)| (ci, ni)))
        .collect();
    let results: Vec<(usize, usize, Vec<[f64; 4]>)> = cases
        .into_par_iter()
        .map(|(ci, ni)| -> Result<(usize, usize, Vec<[f64; 4]>)> {
            let cell = cells[ci];
            let n = ns[ni];
            let cell_id = 16384 + (ci * 64 + ni) as u64;
            let mut rng = trial_rng(seed, cell_id, 0);
            let batches: Vec<Vec<Task>> = (0..=trials)
                .map(|_| gen_tasks(model, cell, n, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let (_, result) = run_stream(&batches, model, &StreamOptions::default())?;
            Ok((
                ci,
                ni,
                result
                    .seams
                    .iter()
                    .map(|s| [s.p_rev, s.p_move_swap, s.moves as f64, s.swaps as f64])
                    .collect(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ordered = results;
    ordered.sort_by_key(|(ci, ni, _)| (*ci, *ni));
    for (ci, ni, seams) in ordered {
        let cell = cells[ci];
        let n = ns[ni];
        let col = |i: usize| seams.iter().map(|v| v[i]).collect::<Vec<_>>();
        rows.push(row(MetricKind::PRev, cell, n, &col(0)));
        rows.push(row(MetricKind::PMoveSwap, cell, n, &col(1)));
        rows.push(row(MetricKind::Moves, cell, n, &col(2)));
        rows.push(row(MetricKind::Swaps, cell, n, &col(3)));
    }
    Ok(rows)
}

/// Stream makespan against the multi-batch lower bound; `trials` batches.
pub fn grid_multibatch(
    model: &Arc<GpuModel>,
    cells: &[Cell],
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let cases: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| ns.iter().enumerate().map(move |(ni, _)| (ci, ni)))
        .collect();
    let results: Vec<(usize, usize, f64, usize)> = cases
        .into_par_iter()
        .map(|(ci, ni)| -> Result<(usize, usize, f64, usize)> {
            let cell = cells[ci];
            let n = ns[ni];
            let cell_id = 32768 + (ci * 64 + ni) as u64;
            let mut rng = trial_rng(seed, cell_id, 0);
            let batches: Vec<Vec<Task>> = (0..trials.max(1))
                .map(|_| gen_tasks(model, cell, n, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let (_, result) = run_stream(&batches, model, &StreamOptions::default())?;
            Ok((ci, ni, result.p_multibatch, batches.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ordered = results;
    ordered.sort_by_key(|(ci, ni, _, _)| (*ci, *ni));
    for (ci, ni, value, count) in ordered {
        rows.push(MetricRow {
            metric: MetricKind::PMultibatch,
            config: cells[ci].label(),
            n: ns[ni],
            trials: count,
            mean: value,
            stddev: 0.0,
        });
    }
    Ok(rows)
}

/// Runs one of the built-in grids.
pub fn run_experiment(grid: &str, trials: usize, seed: u64) -> Result<Vec<MetricRow>> {
    let model = builtin_model("A100")?;
    let wide: Vec<Cell> = ALL_SCALINGS
        .iter()
        .map(|&scaling| Cell {
            scaling,
            times: TimeRange::Wide,
        })
        .collect();
    let all: Vec<Cell> = ALL_SCALINGS
        .iter()
        .flat_map(|&scaling| BOTH_RANGES.iter().map(move |&times| Cell { scaling, times }))
        .collect();
    match grid {
        "table4" => grid_makespan_ratio(&model, &wide, &[10, 15, 20, 25, 30, 35], trials, seed),
        "table5" => grid_alternatives(&model, &all, 15, trials, seed),
        "table6" => grid_refinement(&model, &all, &[10, 20, 30], trials, seed),
        "table7" | "table8" => {
            grid_concatenation(&model, &all, &[10, 20, 30], trials, seed)
        }
        "table9" => grid_multibatch(&model, &wide, &[10, 15, 20, 25, 30, 35], trials, seed),
        other => Err(Error::UnknownGrid(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_grid_is_an_error() {
        assert!(run_experiment("table99", 1, 0).is_err());
    }

    #[test]
    fn experiments_are_reproducible() {
        let model = builtin_model("A100").unwrap();
        let cells = [Cell {
            scaling: Scaling::Mixed,
            times: TimeRange::Wide,
        }];
        let a = grid_makespan_ratio(&model, &cells, &[8], 5, 7).unwrap();
        let b = grid_makespan_ratio(&model, &cells, &[8], 5, 7).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mean.to_bits(), y.mean.to_bits());
            assert_eq!(x.stddev.to_bits(), y.stddev.to_bits());
        }
    }

    #[test]
    fn small_grid_produces_expected_rows() {
        let model = builtin_model("A100").unwrap();
        let cells = [Cell {
            scaling: Scaling::Poor,
            times: TimeRange::Narrow,
        }];
        let rows = grid_refinement(&model, &cells, &[6], 3, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.trials == 3));
    }
}
