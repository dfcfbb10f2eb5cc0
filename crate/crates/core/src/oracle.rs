//! Exhaustive search over allocations and tree placements, plus the area
//! lower bound used as the evaluation baseline.
//!
//! The search enumerates every per-task size assignment and, for each, every
//! dispatch order and hosting node with branch-and-bound pruning on the
//! partial makespan. Small instances only.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::GpuModel;
use crate::sched::{ReconfigEvent, ReconfigKind, Schedule, ScheduledTask};
use crate::workload::Task;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub zero_reconfig: bool,
    pub max_n: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            zero_reconfig: false,
            max_n: 6,
        }
    }
}

/// `sum of min_s s*t(s) / num_slices`: the optimum is never below the
/// evenly-spread minimum task area.
pub fn lower_bound(tasks: &[Task], model: &GpuModel) -> f64 {
    tasks.iter().map(|t| t.min_work(model)).sum::<f64>() / f64::from(model.num_slices)
}

pub fn lower_bound_multibatch(batches: &[Vec<Task>], model: &GpuModel) -> f64 {
    batches
        .iter()
        .flat_map(|b| b.iter())
        .map(|t| t.min_work(model))
        .sum::<f64>()
        / f64::from(model.num_slices)
}

#[derive(Clone)]
struct Placement {
    task: usize,
    node: usize,
    size_used: u32,
    start: f64,
    duration: f64,
}

struct SearchState<'a> {
    tasks: &'a [Task],
    model: &'a GpuModel,
    zero_reconfig: bool,
    sizes: Vec<u32>,
    durations: Vec<f64>,
    slice_end: Vec<f64>,
    node_end: Vec<f64>,
    /// Execution size of each currently existing node instance.
    existing: Vec<Option<u32>>,
    reconfig_end: f64,
    remaining: u64,
    remaining_area: f64,
    makespan: f64,
    placements: Vec<Placement>,
    events: Vec<ReconfigEvent>,
    best: f64,
    best_placements: Vec<Placement>,
    best_events: Vec<ReconfigEvent>,
    hosts_for: Vec<Vec<usize>>,
}

impl SearchState<'_> {
    fn area_bound(&self) -> f64 {
        (self.slice_end.iter().sum::<f64>() + self.remaining_area)
            / f64::from(self.model.num_slices)
    }

    fn dfs(&mut self) {
        if self.remaining == 0 {
            if self.makespan < self.best {
                self.best = self.makespan;
                self.best_placements = self.placements.clone();
                self.best_events = self.events.clone();
            }
            return;
        }
        if self.area_bound() >= self.best || self.makespan >= self.best {
            return;
        }

        let n = self.tasks.len();
        let mut tried: Vec<(u32, f64)> = Vec::new();
        for task in 0..n {
            if self.remaining & (1 << task) == 0 {
                continue;
            }
            let size = self.sizes[task];
            let duration = self.durations[task];
            // Interchangeable remaining tasks explore one branch.
            if tried.iter().any(|&(s, d)| s == size && d == duration) {
                continue;
            }
            tried.push((size, duration));

            let mut tried_nodes: Vec<Vec<u64>> = Vec::new();
            let host_list = self.hosts_for[size as usize].clone();
            for node in host_list {
                let inst = self.model.nodes()[node].instance;
                // Symmetric hosts: same occupancy profile and readiness.
                let profile: Vec<u64> = inst
                    .slices()
                    .map(|s| self.slice_end[s as usize].to_bits())
                    .chain(std::iter::once(match self.existing[node] {
                        Some(s) => u64::from(s) + 1,
                        None => 0,
                    }))
                    .collect();
                if tried_nodes.contains(&profile) {
                    continue;
                }
                tried_nodes.push(profile);
                self.place_and_recurse(task, node, size, duration);
            }
        }
    }

    fn place_and_recurse(&mut self, task: usize, node: usize, size_used: u32, duration: f64) {
        let saved_slices = self.slice_end.clone();
        let saved_nodes = self.node_end.clone();
        let saved_existing = self.existing.clone();
        let saved_reconfig = self.reconfig_end;
        let saved_makespan = self.makespan;
        let saved_events = self.events.len();
        let inst = self.model.nodes()[node].instance;

        // Clear everything overlapping the node, then make sure it exists
        // at the right size; reconfigurations are sequential.
        for other in 0..self.model.nodes().len() {
            let other_inst = self.model.nodes()[other].instance;
            let run = match self.existing[other] {
                Some(run) => run,
                None => continue,
            };
            let keep = other == node && run == size_used;
            if keep || !other_inst.overlaps(&inst) {
                continue;
            }
            let cost = if self.zero_reconfig {
                0.0
            } else {
                self.model.destroy_cost(run)
            };
            let start = self.reconfig_end.max(self.node_end[other]);
            self.events.push(ReconfigEvent {
                kind: ReconfigKind::Destroy,
                instance: other_inst,
                start,
                duration: cost,
            });
            self.reconfig_end = start + cost;
            self.existing[other] = None;
        }
        let ready = if self.existing[node] == Some(size_used) {
            0.0
        } else {
            let cost = if self.zero_reconfig {
                0.0
            } else {
                self.model.create_cost(size_used)
            };
            let start = self.reconfig_end;
            self.events.push(ReconfigEvent {
                kind: ReconfigKind::Create,
                instance: inst,
                start,
                duration: cost,
            });
            self.reconfig_end = start + cost;
            self.existing[node] = Some(size_used);
            self.reconfig_end
        };

        let free_at = inst
            .slices()
            .map(|s| self.slice_end[s as usize])
            .fold(0.0f64, f64::max);
        let start = free_at.max(ready);
        let end = start + duration;
        for s in inst.slices() {
            self.slice_end[s as usize] = end;
        }
        self.node_end[node] = end;
        self.makespan = self.makespan.max(end);
        self.remaining &= !(1 << task);
        self.remaining_area -= f64::from(size_used) * duration;
        self.placements.push(Placement {
            task,
            node,
            size_used,
            start,
            duration,
        });

        self.dfs();

        self.placements.pop();
        self.remaining_area += f64::from(size_used) * duration;
        self.remaining |= 1 << task;
        self.makespan = saved_makespan;
        self.reconfig_end = saved_reconfig;
        self.existing = saved_existing;
        self.node_end = saved_nodes;
        self.slice_end = saved_slices;
        self.events.truncate(saved_events);
    }
}

/// Certified-optimal schedule over all size assignments and tree
/// placements.
pub fn brute_force_optimal(
    tasks: &[Task],
    model: &Arc<GpuModel>,
    opts: &OracleOptions,
) -> Result<(f64, Schedule)> {
    let n = tasks.len();
    if n > opts.max_n {
        return Err(Error::InstanceTooLarge { n, cap: opts.max_n });
    }
    if n == 0 {
        return Ok((0.0, Schedule::empty(model.clone())));
    }

    let mut hosts_for: Vec<Vec<usize>> = vec![Vec::new(); (model.max_size() + 1) as usize];
    for (idx, node) in model.nodes().iter().enumerate() {
        for &s in &node.hosted_sizes {
            hosts_for[s as usize].push(idx);
        }
    }

    let num_nodes = model.nodes().len();
    let mut best = f64::INFINITY;
    let mut best_result: Option<(Vec<Placement>, Vec<ReconfigEvent>, Vec<u32>)> = None;

    // Odometer over per-task sizes.
    let sizes_domain = &model.sizes;
    let mut idx = vec![0usize; n];
    loop {
        let sizes: Vec<u32> = idx.iter().map(|&i| sizes_domain[i]).collect();
        let durations: Vec<f64> = (0..n).map(|i| tasks[i].time(sizes[i])).collect();
        let area: f64 = (0..n).map(|i| f64::from(sizes[i]) * durations[i]).sum();
        let height = durations.iter().copied().fold(0.0, f64::max);
        let alloc_bound = (area / f64::from(model.num_slices)).max(height);

        if alloc_bound < best {
            let mut state = SearchState {
                tasks,
                model,
                zero_reconfig: opts.zero_reconfig,
                sizes,
                durations,
                slice_end: vec![0.0; model.num_slices as usize],
                node_end: vec![0.0; num_nodes],
                existing: vec![None; num_nodes],
                reconfig_end: 0.0,
                remaining: (1u64 << n) - 1,
                remaining_area: area,
                makespan: 0.0,
                placements: Vec::new(),
                events: Vec::new(),
                best,
                best_placements: Vec::new(),
                best_events: Vec::new(),
                hosts_for: hosts_for.clone(),
            };
            state.dfs();
            if state.best < best {
                best = state.best;
                best_result = Some((
                    state.best_placements,
                    state.best_events,
                    state.sizes,
                ));
            }
        }

        // Advance the odometer.
        let mut pos = 0;
        loop {
            if pos == n {
                break;
            }
            idx[pos] += 1;
            if idx[pos] < sizes_domain.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }

    let (placements, events, _) = best_result.expect("search visits at least one schedule");
    let scheduled: Vec<ScheduledTask> = placements
        .iter()
        .map(|p| ScheduledTask {
            task_id: tasks[p.task].id.clone(),
            node: model.nodes()[p.node].instance,
            size_used: p.size_used,
            start: p.start,
            duration: p.duration,
        })
        .collect();
    Ok((best, Schedule::from_parts(model.clone(), scheduled, events)))
}
