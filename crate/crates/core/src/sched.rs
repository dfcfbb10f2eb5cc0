//! Phase 2: list scheduling with LPT over the repartitioning tree, and the
//! full scheduler that picks the best allocation of the family.
//!
//! The GPU starts with no instances. The root enters a min-heap keyed by end
//! time; popping the earliest-ending instance either places the longest
//! unscheduled task of a size it hosts (paying a creation the first time),
//! or splits it into its children (paying a destruction iff it ran tasks),
//! or drops it when nothing is left to schedule. Creations and destructions
//! are sequenced through a single global reconfiguration clock.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::allocation::{allocation_family, Allocation, AllocationFamily};
use crate::error::{Error, Result};
use crate::model::{GpuModel, Instance};
use crate::refine::{refine, RefineOptions, RefineReport};
use crate::workload::Task;

/// A task placed on a tree node.
///
/// `size_used` equals the node size except for size-3 tasks hosted by the
/// 4-slice node of an A100/H100, which still occupy all four slices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledTask {
    pub task_id: String,
    pub node: Instance,
    pub size_used: u32,
    pub start: f64,
    pub duration: f64,
}

impl ScheduledTask {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconfigKind {
    Create,
    Destroy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigEvent {
    pub kind: ReconfigKind,
    pub instance: Instance,
    pub start: f64,
    pub duration: f64,
}

impl ReconfigEvent {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// A complete schedule on one GPU.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub model: Arc<GpuModel>,
    pub tasks: Vec<ScheduledTask>,
    pub reconfigs: Vec<ReconfigEvent>,
    /// Latest task finish time (0 for an empty schedule).
    pub makespan: f64,
    /// Per-slice latest finish over tasks whose node covers the slice.
    pub slice_end: Vec<f64>,
}

impl Schedule {
    pub fn empty(model: Arc<GpuModel>) -> Self {
        let slices = model.num_slices as usize;
        Schedule {
            model,
            tasks: Vec::new(),
            reconfigs: Vec::new(),
            makespan: 0.0,
            slice_end: vec![0.0; slices],
        }
    }

    /// Builds a schedule from placed tasks and events, computing the
    /// makespan and per-slice end times.
    pub fn from_parts(
        model: Arc<GpuModel>,
        tasks: Vec<ScheduledTask>,
        reconfigs: Vec<ReconfigEvent>,
    ) -> Self {
        let mut s = Schedule {
            model,
            tasks,
            reconfigs,
            makespan: 0.0,
            slice_end: Vec::new(),
        };
        s.recompute();
        s
    }

    pub fn recompute(&mut self) {
        let slices = self.model.num_slices as usize;
        let mut slice_end = vec![0.0f64; slices];
        let mut makespan = 0.0f64;
        for t in &self.tasks {
            makespan = makespan.max(t.end());
            for s in t.node.slices() {
                let e = &mut slice_end[s as usize];
                *e = e.max(t.end());
            }
        }
        self.makespan = makespan;
        self.slice_end = slice_end;
        self.reconfigs.sort_by(|a, b| a.start.total_cmp(&b.start));
        self.tasks.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then(a.node.start_slice.cmp(&b.node.start_slice))
        });
    }

    /// Earliest task start per slice, `+inf` for unused slices.
    pub fn first_use(&self) -> Vec<f64> {
        let mut first = vec![f64::INFINITY; self.model.num_slices as usize];
        for t in &self.tasks {
            for s in t.node.slices() {
                let f = &mut first[s as usize];
                *f = f.min(t.start);
            }
        }
        first
    }

    /// True when all reconfiguration events carry zero cost.
    pub fn is_zero_reconfig(&self) -> bool {
        self.reconfigs.iter().all(|e| e.duration == 0.0)
    }

    /// Instances in use when the schedule ends: created (or pre-existing)
    /// and never destroyed.
    pub fn leftover_instances(&self) -> Vec<Instance> {
        let mut alive: BTreeMap<Instance, bool> = BTreeMap::new();
        for t in &self.tasks {
            alive.entry(t.node).or_insert(true);
        }
        let mut events = self.reconfigs.clone();
        events.sort_by(|a, b| a.start.total_cmp(&b.start));
        for e in &events {
            alive.insert(e.instance, e.kind == ReconfigKind::Create);
        }
        alive.into_iter().filter(|(_, a)| *a).map(|(i, _)| i).collect()
    }

    /// Instances whose first appearance is a task or a destruction: they
    /// must already exist when the schedule starts.
    pub fn initial_instances(&self) -> Vec<Instance> {
        let mut first_task: BTreeMap<Instance, f64> = BTreeMap::new();
        for t in &self.tasks {
            let e = first_task.entry(t.node).or_insert(f64::INFINITY);
            *e = e.min(t.start);
        }
        let mut first_create: BTreeMap<Instance, f64> = BTreeMap::new();
        let mut first_destroy: BTreeMap<Instance, f64> = BTreeMap::new();
        for e in &self.reconfigs {
            let map = match e.kind {
                ReconfigKind::Create => &mut first_create,
                ReconfigKind::Destroy => &mut first_destroy,
            };
            let v = map.entry(e.instance).or_insert(f64::INFINITY);
            *v = v.min(e.start);
        }
        let mut out = Vec::new();
        let mut candidates: Vec<Instance> = first_task.keys().copied().collect();
        for inst in first_destroy.keys() {
            if !candidates.contains(inst) {
                candidates.push(*inst);
            }
        }
        candidates.sort();
        for inst in candidates {
            let use_at = first_task
                .get(&inst)
                .copied()
                .unwrap_or(f64::INFINITY)
                .min(first_destroy.get(&inst).copied().unwrap_or(f64::INFINITY));
            let created = first_create.get(&inst).copied().unwrap_or(f64::INFINITY);
            // Clearly before any creation; a use at the creation instant
            // belongs to that creation.
            if use_at + 1e-9 < created {
                out.push(inst);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScheduleOptions {
    pub zero_reconfig: bool,
}

/// Heap key: earliest end first, ties to the smaller start slice, then the
/// larger size.
#[derive(Debug, Clone, Copy, PartialEq)]
struct NodeKey {
    end: f64,
    start_slice: u32,
    size_neg: i64,
    node: usize,
}

impl Eq for NodeKey {}

impl Ord for NodeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.end
            .total_cmp(&other.end)
            .then(self.start_slice.cmp(&other.start_slice))
            .then(self.size_neg.cmp(&other.size_neg))
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for NodeKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn heap_key(model: &GpuModel, node: usize, end: f64) -> Reverse<NodeKey> {
    let inst = model.nodes()[node].instance;
    Reverse(NodeKey {
        end,
        start_slice: inst.start_slice,
        size_neg: -i64::from(inst.size),
        node,
    })
}

/// Schedules one fixed allocation by repartitioning.
pub fn schedule_allocation(
    tasks: &[Task],
    allocation: &Allocation,
    model: &Arc<GpuModel>,
    opts: &ScheduleOptions,
) -> Result<Schedule> {
    assert_eq!(
        allocation.0.len(),
        tasks.len(),
        "allocation length must match the task count"
    );
    // Group task indices by allocated size, longest first.
    let mut groups: BTreeMap<u32, VecDeque<usize>> = BTreeMap::new();
    for (i, &size) in allocation.0.iter().enumerate() {
        if !model.nodes().iter().any(|n| n.hosted_sizes.contains(&size)) {
            return Err(Error::UnschedulableSize(size));
        }
        groups.entry(size).or_default().push_back(i);
    }
    for (size, group) in groups.iter_mut() {
        let mut v: Vec<usize> = group.iter().copied().collect();
        v.sort_by(|&a, &b| {
            tasks[b]
                .time(*size)
                .total_cmp(&tasks[a].time(*size))
                .then(a.cmp(&b))
        });
        *group = v.into();
    }

    let mut remaining = tasks.len();
    let mut placed: Vec<ScheduledTask> = Vec::with_capacity(tasks.len());
    let mut events: Vec<ReconfigEvent> = Vec::new();
    let mut node_end = vec![0.0f64; model.nodes().len()];
    let mut node_task_count = vec![0usize; model.nodes().len()];
    let mut node_last_size = vec![0u32; model.nodes().len()];
    let mut reconfig_end = 0.0f64;

    let mut heap = BinaryHeap::new();
    heap.push(heap_key(model, model.root(), 0.0));

    while let Some(Reverse(key)) = heap.pop() {
        let node = key.node;
        let tree_node = &model.nodes()[node];
        let hosted = tree_node
            .hosted_sizes
            .iter()
            .copied()
            .find(|s| groups.get(s).is_some_and(|g| !g.is_empty()));

        if let Some(size_used) = hosted {
            if node_task_count[node] == 0 {
                // The physical instance created matches the size it will
                // run, e.g. a size-3 task on the 4-slice node creates the
                // three-slice variant.
                let cost = if opts.zero_reconfig {
                    0.0
                } else {
                    model.create_cost(size_used)
                };
                let ev_start = reconfig_end.max(node_end[node]);
                events.push(ReconfigEvent {
                    kind: ReconfigKind::Create,
                    instance: tree_node.instance,
                    start: ev_start,
                    duration: cost,
                });
                reconfig_end = ev_start + cost;
                node_end[node] = reconfig_end;
            }
            let task_idx = groups.get_mut(&size_used).unwrap().pop_front().unwrap();
            let duration = tasks[task_idx].time(size_used);
            placed.push(ScheduledTask {
                task_id: tasks[task_idx].id.clone(),
                node: tree_node.instance,
                size_used,
                start: node_end[node],
                duration,
            });
            node_end[node] += duration;
            node_task_count[node] += 1;
            node_last_size[node] = size_used;
            remaining -= 1;
            heap.push(heap_key(model, node, node_end[node]));
        } else if remaining > 0 {
            if node_task_count[node] > 0 {
                let cost = if opts.zero_reconfig {
                    0.0
                } else {
                    model.destroy_cost(node_last_size[node])
                };
                let ev_start = reconfig_end.max(node_end[node]);
                events.push(ReconfigEvent {
                    kind: ReconfigKind::Destroy,
                    instance: tree_node.instance,
                    start: ev_start,
                    duration: cost,
                });
                reconfig_end = ev_start + cost;
            }
            for &child in &tree_node.children {
                node_end[child] = node_end[node];
                node_task_count[child] = 0;
                heap.push(heap_key(model, child, node_end[child]));
            }
        }
    }

    Ok(Schedule::from_parts(model.clone(), placed, events))
}

/// One entry of a node's fixed task list for [`replay_node_lists`].
#[derive(Debug, Clone)]
pub struct NodeListEntry {
    pub task_id: String,
    pub size_used: u32,
    pub duration: f64,
}

/// Re-times a schedule whose per-node task order is already decided.
///
/// Runs the same heap dynamics as [`schedule_allocation`], consuming each
/// node's list front to back. Replaying an unmodified schedule reproduces
/// it exactly.
pub fn replay_node_lists(
    model: &Arc<GpuModel>,
    lists: &[Vec<NodeListEntry>],
    zero_reconfig: bool,
) -> Schedule {
    assert_eq!(lists.len(), model.nodes().len());
    let mut remaining: usize = lists.iter().map(|l| l.len()).sum();
    let mut consumed = vec![0usize; lists.len()];
    let mut placed = Vec::with_capacity(remaining);
    let mut events = Vec::new();
    let mut node_end = vec![0.0f64; lists.len()];
    let mut reconfig_end = 0.0f64;

    let mut heap = BinaryHeap::new();
    heap.push(heap_key(model, model.root(), 0.0));

    while let Some(Reverse(key)) = heap.pop() {
        let node = key.node;
        let tree_node = &model.nodes()[node];
        if consumed[node] < lists[node].len() {
            if consumed[node] == 0 {
                let cost = if zero_reconfig {
                    0.0
                } else {
                    model.create_cost(lists[node][0].size_used)
                };
                let ev_start = reconfig_end.max(node_end[node]);
                events.push(ReconfigEvent {
                    kind: ReconfigKind::Create,
                    instance: tree_node.instance,
                    start: ev_start,
                    duration: cost,
                });
                reconfig_end = ev_start + cost;
                node_end[node] = reconfig_end;
            }
            let entry = &lists[node][consumed[node]];
            placed.push(ScheduledTask {
                task_id: entry.task_id.clone(),
                node: tree_node.instance,
                size_used: entry.size_used,
                start: node_end[node],
                duration: entry.duration,
            });
            node_end[node] += entry.duration;
            consumed[node] += 1;
            remaining -= 1;
            heap.push(heap_key(model, node, node_end[node]));
        } else if remaining > 0 {
            if !lists[node].is_empty() {
                let cost = if zero_reconfig {
                    0.0
                } else {
                    model.destroy_cost(lists[node].last().unwrap().size_used)
                };
                let ev_start = reconfig_end.max(node_end[node]);
                events.push(ReconfigEvent {
                    kind: ReconfigKind::Destroy,
                    instance: tree_node.instance,
                    start: ev_start,
                    duration: cost,
                });
                reconfig_end = ev_start + cost;
            }
            for &child in &tree_node.children {
                node_end[child] = node_end[node];
                heap.push(heap_key(model, child, node_end[child]));
            }
        }
    }

    Schedule::from_parts(model.clone(), placed, events)
}

#[derive(Debug, Clone)]
pub struct FarOptions {
    pub refine: bool,
    pub zero_reconfig: bool,
    pub refine_opts: RefineOptions,
}

impl Default for FarOptions {
    fn default() -> Self {
        FarOptions {
            refine: true,
            zero_reconfig: false,
            refine_opts: RefineOptions::default(),
        }
    }
}

/// How the winning schedule was found.
#[derive(Debug, Clone)]
pub struct FarReport {
    pub family: AllocationFamily,
    pub makespans: Vec<f64>,
    pub chosen: usize,
    pub refine: Option<RefineReport>,
}

/// Full scheduler: build the allocation family, schedule each member, keep
/// the best, then refine it.
pub fn far_schedule(
    tasks: &[Task],
    model: &Arc<GpuModel>,
    opts: &FarOptions,
) -> Result<(Schedule, FarReport)> {
    if tasks.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let family = allocation_family(tasks, model);
    let sched_opts = ScheduleOptions {
        zero_reconfig: opts.zero_reconfig,
    };
    let mut makespans = Vec::with_capacity(family.len());
    let mut best: Option<(usize, Schedule)> = None;
    for (idx, alloc) in family.allocations.iter().enumerate() {
        let s = schedule_allocation(tasks, alloc, model, &sched_opts)?;
        makespans.push(s.makespan);
        let better = match &best {
            Some((_, b)) => s.makespan < b.makespan,
            None => true,
        };
        if better {
            best = Some((idx, s));
        }
    }
    let (chosen, schedule) = best.expect("non-empty family");
    let (schedule, refine_report) = if opts.refine {
        let (s, r) = refine(&schedule, &opts.refine_opts);
        (s, Some(r))
    } else {
        (schedule, None)
    };
    Ok((
        schedule,
        FarReport {
            family,
            makespans,
            chosen,
            refine: refine_report,
        },
    ))
}
