//! Concatenation of per-batch schedules: time reversal, slice-wise overlap,
//! seam reconfigurations and cross-batch move/swap improvement.
//!
//! Consecutive batches alternate orientation so the small-instance tail of
//! one meets the small-instance head of the next. The concatenation offset
//! is the smallest start of the next batch that keeps every slice, instance
//! lifetime and reconfiguration feasible; instances left alive by the
//! previous batch are handed over when the next batch starts on the same
//! ones.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{GpuModel, Instance};
use crate::oracle::lower_bound_multibatch;
use crate::sched::{
    far_schedule, FarOptions, ReconfigEvent, ReconfigKind, Schedule, ScheduledTask,
};
use crate::workload::Task;

const EPS: f64 = 1e-9;

/// Mirrors a forward schedule in time.
///
/// Task intervals map to `makespan - end`; reconfigurations are rebuilt for
/// the mirrored lifecycle: creations become destructions and vice versa, a
/// node is created right before its (now) first task and destroyed after its
/// last one iff an ancestor still needs the slices. With non-zero
/// reconfiguration costs a task block may shift later when the mirrored gap
/// is too small, which can extend the makespan slightly.
pub fn reverse_schedule(s: &Schedule) -> Schedule {
    if s.tasks.is_empty() {
        return Schedule::empty(s.model.clone());
    }
    let model = &s.model;
    let omega = s.makespan;
    let zero = s.is_zero_reconfig();

    // Mirrored tasks grouped per node, in their new chronological order.
    let mut node_tasks: BTreeMap<Instance, Vec<ScheduledTask>> = BTreeMap::new();
    for t in &s.tasks {
        let mut m = t.clone();
        m.start = omega - t.end();
        node_tasks.entry(t.node).or_default().push(m);
    }
    for list in node_tasks.values_mut() {
        list.sort_by(|a, b| a.start.total_cmp(&b.start));
    }

    // A mirrored destruction of N is needed iff some overlapping instance
    // hosted tasks before N was created originally: those tasks come after
    // N's in the mirror, so N must vacate the slices.
    let hosting: Vec<(Instance, f64)> = node_tasks
        .keys()
        .map(|inst| {
            let last_end = s
                .tasks
                .iter()
                .filter(|t| t.node == *inst)
                .map(|t| t.end())
                .fold(f64::NEG_INFINITY, f64::max);
            (*inst, last_end)
        })
        .collect();
    let needs_mirror_destroy = move |inst: &Instance, created_at: f64| -> bool {
        hosting.iter().any(|(m, last_end)| {
            m != inst && m.overlaps(inst) && *last_end <= created_at + EPS
        })
    };

    // Original events in time order, then reversed with kinds swapped.
    let mut ordered: Vec<&ReconfigEvent> = s.reconfigs.iter().collect();
    ordered.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut events = Vec::new();
    let mut reconfig_end = 0.0f64;
    for ev in ordered.iter().rev() {
        if model.node_index(&ev.instance).is_none() {
            continue;
        }
        match ev.kind {
            // A creation mirrors to a destruction after the node's last
            // mirrored task; skipped when nothing needs the slices later.
            ReconfigKind::Create => {
                if !needs_mirror_destroy(&ev.instance, ev.start) {
                    continue;
                }
                let tasks = &node_tasks[&ev.instance];
                let cost = if zero {
                    0.0
                } else {
                    model.destroy_cost(tasks.last().unwrap().size_used)
                };
                let start = reconfig_end.max(tasks.last().unwrap().end());
                events.push(ReconfigEvent {
                    kind: ReconfigKind::Destroy,
                    instance: ev.instance,
                    start,
                    duration: cost,
                });
                reconfig_end = start + cost;
            }
            // A destruction mirrors to a creation before the node's first
            // mirrored task, pushing the block later when it cannot fit.
            ReconfigKind::Destroy => {
                let tasks = node_tasks.get_mut(&ev.instance).unwrap();
                let cost = if zero {
                    0.0
                } else {
                    model.create_cost(tasks.first().unwrap().size_used)
                };
                let start = reconfig_end;
                let end = start + cost;
                let first_start = tasks.first().unwrap().start;
                if end > first_start + EPS {
                    let shift = end - first_start;
                    for t in tasks.iter_mut() {
                        t.start += shift;
                    }
                }
                events.push(ReconfigEvent {
                    kind: ReconfigKind::Create,
                    instance: ev.instance,
                    start,
                    duration: cost,
                });
                reconfig_end = end;
            }
        }
    }

    let tasks: Vec<ScheduledTask> = node_tasks.into_values().flatten().collect();
    Schedule::from_parts(model.clone(), tasks, events)
}

#[derive(Debug, Clone, Copy)]
pub struct ConcatOptions {
    pub move_swap: bool,
    pub max_iterations: usize,
    /// Batches arrive in order: the next batch never starts earlier than
    /// the previous one did.
    pub min_offset: f64,
}

impl Default for ConcatOptions {
    fn default() -> Self {
        ConcatOptions {
            move_swap: true,
            max_iterations: 100,
            min_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConcatReport {
    pub offset: f64,
    pub moves: usize,
    pub swaps: usize,
    pub seam_reconfigs: Vec<ReconfigEvent>,
    /// Minimal offset when the next batch simply starts after the previous
    /// one finishes (same orientation), used as the no-overlap reference.
    pub trivial_offset: f64,
    /// The next batch in local time after move/swap edits.
    pub next_local: Schedule,
}

#[derive(Debug, Clone, Copy)]
enum SeamBase {
    /// Minimal feasible offset at least this large.
    Auto(f64),
    /// Start after the previous batch's last task, at least this large.
    AfterPrev(f64),
    /// Fixed offset; the plan is best-effort and may be infeasible.
    Forced(f64),
}

struct SeamPlan {
    offset: f64,
    events: Vec<ReconfigEvent>,
}

fn last_run_size(s: &Schedule, inst: &Instance) -> u32 {
    s.tasks
        .iter()
        .filter(|t| t.node == *inst)
        .max_by(|a, b| a.end().total_cmp(&b.end()))
        .map(|t| t.size_used)
        .unwrap_or(inst.size)
}

fn first_run_size(s: &Schedule, inst: &Instance) -> u32 {
    s.tasks
        .iter()
        .filter(|t| t.node == *inst)
        .min_by(|a, b| a.start.total_cmp(&b.start))
        .map(|t| t.size_used)
        .unwrap_or(inst.size)
}

fn own_first_task_start(s: &Schedule, inst: &Instance) -> f64 {
    s.tasks
        .iter()
        .filter(|t| t.node == *inst)
        .map(|t| t.start)
        .fold(f64::INFINITY, f64::min)
}

/// Drops leading creations of instances handed over alive from the
/// previous batch.
fn drop_handover_creates(next: &mut Schedule, leftover: &[Instance]) {
    let mut dropped: Vec<usize> = Vec::new();
    let mut events: Vec<(usize, &ReconfigEvent)> = next.reconfigs.iter().enumerate().collect();
    events.sort_by(|a, b| a.1.start.total_cmp(&b.1.start).then(a.0.cmp(&b.0)));
    for pos in 0..events.len() {
        let (idx, e) = events[pos];
        if e.kind != ReconfigKind::Create || !leftover.contains(&e.instance) {
            continue;
        }
        let earlier_event = events[..pos]
            .iter()
            .any(|(_, e2)| e2.instance.overlaps(&e.instance));
        let earlier_task = next
            .tasks
            .iter()
            .any(|t| t.node.overlaps(&e.instance) && t.start < e.end() - EPS);
        if !earlier_event && !earlier_task {
            dropped.push(idx);
        }
    }
    if !dropped.is_empty() {
        let mut keep = Vec::new();
        for (idx, e) in next.reconfigs.iter().enumerate() {
            if !dropped.contains(&idx) {
                keep.push(e.clone());
            }
        }
        next.reconfigs = keep;
        next.recompute();
    }
}

/// Removes the events of nodes that were created inside the batch but no
/// longer run anything (their tasks moved away).
fn drop_empty_created(next: &mut Schedule) {
    let used: Vec<Instance> = next.tasks.iter().map(|t| t.node).collect();
    let had_create: Vec<Instance> = next
        .reconfigs
        .iter()
        .filter(|e| e.kind == ReconfigKind::Create)
        .map(|e| e.instance)
        .collect();
    next.reconfigs.retain(|e| {
        used.contains(&e.instance) || !had_create.contains(&e.instance)
    });
    next.recompute();
}

#[derive(Clone, Copy)]
struct Interval {
    start: f64,
    end: f64,
}

fn overlaps(a: Interval, b: Interval) -> bool {
    a.start < b.end - EPS && b.start < a.end - EPS
}

/// Computes the seam between `prev` (absolute time) and `next` (local
/// time): the offset plus the destroy/create events stitching the instance
/// sets together.
fn plan_seam(prev: &Schedule, next: &Schedule, base: SeamBase) -> SeamPlan {
    let zero = prev.is_zero_reconfig() && next.is_zero_reconfig();
    let leftover = prev.leftover_instances();
    let init = next.initial_instances();
    let destroy_set: Vec<Instance> = leftover
        .iter()
        .copied()
        .filter(|i| !init.contains(i))
        .collect();
    let create_set: Vec<Instance> = init
        .iter()
        .copied()
        .filter(|i| !leftover.contains(i))
        .collect();

    let r_prev = prev.reconfigs.iter().map(|e| e.end()).fold(0.0, f64::max);
    let prev_last_end = |inst: &Instance| -> f64 {
        prev.tasks
            .iter()
            .filter(|t| t.node == *inst)
            .map(|t| t.end())
            .fold(0.0, f64::max)
    };

    // Destructions chain after the previous batch's reconfigurations, each
    // waiting for its own tasks; they do not move with the offset.
    let mut destroys: Vec<(Instance, Interval)> = Vec::new();
    {
        let mut order = destroy_set.clone();
        order.sort_by(|a, b| {
            prev_last_end(a)
                .total_cmp(&prev_last_end(b))
                .then(a.start_slice.cmp(&b.start_slice))
        });
        let mut t = r_prev;
        for inst in order {
            let cost = if zero {
                0.0
            } else {
                prev.model.destroy_cost(last_run_size(prev, &inst))
            };
            let start = t.max(prev_last_end(&inst));
            destroys.push((inst, Interval { start, end: start + cost }));
            t = start + cost;
        }
    }

    // Offset floor from task overlap per slice.
    let first_use = next.first_use();
    let mut floor: f64 = 0.0;
    match base {
        SeamBase::Auto(min) => {
            floor = floor.max(min);
            for s in 0..prev.slice_end.len() {
                if first_use[s].is_finite() {
                    floor = floor.max(prev.slice_end[s] - first_use[s]);
                }
            }
        }
        SeamBase::AfterPrev(min) => {
            floor = floor.max(min).max(prev.makespan);
        }
        SeamBase::Forced(x) => floor = x,
    }
    let forced = matches!(base, SeamBase::Forced(_));

    // An instance must be gone before an overlapping one appears: track
    // when the previous batch's destructions free each slice region.
    let prev_destroy_free = |inst: &Instance| -> f64 {
        prev.reconfigs
            .iter()
            .filter(|e| e.kind == ReconfigKind::Destroy && e.instance.overlaps(inst))
            .map(|e| e.end())
            .fold(0.0, f64::max)
    };
    // First moment the next batch needs the instance: its first task or,
    // for handed-over instances emptied by edits, their own destruction.
    let local_deadline = |inst: &Instance| -> f64 {
        let event = next
            .reconfigs
            .iter()
            .filter(|e| e.instance == *inst)
            .map(|e| e.start)
            .fold(f64::INFINITY, f64::min);
        own_first_task_start(next, inst).min(event)
    };

    // Creations pack backward against the first use of their instance,
    // sliding around the next batch's own events; their deadlines move
    // with the offset, the lower bounds do not.
    let mut offset = floor;
    let mut creates: Vec<(Instance, Interval)> = Vec::new();
    for _pass in 0..64 {
        creates.clear();
        let mut local_obstacles: Vec<Interval> = next
            .reconfigs
            .iter()
            .map(|e| Interval { start: e.start, end: e.end() })
            .collect();
        let mut deficit: f64 = 0.0;

        let mut order = create_set.clone();
        order.sort_by(|a, b| {
            local_deadline(b)
                .total_cmp(&local_deadline(a))
                .then(a.start_slice.cmp(&b.start_slice))
        });
        for inst in &order {
            let cost = if zero {
                0.0
            } else {
                next.model.create_cost(first_run_size(next, inst))
            };
            let deadline = local_deadline(inst);
            if !deadline.is_finite() {
                continue;
            }
            // Fixed obstacles seen in local coordinates.
            let mut fixed: Vec<Interval> = prev
                .reconfigs
                .iter()
                .map(|e| Interval { start: e.start - offset, end: e.end() - offset })
                .collect();
            fixed.extend(destroys.iter().map(|(_, iv)| Interval {
                start: iv.start - offset,
                end: iv.end - offset,
            }));
            let mut end = deadline;
            loop {
                let window = Interval { start: end - cost, end };
                let hit = local_obstacles
                    .iter()
                    .chain(fixed.iter())
                    .filter(|o| overlaps(window, **o))
                    .map(|o| o.start)
                    .fold(f64::INFINITY, f64::min);
                if hit.is_finite() {
                    end = hit;
                } else {
                    break;
                }
            }
            let mut lower = (-offset).max(prev_destroy_free(inst) - offset);
            for (d_inst, d_iv) in &destroys {
                if d_inst.overlaps(inst) {
                    lower = lower.max(d_iv.end - offset);
                }
            }
            let start = end - cost;
            if start < lower - EPS && !forced {
                deficit = deficit.max(lower - start);
            }
            let start = if forced { start.max(lower) } else { start };
            let window = Interval { start, end: start + cost };
            creates.push((*inst, window));
            local_obstacles.push(window);
        }

        // The next batch's own events must clear the fixed ones, and its
        // internal creations must wait for overlapping instances from the
        // previous batch to be destroyed.
        for e in &next.reconfigs {
            let shifted = Interval {
                start: e.start + offset,
                end: e.end() + offset,
            };
            for f in prev
                .reconfigs
                .iter()
                .map(|p| Interval { start: p.start, end: p.end() })
                .chain(destroys.iter().map(|(_, iv)| *iv))
            {
                if overlaps(shifted, f) {
                    deficit = deficit.max(f.end - shifted.start);
                }
            }
            if e.kind == ReconfigKind::Create {
                let mut free_at = prev_destroy_free(&e.instance);
                for (d_inst, d_iv) in &destroys {
                    if d_inst.overlaps(&e.instance) {
                        free_at = free_at.max(d_iv.end);
                    }
                }
                if shifted.start < free_at - EPS {
                    deficit = deficit.max(free_at - shifted.start);
                }
            }
        }

        if forced || deficit <= EPS {
            break;
        }
        offset += deficit;
    }

    let mut events: Vec<ReconfigEvent> = destroys
        .iter()
        .map(|(inst, iv)| ReconfigEvent {
            kind: ReconfigKind::Destroy,
            instance: *inst,
            start: iv.start,
            duration: iv.end - iv.start,
        })
        .collect();
    events.extend(creates.iter().map(|(inst, iv)| ReconfigEvent {
        kind: ReconfigKind::Create,
        instance: *inst,
        start: iv.start + offset,
        duration: iv.end - iv.start,
    }));
    events.sort_by(|a, b| a.start.total_cmp(&b.start));

    SeamPlan { offset, events }
}

fn assemble(prev: &Schedule, next: &Schedule, plan: &SeamPlan) -> Schedule {
    let mut tasks = prev.tasks.clone();
    tasks.extend(next.tasks.iter().map(|t| {
        let mut t = t.clone();
        t.start += plan.offset;
        t
    }));
    let mut events = prev.reconfigs.clone();
    events.extend(plan.events.iter().cloned());
    events.extend(next.reconfigs.iter().map(|e| {
        let mut e = e.clone();
        e.start += plan.offset;
        e
    }));
    Schedule::from_parts(prev.model.clone(), tasks, events)
}

/// Appends `next` (already oriented) to `prev` with the smallest feasible
/// offset, optionally moving/swapping the next batch's seam tasks into the
/// idle windows left by the previous one.
pub fn concat(
    prev: &Schedule,
    next: &Schedule,
    opts: &ConcatOptions,
) -> Result<(f64, Schedule, ConcatReport)> {
    if prev.model.name != next.model.name {
        return Err(Error::ModelMismatch {
            left: prev.model.name.clone(),
            right: next.model.name.clone(),
        });
    }

    let leftover = prev.leftover_instances();
    let mut edited = next.clone();
    drop_handover_creates(&mut edited, &leftover);

    let trivial_offset = plan_seam(prev, &edited, SeamBase::AfterPrev(opts.min_offset)).offset;

    let mut moves = 0usize;
    let mut swaps = 0usize;
    if opts.move_swap {
        let baseline_plan = plan_seam(prev, &edited, SeamBase::Auto(opts.min_offset));
        let baseline_end = (baseline_plan.offset + edited.makespan).max(prev.makespan);
        let snapshot = edited.clone();

        for _ in 0..opts.max_iterations {
            if !move_swap_step(prev, &mut edited, opts, &mut moves, &mut swaps) {
                break;
            }
        }

        let mut final_view = edited.clone();
        drop_empty_created(&mut final_view);
        let plan = plan_seam(prev, &final_view, SeamBase::Auto(opts.min_offset));
        let end = (plan.offset + final_view.makespan).max(prev.makespan);
        if end > baseline_end + EPS {
            edited = snapshot;
            moves = 0;
            swaps = 0;
        } else {
            edited = final_view;
        }
    }

    drop_empty_created(&mut edited);
    let plan = plan_seam(prev, &edited, SeamBase::Auto(opts.min_offset));
    let combined = assemble(prev, &edited, &plan);
    let report = ConcatReport {
        offset: plan.offset,
        moves,
        swaps,
        seam_reconfigs: plan.events.clone(),
        trivial_offset,
        next_local: edited,
    };
    Ok((plan.offset, combined, report))
}

/// One move or swap of a task that limits the overlap; true if something
/// changed.
fn move_swap_step(
    prev: &Schedule,
    next: &mut Schedule,
    opts: &ConcatOptions,
    moves: &mut usize,
    swaps: &mut usize,
) -> bool {
    let plan = plan_seam(prev, next, SeamBase::Auto(opts.min_offset));
    let offset = plan.offset;
    if offset <= opts.min_offset + EPS {
        return false;
    }
    let first_use = next.first_use();

    // The binding slice fixes the seam task.
    let binding = (0..first_use.len())
        .filter(|&s| first_use[s].is_finite())
        .find(|&s| prev.slice_end[s] - first_use[s] >= offset - EPS);
    let binding = match binding {
        Some(s) => s as u32,
        None => return false, // offset bound by reconfigurations
    };
    let seam_task_idx = next
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.node.slices().any(|s| s == binding))
        .min_by(|a, b| a.1.start.total_cmp(&b.1.start))
        .map(|(i, _)| i);
    let seam_task_idx = match seam_task_idx {
        Some(i) => i,
        None => return false,
    };
    let seam = next.tasks[seam_task_idx].clone();
    let node = seam.node;

    let model = next.model.clone();
    let birth = |inst: &Instance| -> f64 {
        next.reconfigs
            .iter()
            .filter(|e| e.kind == ReconfigKind::Create && e.instance == *inst)
            .map(|e| e.end())
            .fold(0.0, f64::max)
    };
    let ready = |inst: &Instance| -> f64 {
        let released = inst
            .slices()
            .map(|s| prev.slice_end[s as usize])
            .fold(0.0, f64::max)
            - offset;
        birth(inst).max(released).max(0.0)
    };
    let interval_first_use = |inst: &Instance| -> f64 {
        inst.slices()
            .map(|s| first_use[s as usize])
            .fold(f64::INFINITY, f64::min)
    };

    let candidates: Vec<Instance> = model
        .nodes()
        .iter()
        .map(|n| n.instance)
        .filter(|i| {
            *i != node && i.size == node.size && next.tasks.iter().any(|t| t.node == *i)
        })
        .collect();

    // Move the seam task into the widest idle window that fits it.
    let mut best_move: Option<(Instance, f64)> = None;
    for cand in &candidates {
        let margin = interval_first_use(cand) - ready(cand);
        if seam.duration < margin - EPS
            && best_move.is_none_or(|(_, m)| margin > m + EPS)
        {
            best_move = Some((*cand, margin));
        }
    }
    if let Some((target, _)) = best_move {
        let anchor = interval_first_use(&target);
        let t = &mut next.tasks[seam_task_idx];
        t.node = target;
        t.start = anchor - t.duration;
        next.recompute();
        *moves += 1;
        return true;
    }

    // Swap with the front task of a candidate when the duration difference
    // fits the idle window; prefer the difference closest to half of it.
    let mut best_swap: Option<(usize, f64)> = None;
    for cand in &candidates {
        let front = next
            .tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.node == *cand)
            .min_by(|a, b| a.1.start.total_cmp(&b.1.start))
            .map(|(i, _)| i);
        let front_idx = match front {
            Some(i) => i,
            None => continue,
        };
        let other = &next.tasks[front_idx];
        let diff = seam.duration - other.duration;
        let margin = other.start - ready(cand);
        if diff > EPS && diff < margin - EPS {
            let dist = (diff - margin / 2.0).abs();
            if best_swap.is_none_or(|(_, d)| dist < d - EPS) {
                best_swap = Some((front_idx, dist));
            }
        }
    }
    if let Some((other_idx, _)) = best_swap {
        let other = next.tasks[other_idx].clone();
        let (seam_end, other_end) = (seam.end(), other.end());
        {
            let t = &mut next.tasks[seam_task_idx];
            t.node = other.node;
            t.start = other_end - t.duration;
        }
        {
            let t = &mut next.tasks[other_idx];
            t.node = node;
            t.start = seam_end - t.duration;
        }
        next.recompute();
        *swaps += 1;
        return true;
    }

    false
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub far: FarOptions,
    pub move_swap: bool,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            far: FarOptions::default(),
            move_swap: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchRecord {
    /// The batch schedule in its own local time, after any seam edits.
    pub schedule: Schedule,
    pub reversed: bool,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct ConcatPlan {
    pub batches: Vec<BatchRecord>,
    pub seam_reconfigs: Vec<ReconfigEvent>,
}

#[derive(Debug, Clone, Copy)]
pub struct SeamReport {
    pub offset: f64,
    /// Finish if the batch had started after everything so far, unreversed.
    pub trivial_end: f64,
    /// Finish with reversal and overlap only.
    pub overlap_end: f64,
    /// Finish with reversal, overlap and move/swap.
    pub final_end: f64,
    /// Same-orientation no-overlap finish; never better than `final_end`.
    pub trivial_same_end: f64,
    pub moves: usize,
    pub swaps: usize,
    pub p_rev: f64,
    pub p_move_swap: f64,
}

#[derive(Debug, Clone)]
pub struct StreamResult {
    pub total_makespan: f64,
    pub seams: Vec<SeamReport>,
    pub lower_bound: f64,
    pub p_multibatch: f64,
    pub combined: Schedule,
}

/// Schedules each batch, alternates orientation and folds the stream left
/// to right.
pub fn run_stream(
    batches: &[Vec<Task>],
    model: &Arc<GpuModel>,
    opts: &StreamOptions,
) -> Result<(ConcatPlan, StreamResult)> {
    if batches.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let mut forward = Vec::with_capacity(batches.len());
    for batch in batches {
        let (s, _) = far_schedule(batch, model, &opts.far)?;
        forward.push(s);
    }

    let mut plan = ConcatPlan {
        batches: Vec::with_capacity(batches.len()),
        seam_reconfigs: Vec::new(),
    };
    let mut seams = Vec::new();

    let mut combined = forward[0].clone();
    plan.batches.push(BatchRecord {
        schedule: forward[0].clone(),
        reversed: false,
        offset: 0.0,
    });

    for k in 1..batches.len() {
        let reversed = k % 2 == 1;
        let oriented = if reversed {
            reverse_schedule(&forward[k])
        } else {
            forward[k].clone()
        };
        let min_offset = plan.batches.last().unwrap().offset;

        // No-overlap reference in the forward orientation.
        let mut trivial_next = forward[k].clone();
        drop_handover_creates(&mut trivial_next, &combined.leftover_instances());
        let trivial_offset =
            plan_seam(&combined, &trivial_next, SeamBase::AfterPrev(min_offset)).offset;
        let trivial_end = (trivial_offset + trivial_next.makespan).max(combined.makespan);

        // Reversal plus overlap only.
        let no_ops = ConcatOptions {
            move_swap: false,
            min_offset,
            ..ConcatOptions::default()
        };
        let (overlap_offset, _, _) = concat(&combined, &oriented, &no_ops)?;
        let overlap_end = (overlap_offset + oriented.makespan).max(combined.makespan);

        let with_ops = ConcatOptions {
            move_swap: opts.move_swap,
            min_offset,
            ..ConcatOptions::default()
        };
        let (offset, new_combined, report) = concat(&combined, &oriented, &with_ops)?;
        let final_end = new_combined.makespan;
        let trivial_same_end =
            (report.trivial_offset + oriented.makespan).max(combined.makespan);

        seams.push(SeamReport {
            offset,
            trivial_end,
            overlap_end,
            final_end,
            trivial_same_end,
            moves: report.moves,
            swaps: report.swaps,
            p_rev: (trivial_end / overlap_end - 1.0) * 100.0,
            p_move_swap: (trivial_end / final_end - 1.0) * 100.0,
        });
        plan.seam_reconfigs.extend(report.seam_reconfigs.iter().cloned());
        plan.batches.push(BatchRecord {
            schedule: report.next_local.clone(),
            reversed,
            offset,
        });
        combined = new_combined;
    }

    let lb = lower_bound_multibatch(batches, model);
    let total = combined.makespan;
    let result = StreamResult {
        total_makespan: total,
        seams,
        lower_bound: lb,
        p_multibatch: if lb > 0.0 {
            (total / lb - 1.0) * 100.0
        } else {
            0.0
        },
        combined,
    };
    Ok((plan, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use crate::validate::validate;
    use crate::workload::{generate_synthetic, SyntheticConfig};
    use approx::assert_abs_diff_eq;

    fn placed(id: &str, node: Instance, start: f64, duration: f64) -> ScheduledTask {
        ScheduledTask {
            task_id: id.into(),
            node,
            size_used: node.size,
            start,
            duration,
        }
    }

    fn synthetic(model: &Arc<GpuModel>, n: usize, seed: u64) -> Vec<Task> {
        let shares: std::collections::BTreeMap<u32, f64> = if model.name == "A30" {
            [(1, 34.0), (2, 33.0), (4, 33.0)].into_iter().collect()
        } else {
            [(1, 20.0), (2, 20.0), (3, 20.0), (4, 20.0), (7, 20.0)]
                .into_iter()
                .collect()
        };
        let cfg = SyntheticConfig::new(n, shares, 50.0, 1.0, 100.0, seed);
        generate_synthetic(&cfg, model).unwrap()
    }

    #[test]
    fn reversal_mirrors_task_intervals() {
        let model = builtin_model("A30").unwrap();
        let tasks = vec![
            placed("a", Instance::new(0, 1), 0.0, 1.0),
            placed("b", Instance::new(0, 1), 1.0, 3.0),
        ];
        let s = Schedule::from_parts(model, tasks, vec![]);
        let r = reverse_schedule(&s);
        let by_id = |id: &str| r.tasks.iter().find(|t| t.task_id == id).unwrap();
        assert_abs_diff_eq!(by_id("a").start, 3.0);
        assert_abs_diff_eq!(by_id("b").start, 0.0);
        assert_abs_diff_eq!(r.makespan, 4.0);
    }

    #[test]
    fn single_task_reversal_is_identity_on_placement() {
        let model = builtin_model("A100").unwrap();
        let tasks = vec![placed("a", Instance::new(0, 7), 0.0, 5.0)];
        let s = Schedule::from_parts(model, tasks.clone(), vec![]);
        let r = reverse_schedule(&s);
        assert_eq!(r.tasks[0].node, tasks[0].node);
        assert_abs_diff_eq!(r.tasks[0].start, 0.0);
        assert_abs_diff_eq!(r.makespan, 5.0);
    }

    #[test]
    fn zero_reconfig_reversal_preserves_makespan_and_feasibility() {
        let model = builtin_model("A100").unwrap();
        for seed in 0..20 {
            let tasks = synthetic(&model, 8, seed);
            let opts = FarOptions {
                zero_reconfig: true,
                ..FarOptions::default()
            };
            let (s, _) = far_schedule(&tasks, &model, &opts).unwrap();
            let r = reverse_schedule(&s);
            assert_abs_diff_eq!(r.makespan, s.makespan, epsilon = 1e-9);
            let report = validate(&r);
            assert!(report.ok, "seed {seed}: {:?}", report.violations);
        }
    }

    #[test]
    fn reversal_with_costs_stays_feasible() {
        for name in ["A30", "A100"] {
            let model = builtin_model(name).unwrap();
            for seed in 0..20 {
                let tasks = synthetic(&model, 9, seed);
                let (s, _) = far_schedule(&tasks, &model, &FarOptions::default()).unwrap();
                let r = reverse_schedule(&s);
                let report = validate(&r);
                assert!(report.ok, "{name} seed {seed}: {:?}", report.violations);
                // The mirror maps [first start, makespan] to [0, span];
                // reconfigurations may only extend it.
                let first_start = s
                    .tasks
                    .iter()
                    .map(|t| t.start)
                    .fold(f64::INFINITY, f64::min);
                let span = s.makespan - first_start;
                assert!(r.makespan >= span - 1e-9, "{name} seed {seed}");
            }
        }
    }

    #[test]
    fn concat_offset_formula_examples() {
        let model = builtin_model("A30").unwrap();
        let prev_tasks = vec![
            placed("p0", Instance::new(0, 1), 0.0, 10.0),
            placed("p1", Instance::new(1, 1), 0.0, 4.0),
            placed("p2", Instance::new(2, 1), 0.0, 4.0),
            placed("p3", Instance::new(3, 1), 0.0, 4.0),
        ];
        let prev = Schedule::from_parts(model.clone(), prev_tasks, vec![]);

        let next_tasks = vec![
            placed("n0", Instance::new(0, 1), 0.0, 1.0),
            placed("n1", Instance::new(1, 1), 0.0, 1.0),
            placed("n2", Instance::new(2, 1), 0.0, 1.0),
            placed("n3", Instance::new(3, 1), 0.0, 1.0),
        ];
        let next = Schedule::from_parts(model.clone(), next_tasks, vec![]);
        let opts = ConcatOptions {
            move_swap: false,
            ..ConcatOptions::default()
        };
        let (offset, combined, _) = concat(&prev, &next, &opts).unwrap();
        assert_abs_diff_eq!(offset, 10.0, epsilon = 1e-9);
        assert!(validate(&combined).ok);

        // A late first use on the long slice shrinks the offset.
        let next_tasks = vec![
            placed("n0", Instance::new(0, 1), 6.0, 1.0),
            placed("n1", Instance::new(1, 1), 0.0, 1.0),
            placed("n2", Instance::new(2, 1), 0.0, 1.0),
            placed("n3", Instance::new(3, 1), 0.0, 1.0),
        ];
        let next = Schedule::from_parts(model.clone(), next_tasks, vec![]);
        let (offset, combined, _) = concat(&prev, &next, &opts).unwrap();
        assert_abs_diff_eq!(offset, 4.0, epsilon = 1e-9);
        assert!(validate(&combined).ok);

        // Disjoint slices overlap completely.
        let prev_tasks = vec![placed("p0", Instance::new(0, 1), 0.0, 10.0)];
        let prev = Schedule::from_parts(model.clone(), prev_tasks, vec![]);
        let next_tasks = vec![placed("n0", Instance::new(1, 1), 0.0, 2.0)];
        let next = Schedule::from_parts(model.clone(), next_tasks, vec![]);
        let (offset, combined, _) = concat(&prev, &next, &opts).unwrap();
        assert_abs_diff_eq!(offset, 0.0, epsilon = 1e-9);
        assert!(validate(&combined).ok, "{:?}", validate(&combined).violations);
    }

    #[test]
    fn model_mismatch_is_rejected() {
        let a30 = builtin_model("A30").unwrap();
        let a100 = builtin_model("A100").unwrap();
        let prev = Schedule::empty(a30);
        let next = Schedule::empty(a100);
        assert!(concat(&prev, &next, &ConcatOptions::default()).is_err());
    }

    #[test]
    fn stream_of_identical_balanced_batches_gains_nothing() {
        let model = builtin_model("A30").unwrap();
        // Four equal single-slice tasks fill the GPU exactly.
        let task = |id: &str| {
            Task::new(
                id,
                [(1u32, 5.0), (2, 5.0), (4, 5.0)].into_iter().collect(),
            )
        };
        let batch: Vec<Task> = (0..4).map(|i| task(&format!("t{i}"))).collect();
        let opts = StreamOptions {
            far: FarOptions {
                zero_reconfig: true,
                ..FarOptions::default()
            },
            move_swap: true,
        };
        let (_, result) = run_stream(&[batch.clone(), batch], &model, &opts).unwrap();
        assert_eq!(result.seams.len(), 1);
        let seam = result.seams[0];
        assert_abs_diff_eq!(seam.offset, 5.0, epsilon = 1e-9);
        assert!(seam.p_move_swap.abs() < 1e-6);
        assert!(validate(&result.combined).ok);
    }

    #[test]
    fn single_batch_stream_is_just_far() {
        let model = builtin_model("A100").unwrap();
        let tasks = synthetic(&model, 8, 3);
        let (s, _) = far_schedule(&tasks, &model, &FarOptions::default()).unwrap();
        let (plan, result) = run_stream(&[tasks], &model, &StreamOptions::default()).unwrap();
        assert_eq!(plan.batches.len(), 1);
        assert_abs_diff_eq!(result.total_makespan, s.makespan, epsilon = 1e-9);
        assert!(result.seams.is_empty());
    }

    #[test]
    fn streams_validate_and_never_lose_to_trivial() {
        for name in ["A30", "A100"] {
            let model = builtin_model(name).unwrap();
            for seed in 0..10 {
                let batches: Vec<Vec<Task>> = (0..4)
                    .map(|b| synthetic(&model, 7, seed * 31 + b))
                    .collect();
                let (plan, result) =
                    run_stream(&batches, &model, &StreamOptions::default()).unwrap();
                let report = validate(&result.combined);
                assert!(report.ok, "{name} seed {seed}: {:?}", report.violations);
                for seam in &result.seams {
                    assert!(
                        seam.final_end <= seam.trivial_same_end + 1e-9,
                        "{name} seed {seed}: seam lost to trivial"
                    );
                }
                // Alternating orientation and ordered offsets.
                for pair in plan.batches.windows(2) {
                    assert_ne!(pair[0].reversed, pair[1].reversed);
                    assert!(pair[0].offset <= pair[1].offset + 1e-9);
                }
                let sum: f64 = batches
                    .iter()
                    .map(|b| {
                        far_schedule(b, &model, &FarOptions::default())
                            .unwrap()
                            .0
                            .makespan
                    })
                    .sum();
                let seam_time: f64 = plan
                    .seam_reconfigs
                    .iter()
                    .map(|e| e.duration)
                    .sum();
                assert!(
                    result.total_makespan
                        <= sum + seam_time + result.seams.len() as f64 * 2.0 + 1e-6
                );
            }
        }
    }

    #[test]
    fn offset_is_minimal_under_perturbation() {
        let model = builtin_model("A100").unwrap();
        for seed in 100..112 {
            let prev_tasks = synthetic(&model, 7, seed);
            let next_tasks = synthetic(&model, 7, seed + 1000);
            let far_opts = FarOptions {
                zero_reconfig: true,
                ..FarOptions::default()
            };
            let (prev, _) = far_schedule(&prev_tasks, &model, &far_opts).unwrap();
            let (next_fwd, _) = far_schedule(&next_tasks, &model, &far_opts).unwrap();
            let next = reverse_schedule(&next_fwd);
            let opts = ConcatOptions {
                move_swap: false,
                ..ConcatOptions::default()
            };
            let (offset, combined, report) = concat(&prev, &next, &opts).unwrap();
            assert!(validate(&combined).ok);
            if offset > 1e-6 {
                let eps = (offset * 0.01).min(0.05);
                let mut edited = next.clone();
                drop_handover_creates(&mut edited, &prev.leftover_instances());
                let plan = plan_seam(&prev, &edited, SeamBase::Forced(offset - eps));
                let perturbed = assemble(&prev, &edited, &plan);
                assert!(
                    !validate(&perturbed).ok,
                    "seed {seed}: offset {offset} not minimal"
                );
            }
            let _ = report;
        }
    }
}
