//! Phase 3: local search moving and swapping critical tasks.
//!
//! Each iteration opens the tree leaves whose slices reach the makespan and
//! walks toward the root. For an open node the alternative instance is the
//! same-size node with the earliest last-slice end that already hosts tasks.
//! A task shorter than the margin to the makespan moves there; failing that,
//! a longer/shorter pair within the margin is swapped; failing both, the
//! parent is opened. Start times and reconfigurations are recomputed once
//! after the last iteration.

use std::collections::{HashSet, VecDeque};

use crate::sched::{replay_node_lists, NodeListEntry, Schedule};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Minimum relative makespan improvement per iteration to keep going.
    pub min_improvement: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iterations: 100,
            min_improvement: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineReport {
    pub moves: usize,
    pub swaps: usize,
    pub makespan_before: f64,
    pub makespan_after: f64,
}

#[derive(Debug, Clone)]
struct Entry {
    task_id: String,
    size_used: u32,
    duration: f64,
}

fn node_lists(schedule: &Schedule) -> Vec<Vec<Entry>> {
    let model = &schedule.model;
    let mut lists: Vec<Vec<Entry>> = vec![Vec::new(); model.nodes().len()];
    let mut ordered: Vec<&crate::sched::ScheduledTask> = schedule.tasks.iter().collect();
    ordered.sort_by(|a, b| a.start.total_cmp(&b.start));
    for t in ordered {
        let node = model
            .node_index(&t.node)
            .expect("scheduled task sits on a tree node");
        lists[node].push(Entry {
            task_id: t.task_id.clone(),
            size_used: t.size_used,
            duration: t.duration,
        });
    }
    lists
}

fn interval_end(slice_end: &[f64], instance: &crate::model::Instance) -> f64 {
    instance
        .slices()
        .map(|s| slice_end[s as usize])
        .fold(0.0, f64::max)
}

fn shift_interval(slice_end: &mut [f64], instance: &crate::model::Instance, delta: f64) {
    for s in instance.slices() {
        slice_end[s as usize] += delta;
    }
}

/// Insert keeping durations non-increasing; equal durations keep arrival order.
fn insert_by_duration(list: &mut Vec<Entry>, entry: Entry) {
    let pos = list
        .iter()
        .position(|e| e.duration < entry.duration)
        .unwrap_or(list.len());
    list.insert(pos, entry);
}

/// Refines a phase-2 schedule; returns the refined schedule and a report.
pub fn refine(schedule: &Schedule, opts: &RefineOptions) -> (Schedule, RefineReport) {
    let unchanged = |moves: usize, swaps: usize| RefineReport {
        moves,
        swaps,
        makespan_before: schedule.makespan,
        makespan_after: schedule.makespan,
    };
    if opts.max_iterations == 0 || schedule.tasks.is_empty() {
        return (schedule.clone(), unchanged(0, 0));
    }

    let model = schedule.model.clone();
    let mut lists = node_lists(schedule);
    let mut slice_end = schedule.slice_end.clone();
    let mut omega = schedule.makespan;
    let mut moves = 0usize;
    let mut swaps = 0usize;

    'outer: for _ in 0..opts.max_iterations {
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut visited: HashSet<usize> = HashSet::new();
        for (idx, node) in model.nodes().iter().enumerate() {
            if node.children.is_empty()
                && interval_end(&slice_end, &node.instance) >= omega - EPS
            {
                queue.push_back(idx);
                visited.insert(idx);
            }
        }

        while let Some(node_idx) = queue.pop_front() {
            if node_idx == model.root() {
                break 'outer;
            }
            let node = &model.nodes()[node_idx];
            let size = node.instance.size;

            // Alternative instance: same size, hosts tasks, earliest end.
            let alt = model
                .nodes()
                .iter()
                .enumerate()
                .filter(|(i, n)| {
                    *i != node_idx && n.instance.size == size && !lists[*i].is_empty()
                })
                .map(|(i, n)| (i, interval_end(&slice_end, &n.instance)))
                .min_by(|a, b| {
                    a.1.total_cmp(&b.1).then(
                        model.nodes()[a.0]
                            .instance
                            .start_slice
                            .cmp(&model.nodes()[b.0].instance.start_slice),
                    )
                });

            let mut acted = false;
            if let Some((alt_idx, alt_end)) = alt {
                let margin = omega - alt_end;
                if margin > EPS {
                    let target = margin / 2.0;
                    // Task movement: duration under the margin, closest to
                    // half of it.
                    let mut best: Option<(usize, f64)> = None;
                    for (pos, e) in lists[node_idx].iter().enumerate() {
                        if e.duration < margin - EPS {
                            let dist = (e.duration - target).abs();
                            if best.is_none_or(|(_, d)| dist < d - EPS) {
                                best = Some((pos, dist));
                            }
                        }
                    }
                    if let Some((pos, _)) = best {
                        let entry = lists[node_idx].remove(pos);
                        shift_interval(&mut slice_end, &node.instance, -entry.duration);
                        shift_interval(
                            &mut slice_end,
                            &model.nodes()[alt_idx].instance,
                            entry.duration,
                        );
                        insert_by_duration(&mut lists[alt_idx], entry);
                        moves += 1;
                        acted = true;
                    } else {
                        // Task swapping: positive duration difference within
                        // the margin, closest to half of it.
                        let mut best: Option<(usize, usize, f64)> = None;
                        for (k_pos, k) in lists[node_idx].iter().enumerate() {
                            for (j_pos, j) in lists[alt_idx].iter().enumerate() {
                                let diff = k.duration - j.duration;
                                if diff > EPS && diff < margin - EPS {
                                    let dist = (diff - target).abs();
                                    if best.is_none_or(|(_, _, d)| dist < d - EPS) {
                                        best = Some((k_pos, j_pos, dist));
                                    }
                                }
                            }
                        }
                        if let Some((k_pos, j_pos, _)) = best {
                            let k = lists[node_idx].remove(k_pos);
                            let j = lists[alt_idx].remove(j_pos);
                            let diff = k.duration - j.duration;
                            shift_interval(&mut slice_end, &node.instance, -diff);
                            shift_interval(
                                &mut slice_end,
                                &model.nodes()[alt_idx].instance,
                                diff,
                            );
                            insert_by_duration(&mut lists[alt_idx], k);
                            insert_by_duration(&mut lists[node_idx], j);
                            swaps += 1;
                            acted = true;
                        }
                    }
                }
            }

            if !acted {
                if let Some(parent) = node.parent {
                    if visited.insert(parent) {
                        queue.push_back(parent);
                    }
                }
            }
        }

        let new_omega = slice_end.iter().copied().fold(0.0, f64::max);
        let improvement = if omega > 0.0 {
            (omega - new_omega) / omega
        } else {
            0.0
        };
        omega = new_omega;
        if improvement < opts.min_improvement {
            break;
        }
    }

    if moves + swaps == 0 {
        return (schedule.clone(), unchanged(0, 0));
    }

    let replay_lists: Vec<Vec<NodeListEntry>> = lists
        .into_iter()
        .map(|l| {
            l.into_iter()
                .map(|e| NodeListEntry {
                    task_id: e.task_id,
                    size_used: e.size_used,
                    duration: e.duration,
                })
                .collect()
        })
        .collect();
    let replayed = replay_node_lists(&model, &replay_lists, schedule.is_zero_reconfig());
    if replayed.makespan > schedule.makespan + EPS {
        // Reconfiguration re-sequencing ate the gain; keep the input.
        return (schedule.clone(), unchanged(0, 0));
    }
    let report = RefineReport {
        moves,
        swaps,
        makespan_before: schedule.makespan,
        makespan_after: replayed.makespan,
    };
    (replayed, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Instance};
    use crate::sched::{Schedule, ScheduledTask};
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

    /// A long task stacked behind another on one slice while the rest of
    /// the GPU idles: one move recovers a factor above 3/2.
    #[test]
    fn stacked_critical_task_moves_away() {
        let model = builtin_model("A30").unwrap();
        let tasks = vec![
            placed("tj", Instance::new(0, 1), 0.0, 1.2),
            placed("tk", Instance::new(0, 1), 1.2, 2.2),
            placed("s", Instance::new(1, 1), 0.0, 0.1),
        ];
        let schedule = Schedule::from_parts(model, tasks, vec![]);
        assert_abs_diff_eq!(schedule.makespan, 3.4, epsilon = 1e-9);

        let (refined, report) = refine(&schedule, &RefineOptions::default());
        assert_eq!(report.moves, 1);
        assert_eq!(report.swaps, 0);
        assert_abs_diff_eq!(refined.makespan, 2.2, epsilon = 1e-12);
        assert!(report.makespan_before / report.makespan_after > 1.5);
    }

    /// No move fits the margin but exchanging a long and a short task does:
    /// the makespan drops by a factor of almost 5/4.
    #[test]
    fn swap_when_no_move_fits() {
        let model = builtin_model("A30").unwrap();
        let tasks = vec![
            placed("a", Instance::new(0, 1), 0.0, 5.5),
            placed("tk", Instance::new(0, 1), 5.5, 4.5),
            placed("b", Instance::new(1, 1), 0.0, 3.5),
            placed("tj", Instance::new(1, 1), 3.5, 2.5),
        ];
        let schedule = Schedule::from_parts(model, tasks, vec![]);
        assert_abs_diff_eq!(schedule.makespan, 10.0);

        let (refined, report) = refine(&schedule, &RefineOptions::default());
        assert_eq!(report.moves, 0);
        assert_eq!(report.swaps, 1);
        assert_abs_diff_eq!(refined.makespan, 8.0, epsilon = 1e-12);
        assert!(report.makespan_before / report.makespan_after >= 1.24);
    }

    #[test]
    fn balanced_schedule_is_left_alone() {
        let model = builtin_model("A30").unwrap();
        let tasks = (0..4)
            .map(|s| placed(&format!("t{s}"), Instance::new(s, 1), 0.0, 2.0))
            .collect();
        let schedule = Schedule::from_parts(model, tasks, vec![]);
        let (refined, report) = refine(&schedule, &RefineOptions::default());
        assert_eq!((report.moves, report.swaps), (0, 0));
        assert_eq!(refined.tasks, schedule.tasks);
        assert_abs_diff_eq!(report.makespan_after, report.makespan_before);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let model = builtin_model("A30").unwrap();
        let tasks = vec![
            placed("a", Instance::new(0, 1), 0.0, 3.0),
            placed("b", Instance::new(0, 1), 3.0, 2.0),
            placed("c", Instance::new(1, 1), 0.0, 0.5),
        ];
        let schedule = Schedule::from_parts(model, tasks, vec![]);
        let opts = RefineOptions {
            max_iterations: 0,
            ..RefineOptions::default()
        };
        let (refined, report) = refine(&schedule, &opts);
        assert_eq!(refined.tasks, schedule.tasks);
        assert_eq!((report.moves, report.swaps), (0, 0));
    }

    #[test]
    fn refinement_never_hurts_random_schedules() {
        use crate::allocation::allocation_family;
        use crate::sched::{schedule_allocation, ScheduleOptions};
        use crate::workload::{generate_synthetic, SyntheticConfig};

        for model_name in ["A30", "A100"] {
            let model = builtin_model(model_name).unwrap();
            let shares: std::collections::BTreeMap<u32, f64> = if model_name == "A30" {
                [(1, 34.0), (2, 33.0), (4, 33.0)].into_iter().collect()
            } else {
                [(1, 20.0), (2, 20.0), (3, 20.0), (4, 20.0), (7, 20.0)]
                    .into_iter()
                    .collect()
            };
            for seed in 0..40 {
                let cfg = SyntheticConfig::new(10, shares.clone(), 50.0, 1.0, 100.0, seed);
                let tasks = generate_synthetic(&cfg, &model).unwrap();
                let family = allocation_family(&tasks, &model);
                for (i, alloc) in family.allocations.iter().enumerate().step_by(3) {
                    let zero = i % 2 == 0;
                    let s = schedule_allocation(
                        &tasks,
                        alloc,
                        &model,
                        &ScheduleOptions { zero_reconfig: zero },
                    )
                    .unwrap();
                    let (refined, report) = refine(&s, &RefineOptions::default());
                    assert!(refined.makespan <= s.makespan + 1e-9);
                    assert!(report.makespan_after <= report.makespan_before + 1e-9);
                }
            }
        }
    }
}
