//! Comparison schedulers: the speedup-sum FIFO optimizer and fixed
//! partitions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{enumerate_partitions, GpuModel, PartitionSlot};
use crate::sched::{ReconfigEvent, ReconfigKind, Schedule, ScheduleOptions, ScheduledTask};
use crate::workload::Task;

const TIE_EPS: f64 = 1e-12;

/// FIFO rounds on the valid partition maximizing the sum of speedups of the
/// next tasks; every round starts when the previous one has fully finished
/// and its reconfigurations are done.
pub fn miso_schedule(
    tasks: &[Task],
    model: &Arc<GpuModel>,
    opts: &ScheduleOptions,
) -> Result<Schedule> {
    let partitions = enumerate_partitions(model);
    let n = tasks.len();
    let mut placed: Vec<ScheduledTask> = Vec::with_capacity(n);
    let mut events: Vec<ReconfigEvent> = Vec::new();
    let mut active: Vec<PartitionSlot> = Vec::new();
    let mut prev_round_end = 0.0f64;
    let mut reconfig_end = 0.0f64;
    let mut next = 0usize;

    while next < n {
        // Partition with the best speedup sum; ties prefer fewer instances,
        // then enumeration order. Instances beyond the remaining tasks
        // contribute nothing.
        let mut best: Option<(usize, f64)> = None;
        for (idx, partition) in partitions.iter().enumerate() {
            let sum: f64 = partition
                .iter()
                .take(n - next)
                .enumerate()
                .map(|(i, slot)| tasks[next + i].speedup(slot.run_size))
                .sum();
            let better = match best {
                None => true,
                Some((best_idx, best_sum)) => {
                    sum > best_sum + TIE_EPS
                        || ((sum - best_sum).abs() <= TIE_EPS
                            && partition.len() < partitions[best_idx].len())
                }
            };
            if better {
                best = Some((idx, sum));
            }
        }
        let partition = &partitions[best.expect("at least one partition").0];
        let assigned = partition.len().min(n - next);
        let used = &partition[..assigned];

        // Sequential reconfiguration between rounds: drop slots not reused,
        // then create the new ones. A slot is reusable only at the same
        // execution size.
        let mut chain = reconfig_end.max(prev_round_end);
        let had_events = events.len();
        for slot in active.iter().filter(|s| !used.contains(s)) {
            let cost = if opts.zero_reconfig {
                0.0
            } else {
                model.destroy_cost(slot.run_size)
            };
            events.push(ReconfigEvent {
                kind: ReconfigKind::Destroy,
                instance: slot.instance,
                start: chain,
                duration: cost,
            });
            chain += cost;
        }
        for slot in used.iter().filter(|s| !active.contains(s)) {
            let cost = if opts.zero_reconfig {
                0.0
            } else {
                model.create_cost(slot.run_size)
            };
            events.push(ReconfigEvent {
                kind: ReconfigKind::Create,
                instance: slot.instance,
                start: chain,
                duration: cost,
            });
            chain += cost;
        }
        if events.len() > had_events {
            reconfig_end = chain;
        }

        let round_start = chain;
        let mut round_end = round_start;
        for (i, slot) in used.iter().enumerate() {
            let duration = tasks[next + i].time(slot.run_size);
            placed.push(ScheduledTask {
                task_id: tasks[next + i].id.clone(),
                node: slot.instance,
                size_used: slot.run_size,
                start: round_start,
                duration,
            });
            round_end = round_end.max(round_start + duration);
        }
        active = used.to_vec();
        prev_round_end = round_end;
        next += assigned;
    }

    Ok(Schedule::from_parts(model.clone(), placed, events))
}

/// FIFO onto the earliest-free instance of a fixed partition, configured
/// before execution starts (no reconfiguration cost).
pub fn fixpart_schedule(
    tasks: &[Task],
    model: &Arc<GpuModel>,
    partition: &[PartitionSlot],
) -> Result<Schedule> {
    let valid = enumerate_partitions(model)
        .iter()
        .any(|p| p.as_slice() == partition);
    if !valid {
        return Err(Error::InvalidPartition(format!(
            "{partition:?} is not a valid partition of {}",
            model.name
        )));
    }
    let mut free: Vec<f64> = vec![0.0; partition.len()];
    let mut placed = Vec::with_capacity(tasks.len());
    for task in tasks {
        let slot_idx = (0..partition.len())
            .min_by(|&a, &b| {
                free[a]
                    .total_cmp(&free[b])
                    .then(partition[a].instance.start_slice.cmp(&partition[b].instance.start_slice))
            })
            .expect("partition is non-empty");
        let slot = &partition[slot_idx];
        let duration = task.time(slot.run_size);
        placed.push(ScheduledTask {
            task_id: task.id.clone(),
            node: slot.instance,
            size_used: slot.run_size,
            start: free[slot_idx],
            duration,
        });
        free[slot_idx] += duration;
    }
    Ok(Schedule::from_parts(model.clone(), placed, Vec::new()))
}

/// Runs [`fixpart_schedule`] on every valid partition and keeps the best.
pub fn fixpart_best(
    tasks: &[Task],
    model: &Arc<GpuModel>,
) -> Result<(Vec<PartitionSlot>, Schedule)> {
    let mut best: Option<(Vec<PartitionSlot>, Schedule)> = None;
    for partition in enumerate_partitions(model) {
        let s = fixpart_schedule(tasks, model, &partition)?;
        let better = match &best {
            None => true,
            Some((_, b)) => s.makespan < b.makespan,
        };
        if better {
            best = Some((partition, s));
        }
    }
    best.ok_or_else(|| Error::InvalidPartition("model has no partitions".into()))
}

/// Resolves a left-to-right size list like `2,2` to the matching partition.
pub fn partition_from_sizes(model: &GpuModel, sizes: &[u32]) -> Result<Vec<PartitionSlot>> {
    enumerate_partitions(model)
        .into_iter()
        .find(|p| {
            p.len() == sizes.len() && p.iter().zip(sizes).all(|(slot, &s)| slot.run_size == s)
        })
        .ok_or_else(|| {
            Error::InvalidPartition(format!("{sizes:?} does not name a partition of {}", model.name))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn task(id: &str, times: &[(u32, f64)]) -> Task {
        Task::new(id, times.iter().copied().collect::<BTreeMap<_, _>>())
    }

    fn linear(id: &str, t1: f64) -> Task {
        task(
            id,
            &[
                (1, t1),
                (2, t1 / 2.0),
                (3, t1 / 3.0),
                (4, t1 / 4.0),
                (7, t1 / 7.0),
            ],
        )
    }

    fn flat(id: &str, t: f64) -> Task {
        task(id, &[(1, t), (2, t), (3, t), (4, t), (7, t)])
    }

    #[test]
    fn miso_gives_a_linear_task_the_whole_gpu() {
        let model = builtin_model("A100").unwrap();
        let tasks = vec![linear("a", 7.0)];
        let opts = ScheduleOptions { zero_reconfig: true };
        let s = miso_schedule(&tasks, &model, &opts).unwrap();
        assert_eq!(s.tasks.len(), 1);
        assert_eq!(s.tasks[0].size_used, 7);
        assert_abs_diff_eq!(s.makespan, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn miso_spreads_non_scaling_tasks_over_seven_instances() {
        let model = builtin_model("A100").unwrap();
        let tasks: Vec<Task> = (0..9).map(|i| flat(&format!("t{i}"), 5.0)).collect();
        let opts = ScheduleOptions { zero_reconfig: true };
        let s = miso_schedule(&tasks, &model, &opts).unwrap();
        let first_round: Vec<_> = s.tasks.iter().filter(|t| t.start == 0.0).collect();
        assert_eq!(first_round.len(), 7);
        assert!(first_round.iter().all(|t| t.node.size == 1));
    }

    #[test]
    fn miso_rounds_start_together() {
        let model = builtin_model("A100").unwrap();
        let tasks: Vec<Task> = (0..10)
            .map(|i| linear(&format!("t{i}"), 3.0 + i as f64))
            .collect();
        let s = miso_schedule(&tasks, &model, &ScheduleOptions::default()).unwrap();
        let mut starts: Vec<f64> = s.tasks.iter().map(|t| t.start).collect();
        starts.sort_by(f64::total_cmp);
        starts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        // As many distinct start times as rounds.
        let rounds = starts.len();
        assert!(rounds >= 2, "expected multiple FIFO rounds");
        let report = crate::validate::validate(&s);
        assert!(report.ok, "{:?}", report.violations);
    }

    #[test]
    fn fixpart_fills_in_fifo_order() {
        let model = builtin_model("A100").unwrap();
        let partition = partition_from_sizes(&model, &[1, 1, 1, 1, 1, 1, 1]).unwrap();
        let tasks: Vec<Task> = (0..7).map(|i| flat(&format!("t{i}"), 10.0)).collect();
        let s = fixpart_schedule(&tasks, &model, &partition).unwrap();
        assert_abs_diff_eq!(s.makespan, 10.0, epsilon = 1e-12);

        let single = partition_from_sizes(&model, &[7]).unwrap();
        let tasks: Vec<Task> = (0..3).map(|i| flat(&format!("t{i}"), 2.0)).collect();
        let s = fixpart_schedule(&tasks, &model, &single).unwrap();
        assert_abs_diff_eq!(s.makespan, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn fixpart_event_trace_on_two_halves() {
        let model = builtin_model("A30").unwrap();
        let partition = partition_from_sizes(&model, &[2, 2]).unwrap();
        let tasks = vec![
            task("a", &[(1, 9.0), (2, 6.0), (4, 5.0)]),
            task("b", &[(1, 8.0), (2, 5.0), (4, 4.0)]),
            task("c", &[(1, 7.0), (2, 4.0), (4, 3.0)]),
        ];
        let s = fixpart_schedule(&tasks, &model, &partition).unwrap();
        // a -> first half (6), b -> second half (5), c follows b (5+4).
        assert_abs_diff_eq!(s.makespan, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_partition_is_rejected() {
        let model = builtin_model("A30").unwrap();
        assert!(partition_from_sizes(&model, &[3, 1]).is_err());
        let bogus = vec![PartitionSlot {
            instance: crate::model::Instance::new(1, 2),
            run_size: 2,
        }];
        assert!(fixpart_schedule(&[], &model, &bogus).is_err());
    }

    #[test]
    fn fixpart_best_prefers_many_instances_for_flat_tasks() {
        let model = builtin_model("A100").unwrap();
        let tasks: Vec<Task> = (0..7).map(|i| flat(&format!("t{i}"), 4.0)).collect();
        let (partition, s) = fixpart_best(&tasks, &model).unwrap();
        assert_eq!(partition.len(), 7);
        assert_abs_diff_eq!(s.makespan, 4.0, epsilon = 1e-12);
        for p in enumerate_partitions(&model) {
            let other = fixpart_schedule(&tasks, &model, &p).unwrap();
            assert!(s.makespan <= other.makespan + 1e-12);
        }
    }

    #[test]
    fn single_task_fixpart_best_picks_its_fastest_size() {
        let model = builtin_model("A100").unwrap();
        let t = task("a", &[(1, 10.0), (2, 6.0), (3, 5.0), (4, 4.0), (7, 3.9)]);
        let (_, s) = fixpart_best(&[t], &model).unwrap();
        assert_abs_diff_eq!(s.makespan, 3.9, epsilon = 1e-12);
    }
}
