//! Feasibility checks for schedules.
//!
//! Constraint 1: tasks sharing a slice never overlap in time. Constraint 2:
//! the instances in use at any instant form part of a valid partition.
//! Constraint 3: instance-set changes are covered by correctly-sized,
//! non-overlapping reconfiguration events, and every task runs inside a
//! lifetime of its instance. Instances used or destroyed before any
//! creation are taken as existing when the schedule starts.

use std::collections::BTreeMap;

use crate::model::{is_feasible_instance_set, Instance};
use crate::sched::{ReconfigKind, Schedule};

const EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct Violation {
    pub constraint: u8,
    pub time: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, constraint: u8, time: f64, detail: String) {
        self.violations.push(Violation {
            constraint,
            time,
            detail,
        });
    }
}

#[derive(Debug, Clone, Copy)]
struct Lifetime {
    /// Instance usable from here (creation finished, or 0 if pre-existing).
    ready: f64,
    /// Instance usable until here (destruction start, or +inf).
    until: f64,
    /// Slices occupied from here (creation start).
    occupied_from: f64,
    /// Slices occupied until here (destruction end).
    occupied_until: f64,
}

pub fn validate(schedule: &Schedule) -> ValidationReport {
    let mut report = ValidationReport::default();
    let model = &schedule.model;
    let zero_reconfig = schedule.is_zero_reconfig();

    // Constraint 1: per-slice task intervals are disjoint.
    let mut per_slice: Vec<Vec<(f64, f64, &str)>> =
        vec![Vec::new(); model.num_slices as usize];
    for t in &schedule.tasks {
        if t.start < -EPS {
            report.push(1, t.start, format!("task {} starts before 0", t.task_id));
        }
        for s in t.node.slices() {
            per_slice[s as usize].push((t.start, t.end(), &t.task_id));
        }
    }
    for (slice, intervals) in per_slice.iter_mut().enumerate() {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in intervals.windows(2) {
            if pair[1].0 < pair[0].1 - EPS {
                report.push(
                    1,
                    pair[1].0,
                    format!(
                        "tasks {} and {} overlap on slice {}",
                        pair[0].2, pair[1].2, slice
                    ),
                );
            }
        }
    }

    // Event sanity: ordering, sizing, catalog membership.
    let mut events: Vec<&crate::sched::ReconfigEvent> = schedule.reconfigs.iter().collect();
    events.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end().total_cmp(&b.end())));
    for pair in events.windows(2) {
        if pair[1].start < pair[0].end() - EPS {
            report.push(
                3,
                pair[1].start,
                format!(
                    "reconfigurations of {} and {} overlap",
                    pair[0].instance, pair[1].instance
                ),
            );
        }
    }
    for e in &events {
        match model.node_index(&e.instance) {
            None => report.push(
                2,
                e.start,
                format!("event on non-catalog instance {}", e.instance),
            ),
            Some(node) => {
                if !zero_reconfig {
                    let table = match e.kind {
                        ReconfigKind::Create => &model.t_create,
                        ReconfigKind::Destroy => &model.t_destroy,
                    };
                    let allowed = model.nodes()[node]
                        .hosted_sizes
                        .iter()
                        .any(|s| (table[s] - e.duration).abs() <= EPS);
                    if !allowed {
                        report.push(
                            3,
                            e.start,
                            format!(
                                "event on {} has duration {} not matching its size",
                                e.instance, e.duration
                            ),
                        );
                    }
                }
            }
        }
    }

    // Lifetimes per instance; first event being a destruction, or first use
    // being a task, means the instance pre-exists.
    let mut first_task: BTreeMap<Instance, f64> = BTreeMap::new();
    for t in &schedule.tasks {
        let e = first_task.entry(t.node).or_insert(f64::INFINITY);
        *e = e.min(t.start);
    }
    let mut lifetimes: BTreeMap<Instance, Vec<Lifetime>> = BTreeMap::new();
    let mut open: BTreeMap<Instance, Lifetime> = BTreeMap::new();
    for (inst, first) in &first_task {
        // Provisionally alive from the start; a later create for this
        // instance before `first` replaces it.
        let pre = Lifetime {
            ready: 0.0,
            until: f64::INFINITY,
            occupied_from: 0.0,
            occupied_until: f64::INFINITY,
        };
        let created_before_use = schedule.reconfigs.iter().any(|e| {
            e.kind == ReconfigKind::Create && e.instance == *inst && e.start <= *first + EPS
        });
        if !created_before_use {
            open.insert(*inst, pre);
        }
    }
    for e in &events {
        match e.kind {
            ReconfigKind::Create => {
                if open.contains_key(&e.instance) {
                    report.push(
                        3,
                        e.start,
                        format!("{} created while it exists", e.instance),
                    );
                } else {
                    open.insert(
                        e.instance,
                        Lifetime {
                            ready: e.end(),
                            until: f64::INFINITY,
                            occupied_from: e.start,
                            occupied_until: f64::INFINITY,
                        },
                    );
                }
            }
            ReconfigKind::Destroy => match open.remove(&e.instance) {
                Some(mut life) => {
                    life.until = e.start;
                    life.occupied_until = e.end();
                    lifetimes.entry(e.instance).or_default().push(life);
                }
                None => report.push(
                    3,
                    e.start,
                    format!("{} destroyed while it does not exist", e.instance),
                ),
            },
        }
    }
    for (inst, life) in open {
        lifetimes.entry(inst).or_default().push(life);
    }

    // Constraint 3: every task runs inside a lifetime of its instance.
    for t in &schedule.tasks {
        let fits = lifetimes.get(&t.node).is_some_and(|lives| {
            lives
                .iter()
                .any(|l| t.start >= l.ready - EPS && t.end() <= l.until + EPS)
        });
        if !fits {
            report.push(
                3,
                t.start,
                format!("task {} runs outside the life of {}", t.task_id, t.node),
            );
        }
    }

    // Constraint 2: the occupied set is feasible whenever it changes.
    let mut samples: Vec<f64> = Vec::new();
    for t in &schedule.tasks {
        samples.push(t.start);
    }
    for e in &events {
        samples.push(e.start);
        samples.push(e.end());
    }
    samples.sort_by(f64::total_cmp);
    samples.dedup_by(|a, b| (*a - *b).abs() <= EPS);
    for &t in &samples {
        let probe = t + 2.0 * EPS;
        let active: Vec<Instance> = lifetimes
            .iter()
            .flat_map(|(inst, lives)| {
                lives
                    .iter()
                    .filter(move |l| probe >= l.occupied_from && probe < l.occupied_until)
                    .map(move |_| *inst)
            })
            .collect();
        if !is_feasible_instance_set(model, &active) {
            report.push(2, t, format!("infeasible instance set at {t:.4}"));
        }
    }

    report.ok = report.violations.is_empty();
    report
}
