//! JSON wire formats for schedules and stream plans.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{builtin_model, GpuModel, Instance};
use crate::multibatch::{ConcatPlan, StreamResult};
use crate::sched::{ReconfigEvent, ReconfigKind, Schedule, ScheduledTask};

#[derive(Serialize, Deserialize)]
struct TaskDto {
    id: String,
    slice_start: u32,
    size: u32,
    size_used: u32,
    start: f64,
    duration: f64,
}

#[derive(Serialize, Deserialize)]
struct ReconfigDto {
    kind: String,
    slice_start: u32,
    size: u32,
    start: f64,
    duration: f64,
}

#[derive(Serialize, Deserialize)]
struct ScheduleDto {
    model: String,
    makespan: f64,
    tasks: Vec<TaskDto>,
    reconfigs: Vec<ReconfigDto>,
}

pub fn schedule_to_json(s: &Schedule) -> serde_json::Value {
    let dto = ScheduleDto {
        model: s.model.name.clone(),
        makespan: s.makespan,
        tasks: s
            .tasks
            .iter()
            .map(|t| TaskDto {
                id: t.task_id.clone(),
                slice_start: t.node.start_slice,
                size: t.node.size,
                size_used: t.size_used,
                start: t.start,
                duration: t.duration,
            })
            .collect(),
        reconfigs: s
            .reconfigs
            .iter()
            .map(|e| ReconfigDto {
                kind: match e.kind {
                    ReconfigKind::Create => "create".into(),
                    ReconfigKind::Destroy => "destroy".into(),
                },
                slice_start: e.instance.start_slice,
                size: e.instance.size,
                start: e.start,
                duration: e.duration,
            })
            .collect(),
    };
    serde_json::to_value(dto).expect("schedule serializes")
}

pub fn schedule_to_string(s: &Schedule) -> String {
    serde_json::to_string_pretty(&schedule_to_json(s)).expect("schedule serializes")
}

/// Parses a schedule, resolving its model through `resolve` (e.g.
/// [`builtin_model`] or a file-backed lookup).
pub fn schedule_from_json(
    value: &serde_json::Value,
    resolve: &dyn Fn(&str) -> Result<Arc<GpuModel>>,
) -> Result<Schedule> {
    let dto: ScheduleDto = serde_json::from_value(value.clone())?;
    let model = resolve(&dto.model)?;
    let tasks = dto
        .tasks
        .into_iter()
        .map(|t| ScheduledTask {
            task_id: t.id,
            node: Instance::new(t.slice_start, t.size),
            size_used: t.size_used,
            start: t.start,
            duration: t.duration,
        })
        .collect();
    let reconfigs = dto
        .reconfigs
        .into_iter()
        .map(|e| -> Result<ReconfigEvent> {
            let kind = match e.kind.as_str() {
                "create" => ReconfigKind::Create,
                "destroy" => ReconfigKind::Destroy,
                other => {
                    return Err(crate::error::Error::Malformed(format!(
                        "unknown reconfiguration kind {other:?}"
                    )))
                }
            };
            Ok(ReconfigEvent {
                kind,
                instance: Instance::new(e.slice_start, e.size),
                start: e.start,
                duration: e.duration,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Schedule::from_parts(model, tasks, reconfigs))
}

pub fn schedule_from_str(text: &str) -> Result<Schedule> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    schedule_from_json(&value, &|name| builtin_model(name))
}

/// Stream plan with embedded per-batch schedules, offsets and seam events.
pub fn plan_to_json(plan: &ConcatPlan, result: &StreamResult) -> serde_json::Value {
    serde_json::json!({
        "model": result.combined.model.name,
        "total_makespan": result.total_makespan,
        "lower_bound": result.lower_bound,
        "p_multibatch": result.p_multibatch,
        "batches": plan
            .batches
            .iter()
            .map(|b| {
                serde_json::json!({
                    "offset": b.offset,
                    "reversed": b.reversed,
                    "schedule": schedule_to_json(&b.schedule),
                })
            })
            .collect::<Vec<_>>(),
        "seam_reconfigs": plan
            .seam_reconfigs
            .iter()
            .map(|e| {
                serde_json::json!({
                    "kind": match e.kind {
                        ReconfigKind::Create => "create",
                        ReconfigKind::Destroy => "destroy",
                    },
                    "slice_start": e.instance.start_slice,
                    "size": e.instance.size,
                    "start": e.start,
                    "duration": e.duration,
                })
            })
            .collect::<Vec<_>>(),
        "seams": result
            .seams
            .iter()
            .map(|s| {
                serde_json::json!({
                    "offset": s.offset,
                    "trivial_end": s.trivial_end,
                    "overlap_end": s.overlap_end,
                    "final_end": s.final_end,
                    "moves": s.moves,
                    "swaps": s.swaps,
                    "p_rev": s.p_rev,
                    "p_move_swap": s.p_move_swap,
                })
            })
            .collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::{far_schedule, FarOptions};
    use crate::workload::{generate_synthetic, SyntheticConfig};
    use proptest::prelude::*;

    fn far_example(seed: u64) -> Schedule {
        let model = builtin_model("A100").unwrap();
        let shares = [(1, 20.0), (2, 20.0), (3, 20.0), (4, 20.0), (7, 20.0)]
            .into_iter()
            .collect();
        let cfg = SyntheticConfig::new(7, shares, 50.0, 1.0, 60.0, seed);
        let tasks = generate_synthetic(&cfg, &model).unwrap();
        far_schedule(&tasks, &model, &FarOptions::default()).unwrap().0
    }

    #[test]
    fn wire_format_has_the_documented_fields() {
        let s = far_example(3);
        let v = schedule_to_json(&s);
        assert_eq!(v["model"], "A100");
        assert!(v["makespan"].is_f64());
        let t = &v["tasks"][0];
        for key in ["id", "slice_start", "size", "size_used", "start", "duration"] {
            assert!(!t[key].is_null(), "missing task key {key}");
        }
        let e = &v["reconfigs"][0];
        for key in ["kind", "slice_start", "size", "start", "duration"] {
            assert!(!e[key].is_null(), "missing reconfig key {key}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn schedule_round_trips(seed in 0u64..500) {
            let s = far_example(seed);
            let text = schedule_to_string(&s);
            let back = schedule_from_str(&text).unwrap();
            prop_assert_eq!(&back.tasks, &s.tasks);
            prop_assert_eq!(&back.reconfigs, &s.reconfigs);
            prop_assert!((back.makespan - s.makespan).abs() < 1e-12);
        }
    }
}
