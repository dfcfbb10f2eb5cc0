//! Phase 1: the ordered family of candidate slice allocations.
//!
//! The first allocation gives each task the smallest size minimizing its
//! work. Every following allocation grows the currently longest task to its
//! next work-minimizing size; the family ends when the longest task cannot
//! grow.

use crate::model::GpuModel;
use crate::workload::Task;

/// One slice-count assignment per task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation(pub Vec<u32>);

impl Allocation {
    pub fn sizes(&self) -> &[u32] {
        &self.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct AllocationFamily {
    pub allocations: Vec<Allocation>,
}

impl AllocationFamily {
    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }
}

/// Smallest size minimizing `s * t(s)`, restricted to sizes above `above`.
fn argmin_work(task: &Task, sizes: &[u32], above: Option<u32>) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for &s in sizes {
        if let Some(a) = above {
            if s <= a {
                continue;
            }
        }
        let w = task.work(s);
        match best {
            Some((_, bw)) if w >= bw => {}
            _ => best = Some((s, w)),
        }
    }
    best.map(|(s, _)| s)
}

/// Builds the family of candidate allocations for a batch.
pub fn allocation_family(tasks: &[Task], model: &GpuModel) -> AllocationFamily {
    let mut family = AllocationFamily::default();
    if tasks.is_empty() {
        return family;
    }
    let sizes = &model.sizes;

    let mut current: Vec<u32> = tasks
        .iter()
        .map(|t| argmin_work(t, sizes, None).expect("model has sizes"))
        .collect();
    family.allocations.push(Allocation(current.clone()));

    loop {
        // Longest task under the current allocation; ties to the lowest index.
        let longest = (0..tasks.len())
            .max_by(|&a, &b| {
                let ta = tasks[a].time(current[a]);
                let tb = tasks[b].time(current[b]);
                ta.partial_cmp(&tb).unwrap().then(b.cmp(&a))
            })
            .expect("non-empty batch");
        match argmin_work(&tasks[longest], sizes, Some(current[longest])) {
            Some(next_size) => {
                current[longest] = next_size;
                family.allocations.push(Allocation(current.clone()));
            }
            None => break,
        }
    }
    family
}
