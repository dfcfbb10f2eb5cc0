//! MIG-style GPU topologies: slices, instances, repartitioning trees and
//! reconfiguration costs.
//!
//! A GPU is split into `num_slices` slices. Consecutive slices form
//! instances, but only the placements present in the repartitioning tree are
//! creatable. Any set of pairwise-disjoint catalog instances is part of a
//! valid partition, and splitting tree nodes generates exactly those
//! partitions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A group of consecutive slices: `[start_slice, start_slice + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Instance {
    pub start_slice: u32,
    pub size: u32,
}

impl Instance {
    pub fn new(start_slice: u32, size: u32) -> Self {
        Self { start_slice, size }
    }

    pub fn end_slice(&self) -> u32 {
        self.start_slice + self.size
    }

    pub fn slices(&self) -> impl Iterator<Item = u32> {
        self.start_slice..self.end_slice()
    }

    pub fn overlaps(&self, other: &Instance) -> bool {
        self.start_slice < other.end_slice() && other.start_slice < self.end_slice()
    }
}

impl std::fmt::Display for Instance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.size == 1 {
            write!(f, "S{}", self.start_slice)
        } else {
            write!(f, "S{}..S{}", self.start_slice, self.end_slice() - 1)
        }
    }
}

/// Node of the repartitioning tree.
///
/// `hosted_sizes` lists the task sizes the node may execute, in priority
/// order. It always contains the node's own size; the 4-slice node of the
/// A100/H100 additionally hosts size-3 tasks (the variant that leaves its
/// last slice idle).
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub instance: Instance,
    pub hosted_sizes: Vec<u32>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// One element of a partition: a catalog instance together with the task
/// size it runs. `run_size == instance.size` except for the 3-in-4 variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionSlot {
    pub instance: Instance,
    pub run_size: u32,
}

/// Immutable description of a reconfigurable GPU.
#[derive(Debug, Clone)]
pub struct GpuModel {
    pub name: String,
    pub num_slices: u32,
    /// Valid instance sizes (the task-time domain).
    pub sizes: Vec<u32>,
    nodes: Vec<TreeNode>,
    pub t_create: BTreeMap<u32, f64>,
    pub t_destroy: BTreeMap<u32, f64>,
}

impl GpuModel {
    /// Builds a model from a nested tree description and cost tables,
    /// checking the structural invariants.
    pub fn new(
        name: impl Into<String>,
        num_slices: u32,
        tree: NodeDef,
        t_create: BTreeMap<u32, f64>,
        t_destroy: BTreeMap<u32, f64>,
    ) -> Result<Self> {
        let mut nodes = Vec::new();
        flatten(&tree, None, &mut nodes);

        let mut sizes: Vec<u32> = nodes
            .iter()
            .flat_map(|n| n.hosted_sizes.iter().copied())
            .collect();
        sizes.sort_unstable();
        sizes.dedup();

        let model = GpuModel {
            name: name.into(),
            num_slices,
            sizes,
            nodes,
            t_create,
            t_destroy,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let root = &self.nodes[0];
        if root.instance.start_slice != 0 || root.instance.size != self.num_slices {
            return Err(Error::InvalidModel(format!(
                "root must cover all {} slices",
                self.num_slices
            )));
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.instance.size == 0 || node.instance.end_slice() > self.num_slices {
                return Err(Error::InvalidModel(format!(
                    "node {} out of range",
                    node.instance
                )));
            }
            if !node.hosted_sizes.contains(&node.instance.size) {
                return Err(Error::InvalidModel(format!(
                    "node {} does not host its own size",
                    node.instance
                )));
            }
            if !node.children.is_empty() {
                let mut covered: Vec<Instance> =
                    node.children.iter().map(|&c| self.nodes[c].instance).collect();
                covered.sort();
                let mut pos = node.instance.start_slice;
                for child in &covered {
                    if child.start_slice != pos {
                        return Err(Error::InvalidModel(format!(
                            "children of {} do not partition it",
                            node.instance
                        )));
                    }
                    pos = child.end_slice();
                }
                if pos != node.instance.end_slice() {
                    return Err(Error::InvalidModel(format!(
                        "children of {} do not cover it",
                        node.instance
                    )));
                }
            }
            let _ = idx;
        }
        for &s in &self.sizes {
            if !self.t_create.contains_key(&s) || !self.t_destroy.contains_key(&s) {
                return Err(Error::InvalidModel(format!(
                    "missing reconfiguration cost for size {s}"
                )));
            }
        }
        Ok(())
    }

    /// Flat repartitioning tree, root at index 0, BFS order.
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        0
    }

    /// All creatable instances (one per tree node).
    pub fn catalog(&self) -> impl Iterator<Item = Instance> + '_ {
        self.nodes.iter().map(|n| n.instance)
    }

    pub fn node_index(&self, instance: &Instance) -> Option<usize> {
        self.nodes.iter().position(|n| n.instance == *instance)
    }

    pub fn create_cost(&self, size: u32) -> f64 {
        self.t_create.get(&size).copied().unwrap_or(0.0)
    }

    pub fn destroy_cost(&self, size: u32) -> f64 {
        self.t_destroy.get(&size).copied().unwrap_or(0.0)
    }

    pub fn max_size(&self) -> u32 {
        *self.sizes.last().expect("model has at least one size")
    }
}

/// Nested node description used to build models (and as the JSON schema for
/// user-defined model files).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDef {
    pub start_slice: u32,
    pub size: u32,
    #[serde(default)]
    pub hosted_sizes: Vec<u32>,
    #[serde(default)]
    pub children: Vec<NodeDef>,
}

impl NodeDef {
    fn leaf(start_slice: u32, size: u32) -> Self {
        NodeDef {
            start_slice,
            size,
            hosted_sizes: vec![],
            children: vec![],
        }
    }
}

// BFS layout keeps parents before children and siblings adjacent.
fn flatten(root: &NodeDef, _parent: Option<usize>, out: &mut Vec<TreeNode>) {
    let push = |def: &NodeDef, parent: Option<usize>, out: &mut Vec<TreeNode>| -> usize {
        let hosted = if def.hosted_sizes.is_empty() {
            vec![def.size]
        } else {
            def.hosted_sizes.clone()
        };
        out.push(TreeNode {
            instance: Instance::new(def.start_slice, def.size),
            hosted_sizes: hosted,
            parent,
            children: Vec::new(),
        });
        out.len() - 1
    };
    let root_idx = push(root, None, out);
    let mut queue: Vec<(usize, &NodeDef)> = vec![(root_idx, root)];
    while !queue.is_empty() {
        let mut next = Vec::new();
        for (node_idx, node_def) in queue {
            for child in &node_def.children {
                let child_idx = push(child, Some(node_idx), out);
                out[node_idx].children.push(child_idx);
                next.push((child_idx, child));
            }
        }
        queue = next;
    }
}

/// Builds one of the shipped models: `A30`, `A100` or `H100`.
pub fn builtin_model(name: &str) -> Result<Arc<GpuModel>> {
    let model = match name {
        "A30" => {
            let tree = NodeDef {
                start_slice: 0,
                size: 4,
                hosted_sizes: vec![],
                children: vec![
                    NodeDef {
                        start_slice: 0,
                        size: 2,
                        hosted_sizes: vec![],
                        children: vec![NodeDef::leaf(0, 1), NodeDef::leaf(1, 1)],
                    },
                    NodeDef {
                        start_slice: 2,
                        size: 2,
                        hosted_sizes: vec![],
                        children: vec![NodeDef::leaf(2, 1), NodeDef::leaf(3, 1)],
                    },
                ],
            };
            let t_create = BTreeMap::from([(1, 0.11), (2, 0.12), (4, 0.13)]);
            let t_destroy = BTreeMap::from([(1, 0.10), (2, 0.10), (4, 0.10)]);
            GpuModel::new("A30", 4, tree, t_create, t_destroy)?
        }
        "A100" | "H100" => {
            let tree = NodeDef {
                start_slice: 0,
                size: 7,
                hosted_sizes: vec![],
                children: vec![
                    NodeDef {
                        start_slice: 0,
                        size: 4,
                        // Size-4 tasks take priority; size-3 tasks may run
                        // here with the last slice idle.
                        hosted_sizes: vec![4, 3],
                        children: vec![
                            NodeDef {
                                start_slice: 0,
                                size: 2,
                                hosted_sizes: vec![],
                                children: vec![NodeDef::leaf(0, 1), NodeDef::leaf(1, 1)],
                            },
                            NodeDef {
                                start_slice: 2,
                                size: 2,
                                hosted_sizes: vec![],
                                children: vec![NodeDef::leaf(2, 1), NodeDef::leaf(3, 1)],
                            },
                        ],
                    },
                    NodeDef {
                        start_slice: 4,
                        size: 3,
                        hosted_sizes: vec![],
                        children: vec![
                            NodeDef {
                                start_slice: 4,
                                size: 2,
                                hosted_sizes: vec![],
                                children: vec![NodeDef::leaf(4, 1), NodeDef::leaf(5, 1)],
                            },
                            NodeDef::leaf(6, 1),
                        ],
                    },
                ],
            };
            let (t_create, t_destroy) = if name == "A100" {
                (
                    BTreeMap::from([(1, 0.16), (2, 0.17), (3, 0.20), (4, 0.21), (7, 0.24)]),
                    BTreeMap::from([(1, 0.20), (2, 0.20), (3, 0.21), (4, 0.21), (7, 0.22)]),
                )
            } else {
                (
                    BTreeMap::from([(1, 0.16), (2, 0.21), (3, 0.33), (4, 0.38), (7, 0.42)]),
                    BTreeMap::from([(1, 0.21), (2, 0.23), (3, 0.25), (4, 0.26), (7, 0.26)]),
                )
            };
            GpuModel::new(name, 7, tree, t_create, t_destroy)?
        }
        other => return Err(Error::UnsupportedModel(other.to_string())),
    };
    Ok(Arc::new(model))
}

/// Loads a user-defined model from its JSON definition.
pub fn model_from_json(text: &str) -> Result<Arc<GpuModel>> {
    #[derive(Deserialize)]
    struct ModelFile {
        name: String,
        num_slices: u32,
        tree: NodeDef,
        t_create: BTreeMap<u32, f64>,
        t_destroy: BTreeMap<u32, f64>,
    }
    let file: ModelFile = serde_json::from_str(text)?;
    Ok(Arc::new(GpuModel::new(
        file.name,
        file.num_slices,
        file.tree,
        file.t_create,
        file.t_destroy,
    )?))
}

/// All maximal partitions: sets of disjoint slots covering every slice.
///
/// Using the 4-slice node for a size-3 task occupies all four of its slices
/// and counts as a distinct partition, which is how the A100/H100 reach 19.
pub fn enumerate_partitions(model: &GpuModel) -> Vec<Vec<PartitionSlot>> {
    // Slot options per starting slice.
    let mut options: BTreeMap<u32, Vec<PartitionSlot>> = BTreeMap::new();
    for node in model.nodes() {
        for &run in &node.hosted_sizes {
            options.entry(node.instance.start_slice).or_default().push(PartitionSlot {
                instance: node.instance,
                run_size: run,
            });
        }
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    cover(model.num_slices, 0, &options, &mut current, &mut out);
    out
}

fn cover(
    num_slices: u32,
    pos: u32,
    options: &BTreeMap<u32, Vec<PartitionSlot>>,
    current: &mut Vec<PartitionSlot>,
    out: &mut Vec<Vec<PartitionSlot>>,
) {
    if pos == num_slices {
        out.push(current.clone());
        return;
    }
    if let Some(slots) = options.get(&pos) {
        for slot in slots {
            current.push(*slot);
            cover(num_slices, slot.instance.end_slice(), options, current, out);
            current.pop();
        }
    }
}

/// True iff every instance is in the catalog and all pairs are disjoint.
pub fn is_feasible_instance_set(model: &GpuModel, instances: &[Instance]) -> bool {
    for (i, a) in instances.iter().enumerate() {
        if model.node_index(a).is_none() {
            return false;
        }
        for b in &instances[i + 1..] {
            if a.overlaps(b) {
                return false;
            }
        }
    }
    true
}
