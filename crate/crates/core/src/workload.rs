//! Task representation and the synthetic workload generator.
//!
//! Tasks carry one execution time per valid instance size. Times must be
//! positive and non-increasing in the size; profiles that grow by at most 2%
//! between consecutive sizes are clamped to the previous value, larger
//! growth is rejected.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::model::GpuModel;

/// Tolerated relative time increase between consecutive sizes.
pub const MONOTONY_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    /// Execution time in seconds per instance size.
    pub times: BTreeMap<u32, f64>,
}

impl Task {
    pub fn new(id: impl Into<String>, times: BTreeMap<u32, f64>) -> Self {
        Self { id: id.into(), times }
    }

    pub fn time(&self, size: u32) -> f64 {
        self.times[&size]
    }

    pub fn speedup(&self, size: u32) -> f64 {
        self.time(1) / self.time(size)
    }

    /// `size * time(size)`, the area the task occupies in the timetable.
    pub fn work(&self, size: u32) -> f64 {
        f64::from(size) * self.time(size)
    }

    pub fn min_work(&self, model: &GpuModel) -> f64 {
        model
            .sizes
            .iter()
            .map(|&s| self.work(s))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks completeness, positivity and monotony against a model,
    /// clamping small (≤2%) increases to the previous size's time.
    pub fn normalized(mut self, model: &GpuModel) -> Result<Self> {
        let mut prev: Option<(u32, f64)> = None;
        for &size in &model.sizes {
            let raw = *self.times.get(&size).ok_or(Error::IncompleteProfile {
                task: self.id.clone(),
                size,
            })?;
            if raw <= 0.0 || !raw.is_finite() {
                return Err(Error::InvalidTime {
                    task: self.id.clone(),
                    size,
                    value: raw,
                });
            }
            if let Some((prev_size, prev_time)) = prev {
                if raw > prev_time {
                    let pct = (raw - prev_time) / prev_time;
                    if pct > MONOTONY_TOLERANCE {
                        return Err(Error::NonMonotoneProfile {
                            task: self.id.clone(),
                            from: prev_size,
                            to: size,
                            pct: pct * 100.0,
                        });
                    }
                    self.times.insert(size, prev_time);
                }
            }
            prev = Some((size, self.times[&size]));
        }
        Ok(self)
    }
}

/// Parameters of the synthetic generator.
///
/// `p` gives the percentage of tasks that scale well (near- or
/// super-linearly) up to each instance size; `p_sup` the percentage of those
/// that start memory-bound (super-linear); memory-bound tasks turn
/// compute-bound with `transition_prob` per extra slice.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n: usize,
    pub p: BTreeMap<u32, f64>,
    pub p_sup: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub transition_prob: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(n: usize, p: BTreeMap<u32, f64>, p_sup: f64, t_min: f64, t_max: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            p_sup,
            t_min,
            t_max,
            transition_prob: 0.3,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        let total: f64 = self.p.values().sum();
        if (total - 100.0).abs() > 1e-9 {
            return Err(Error::Malformed(format!(
                "scaling shares must sum to 100, got {total}"
            )));
        }
        if !(0.0..=100.0).contains(&self.p_sup) {
            return Err(Error::Malformed("p_sup must be in [0, 100]".into()));
        }
        if !(self.t_min > 0.0 && self.t_min <= self.t_max) {
            return Err(Error::Malformed("need 0 < t_min <= t_max".into()));
        }
        Ok(())
    }
}

/// Splits `n` tasks among sizes proportionally to percentage shares.
///
/// Counts are floored, then the size farthest below its exact share gets one
/// more task until the total reaches `n`; ties go to the smaller size.
pub fn size_counts(n: usize, p: &BTreeMap<u32, f64>, sizes: &[u32]) -> BTreeMap<u32, usize> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut total = 0usize;
    for &s in sizes {
        let share = p.get(&s).copied().unwrap_or(0.0);
        let c = ((n as f64) * share / 100.0).floor() as usize;
        counts.insert(s, c);
        total += c;
    }
    while total < n {
        let mut best_size = sizes[0];
        let mut best_deficit = f64::NEG_INFINITY;
        for &s in sizes {
            let share = p.get(&s).copied().unwrap_or(0.0);
            let deficit = (n as f64) * share / 100.0 - counts[&s] as f64;
            if deficit > best_deficit + 1e-12 {
                best_deficit = deficit;
                best_size = s;
            }
        }
        *counts.get_mut(&best_size).unwrap() += 1;
        total += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    SuperLinear,
    NearLinear,
    SubLinear,
}

fn sample_step_factor(regime: Regime, rng: &mut impl Rng) -> f64 {
    let (mu, sigma, lo, hi): (f64, f64, f64, f64) = match regime {
        Regime::SuperLinear => (-0.25, 0.25, -0.5, 0.0),
        Regime::NearLinear => (0.1, 0.1, 0.0, 0.2),
        Regime::SubLinear => (0.75, 0.25, 0.5, 1.0),
    };
    let normal = Normal::new(mu, sigma).expect("valid normal parameters");
    let draw: f64 = normal.sample(rng);
    draw.clamp(lo, hi)
}

/// Generates `cfg.n` tasks for `model`, deterministically per seed.
pub fn generate_synthetic(cfg: &SyntheticConfig, model: &GpuModel) -> Result<Vec<Task>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    generate_with_rng(cfg, model, &mut rng)
}

/// Same as [`generate_synthetic`] but drawing from a caller-owned stream,
/// so experiment trials can run concurrently with derived seeds.
pub fn generate_with_rng(
    cfg: &SyntheticConfig,
    model: &GpuModel,
    rng: &mut impl Rng,
) -> Result<Vec<Task>> {
    cfg.check()?;
    let counts = size_counts(cfg.n, &cfg.p, &model.sizes);
    let max_size = model.max_size();
    let uniform = Uniform::new_inclusive(cfg.t_min, cfg.t_max)
        .map_err(|e| Error::Malformed(e.to_string()))?;

    let mut tasks = Vec::with_capacity(cfg.n);
    let width = cfg.n.saturating_sub(1).max(1).to_string().len();
    for &class_size in &model.sizes {
        let count = counts[&class_size];
        // The first ceil(p_sup * count / 100) tasks of the class start
        // memory-bound, the rest are compute-bound.
        let memory_bound_count = ((cfg.p_sup * count as f64) / 100.0).ceil() as usize;
        for k in 0..count {
            let idx = tasks.len();
            let mut memory_bound = class_size > 1 && k < memory_bound_count;
            let mut times = BTreeMap::new();
            let mut t = uniform.sample(rng);
            times.insert(1, t);
            for s in 1..max_size {
                let regime = if s + 1 <= class_size {
                    if memory_bound {
                        Regime::SuperLinear
                    } else {
                        Regime::NearLinear
                    }
                } else {
                    Regime::SubLinear
                };
                let r = sample_step_factor(regime, rng);
                t *= (f64::from(s) + r) / f64::from(s + 1);
                times.insert(s + 1, t);
                if regime == Regime::SuperLinear && rng.random_bool(cfg.transition_prob) {
                    memory_bound = false;
                }
            }
            times.retain(|size, _| model.sizes.contains(size));
            tasks.push(Task::new(format!("t{idx:0width$}"), times));
        }
    }
    Ok(tasks)
}

/// Parses a task-profile JSON document against a model.
pub fn tasks_from_profile_json(text: &str, model: &GpuModel) -> Result<Vec<Task>> {
    use serde::Deserialize;
    #[derive(Deserialize)]
    struct ProfileTask {
        id: String,
        times: BTreeMap<String, f64>,
    }
    #[derive(Deserialize)]
    struct ProfileFile {
        #[allow(dead_code)]
        #[serde(default)]
        model: Option<String>,
        tasks: Vec<ProfileTask>,
    }
    let file: ProfileFile = serde_json::from_str(text)?;
    if let Some(name) = &file.model {
        if name != &model.name {
            return Err(Error::ModelMismatch {
                left: name.clone(),
                right: model.name.clone(),
            });
        }
    }
    file.tasks
        .into_iter()
        .map(|t| {
            let mut times = BTreeMap::new();
            for (k, v) in t.times {
                let size: u32 = k
                    .parse()
                    .map_err(|_| Error::Malformed(format!("bad size key {k:?}")))?;
                times.insert(size, v);
            }
            Task::new(t.id, times).normalized(model)
        })
        .collect()
}

/// Serializes tasks in the task-profile JSON format.
pub fn tasks_to_profile_json(tasks: &[Task], model: &GpuModel) -> serde_json::Value {
    serde_json::json!({
        "model": model.name,
        "tasks": tasks
            .iter()
            .map(|t| {
                serde_json::json!({
                    "id": t.id,
                    "times": t
                        .times
                        .iter()
                        .map(|(s, v)| (s.to_string(), serde_json::json!(v)))
                        .collect::<serde_json::Map<_, _>>(),
                })
            })
            .collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use proptest::prelude::*;

    fn shares(values: &[(u32, f64)]) -> BTreeMap<u32, f64> {
        values.iter().copied().collect()
    }

    #[test]
    fn size_counts_examples() {
        let sizes = [1, 2, 3, 4, 7];
        let p = shares(&[(1, 10.0), (2, 10.0), (3, 20.0), (4, 30.0), (7, 30.0)]);
        let c = size_counts(10, &p, &sizes);
        assert_eq!(
            c.values().copied().collect::<Vec<_>>(),
            vec![1, 1, 2, 3, 3]
        );

        let p = shares(&[(1, 50.0), (2, 50.0), (3, 0.0), (4, 0.0), (7, 0.0)]);
        let c = size_counts(15, &p, &sizes);
        assert_eq!(
            c.values().copied().collect::<Vec<_>>(),
            vec![8, 7, 0, 0, 0]
        );

        let c = size_counts(0, &p, &sizes);
        assert!(c.values().all(|&v| v == 0));
    }

    #[test]
    fn generator_is_deterministic_and_monotone() {
        let model = builtin_model("A100").unwrap();
        let p = shares(&[(1, 10.0), (2, 10.0), (3, 20.0), (4, 30.0), (7, 30.0)]);
        let cfg = SyntheticConfig::new(10, p, 50.0, 1.0, 100.0, 42);
        let a = generate_synthetic(&cfg, &model).unwrap();
        let b = generate_synthetic(&cfg, &model).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for task in &a {
            let mut prev = f64::INFINITY;
            for &s in &model.sizes {
                let t = task.time(s);
                assert!(t > 0.0);
                assert!(t <= prev, "task {} not monotone at size {s}", task.id);
                prev = t;
            }
        }
    }

    #[test]
    fn memory_bound_tasks_superscale_on_first_step() {
        let model = builtin_model("A100").unwrap();
        let p = shares(&[(1, 0.0), (2, 0.0), (3, 0.0), (4, 0.0), (7, 100.0)]);
        let cfg = SyntheticConfig::new(8, p, 100.0, 1.0, 100.0, 7);
        for task in generate_synthetic(&cfg, &model).unwrap() {
            assert!(task.speedup(2) >= 2.0, "task {} speedup(2) < 2", task.id);
        }
    }

    #[test]
    fn speedup_curves_match_expected_shapes() {
        // Half the tasks memory-bound: super-linear early steps for class
        // sizes >= 2; all tasks sub-linear past their class size.
        let model = builtin_model("A100").unwrap();
        let p = shares(&[(1, 10.0), (2, 10.0), (3, 20.0), (4, 30.0), (7, 30.0)]);
        let cfg = SyntheticConfig::new(10, p, 50.0, 1.0, 100.0, 42);
        let tasks = generate_synthetic(&cfg, &model).unwrap();
        let classes = [1u32, 2, 3, 3, 4, 4, 4, 7, 7, 7];
        for (task, &class) in tasks.iter().zip(&classes) {
            // Past the class size the speedup per extra slice falls below
            // linear: t(s+1)/t(s) >= (s+0.5)/(s+1).
            for s in class..model.max_size() {
                if !model.sizes.contains(&s) || !model.sizes.contains(&(s + 1)) {
                    continue;
                }
                let ratio = task.time(s + 1) / task.time(s);
                assert!(
                    ratio >= (f64::from(s) + 0.5) / f64::from(s + 1) - 1e-9,
                    "task {} class {class} step {s} ratio {ratio}",
                    task.id
                );
            }
        }
    }

    #[test]
    fn profile_monotony_rules() {
        let model = builtin_model("A100").unwrap();
        let accepted = r#"{"model":"A100","tasks":[
            {"id":"gaussian","times":{"1":20.0,"2":9.5,"3":6.4,"4":6.3,"7":6.2}}]}"#;
        let tasks = tasks_from_profile_json(accepted, &model).unwrap();
        assert_eq!(tasks[0].time(4), 6.3);

        let rejected = r#"{"tasks":[{"id":"x","times":{"1":10,"2":11,"3":8,"4":7,"7":6}}]}"#;
        let err = tasks_from_profile_json(rejected, &model).unwrap_err();
        assert!(err.to_string().contains("non-monotone profile"));

        let clamped = r#"{"tasks":[{"id":"x","times":{"1":10.0,"2":10.1,"3":8,"4":7,"7":6}}]}"#;
        let tasks = tasks_from_profile_json(clamped, &model).unwrap();
        assert_eq!(tasks[0].time(2), 10.0);

        let incomplete = r#"{"tasks":[{"id":"x","times":{"1":10.0,"2":9.0}}]}"#;
        let err = tasks_from_profile_json(incomplete, &model).unwrap_err();
        assert!(err.to_string().contains("incomplete profile"));

        let negative = r#"{"tasks":[{"id":"x","times":{"1":10,"2":9,"3":8,"4":-1,"7":6}}]}"#;
        let err = tasks_from_profile_json(negative, &model).unwrap_err();
        assert!(err.to_string().contains("invalid time"));
    }

    proptest! {
        #[test]
        fn size_counts_total_matches_n(
            n in 0usize..200,
            raw in proptest::collection::vec(0.0f64..1.0, 5),
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let sizes = [1u32, 2, 3, 4, 7];
            let p: BTreeMap<u32, f64> = sizes
                .iter()
                .zip(&raw)
                .map(|(&s, &w)| (s, w / total * 100.0))
                .collect();
            let counts = size_counts(n, &p, &sizes);
            prop_assert_eq!(counts.values().sum::<usize>(), n);
        }

        #[test]
        fn generated_tasks_never_need_clamping(seed in 0u64..500) {
            let model = builtin_model("A30").unwrap();
            let p = shares(&[(1, 34.0), (2, 33.0), (4, 33.0)]);
            let cfg = SyntheticConfig::new(6, p, 50.0, 1.0, 50.0, seed);
            for task in generate_synthetic(&cfg, &model).unwrap() {
                let again = task.clone().normalized(&model).unwrap();
                prop_assert_eq!(again, task);
            }
        }
    }
}
