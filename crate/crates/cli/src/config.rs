use std::fs;
use std::path::Path;

use proxynn_core::eval::{BenchmarkConfig, Method, StartMode};
use proxynn_core::optimize::{BfgsOptions, GdOptions};
use proxynn_core::proxy::{
    ArchitectureConfig, EncodingDescriptor, RegularizationConfig, TargetTransform, TrainingConfig,
};
use proxynn_core::simulators::SystemSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

pub const PRESETS: [(&str, &str); 6] = [
    ("gramacy", include_str!("../presets/gramacy.json")),
    ("rastrigin", include_str!("../presets/rastrigin.json")),
    ("burgers", include_str!("../presets/burgers.json")),
    ("ks", include_str!("../presets/ks.json")),
    ("billiards2d", include_str!("../presets/billiards2d.json")),
    ("billiards4d", include_str!("../presets/billiards4d.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    /// True trajectories drawn for the dataset.
    pub dataset_size: usize,
    pub samples_per_trajectory: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub target_transform: TargetTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSettings {
    /// Held-out problems used to rank the σ sweep.
    pub problem_count: usize,
    pub starts_per_problem: usize,
    /// Success radius on `‖X₁* − X*‖`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub problem_count: usize,
    pub methods: Vec<Method>,
    pub start_mode: StartMode,
    pub starts_per_problem: usize,
    pub shared_initial_state: bool,
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub bfgs: BfgsOptions,
    #[serde(default)]
    pub gd: GdOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSettings {
    /// Nodes per axis; a single value applies to every axis.
    pub resolution: Vec<usize>,
    pub budget: usize,
    pub problem_index: u64,
}

/// Values `--paper-scale` substitutes for the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperScale {
    pub dataset_size: usize,
    pub samples_per_trajectory: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub problem_count: usize,
    pub architecture: ArchitectureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub system: SystemSpec,
    /// Trajectory slots fed to the network; `null` uses the system default.
    pub slot_budget: Option<usize>,
    pub architecture: ArchitectureConfig,
    pub training: TrainingSettings,
    pub sigmas: Vec<f64>,
    pub mu: f64,
    pub selection: SelectionSettings,
    pub benchmark: BenchmarkSettings,
    pub landscape: LandscapeSettings,
    pub paper_scale: PaperScale,
    pub seed: u64,
}

/// Seeds derived from the run seed so training, selection and benchmark
/// problems never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub selection: u64,
    pub benchmark: u64,
    pub starts: u64,
}

impl RunConfig {
    pub fn seeds(&self) -> Seeds {
        Seeds {
            data: self.seed,
            selection: self.seed.wrapping_add(1),
            benchmark: self.seed.wrapping_add(2),
            starts: self.seed.wrapping_add(3),
        }
    }

    pub fn encoding(&self) -> proxynn_core::Result<EncodingDescriptor> {
        match self.slot_budget {
            Some(b) => EncodingDescriptor::new(&self.system, b),
            None => EncodingDescriptor::for_system(&self.system),
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            dataset_size: t.dataset_size,
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            samples_per_trajectory: t.samples_per_trajectory,
            seed: self.seed,
            target_transform: t.target_transform,
        }
    }

    pub fn regularizations(&self) -> proxynn_core::Result<Vec<RegularizationConfig>> {
        self.sigmas
            .iter()
            .map(|&s| RegularizationConfig::new(s, self.mu))
            .collect()
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        let b = &self.benchmark;
        let seeds = self.seeds();
        BenchmarkConfig {
            system: self.system.clone(),
            problem_count: b.problem_count,
            methods: b.methods.clone(),
            problem_seed: seeds.benchmark,
            start_seed: seeds.starts,
            start_mode: b.start_mode,
            starts_per_problem: b.starts_per_problem,
            shared_initial_state: b.shared_initial_state,
            thresholds: b.thresholds.clone(),
            bfgs: b.bfgs,
            gd: b.gd,
        }
    }

    pub fn apply_paper_scale(&mut self) {
        let p = &self.paper_scale;
        self.training.dataset_size = p.dataset_size;
        self.training.samples_per_trajectory = p.samples_per_trajectory;
        self.training.batch_size = p.batch_size;
        self.training.epochs = p.epochs;
        self.benchmark.problem_count = p.problem_count;
        self.architecture = p.architecture.clone();
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.system.validate().map_err(Failure::from)?;
        self.training_config().validate().map_err(Failure::from)?;
        self.regularizations().map_err(Failure::from)?;
        self.encoding().map_err(Failure::from)?;
        if self.sigmas.is_empty() {
            return Err(Failure::Config("sigmas must list at least one value".into()));
        }
        self.benchmark_config().validate().map_err(Failure::from)?;
        if self.landscape.resolution.is_empty() {
            return Err(Failure::Config("landscape.resolution must not be empty".into()));
        }
        Ok(())
    }
}

pub fn preset_value(name: &str) -> Result<Value, Failure> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Failure::Config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })?;
    serde_json::from_str(text).map_err(|e| Failure::Config(format!("preset {name}: {e}")))
}

/// Recursive object merge; `overlay` wins.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `a.b.c=value`. The value is parsed as JSON, falling back to a
/// plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), Failure> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Failure::Config(format!("{path}: {key:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Failure::Config(format!("{path}: index {idx} out of range (len {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Failure::Config(format!("{path}: {key:?} is not inside an object"))),
        };
    }
    Err(Failure::Config(format!("empty override key in {assignment:?}")))
}

pub struct Sources<'a> {
    pub preset: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub overrides: &'a [String],
    pub seed: Option<u64>,
    pub paper_scale: bool,
}

/// Preset, then config file, then `--set` overrides, then `--seed`.
pub fn resolve(src: &Sources) -> Result<RunConfig, Failure> {
    let file: Option<Value> = match src.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let preset_name = src.preset.map(str::to_string).or_else(|| {
        file.as_ref()
            .and_then(|f| f.get("preset"))
            .and_then(Value::as_str)
            .map(str::to_string)
    });
    let mut value = match &preset_name {
        Some(name) => preset_value(name)?,
        None if file.is_some() => Value::Object(Default::default()),
        None => return Err(Failure::Config("pass --preset NAME or --config PATH".into())),
    };
    if let Some(f) = file {
        merge(&mut value, f);
    }
    if let Some(name) = &preset_name {
        value["preset"] = Value::String(name.clone());
    }
    for o in src.overrides {
        apply_override(&mut value, o)?;
    }
    if let Some(seed) = src.seed {
        value["seed"] = Value::from(seed);
    }
    let mut config: RunConfig = serde_json::from_value(value).map_err(|e| Failure::Config(e.to_string()))?;
    if src.paper_scale {
        config.apply_paper_scale();
    }
    config.validate()?;
    Ok(config)
}
