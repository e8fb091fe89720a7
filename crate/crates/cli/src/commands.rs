use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use proxynn_core::eval::{prediction_error, resimulation_error, run_benchmark, select_model, BenchmarkConfig, Method};
use proxynn_core::landscape::{count_local_minima, sample_ground_truth_grid, InverseProblem, LandscapeGrid};
use proxynn_core::optimize::{bfgs_baseline, gd_baseline, two_step_optimize, write_traces_csv, OptResult, Termination};
use proxynn_core::proxy::{generate_seeded_dataset, train, Dataset, ProxyModel};
use proxynn_core::sha256_hex;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{resolve, RunConfig, Sources};
use crate::{Cli, Command, Failure};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn load_model(path: &Path) -> Result<ProxyModel, Failure> {
    ProxyModel::from_bytes(&read_file(path)?).map_err(|e| match e {
        e if e.is_io() => io_err(path, e),
        e => Failure::Config(format!("{}: {e}", path.display())),
    })
}

/// Inputs and outputs recorded in `meta.json`.
struct Run<'a> {
    command: &'static str,
    config: &'a RunConfig,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    extra: Value,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, config: &'a RunConfig, out: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        Ok(Self {
            command,
            config,
            out: out.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            extra: json!({}),
        })
    }

    fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        write_file(&self.path(name), bytes)?;
        self.record(name);
        Ok(())
    }

    fn record(&mut self, name: &str) {
        if !self.outputs.iter().any(|n| n == name) {
            self.outputs.push(name.to_string());
        }
    }

    fn finish(self) -> Result<(), Failure> {
        let mut outputs = BTreeMap::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), sha256_hex(&read_file(&self.path(name))?));
        }
        let path = self.out.join("meta.json");
        let mut runs = fs::read(&path)
            .ok()
            .and_then(|b| serde_json::from_slice::<Value>(&b).ok())
            .and_then(|v| v.get("runs").cloned())
            .filter(Value::is_object)
            .unwrap_or_else(|| json!({}));
        runs[self.command] = json!({
            "config": self.config,
            "inputs": self.inputs,
            "outputs": outputs,
            "details": self.extra,
        });
        let meta = json!({
            "tool": "proxynn",
            "version": env!("CARGO_PKG_VERSION"),
            "last_command": self.command,
            "config": self.config,
            "runs": runs,
        });
        write_file(&path, &to_json(&meta)?)
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let config = resolve(&Sources {
        preset: cli.preset.as_deref(),
        config: cli.config.as_deref(),
        overrides: &cli.overrides,
        seed: cli.seed,
        paper_scale: cli.paper_scale,
    })?;
    match &cli.command {
        Command::GenData => gen_data(&config, &cli.out),
        Command::Train { dataset } => {
            let path = dataset.clone().unwrap_or_else(|| cli.out.join("dataset.pxds"));
            train_models(&config, &path, &cli.out)
        }
        Command::Landscape {
            model,
            resolution,
            problem_index,
        } => landscape(&config, model.as_deref(), resolution, *problem_index, &cli.out),
        Command::Optimize {
            model,
            x0,
            problem,
            problem_index,
            method,
        } => optimize(
            &config,
            OptimizeArgs {
                model: model.as_deref(),
                x0: x0.as_deref(),
                problem: problem.as_deref(),
                problem_index: *problem_index,
                method,
            },
            &cli.out,
        ),
        Command::Benchmark {
            model,
            methods,
            full,
            timings,
        } => benchmark(&config, model.as_deref(), methods, *full, *timings, &cli.out),
    }
}

fn gen_data(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let mut run = Run::new("gen-data", config, out)?;
    let encoding = config.encoding()?;
    let training = config.training_config();
    let ds = generate_seeded_dataset(&config.system, config.seeds().data, &training, &encoding)?;
    let bytes = ds.to_bytes()?;
    run.write("dataset.pxds", &bytes)?;
    let manifest = json!({
        "system": config.system.id().name(),
        "seed": ds.header.seed,
        "problem_seed": config.seeds().data,
        "problem_count": ds.header.problem_count,
        "samples_per_trajectory": ds.header.samples_per_trajectory,
        "sample_count": ds.header.sample_count,
        "skipped": ds.header.skipped,
        "slot_count": encoding.slot_count(),
        "param_dim": encoding.param_dim(),
        "sha256": sha256_hex(&bytes),
    });
    run.write("manifest.json", &to_json(&manifest)?)?;
    run.finish()
}

fn sigma_tag(sigma: f64) -> String {
    format!("sigma_{sigma}")
}

fn train_models(config: &RunConfig, dataset_path: &Path, out: &Path) -> Result<(), Failure> {
    let mut run = Run::new("train", config, out)?;
    let bytes = read_file(dataset_path)?;
    run.input(dataset_path, &bytes);
    let ds = Dataset::from_bytes(&bytes).map_err(|e| io_err(dataset_path, e))?;
    let encoding = config.encoding()?;
    if !ds.header.encoding.compatible(&encoding) || ds.header.system != config.system {
        return Err(Failure::Config(format!(
            "dataset encodes {} with {} slots; the configuration expects {} with {} slots",
            ds.header.encoding.system.name(),
            ds.header.encoding.slot_count(),
            config.system.id().name(),
            encoding.slot_count()
        )));
    }
    let mut training = config.training_config();
    training.dataset_size = ds.header.problem_count;
    training.samples_per_trajectory = ds.header.samples_per_trajectory;
    training.batch_size = training.batch_size.min(ds.len());

    let mut models = Vec::new();
    let mut files = Vec::new();
    for reg in config.regularizations()? {
        let init = ProxyModel::new(config.architecture.clone(), encoding.clone(), training.clone(), reg)?;
        let (model, history) = train(&ds, init, reg)?;
        let tag = sigma_tag(reg.sigma);
        let name = format!("model_{tag}.pxnn");
        run.write(&name, &model.to_bytes()?)?;
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in history.iter().enumerate() {
            csv.push_str(&format!("{i},{l:.16e}\n"));
        }
        run.write(&format!("loss_{tag}.csv"), csv.as_bytes())?;
        models.push(model);
        files.push(name);
    }

    let chosen = if models.len() > 1 {
        let s = &config.selection;
        let mut bench = BenchmarkConfig::new(config.system.clone(), s.problem_count, &[Method::TwoStep]);
        bench.problem_seed = config.seeds().selection;
        bench.start_seed = config.seeds().selection;
        bench.starts_per_problem = s.starts_per_problem;
        let problems = bench.problems()?;
        let starts: Vec<_> = problems.iter().map(|p| bench.starts(p)).collect();
        let (best, rates) = select_model(&models, &problems, &starts, s.threshold, &bench.bfgs)?;
        let selection = json!({
            "sigmas": config.sigmas,
            "primary_success_rates": rates,
            "chosen_sigma": config.sigmas[best],
            "chosen_file": files[best],
            "held_out_problem_seed": bench.problem_seed,
            "threshold": s.threshold,
        });
        run.write("selection.json", &to_json(&selection)?)?;
        best
    } else {
        0
    };
    run.write("model.pxnn", &models[chosen].to_bytes()?)?;
    run.extra = json!({ "selected": files[chosen] });
    run.finish()
}

fn problem_for(config: &RunConfig, file: Option<&Path>, index: u64, run: &mut Run) -> Result<InverseProblem, Failure> {
    match file {
        Some(path) => {
            let bytes = read_file(path)?;
            run.input(path, &bytes);
            let p: InverseProblem =
                serde_json::from_slice(&bytes).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            if p.system != config.system {
                return Err(Failure::Config(format!(
                    "{} holds a {} problem but the configuration is for {}",
                    path.display(),
                    p.system.id().name(),
                    config.system.id().name()
                )));
            }
            Ok(p)
        }
        None => Ok(InverseProblem::generate(
            &config.system,
            config.seeds().benchmark,
            index,
        )?),
    }
}

fn grid_summary(grid: &LandscapeGrid) -> Value {
    let best = grid.argmin();
    json!({
        "nodes": grid.len(),
        "argmin": grid.node(best),
        "min_loss": grid.values[best],
        "local_minima": count_local_minima(grid),
    })
}

fn landscape(
    config: &RunConfig,
    model: Option<&Path>,
    resolution: &[usize],
    problem_index: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let mut run = Run::new("landscape", config, out)?;
    let index = problem_index.unwrap_or(config.landscape.problem_index);
    let problem = problem_for(config, None, index, &mut run)?;
    let dim = problem.bounds().dim();
    let res = if resolution.is_empty() {
        &config.landscape.resolution
    } else {
        resolution
    };
    let res: Vec<usize> = match res.len() {
        1 => vec![res[0]; dim],
        n if n == dim => res.to_vec(),
        n => {
            return Err(Failure::Config(format!(
                "{n} resolutions given for a {dim}-D search space"
            )))
        }
    };
    let truth = sample_ground_truth_grid(&problem, &res, config.landscape.budget)?;
    let mut csv = Vec::new();
    truth.write_csv(&mut csv)?;
    run.write("ground_truth.csv", &csv)?;
    let mut summary = json!({
        "problem_id": problem.id,
        "x_true": problem.true_params,
        "resolution": res,
        "ground_truth": grid_summary(&truth),
    });
    if let Some(path) = model {
        let bytes = read_file(path)?;
        run.input(path, &bytes);
        let m = load_model(path)?;
        let grid = m.predict_grid(&problem, &res, config.landscape.budget)?;
        let mut csv = Vec::new();
        grid.write_csv(&mut csv)?;
        run.write("proxy.csv", &csv)?;
        summary["proxy"] = grid_summary(&grid);
    }
    run.write("landscape.json", &to_json(&summary)?)?;
    run.finish()
}

struct OptimizeArgs<'a> {
    model: Option<&'a Path>,
    x0: Option<&'a [f64]>,
    problem: Option<&'a Path>,
    problem_index: u64,
    method: &'a str,
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    problem_id: u64,
    method: Method,
    x0: &'a [f64],
    x0_source: &'static str,
    x_true: &'a [f64],
    x_predicted: &'a [f64],
    x_primary: Option<&'a [f64]>,
    primary_fallback: bool,
    primary_termination: Termination,
    secondary_termination: Option<Termination>,
    e: f64,
    r: f64,
}

fn optimize(config: &RunConfig, args: OptimizeArgs, out: &Path) -> Result<(), Failure> {
    let mut run = Run::new("optimize", config, out)?;
    let method = Method::parse(args.method)?;
    let problem = problem_for(config, args.problem, args.problem_index, &mut run)?;
    let bounds = problem.bounds();
    let (x0, source) = match args.x0 {
        Some(x) => (x.to_vec(), "argument"),
        None => (bounds.center(), "center"),
    };
    bounds.check(&x0)?;
    let opts = &config.benchmark.bfgs;
    let result: OptResult = match method {
        Method::TwoStep => {
            let path = args
                .model
                .ok_or_else(|| Failure::Config("two_step needs --model".into()))?;
            let bytes = read_file(path)?;
            run.input(path, &bytes);
            two_step_optimize(&load_model(path)?, &problem, &x0, opts)?
        }
        Method::Bfgs => bfgs_baseline(&problem, &x0, opts)?,
        Method::Gd => gd_baseline(&problem, &x0, &config.benchmark.gd)?,
    };
    let summary = OptimizeSummary {
        problem_id: problem.id,
        method,
        x0: &x0,
        x0_source: source,
        x_true: &problem.true_params,
        x_predicted: &result.x_predicted,
        x_primary: result.secondary_trace.as_ref().map(|_| result.primary_point()),
        primary_fallback: result.primary_fallback,
        primary_termination: result.primary_trace.termination,
        secondary_termination: result.secondary_trace.as_ref().map(|t| t.termination),
        e: prediction_error(&problem.true_params, &result.x_predicted)?,
        r: resimulation_error(&problem, &result.x_predicted)?,
    };
    run.write("result.json", &to_json(&summary)?)?;
    let mut csv = Vec::new();
    write_traces_csv(&mut csv, &config.system.param_names(), &result.traces())?;
    run.write("traces.csv", &csv)?;
    run.finish()
}

fn benchmark(
    config: &RunConfig,
    model: Option<&Path>,
    methods: &[String],
    full: bool,
    timings: bool,
    out: &Path,
) -> Result<(), Failure> {
    let mut run = Run::new("benchmark", config, out)?;
    let mut bench = config.benchmark_config();
    if !methods.is_empty() {
        bench.methods = methods.iter().map(|m| Method::parse(m)).collect::<Result<_, _>>()?;
    }
    if full {
        bench.problem_count = 256;
    }
    let model = match model {
        Some(path) => {
            let bytes = read_file(path)?;
            run.input(path, &bytes);
            Some(load_model(path)?)
        }
        None => None,
    };
    if bench.methods.contains(&Method::TwoStep) && model.is_none() {
        return Err(Failure::Config(
            "two_step needs --model (or pass --methods bfgs,gd)".into(),
        ));
    }
    let report = run_benchmark(&bench, model.as_ref())?;
    report.write_dir(out)?;
    for name in ["rows.csv", "summary.csv", "report.json"] {
        run.record(name);
    }
    if timings {
        let mut csv = Vec::new();
        report.write_timings_csv(&mut csv)?;
        write_file(&run.path("timings.csv"), &csv)?;
    }
    run.extra = json!({
        "report_hash": report.content_hash()?,
        "benchmark": bench,
    });
    run.finish()
}
