use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sgdscale::engine::{
    sgd_run_quadratic_multi, RunStatus, SGDConfig, StepPolicy, Trace, TraceRecord,
};
use sgdscale::problems::{
    kernel_problem, load_csv, random_interpolated_quadratic, tightness_instance, KernelFamily,
    KernelSpec, QuadraticProblem, SpectrumProfile,
};
use sgdscale::rng;

/// Experiment description; accepted as a JSON file, with every field
/// overridable from the command line. The resolved form is echoed to the
/// output directory so a run is a reproducible record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub batch_sizes: Vec<u64>,
    pub step: StepSpec,
    pub trials: u64,
    pub max_iterations: u64,
    #[serde(default)]
    pub target_loss: Option<f64>,
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    pub seed: u64,
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    /// Orthogonal equal-norm rows: a flat spectrum at beta / n.
    Tightness { n: usize, beta: f64, seed: u64 },
    /// Random interpolated quadratic with profiled row norms.
    Random {
        n: usize,
        d: usize,
        profile: ProfileSpec,
        seed: u64,
    },
    /// Kernel regression dual built from a CSV dataset.
    Kernel {
        data: String,
        label_cols: Vec<String>,
        family: String,
        sigma: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum ProfileSpec {
    Uniform { min: f64, max: f64 },
    Decaying { first: f64, last: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum StepSpec {
    Optimal,
    Hat,
    HatMultiple { value: f64 },
    Explicit { value: f64 },
}

impl StepSpec {
    fn to_policy(&self) -> StepPolicy {
        match self {
            StepSpec::Optimal => StepPolicy::Optimal,
            StepSpec::Hat => StepPolicy::Hat,
            StepSpec::HatMultiple { value } => StepPolicy::HatMultiple(*value),
            StepSpec::Explicit { value } => StepPolicy::Explicit(*value),
        }
    }
}

pub fn parse_step_spec(s: &str) -> anyhow::Result<StepSpec> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("optimal") {
        return Ok(StepSpec::Optimal);
    }
    if s.eq_ignore_ascii_case("hat") {
        return Ok(StepSpec::Hat);
    }
    if let Some(mult) = s.strip_prefix("hatx") {
        let value: f64 = mult
            .parse()
            .with_context(|| format!("bad step multiplier '{s}'"))?;
        return Ok(StepSpec::HatMultiple { value });
    }
    let value: f64 = s
        .parse()
        .with_context(|| format!("step must be optimal|hat|hatx<c>|<value>, got '{s}'"))?;
    Ok(StepSpec::Explicit { value })
}

pub fn parse_kernel_family(s: &str) -> anyhow::Result<KernelFamily> {
    match s.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(KernelFamily::Gaussian),
        "laplace" => Ok(KernelFamily::Laplace),
        other => anyhow::bail!("unknown kernel family '{other}' (gaussian|laplace)"),
    }
}

#[derive(clap::Args)]
pub struct SweepArgs {
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<u64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long)]
    pub target_loss: Option<f64>,
    #[arg(long)]
    pub trace_stride: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step rule: optimal | hat | hatx<c> | <value>.
    #[arg(long)]
    pub step: Option<String>,
    /// Problem kind when no config file is given: tightness | random | kernel.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub problem_n: Option<usize>,
    #[arg(long)]
    pub problem_d: Option<usize>,
    #[arg(long)]
    pub problem_beta: Option<f64>,
    #[arg(long)]
    pub problem_seed: Option<u64>,
    /// Row-norm profile for random problems: uniform:<min>:<max> or
    /// decaying:<first>:<last>.
    #[arg(long)]
    pub profile: Option<String>,
    /// Dataset CSV for kernel problems.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub label_cols: Option<Vec<String>>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_profile(s: &str) -> anyhow::Result<ProfileSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["uniform", lo, hi] => Ok(ProfileSpec::Uniform {
            min: lo.parse()?,
            max: hi.parse()?,
        }),
        ["decaying", first, last] => Ok(ProfileSpec::Decaying {
            first: first.parse()?,
            last: last.parse()?,
        }),
        _ => anyhow::bail!("profile must be uniform:<min>:<max> or decaying:<first>:<last>"),
    }
}

fn problem_from_flags(args: &SweepArgs) -> anyhow::Result<ProblemSpec> {
    let kind = args
        .problem
        .as_deref()
        .context("no --config given, so --problem is required")?;
    match kind {
        "tightness" => Ok(ProblemSpec::Tightness {
            n: args.problem_n.context("--problem-n required")?,
            beta: args.problem_beta.unwrap_or(1.0),
            seed: args.problem_seed.unwrap_or(0),
        }),
        "random" => Ok(ProblemSpec::Random {
            n: args.problem_n.context("--problem-n required")?,
            d: args.problem_d.context("--problem-d required")?,
            profile: match &args.profile {
                Some(p) => parse_profile(p)?,
                None => ProfileSpec::Uniform { min: 0.5, max: 1.0 },
            },
            seed: args.problem_seed.unwrap_or(0),
        }),
        "kernel" => Ok(ProblemSpec::Kernel {
            data: args
                .data
                .as_ref()
                .context("--data required for kernel problems")?
                .display()
                .to_string(),
            label_cols: args.label_cols.clone().unwrap_or_default(),
            family: args.kernel.clone().unwrap_or_else(|| "gaussian".into()),
            sigma: args.sigma.context("--sigma required for kernel problems")?,
        }),
        other => anyhow::bail!("unknown problem kind '{other}'"),
    }
}

fn resolve_config(args: &SweepArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config: ExperimentConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("bad experiment config {}", path.display()))?
        }
        None => ExperimentConfig {
            problem: problem_from_flags(args)?,
            batch_sizes: vec![1],
            step: StepSpec::Optimal,
            trials: 1,
            max_iterations: 1_000,
            target_loss: None,
            trace_stride: 1,
            seed: 0,
        },
    };
    if args.config.is_some() && args.problem.is_some() {
        config.problem = problem_from_flags(args)?;
    }
    if let Some(b) = &args.batch_sizes {
        config.batch_sizes = b.clone();
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(i) = args.max_iterations {
        config.max_iterations = i;
    }
    if let Some(t) = args.target_loss {
        config.target_loss = Some(t);
    }
    if let Some(s) = args.trace_stride {
        config.trace_stride = s;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = &args.step {
        config.step = parse_step_spec(s)?;
    }

    if config.batch_sizes.is_empty() || config.batch_sizes.contains(&0) {
        anyhow::bail!("batch sizes must be a non-empty list of integers >= 1");
    }
    let mut sorted = config.batch_sizes.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != config.batch_sizes.len() {
        anyhow::bail!("batch sizes must be distinct");
    }
    if config.trials == 0 {
        anyhow::bail!("trials must be >= 1");
    }
    if let StepSpec::HatMultiple { value } | StepSpec::Explicit { value } = config.step {
        if !(value.is_finite() && value > 0.0) {
            anyhow::bail!("step value must be positive, got {value}");
        }
    }
    Ok(config)
}

fn build_problems(spec: &ProblemSpec) -> anyhow::Result<(Vec<QuadraticProblem>, Vec<String>)> {
    match spec {
        ProblemSpec::Tightness { n, beta, seed } => {
            Ok((vec![tightness_instance(*n, *beta, *seed)?], Vec::new()))
        }
        ProblemSpec::Random {
            n,
            d,
            profile,
            seed,
        } => {
            let profile = match profile {
                ProfileSpec::Uniform { min, max } => SpectrumProfile::UniformRowNorms {
                    min: *min,
                    max: *max,
                },
                ProfileSpec::Decaying { first, last } => SpectrumProfile::DecayingRowNorms {
                    first: *first,
                    last: *last,
                },
            };
            Ok((
                vec![random_interpolated_quadratic(*n, *d, profile, *seed)?],
                Vec::new(),
            ))
        }
        ProblemSpec::Kernel {
            data,
            label_cols,
            family,
            sigma,
        } => {
            let cols: Vec<&str> = label_cols.iter().map(String::as_str).collect();
            let dataset = load_csv(data, &cols)?;
            let spec = KernelSpec::new(parse_kernel_family(family)?, *sigma)?;
            let out = kernel_problem(&dataset.features, &dataset.labels, &spec)?;
            Ok((out.problems, out.warnings))
        }
    }
}

struct Cell {
    m: u64,
    trial: u64,
    seed: u64,
    trace: Trace,
}

fn write_trace_csv(path: &Path, records: &[TraceRecord], status: RunStatus) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["iteration", "epoch", "loss", "range_error", "null_error", "status"])?;
    for r in records {
        writer.write_record([
            r.iteration.to_string(),
            r.epoch.to_string(),
            r.loss.to_string(),
            r.range_error.map(|v| v.to_string()).unwrap_or_default(),
            r.null_error.map(|v| v.to_string()).unwrap_or_default(),
            status.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn run(args: SweepArgs) -> anyhow::Result<i32> {
    let config = resolve_config(&args)?;
    let (problems, warnings) = build_problems(&config.problem)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    std::fs::write(
        args.out_dir.join("config.json"),
        serde_json::to_string_pretty(&config)? + "\n",
    )?;

    // Cells run in parallel; per-cell seeds are derived, so the output is
    // independent of scheduling.
    let cells: Vec<(u64, u64)> = config
        .batch_sizes
        .iter()
        .flat_map(|&m| (0..config.trials).map(move |t| (m, t)))
        .collect();
    let results: Vec<Cell> = cells
        .into_par_iter()
        .map(|(m, trial)| {
            let cell_seed = rng::derive_seed(config.seed, m.wrapping_mul(1_000_003) + trial);
            let mut run_config = SGDConfig::new(m as usize, config.step.to_policy())
                .with_seed(cell_seed)
                .with_max_iterations(config.max_iterations)
                .with_trace_stride(config.trace_stride);
            if let Some(eps) = config.target_loss {
                run_config = run_config.with_target_loss(eps);
            }
            let trace = sgd_run_quadratic_multi(&problems, &run_config)?;
            Ok(Cell {
                m,
                trial,
                seed: cell_seed,
                trace,
            })
        })
        .collect::<anyhow::Result<_>>()?;

    // Per-cell trace files, in sorted order.
    let mut sorted: Vec<&Cell> = results.iter().collect();
    sorted.sort_by_key(|c| (c.m, c.trial));
    for cell in &sorted {
        let path = args
            .out_dir
            .join(format!("trace_m{:05}_t{:04}.csv", cell.m, cell.trial));
        write_trace_csv(&path, &cell.trace.records, cell.trace.status)?;
    }

    // Cell summary.
    let mut cells_writer = csv::Writer::from_path(args.out_dir.join("cells.csv"))?;
    cells_writer.write_record(["m", "trial", "seed", "status", "final_iteration", "final_loss"])?;
    for cell in &sorted {
        let last = cell.trace.records.last().expect("at least the initial record");
        cells_writer.write_record([
            cell.m.to_string(),
            cell.trial.to_string(),
            cell.seed.to_string(),
            cell.trace.status.to_string(),
            last.iteration.to_string(),
            last.loss.to_string(),
        ])?;
    }
    cells_writer.flush()?;

    // Aggregate over trials on the common recorded prefix per batch size.
    let mut agg_writer = csv::Writer::from_path(args.out_dir.join("aggregate.csv"))?;
    agg_writer.write_record(["m", "iteration", "epoch", "mean_loss", "stderr"])?;
    for &m in &config.batch_sizes {
        let traces: Vec<&Trace> = sorted
            .iter()
            .filter(|c| c.m == m)
            .map(|c| &c.trace)
            .collect();
        let prefix = traces
            .iter()
            .map(|t| t.records.len())
            .min()
            .unwrap_or(0);
        let trials = traces.len() as f64;
        for idx in 0..prefix {
            let base = &traces[0].records[idx];
            let mean = traces.iter().map(|t| t.records[idx].loss).sum::<f64>() / trials;
            let var = if traces.len() > 1 {
                traces
                    .iter()
                    .map(|t| (t.records[idx].loss - mean).powi(2))
                    .sum::<f64>()
                    / (trials - 1.0)
            } else {
                0.0
            };
            agg_writer.write_record([
                m.to_string(),
                base.iteration.to_string(),
                base.epoch.to_string(),
                mean.to_string(),
                (var / trials).sqrt().to_string(),
            ])?;
        }
    }
    agg_writer.flush()?;

    let diverged = sorted
        .iter()
        .filter(|c| c.trace.status == RunStatus::Diverged)
        .count();
    println!(
        "sweep complete: {} cells ({} diverged) -> {}",
        sorted.len(),
        diverged,
        args.out_dir.display()
    );
    // Divergence is a result, not a failure.
    Ok(0)
}
