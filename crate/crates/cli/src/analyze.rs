use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use nalgebra::DVector;

use crate::sweep::parse_kernel_family;
use sgdscale::problems::{kernel_problem, linear_problem, load_csv, KernelSpec, QuadraticProblem};
use sgdscale::rates::CriticalBatch;

#[derive(clap::Args)]
pub struct AnalyzeArgs {
    /// Headered numeric CSV dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column names (comma-separated); one problem per column.
    #[arg(long, value_delimiter = ',', required = true)]
    pub label_cols: Vec<String>,
    /// gaussian | laplace | linear (use the features as the design matrix).
    #[arg(long, default_value = "gaussian")]
    pub kernel: String,
    /// Kernel bandwidth; ignored for --kernel linear.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Optional path for the JSON report (always printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: AnalyzeArgs) -> anyhow::Result<i32> {
    let cols: Vec<&str> = args.label_cols.iter().map(String::as_str).collect();
    let dataset = load_csv(&args.data, &cols)?;

    let (problems, warnings): (Vec<QuadraticProblem>, Vec<String>) =
        if args.kernel.eq_ignore_ascii_case("linear") {
            let mut problems = Vec::new();
            for c in 0..dataset.labels.ncols() {
                let y = DVector::from_column_slice(dataset.labels.column(c).as_slice());
                problems.push(linear_problem(&dataset.features, &y)?);
            }
            (problems, Vec::new())
        } else {
            let spec = KernelSpec::new(parse_kernel_family(&args.kernel)?, args.sigma)?;
            let out = kernel_problem(&dataset.features, &dataset.labels, &spec)?;
            (out.problems, out.warnings)
        };

    let problem = &problems[0];
    let spectral = problem.spectral();
    let params = problem.rate_params()?;

    let (m_star, m_star_rounded, unbounded) = match params.critical_batch() {
        CriticalBatch::Finite(v) => (
            serde_json::json!(v),
            serde_json::json!(v.round() as u64),
            false,
        ),
        CriticalBatch::Unbounded => (serde_json::Value::Null, serde_json::Value::Null, true),
    };

    // Near-optimal step sizes from m = 1 up to the critical batch size.
    let hat_limit = match params.critical_batch() {
        CriticalBatch::Finite(v) => (v.round() as u64).clamp(1, 64),
        CriticalBatch::Unbounded => 16,
    };
    let mut eta_hat = Vec::new();
    for m in 1..=hat_limit {
        match params.hat_step(m as f64) {
            Ok(eta) => eta_hat.push(serde_json::json!({"m": m, "eta_hat": eta})),
            Err(_) => break,
        }
    }

    let report = serde_json::json!({
        "n": dataset.features.num_samples(),
        "d": dataset.features.dim(),
        "beta": problem.beta(),
        "lambda1": spectral.lambda1(),
        "lambda_k": spectral.lambda_k(),
        "rank": spectral.rank(),
        "m_star": m_star,
        "m_star_rounded": m_star_rounded,
        "unbounded": unbounded,
        "eta_hat": eta_hat,
        "label_columns": dataset.label_names,
        "warnings": warnings,
    });
    let rendered = serde_json::to_string_pretty(&report)?;
    println!("{rendered}");
    if let Some(path) = &args.out {
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(f, "{rendered}")?;
    }
    Ok(0)
}
