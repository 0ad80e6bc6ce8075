use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use sgdscale::verify::{run_all, Level};

#[derive(clap::Args)]
pub struct VerifyArgs {
    /// quick: a few seconds; full: 100-seed property sweeps.
    #[arg(long, default_value = "quick")]
    pub level: String,
    /// Optional JSON report path.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn run(args: VerifyArgs) -> anyhow::Result<i32> {
    let level = match args.level.as_str() {
        "quick" => Level::Quick,
        "full" => Level::Full,
        other => anyhow::bail!("unknown level '{other}' (quick|full)"),
    };
    let results = run_all(level);

    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{:width$}  {}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.details
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} checks, {} passed, {} failed",
        results.len(),
        results.len() - failed,
        failed
    );

    if let Some(path) = &args.json {
        let report: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "name": r.name,
                    "passed": r.passed,
                    "details": r.details,
                })
            })
            .collect();
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&report)?)?;
    }

    Ok(if failed == 0 { 0 } else { 2 })
}
