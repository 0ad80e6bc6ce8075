use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use sgdscale::rates::{CriticalBatch, QuadraticRateParams};

#[derive(clap::Args)]
pub struct RatesArgs {
    /// Maximum squared feature norm (per-sample smoothness bound).
    #[arg(long)]
    pub beta: f64,
    /// Largest covariance eigenvalue.
    #[arg(long)]
    pub lambda1: f64,
    /// Smallest nonzero covariance eigenvalue; defaults to beta / n.
    #[arg(long)]
    pub lambdak: Option<f64>,
    /// Sample count behind the spectrum.
    #[arg(long)]
    pub n: usize,
    /// Batch sizes: comma-separated entries, each `8`, `1-64` (step 1) or
    /// `1-1024x2` (geometric).
    #[arg(long = "m-grid")]
    pub m_grid: String,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional path for the summary JSON (always printed to stdout).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Parses the batch-size grid syntax. Entries must be distinct.
pub fn parse_m_grid(spec: &str) -> anyhow::Result<Vec<u64>> {
    let mut grid = Vec::new();
    for entry in spec.split(',') {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        if let Some((range, factor)) = entry.split_once('x') {
            let (lo, hi) = parse_range(range)?;
            let factor: u64 = factor
                .parse()
                .with_context(|| format!("bad geometric factor in '{entry}'"))?;
            if factor < 2 {
                anyhow::bail!("geometric factor must be >= 2 in '{entry}'");
            }
            let mut m = lo;
            while m <= hi {
                grid.push(m);
                m = m.saturating_mul(factor);
            }
        } else if entry.contains('-') {
            let (lo, hi) = parse_range(entry)?;
            grid.extend(lo..=hi);
        } else {
            grid.push(
                entry
                    .parse()
                    .with_context(|| format!("bad batch size '{entry}'"))?,
            );
        }
    }
    if grid.is_empty() {
        anyhow::bail!("empty batch-size grid");
    }
    if grid.contains(&0) {
        anyhow::bail!("batch sizes must be >= 1");
    }
    let mut seen = grid.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != grid.len() {
        anyhow::bail!("batch-size grid entries must be distinct");
    }
    Ok(grid)
}

fn parse_range(s: &str) -> anyhow::Result<(u64, u64)> {
    let (lo, hi) = s
        .split_once('-')
        .with_context(|| format!("expected 'lo-hi' in '{s}'"))?;
    let lo: u64 = lo.trim().parse().with_context(|| format!("bad bound in '{s}'"))?;
    let hi: u64 = hi.trim().parse().with_context(|| format!("bad bound in '{s}'"))?;
    if lo == 0 || hi < lo {
        anyhow::bail!("bad range '{s}'");
    }
    Ok((lo, hi))
}

pub fn summary_json(params: &QuadraticRateParams) -> serde_json::Value {
    let (m_star, m_star_rounded, unbounded) = match params.critical_batch() {
        CriticalBatch::Finite(v) => (
            serde_json::json!(v),
            serde_json::json!(v.round() as u64),
            false,
        ),
        CriticalBatch::Unbounded => (serde_json::Value::Null, serde_json::Value::Null, true),
    };
    serde_json::json!({
        "beta": params.beta(),
        "lambda1": params.lambda1(),
        "lambda_k": params.lambda_k(),
        "n": params.n(),
        "m_star": m_star,
        "m_star_rounded": m_star_rounded,
        "unbounded": unbounded,
        "speedup_limit": params.speedup_limit(),
        "hat_assumption_holds": params.hat_assumption_holds(),
    })
}

pub fn run(args: RatesArgs) -> anyhow::Result<i32> {
    let lambda_k = args.lambdak.unwrap_or(args.beta / args.n as f64);
    let params = QuadraticRateParams::new(args.beta, args.lambda1, lambda_k, args.n)?;
    let grid = parse_m_grid(&args.m_grid)?;
    let table = params.rate_table(&grid)?;

    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    writer.write_record([
        "m",
        "eta_star",
        "g_star",
        "eta_hat",
        "g_hat",
        "s",
        "efficiency",
        "regime",
    ])?;
    for row in &table {
        writer.write_record([
            row.m.to_string(),
            row.eta_star.to_string(),
            row.g_star.to_string(),
            row.eta_hat.to_string(),
            row.g_hat.to_string(),
            row.speedup.to_string(),
            row.efficiency.to_string(),
            row.regime.to_string(),
        ])?;
    }
    writer.flush()?;

    let summary = summary_json(&params);
    let rendered = serde_json::to_string_pretty(&summary)?;
    println!("{rendered}");
    if let Some(path) = &args.summary {
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(f, "{rendered}")?;
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_m_grid("1,2,4").unwrap(), vec![1, 2, 4]);
        assert_eq!(parse_m_grid("3-6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_m_grid("1-16x2").unwrap(), vec![1, 2, 4, 8, 16]);
        assert_eq!(parse_m_grid("1-8x2,64").unwrap(), vec![1, 2, 4, 8, 64]);
        assert!(parse_m_grid("").is_err());
        assert!(parse_m_grid("0").is_err());
        assert!(parse_m_grid("2,2").is_err());
        assert!(parse_m_grid("8-2").is_err());
    }
}
