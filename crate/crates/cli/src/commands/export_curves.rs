use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use ipr_core::pipeline::curves_from_csv;

use crate::error::{CliError, CliResult};
use crate::io::{check_overwrite, read_text};

#[derive(Debug, Args)]
pub struct ExportCurvesArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Output CSV with columns epoch,seed,metric,value.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &ExportCurvesArgs) -> CliResult<()> {
    let seeds = seed_dirs(&args.run_dir)?;
    check_overwrite(&args.out, args.force)?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["epoch", "seed", "metric", "value"])
        .expect("in-memory CSV write");
    let mut rows = 0usize;
    for (seed, dir) in seeds {
        let metrics = read_text(&dir.join("metrics.csv"))?;
        let sim_path = dir.join("similarity.csv");
        let similarity = if sim_path.exists() { Some(read_text(&sim_path)?) } else { None };
        let points = curves_from_csv(seed, &metrics, similarity.as_deref())
            .map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        for p in points {
            let value = p.value.map(|v| v.to_string()).unwrap_or_default();
            writer
                .write_record([p.epoch.to_string(), p.seed.to_string(), p.metric, value])
                .expect("in-memory CSV write");
            rows += 1;
        }
    }
    let bytes = writer.into_inner().expect("in-memory CSV flush");
    fs::write(&args.out, bytes).map_err(|e| CliError::write(&args.out, e))?;
    println!("wrote {rows} rows to {}", args.out.display());
    Ok(())
}

/// `seed-<n>` subdirectories sorted by seed.
fn seed_dirs(run_dir: &Path) -> CliResult<Vec<(u64, PathBuf)>> {
    let entries = fs::read_dir(run_dir).map_err(|source| CliError::Read {
        path: run_dir.to_path_buf(),
        source,
    })?;
    let mut seeds = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(seed) = name.to_str().and_then(|n| n.strip_prefix("seed-")).and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        if !entry.path().join("metrics.csv").is_file() {
            return Err(CliError::Input(format!("{} has no metrics.csv", entry.path().display())));
        }
        seeds.push((seed, entry.path()));
    }
    if seeds.is_empty() {
        return Err(CliError::Input(format!(
            "{} is not a run directory: no seed-*/metrics.csv found",
            run_dir.display()
        )));
    }
    seeds.sort();
    Ok(seeds)
}
