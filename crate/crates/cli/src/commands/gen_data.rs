use std::path::PathBuf;

use clap::Args;
use ipr_core::data::{generate_synthetic, Split, SplitDataset, SynthConfig};

use crate::error::CliResult;
use crate::io::{check_overwrite, read_json, write_text};

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Generator config (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &GenDataArgs) -> CliResult<()> {
    let mut config: SynthConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    check_overwrite(&args.out, args.force)?;
    let dataset = generate_synthetic(&config)?;
    write_text(&args.out, &dataset.to_jsonl())?;
    print!("{}", summary(&dataset));
    Ok(())
}

/// Split sizes, per-class counts and mean majority-vote fraction.
pub fn summary(dataset: &SplitDataset) -> String {
    let mut out = format!("{:<5}{:>7}  {:<28}{}\n", "split", "size", "class_counts", "mean_majority");
    for split in [Split::D1, Split::D2, Split::D3] {
        let mut counts = vec![0usize; dataset.num_classes];
        let mut majority = Vec::new();
        for s in dataset.iter_split(split) {
            if let Some(y) = s.label {
                counts[y] += 1;
            }
            if let Some(v) = &s.votes {
                let total: u32 = v.iter().sum();
                if total > 0 {
                    majority.push(f64::from(*v.iter().max().unwrap_or(&0)) / f64::from(total));
                }
            }
        }
        let mean = if majority.is_empty() {
            "n/a".to_string()
        } else {
            format!("{:.4}", majority.iter().sum::<f64>() / majority.len() as f64)
        };
        out.push_str(&format!(
            "{:<5}{:>7}  {:<28}{}\n",
            split.to_string(),
            dataset.split_len(split),
            format!("{counts:?}"),
            mean
        ));
    }
    out
}
