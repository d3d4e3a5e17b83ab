use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ipr_core::data::{Split, Standardizer};
use ipr_core::model::load_checkpoint;
use ipr_core::pipeline::{evaluate, TrainConfig};
use ipr_core::{IprError, SplitDataset};

use super::train::seed_dir;
use crate::error::{CliError, CliResult};
use crate::io::{load_dataset, read_json};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    D1,
    D2,
    D3,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::D1 => Split::D1,
            SplitArg::D2 => Split::D2,
            SplitArg::D3 => Split::D3,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`; evaluates every seed in it unless
    /// `--seed` is given.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub run_dir: Option<PathBuf>,
    /// A single checkpoint file.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Standardizer to apply with `--checkpoint`.
    #[arg(long, requires = "checkpoint")]
    pub standardizer: Option<PathBuf>,
    /// Dataset (JSON Lines) in its original, unstandardized form.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "d3")]
    pub split: SplitArg,
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let dataset = load_dataset(&args.data)?;
    let split: Split = args.split.into();
    if let Some(ckpt) = &args.checkpoint {
        let st = args.standardizer.as_deref().map(read_json::<Standardizer>).transpose()?;
        let acc = score(ckpt, st.as_ref(), &dataset, split)?;
        println!("checkpoint={} split={split} accuracy={acc:.6}", ckpt.display());
        return Ok(());
    }
    let run_dir = args.run_dir.as_ref().expect("clap requires run_dir or checkpoint");
    let config: TrainConfig = read_json(&run_dir.join("config.json"))?;
    let st = if config.standardize {
        Some(read_json::<Standardizer>(&run_dir.join("standardizer.json"))?)
    } else {
        None
    };
    let seeds = match args.seed {
        Some(s) => vec![s],
        None => config.seeds.clone(),
    };
    for seed in seeds {
        let ckpt = seed_dir(run_dir, seed).join("checkpoint.json");
        let acc = score(&ckpt, st.as_ref(), &dataset, split)?;
        println!("seed={seed} split={split} accuracy={acc:.6}");
    }
    Ok(())
}

fn score(ckpt: &Path, st: Option<&Standardizer>, dataset: &SplitDataset, split: Split) -> CliResult<f64> {
    if !ckpt.exists() {
        return Err(CliError::Input(format!("missing checkpoint {}", ckpt.display())));
    }
    let params = load_checkpoint(ckpt).map_err(|e| match e {
        IprError::Io(source) => CliError::Read {
            path: ckpt.to_path_buf(),
            source,
        },
        other => other.into(),
    })?;
    let data = match st {
        Some(st) => st.transform(dataset),
        None => dataset.clone(),
    };
    let samples: Vec<(&[f64], usize)> = data
        .iter_split(split)
        .filter_map(|s| s.label.map(|y| (s.features.as_slice(), y)))
        .collect();
    Ok(evaluate(&params, &samples)?)
}
