use std::path::PathBuf;

use clap::Args;
use ipr_core::data::Split;
use ipr_core::IprError;

use crate::error::{CliError, CliResult};
use crate::io::load_dataset;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset to check (JSON Lines).
    #[arg(long)]
    pub data: PathBuf,
}

pub fn run(args: &ValidateArgs) -> CliResult<()> {
    match load_dataset(&args.data) {
        Ok(ds) => {
            println!(
                "valid: {} samples (D1 {}, D2 {}, D3 {}), {} classes, dim {}",
                ds.samples.len(),
                ds.split_len(Split::D1),
                ds.split_len(Split::D2),
                ds.split_len(Split::D3),
                ds.num_classes,
                ds.dim
            );
            Ok(())
        }
        Err(CliError::Core(IprError::Validation(violations))) => {
            println!("invalid: {} violation(s)", violations.len());
            for v in &violations {
                println!("  - {v}");
            }
            Err(CliError::Core(IprError::Validation(violations)))
        }
        Err(e) => Err(e),
    }
}
