use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use ipr_core::data::standardize;
use ipr_core::model::save_checkpoint;
use ipr_core::pipeline::{metrics_csv, multi_seed, similarity_csv, Mode, RunOutput, TrainConfig};
use ipr_core::IprError;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::io::{load_dataset, read_bytes, read_text, write_text};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON mirroring TrainConfig); defaults apply to
    /// missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset (JSON Lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Parent directory of run directories.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Comma-separated seed list, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Config override `key=value`; dotted keys reach nested fields and the
    /// value is parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Run directory name; defaults to `<UTC timestamp>-<config hash>`.
    #[arg(long)]
    pub run_name: Option<String>,
    /// Replace an existing run directory of the same name.
    #[arg(long)]
    pub force: bool,
}

/// Resolves the config file plus flag overrides into a validated config.
pub fn resolve_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut value: Value = match &args.config {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => json!({}),
    };
    if !value.is_object() {
        return Err(CliError::Input("training config must be a JSON object".into()));
    }
    for item in &args.overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("override {item:?} is not KEY=VALUE")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key, parsed)?;
    }
    if let Some(mode) = args.mode {
        value["mode"] = json!(mode);
    }
    if let Some(seeds) = &args.seeds {
        value["seeds"] = json!(seeds);
    }
    let config: TrainConfig =
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("invalid training config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn set_path(root: &mut Value, key: &str, value: Value) -> CliResult<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Input(format!("override {key:?} descends into a non-object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Input(format!("override {key:?} descends into a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let config = resolve_config(args)?;
    let raw_bytes = read_bytes(&args.data)?;
    let dataset = load_dataset(&args.data)?;
    let dataset_hash = sha256_hex(&raw_bytes);

    let config_json = serde_json::to_string_pretty(&config).expect("config serializes");
    let config_hash = sha256_hex(format!("{config_json}\n{dataset_hash}").as_bytes());
    let name = match &args.run_name {
        Some(n) => n.clone(),
        None => format!(
            "{}-{}",
            chrono::Utc::now().format("%Y%m%dT%H%M%SZ"),
            &config_hash[..12]
        ),
    };
    let run_dir = args.out_dir.join(&name);
    prepare_run_dir(&run_dir, args.force)?;

    write_text(&run_dir.join("config.json"), &(config_json + "\n"))?;
    let (train_set, standardizer) = if config.standardize {
        let (ds, st) = standardize(&dataset)?;
        (ds, Some(st))
    } else {
        (dataset, None)
    };
    if let Some(st) = &standardizer {
        write_text(
            &run_dir.join("standardizer.json"),
            &(serde_json::to_string_pretty(st).expect("standardizer serializes") + "\n"),
        )?;
    }
    let info = json!({
        "dataset": args.data.display().to_string(),
        "dataset_sha256": dataset_hash,
        "config_sha256": config_hash,
        "mode": config.mode,
        "seeds": config.seeds,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_text(
        &run_dir.join("run.json"),
        &(serde_json::to_string_pretty(&info).expect("info serializes") + "\n"),
    )?;

    log::info!("run_dir={} mode={} seeds={:?}", run_dir.display(), config.mode, config.seeds);
    let result = multi_seed(&train_set, &config)?;

    let mut failures = Vec::new();
    for (seed, outcome) in &result.runs {
        match outcome {
            Ok(out) => write_seed_outputs(&run_dir, *seed, out)?,
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    let aggregate = serde_json::to_string_pretty(&result.aggregate).expect("aggregate serializes");
    write_text(&run_dir.join("aggregate.json"), &(aggregate + "\n"))?;

    println!("run directory: {}", run_dir.display());
    for s in &result.aggregate.seeds {
        match (s.final_accuracy, &s.error) {
            (Some(acc), _) => println!("seed {:>4}  final D3 accuracy {:.4}", s.seed, acc),
            (None, Some(e)) => println!("seed {:>4}  failed: {e}", s.seed),
            (None, None) => {}
        }
    }
    println!(
        "{}: mean {:.4}  std {:.4}  ({} completed, {} failed)",
        result.aggregate.mode,
        result.aggregate.mean_accuracy,
        result.aggregate.std_accuracy,
        result.aggregate.completed,
        result.aggregate.failed
    );

    if failures.is_empty() {
        return Ok(());
    }
    let numeric = result
        .runs
        .iter()
        .filter_map(|(_, r)| r.as_ref().err())
        .all(|e| matches!(e, IprError::TrainingAborted { .. } | IprError::NonFinite(_)));
    let total = result.runs.len();
    if numeric {
        Err(CliError::Aborted {
            failed: failures.len(),
            total,
            first: failures[0].clone(),
        })
    } else {
        Err(CliError::Input(failures.join("; ")))
    }
}

fn prepare_run_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        if !force {
            return Err(CliError::Input(format!(
                "run directory {} already exists; pass --force to replace it",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

fn write_seed_outputs(run_dir: &Path, seed: u64, out: &RunOutput) -> CliResult<()> {
    let dir = seed_dir(run_dir, seed);
    fs::create_dir_all(&dir).map_err(|e| CliError::write(&dir, e))?;
    write_text(&dir.join("metrics.csv"), &metrics_csv(&out.metrics))?;
    if let Some(sim) = similarity_csv(&out.metrics) {
        write_text(&dir.join("similarity.csv"), &sim)?;
    }
    let ckpt = dir.join("checkpoint.json");
    save_checkpoint(&out.params, &ckpt).map_err(|e| match e {
        IprError::Io(io) => CliError::write(&ckpt, io),
        other => other.into(),
    })?;
    if let Some(bank) = &out.initial_bank {
        write_text(&dir.join("prototypes_init.json"), &(bank.to_json() + "\n"))?;
    }
    if let Some(bank) = &out.bank {
        write_text(&dir.join("prototypes_final.json"), &(bank.to_json() + "\n"))?;
    }
    if let Some(report) = &out.report {
        write_text(&dir.join("pseudo_labels.jsonl"), &report.to_jsonl())?;
    }
    Ok(())
}
