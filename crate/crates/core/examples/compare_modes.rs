//! Trains every mode on one synthetic dataset and prints a comparison table.
//!
//! Usage: `cargo run --release --example compare_modes -- [SYNTH_JSON] [TRAIN_JSON] [MODES]`
//! where the first two arguments are inline JSON objects of overrides and
//! MODES is a comma-separated subset of modes.

use ipr_core::data::{generate_synthetic, standardize, Split, SynthConfig};
use ipr_core::pipeline::{multi_seed, similarity_stabilization, Mode, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let synth: SynthConfig = serde_json::from_str(args.first().map_or("{}", String::as_str))?;
    let base: TrainConfig = serde_json::from_str(args.get(1).map_or("{}", String::as_str))?;

    let modes: Vec<Mode> = match args.get(2) {
        Some(list) => list.split(',').map(str::parse).collect::<Result<_, _>>()?,
        None => Mode::ALL.to_vec(),
    };

    let raw = generate_synthetic(&synth)?;
    let dataset = if base.standardize { standardize(&raw)?.0 } else { raw };
    println!(
        "dataset: D1={} D2={} D3={}",
        dataset.split_len(Split::D1),
        dataset.split_len(Split::D2),
        dataset.split_len(Split::D3)
    );

    let started = std::time::Instant::now();
    for mode in modes {
        let config = TrainConfig { mode, ..base.clone() };
        let result = multi_seed(&dataset, &config)?;
        let agg = &result.aggregate;
        print!(
            "{:<14} mean={:.4} std={:.4} finals=[",
            mode.as_str(),
            agg.mean_accuracy,
            agg.std_accuracy
        );
        for s in &agg.seeds {
            print!(" {:.3}", s.final_accuracy.unwrap_or(f64::NAN));
        }
        print!(" ] agree_model=[");
        for (_, run) in &result.runs {
            if let Ok(run) = run {
                let last = run.metrics.epochs.last().expect("epochs");
                print!(" {:.3}", last.agreement_model.unwrap_or(f64::NAN));
            }
        }
        println!(" ]");
        if mode == Mode::Ipr {
            for (seed, run) in &result.runs {
                let Ok(run) = run else { continue };
                let last = run.metrics.epochs.last().expect("epochs");
                let ratio = similarity_stabilization(&run.metrics, 10);
                println!(
                    "  seed {seed}: agree_model={:.3} agree_proto={:.3} stabilization={:?}",
                    last.agreement_model.unwrap_or(f64::NAN),
                    last.agreement_prototype.unwrap_or(f64::NAN),
                    ratio
                );
            }
        }
    }
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
