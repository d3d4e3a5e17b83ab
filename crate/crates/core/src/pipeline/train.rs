use rayon::prelude::*;

use super::metrics::{Aggregate, EpochRecord, PseudoLabelReport, PseudoLabelRow, RunMetrics, SeedSummary};
use super::objective::{objective_from_caches, AmbiguousPart, Objective, Targets};
use super::{beta_schedule, learning_rate_at, AmbiguousTarget, Mode, TrainConfig};
use crate::contrastive::augment;
use crate::data::{Labeled, SplitDataset};
use crate::error::{IprError, Result};
use crate::model::{AdamW, ForwardCache, ModelParams};
use crate::numerics::{argmax, RngStream};
use crate::prototypes::PrototypeBank;

// Independent random streams per seed.
const STREAM_INIT: u64 = 10;
const STREAM_PRECISE: u64 = 11;
const STREAM_AMBIGUOUS: u64 = 12;
const STREAM_AUGMENT: u64 = 13;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: ModelParams,
    pub bank: Option<PrototypeBank>,
    /// The bank as first initialized at the end of warm-up.
    pub initial_bank: Option<PrototypeBank>,
    pub metrics: RunMetrics,
    pub report: Option<PseudoLabelReport>,
    /// Parameters at the end of the warm-up phase.
    pub warmup_params: ModelParams,
    /// Number of D2 feature reads made by the training loop.
    pub ambiguous_reads: usize,
}

/// Endless reshuffling sampler over `0..len`.
struct CyclicSampler {
    order: Vec<usize>,
    pos: usize,
    rng: RngStream,
}

impl CyclicSampler {
    fn new(len: usize, rng: RngStream) -> Self {
        Self {
            order: (0..len).collect(),
            pos: len,
            rng,
        }
    }

    /// Next batch of at most `size` indices; never spans a reshuffle.
    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

fn steps_for(len: usize, batch: usize) -> usize {
    len.div_ceil(batch)
}

#[derive(Default)]
struct EpochAccumulator {
    steps: usize,
    precise: f64,
    ambiguous: f64,
    ambiguous_steps: usize,
    contrastive: f64,
    contrastive_steps: usize,
    updates: u64,
}

impl EpochAccumulator {
    fn add(&mut self, precise: f64, ambiguous: Option<f64>, contrastive: Option<f64>) {
        self.steps += 1;
        self.precise += precise;
        if let Some(a) = ambiguous {
            self.ambiguous += a;
            self.ambiguous_steps += 1;
        }
        if let Some(c) = contrastive {
            self.contrastive += c;
            self.contrastive_steps += 1;
        }
    }

    fn mean(total: f64, n: usize) -> Option<f64> {
        (n > 0).then(|| total / n as f64)
    }
}

/// Fraction of samples whose classifier argmax equals the label.
pub fn evaluate(params: &ModelParams, samples: &[Labeled<'_>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(IprError::Input("cannot evaluate on an empty sample set".into()));
    }
    let mut correct = 0usize;
    for (x, y) in samples {
        if argmax(&params.predict_logits(x)?) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Agreement of classifier labels and (optionally) prototype pseudo labels
/// with ground truth. Both come from one embedding snapshot.
pub fn agreement_rates(
    params: &ModelParams,
    bank: Option<&PrototypeBank>,
    samples: &[Labeled<'_>],
) -> Result<(f64, Option<f64>)> {
    if samples.is_empty() {
        return Err(IprError::Input("no labeled ambiguous samples to score".into()));
    }
    let mut model_hits = 0usize;
    let mut proto_hits = 0usize;
    for (x, y) in samples {
        let k = params.embed(x)?;
        if argmax(&params.classify(&k)?) == *y {
            model_hits += 1;
        }
        if let Some(b) = bank {
            if b.pseudo_label(&k)?.class == *y {
                proto_hits += 1;
            }
        }
    }
    let n = samples.len() as f64;
    Ok((model_hits as f64 / n, bank.map(|_| proto_hits as f64 / n)))
}

/// Soft labels, pseudo labels and classifier labels for every D2 sample.
pub fn pseudo_label_report(
    params: &ModelParams,
    bank: &PrototypeBank,
    dataset: &SplitDataset,
    config: &TrainConfig,
) -> Result<PseudoLabelReport> {
    let mut rows = Vec::new();
    for (id, x, truth) in dataset.ambiguous_with_truth() {
        let k = params.embed(x)?;
        let soft = bank.soft_label(&k, config.soft_label_mode, config.soft_label_temperature)?;
        let pseudo = bank.pseudo_label(&k)?;
        rows.push(PseudoLabelRow {
            id: id.to_string(),
            soft_label: soft.weights,
            similarities: soft.similarities,
            pseudo_label: pseudo.class,
            classifier_label: argmax(&params.classify(&k)?),
            ground_truth: truth,
        });
    }
    Ok(PseudoLabelReport { rows })
}

fn init_bank(params: &ModelParams, precise: &[Labeled<'_>], classes: usize, gamma: f64) -> Result<PrototypeBank> {
    let embedded = precise
        .iter()
        .map(|(x, y)| params.embed(x).map(|k| (k, *y)))
        .collect::<Result<Vec<_>>>()?;
    PrototypeBank::init(embedded.iter().map(|(k, y)| (k.as_slice(), *y)), classes, gamma)
}

/// IPR training run for one seed.
pub fn train_ipr(dataset: &SplitDataset, config: &TrainConfig, seed: u64) -> Result<RunOutput> {
    train_with_mode(dataset, config, seed, Mode::Ipr)
}

/// One of the reference systems: `baseline`, `baseline_plus` or
/// `supervised`.
pub fn train_baseline(dataset: &SplitDataset, config: &TrainConfig, seed: u64, mode: Mode) -> Result<RunOutput> {
    if mode == Mode::Ipr {
        return Err(IprError::config("mode", "train_baseline does not run ipr"));
    }
    train_with_mode(dataset, config, seed, mode)
}

/// Runs `config.mode` for one seed.
pub fn train(dataset: &SplitDataset, config: &TrainConfig, seed: u64) -> Result<RunOutput> {
    train_with_mode(dataset, config, seed, config.mode)
}

fn train_with_mode(dataset: &SplitDataset, config: &TrainConfig, seed: u64, requested: Mode) -> Result<RunOutput> {
    config.validate()?;
    dataset.validate()?;

    let precise = dataset.precise();
    let test = dataset.test_set();
    let ambiguous = dataset.ambiguous_view();
    // Evaluation-only view of D2 ground truth.
    let d2_truth: Vec<Labeled<'_>> = dataset
        .ambiguous_with_truth()
        .into_iter()
        .filter_map(|(_, x, y)| y.map(|y| (x, y)))
        .collect();

    let mut mode = requested;
    if ambiguous.is_empty() && matches!(mode, Mode::Ipr | Mode::BaselinePlus) {
        log::warn!("seed={seed} no D2 samples; {mode} degrades to baseline");
        mode = Mode::Baseline;
    }
    let supervised_labels: Vec<usize> = if mode == Mode::Supervised {
        let truth = dataset.ambiguous_with_truth();
        let mut labels = Vec::with_capacity(truth.len());
        for (id, _, y) in truth {
            labels.push(y.ok_or_else(|| {
                IprError::Input(format!("supervised mode needs a label on D2 sample {id}"))
            })?);
        }
        labels
    } else {
        Vec::new()
    };

    let model_config = config.model.model_config(dataset.dim, dataset.num_classes);
    let mut params = ModelParams::init(&model_config, &mut RngStream::derive(seed, STREAM_INIT))?;
    let mut optimizer = AdamW::new(config.optimizer(), &params);
    let mut precise_sampler = CyclicSampler::new(precise.len(), RngStream::derive(seed, STREAM_PRECISE));
    let mut ambiguous_rng = RngStream::derive(seed, STREAM_AMBIGUOUS);
    let mut augment_rng = RngStream::derive(seed, STREAM_AUGMENT);

    let mut bank: Option<PrototypeBank> = None;
    let mut warmup_params = None;
    let mut initial_bank: Option<PrototypeBank> = None;
    let mut records = Vec::with_capacity(config.epochs);
    let classes = dataset.num_classes;
    let uses_d2 = mode != Mode::Baseline && !ambiguous.is_empty();

    for epoch in 0..config.epochs {
        let warm = epoch < config.warmup_epochs;
        if !warm && warmup_params.is_none() {
            warmup_params = Some(params.clone());
        }
        if mode == Mode::Ipr && !warm && (bank.is_none() || config.reinit_prototypes) {
            let b = init_bank(&params, &precise, classes, config.gamma)?;
            if initial_bank.is_none() {
                initial_bank = Some(b.clone());
            }
            bank = Some(b);
        }
        let beta = beta_schedule(epoch, config)?;
        optimizer.config.learning_rate = learning_rate_at(epoch, config);
        let objective = Objective {
            alpha: config.alpha,
            beta: if mode == Mode::Supervised { config.alpha } else { beta },
            mu: if mode == Mode::Ipr { config.mu } else { 0.0 },
            tau: config.tau,
            contrastive_mode: config.contrastive_mode,
        };

        let mut acc = EpochAccumulator::default();
        let steps;
        let mut d2_order: Vec<usize> = Vec::new();
        if warm || !uses_d2 {
            steps = if warm || ambiguous.is_empty() {
                steps_for(precise.len(), config.batch_size)
            } else {
                // Post-warm-up epochs are D2 passes for every mode; only the
                // count of D2 is needed here, not its records.
                steps_for(ambiguous.len(), config.batch_size)
            };
        } else {
            d2_order = (0..ambiguous.len()).collect();
            ambiguous_rng.shuffle(&mut d2_order);
            steps = steps_for(ambiguous.len(), config.batch_size);
        }

        for step in 0..steps {
            let ctx = move |e: IprError| match e {
                IprError::Degenerate(message) | IprError::NonFinite(message) => IprError::TrainingAborted {
                    epoch,
                    batch: step,
                    message,
                },
                other => other,
            };
            let p_idx = precise_sampler.next_batch(config.batch_size);
            let p_caches = p_idx
                .iter()
                .map(|&i| params.forward(precise[i].0))
                .collect::<Result<Vec<_>>>().map_err(ctx)?;
            let p_labels: Vec<usize> = p_idx.iter().map(|&i| precise[i].1).collect();

            let out;
            let mut gate_inputs: Option<(Vec<ForwardCache>, Vec<ForwardCache>, Targets)> = None;
            if warm || !uses_d2 {
                out = objective_from_caches(&params, &p_caches, &p_labels, None, &objective).map_err(ctx)?;
            } else {
                let lo = step * config.batch_size;
                let hi = (lo + config.batch_size).min(d2_order.len());
                let a_idx = &d2_order[lo..hi];
                let feats: Vec<&[f64]> = a_idx.iter().map(|&i| ambiguous.features(i)).collect();
                let a_caches = feats.iter().map(|x| params.forward(x)).collect::<Result<Vec<_>>>().map_err(ctx)?;
                match mode {
                    Mode::BaselinePlus => {
                        let self_labels = a_caches.iter().map(|c| argmax(c.logits())).collect();
                        let part = AmbiguousPart {
                            originals: &a_caches,
                            augmented: &[],
                            targets: Targets::Hard(self_labels),
                            contrast_labels: Vec::new(),
                        };
                        out = objective_from_caches(&params, &p_caches, &p_labels, Some(&part), &objective).map_err(ctx)?;
                    }
                    Mode::Supervised => {
                        let labels = a_idx.iter().map(|&i| supervised_labels[i]).collect();
                        let part = AmbiguousPart {
                            originals: &a_caches,
                            augmented: &[],
                            targets: Targets::Hard(labels),
                            contrast_labels: Vec::new(),
                        };
                        out = objective_from_caches(&params, &p_caches, &p_labels, Some(&part), &objective).map_err(ctx)?;
                    }
                    Mode::Ipr => {
                        let b = bank.as_ref().expect("bank initialized after warm-up");
                        let n = feats.len();
                        let aug_feats: Vec<Vec<f64>> = (0..n)
                            .map(|i| {
                                let partner = (n > 1).then(|| feats[(i + 1) % n]);
                                augment(feats[i], &config.augmentation, &mut augment_rng, partner)
                            })
                            .collect();
                        let aug_caches =
                            aug_feats.iter().map(|x| params.forward(x)).collect::<Result<Vec<_>>>().map_err(ctx)?;
                        let mut contrast_labels = Vec::with_capacity(2 * n);
                        let mut hard = Vec::with_capacity(n);
                        let mut soft = Vec::with_capacity(n);
                        for c in &a_caches {
                            let s = b.soft_label(c.embedding(), config.soft_label_mode, config.soft_label_temperature).map_err(ctx)?;
                            let z = b.pseudo_label(c.embedding()).map_err(ctx)?.class;
                            hard.push(z);
                            contrast_labels.push(z);
                            soft.push(s);
                        }
                        for c in &aug_caches {
                            contrast_labels.push(b.pseudo_label(c.embedding()).map_err(ctx)?.class);
                        }
                        let targets = match config.ambiguous_target {
                            AmbiguousTarget::Hard => Targets::Hard(hard),
                            AmbiguousTarget::Soft => Targets::Soft(soft.iter().map(|s| s.weights.clone()).collect()),
                        };
                        let part = AmbiguousPart {
                            originals: &a_caches,
                            augmented: &aug_caches,
                            targets,
                            contrast_labels,
                        };
                        out = objective_from_caches(&params, &p_caches, &p_labels, Some(&part), &objective).map_err(ctx)?;
                        let soft_targets = Targets::Soft(soft.into_iter().map(|s| s.weights).collect());
                        gate_inputs = Some((a_caches, aug_caches, soft_targets));
                    }
                    Mode::Baseline => unreachable!("baseline never reads D2"),
                }
            }

            if !out.total.is_finite() {
                return Err(IprError::TrainingAborted {
                    epoch,
                    batch: step,
                    message: format!("non-finite loss {}", out.total),
                });
            }
            optimizer.step(&mut params, &out.grads).map_err(|e| IprError::TrainingAborted {
                epoch,
                batch: step,
                message: e.to_string(),
            })?;
            if !params.is_finite() {
                return Err(IprError::TrainingAborted {
                    epoch,
                    batch: step,
                    message: "optimizer step produced non-finite parameters".into(),
                });
            }
            acc.add(out.precise, out.ambiguous, out.contrastive);

            // Gated prototype refinement from the pre-step forward pass.
            if let (Some(b), Some((orig, aug, Targets::Soft(weights)))) = (bank.as_mut(), gate_inputs) {
                for ((o, a), w) in orig.iter().zip(&aug).zip(weights) {
                    let soft = crate::prototypes::SoftLabel {
                        similarities: Vec::new(),
                        weights: w,
                    };
                    let pred = argmax(o.logits());
                    let pred_aug = argmax(a.logits());
                    let outcome = b.gated_update(o.embedding(), &soft, pred, pred_aug, config.update_all_classes).map_err(ctx)?;
                    if outcome == crate::prototypes::UpdateOutcome::Applied {
                        acc.updates += 1;
                    }
                }
            }
        }

        let accuracy = if test.is_empty() { f64::NAN } else { evaluate(&params, &test)? };
        let (agreement_model, agreement_prototype) = if d2_truth.is_empty() {
            (None, None)
        } else {
            let (m, p) = agreement_rates(&params, bank.as_ref(), &d2_truth)?;
            (Some(m), p)
        };
        let record = EpochRecord {
            epoch,
            accuracy,
            beta: objective.beta,
            loss_precise: acc.precise / acc.steps.max(1) as f64,
            loss_ambiguous: EpochAccumulator::mean(acc.ambiguous, acc.ambiguous_steps),
            loss_contrastive: EpochAccumulator::mean(acc.contrastive, acc.contrastive_steps),
            agreement_model,
            agreement_prototype,
            prototype_similarity: bank.as_ref().map(PrototypeBank::pairwise_similarity),
            prototype_updates: acc.updates,
        };
        log::info!(
            "seed={seed} mode={mode} epoch={epoch} phase={} beta={:.6} loss_precise={:.6} loss_ambiguous={} loss_contrastive={} acc={:.4} agree_model={} agree_proto={} updates={}",
            if warm { "warmup" } else { "main" },
            record.beta,
            record.loss_precise,
            fmt_opt(record.loss_ambiguous),
            fmt_opt(record.loss_contrastive),
            record.accuracy,
            fmt_opt(record.agreement_model),
            fmt_opt(record.agreement_prototype),
            record.prototype_updates,
        );
        records.push(record);
    }

    let report = match &bank {
        Some(b) => Some(pseudo_label_report(&params, b, dataset, config)?),
        None => None,
    };
    Ok(RunOutput {
        warmup_params: warmup_params.unwrap_or_else(|| params.clone()),
        metrics: RunMetrics {
            seed,
            mode,
            epochs: records,
            initial_prototype_similarity: initial_bank.as_ref().map(PrototypeBank::pairwise_similarity),
        },
        report,
        bank,
        initial_bank,
        params,
        ambiguous_reads: ambiguous.reads(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "na".into())
}

#[derive(Debug)]
pub struct MultiSeedResult {
    pub runs: Vec<(u64, Result<RunOutput>)>,
    pub aggregate: Aggregate,
}

/// Runs every seed in `config.seeds` independently (in parallel) and
/// aggregates the final D3 accuracies over the runs that completed.
pub fn multi_seed(dataset: &SplitDataset, config: &TrainConfig) -> Result<MultiSeedResult> {
    config.validate()?;
    let runs: Vec<(u64, Result<RunOutput>)> = config
        .seeds
        .par_iter()
        .map(|&seed| (seed, train(dataset, config, seed)))
        .collect();
    let summaries = runs
        .iter()
        .map(|(seed, r)| match r {
            Ok(out) => SeedSummary {
                seed: *seed,
                final_accuracy: Some(out.metrics.final_accuracy()),
                error: None,
            },
            Err(e) => {
                log::warn!("seed={seed} run failed: {e}");
                SeedSummary {
                    seed: *seed,
                    final_accuracy: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    Ok(MultiSeedResult {
        runs,
        aggregate: Aggregate::from_summaries(config.mode, summaries),
    })
}
