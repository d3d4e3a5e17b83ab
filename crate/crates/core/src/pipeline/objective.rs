//! The three-term training objective
//! `α · CE(precise) + β · CE(ambiguous, ŷ) + μ · L_con` and its gradient.

use crate::contrastive::{contrastive_loss, ContrastiveBatch, ContrastiveMode};
use crate::error::{IprError, Result};
use crate::model::{cross_entropy, soft_cross_entropy, ForwardCache, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub tau: f64,
    pub contrastive_mode: ContrastiveMode,
}

impl Objective {
    /// `α · precise + β · ambiguous + μ · contrastive`.
    pub fn combine(&self, precise: f64, ambiguous: f64, contrastive: f64) -> f64 {
        self.alpha * precise + self.beta * ambiguous + self.mu * contrastive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Hard(Vec<usize>),
    Soft(Vec<Vec<f64>>),
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::Hard(v) => v.len(),
            Targets::Soft(v) => v.len(),
        }
    }
}

/// Forward passes and targets for the ambiguous part of a step.
#[derive(Debug, Clone)]
pub struct AmbiguousPart<'a> {
    pub originals: &'a [ForwardCache],
    /// Augmented views, row-aligned with `originals`. Empty when no
    /// contrastive term is used.
    pub augmented: &'a [ForwardCache],
    pub targets: Targets,
    /// Pseudo labels of `originals` followed by those of `augmented`.
    pub contrast_labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: f64,
    pub precise: f64,
    pub ambiguous: Option<f64>,
    pub contrastive: Option<f64>,
    pub grads: ModelParams,
}

/// Evaluates the objective on cached forward passes and accumulates its
/// parameter gradient. Terms whose weight is zero are reported but add no
/// gradient.
pub fn objective_from_caches(
    params: &ModelParams,
    precise: &[ForwardCache],
    precise_labels: &[usize],
    ambiguous: Option<&AmbiguousPart<'_>>,
    obj: &Objective,
) -> Result<LossOutput> {
    if precise.len() != precise_labels.len() {
        return Err(IprError::dim("precise labels", precise.len(), precise_labels.len()));
    }
    let mut grads = params.zeros_like();

    let mut precise_loss = 0.0;
    if !precise.is_empty() {
        let w = 1.0 / precise.len() as f64;
        for (cache, &y) in precise.iter().zip(precise_labels) {
            let (l, g) = cross_entropy(cache.logits(), y, w)?;
            precise_loss += l;
            if obj.alpha != 0.0 {
                let g: Vec<f64> = g.iter().map(|v| obj.alpha * v).collect();
                params.backward(cache, Some(&g), None, &mut grads)?;
            }
        }
    }

    let mut ambiguous_loss = None;
    let mut contrastive_value = None;
    if let Some(part) = ambiguous.filter(|p| !p.originals.is_empty()) {
        let n = part.originals.len();
        if part.targets.len() != n {
            return Err(IprError::dim("ambiguous targets", n, part.targets.len()));
        }
        let w = 1.0 / n as f64;
        let mut logit_grads = Vec::with_capacity(n);
        let mut amb = 0.0;
        for (i, cache) in part.originals.iter().enumerate() {
            let (l, g) = match &part.targets {
                Targets::Hard(t) => cross_entropy(cache.logits(), t[i], w)?,
                Targets::Soft(t) => soft_cross_entropy(cache.logits(), &t[i], w)?,
            };
            amb += l;
            logit_grads.push(g);
        }
        ambiguous_loss = Some(amb);

        let mut emb_grads: Option<Vec<Vec<f64>>> = None;
        if !part.augmented.is_empty() {
            if part.augmented.len() != n {
                return Err(IprError::dim("augmented views", n, part.augmented.len()));
            }
            let batch = ContrastiveBatch {
                embeddings: part
                    .originals
                    .iter()
                    .chain(part.augmented)
                    .map(|c| c.embedding().to_vec())
                    .collect(),
                labels: part.contrast_labels.clone(),
                temperature: obj.tau,
            };
            let out = contrastive_loss(&batch, obj.contrastive_mode)?;
            contrastive_value = Some(out.loss);
            if obj.mu != 0.0 {
                emb_grads = Some(
                    out.grads
                        .into_iter()
                        .map(|g| g.into_iter().map(|v| obj.mu * v).collect())
                        .collect(),
                );
            }
        }

        let use_ce = obj.beta != 0.0;
        for (i, cache) in part.originals.iter().enumerate() {
            let gl: Option<Vec<f64>> = use_ce.then(|| logit_grads[i].iter().map(|v| obj.beta * v).collect());
            let ge = emb_grads.as_ref().map(|g| g[i].as_slice());
            if gl.is_some() || ge.is_some() {
                params.backward(cache, gl.as_deref(), ge, &mut grads)?;
            }
        }
        if let Some(eg) = &emb_grads {
            for (i, cache) in part.augmented.iter().enumerate() {
                params.backward(cache, None, Some(&eg[n + i]), &mut grads)?;
            }
        }
    }

    let total = obj.combine(
        precise_loss,
        ambiguous_loss.unwrap_or(0.0),
        contrastive_value.unwrap_or(0.0),
    );
    Ok(LossOutput {
        total,
        precise: precise_loss,
        ambiguous: ambiguous_loss,
        contrastive: contrastive_value,
        grads,
    })
}

/// Inputs of [`total_loss`] for the ambiguous part, by feature vector.
#[derive(Debug, Clone)]
pub struct AmbiguousInputs<'a> {
    pub originals: Vec<&'a [f64]>,
    pub augmented: Vec<Vec<f64>>,
    pub targets: Targets,
    pub contrast_labels: Vec<usize>,
}

/// Runs the forward passes, then [`objective_from_caches`].
pub fn total_loss(
    params: &ModelParams,
    precise: &[(&[f64], usize)],
    ambiguous: Option<&AmbiguousInputs<'_>>,
    obj: &Objective,
) -> Result<LossOutput> {
    let caches = precise
        .iter()
        .map(|(x, _)| params.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = precise.iter().map(|(_, y)| *y).collect();
    match ambiguous {
        None => objective_from_caches(params, &caches, &labels, None, obj),
        Some(inp) => {
            let orig = inp
                .originals
                .iter()
                .map(|x| params.forward(x))
                .collect::<Result<Vec<_>>>()?;
            let aug = inp
                .augmented
                .iter()
                .map(|x| params.forward(x))
                .collect::<Result<Vec<_>>>()?;
            let part = AmbiguousPart {
                originals: &orig,
                augmented: &aug,
                targets: inp.targets.clone(),
                contrast_labels: inp.contrast_labels.clone(),
            };
            objective_from_caches(params, &caches, &labels, Some(&part), obj)
        }
    }
}
