use super::{LrSchedule, TrainConfig};
use crate::error::{IprError, Result};

/// Weight β of the ambiguous cross-entropy term at (0-based) epoch `epoch`.
///
/// With `t = epoch / (epochs / 2)`:
/// `β = min(weight_m · (rᵗ − 1) / (r − 1), weight_m)`, and `β = 0` for every
/// warm-up epoch. The linear ramp uses `weight_m · min(t, 1)` instead.
pub fn beta_schedule(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch > config.epochs {
        return Err(IprError::Input(format!(
            "epoch {epoch} beyond the configured {} epochs",
            config.epochs
        )));
    }
    if epoch < config.warmup_epochs {
        return Ok(0.0);
    }
    let wm = config.weight_m;
    let t = epoch as f64 / (config.epochs as f64 / 2.0);
    if t >= 1.0 {
        return Ok(wm);
    }
    if config.linear_ramp {
        return Ok(wm * t);
    }
    let r = config.growth_factor;
    if r == 1.0 {
        return Err(IprError::config(
            "growth_factor",
            "r = 1 makes the exponential ramp undefined; set linear_ramp instead",
        ));
    }
    Ok((wm * (r.powf(t) - 1.0) / (r - 1.0)).min(wm))
}

/// Learning rate used throughout (0-based) epoch `epoch`.
pub fn learning_rate_at(epoch: usize, config: &TrainConfig) -> f64 {
    match config.lr_schedule {
        LrSchedule::Constant => config.learning_rate,
        LrSchedule::Cosine => {
            let progress = epoch as f64 / config.epochs as f64;
            config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        }
    }
}
