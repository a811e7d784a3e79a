use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};
use crate::tagging::{TagScheme, OUTSIDE};

/// Probability floor inside the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Bias weight on non-`O` positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
}

impl LossConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 1.0 {
            return Err(Error::Contract(format!(
                "bias weight must be finite and at least 1, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    /// Weight of one position: 1 for gold `O`, `alpha` otherwise.
    pub fn weight(&self, gold: usize) -> f64 {
        if gold == OUTSIDE {
            1.0
        } else {
            self.alpha
        }
    }
}

/// Negative weighted log-likelihood of the gold tags:
/// `−Σ_t w_t · ln max(p_t[gold_t], 1e-12)` with `w_t = 1` on `O` and `α` elsewhere.
pub fn biased_loss(
    g: &mut Graph,
    probs: Var,
    gold: &[usize],
    cfg: LossConfig,
    scheme: &TagScheme,
) -> Result<Var> {
    if let Some(&bad) = gold.iter().find(|&&t| t >= scheme.len()) {
        return Err(Error::Contract(format!(
            "gold tag {bad} outside a scheme of {} tags",
            scheme.len()
        )));
    }
    let picked = g.pick(probs, gold)?;
    let logs = g.log_floor(picked, LOG_FLOOR);
    let weights: Vec<f64> = gold.iter().map(|&t| cfg.weight(t)).collect();
    let w = g.constant_owned(Tensor::new(&[gold.len()], weights)?);
    let weighted = g.mul(logs, w)?;
    let total = g.sum(weighted);
    Ok(g.scale(total, -1.0))
}
