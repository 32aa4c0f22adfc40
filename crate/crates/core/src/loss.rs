//! Pairwise hinge and logistic losses on a score difference `x = s_i - s_j`
//! and the weighted gradient of one (context, positive, negative) pair.
//!
//! Both losses are minimized: hinge is `max(0, 1 - x)` and logistic is
//! `-ln sigmoid(x) = softplus(-x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorModel, Scalar};

/// Selects the training method as a whole: WARP pairs with the hinge loss,
/// LambdaRank with the logistic loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "warp")]
    HingeWarp,
    #[serde(rename = "lambdarank")]
    LogisticLambda,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::HingeWarp => "warp",
            LossKind::LogisticLambda => "lambdarank",
        }
    }

    /// Loss on the score difference; no finiteness check.
    #[inline]
    pub fn value(self, diff: f64) -> f64 {
        match self {
            LossKind::HingeWarp => (1.0 - diff).max(0.0),
            LossKind::LogisticLambda => softplus(-diff),
        }
    }

    /// `dl/dx` at `x = diff`. The hinge slope is taken as 0 at the kink.
    #[inline]
    pub fn slope(self, diff: f64) -> f64 {
        match self {
            LossKind::HingeWarp => {
                if 1.0 - diff > 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::LogisticLambda => -sigmoid(-diff),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warp" | "hinge" => Ok(LossKind::HingeWarp),
            "lambdarank" | "logistic" => Ok(LossKind::LogisticLambda),
            other => Err(Error::invalid(format!(
                "unknown loss {other:?} (expected warp|lambdarank)"
            ))),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn finite_scores(s_i: f64, s_j: f64) -> Result<()> {
    if s_i.is_finite() && s_j.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("pair scores ({s_i}, {s_j})")))
    }
}

pub fn hinge_loss(s_i: f64, s_j: f64) -> Result<f64> {
    finite_scores(s_i, s_j)?;
    Ok(LossKind::HingeWarp.value(s_i - s_j))
}

pub fn logistic_loss(s_i: f64, s_j: f64) -> Result<f64> {
    finite_scores(s_i, s_j)?;
    Ok(LossKind::LogisticLambda.value(s_i - s_j))
}

/// `alpha * dl/dtheta` restricted to the three rows a pair touches.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGradient<F> {
    pub context: usize,
    pub positive: usize,
    pub negative: usize,
    pub d_context: Vec<F>,
    pub d_positive: Vec<F>,
    pub d_negative: Vec<F>,
}

impl<F: Scalar> PairGradient<F> {
    pub fn is_zero(&self) -> bool {
        self.d_context
            .iter()
            .chain(&self.d_positive)
            .chain(&self.d_negative)
            .all(|&x| x == F::ZERO)
    }
}

/// Weighted gradient of `l(s_i - s_j)` for one pair. `alpha` is a constant
/// here. With `g = dl/dx`: `u_c` gets `alpha g (v_i - v_j)`, `v_i` gets
/// `alpha g u_c` and `v_j` gets `-alpha g u_c`. A pair with `i == j` has a
/// constant loss and yields zeros.
pub fn pair_gradient<F: Scalar>(
    kind: LossKind,
    model: &FactorModel<F>,
    c: usize,
    i: usize,
    j: usize,
    alpha: f64,
) -> Result<PairGradient<F>> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("pair weight {alpha} must be finite and >= 0")));
    }
    let s_i = model.score(c, i)?.to_f64();
    let s_j = model.score(c, j)?.to_f64();
    finite_scores(s_i, s_j)?;
    let dim = model.dim();
    let mut grad = PairGradient {
        context: c,
        positive: i,
        negative: j,
        d_context: vec![F::ZERO; dim],
        d_positive: vec![F::ZERO; dim],
        d_negative: vec![F::ZERO; dim],
    };
    if i == j {
        return Ok(grad);
    }
    let coef = F::from_f64(alpha * kind.slope(s_i - s_j));
    let (u, v_i, v_j) = (model.context_row(c), model.item_row(i), model.item_row(j));
    for k in 0..dim {
        grad.d_context[k] = coef * (v_i[k] - v_j[k]);
        grad.d_positive[k] = coef * u[k];
        grad.d_negative[k] = F::ZERO - coef * u[k];
    }
    Ok(grad)
}
