use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Balancing weights of the loss stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 5.0, lambda2: 10.0, lambda3: 1.0 }
    }
}

/// Detection sub-loss supplied from outside; the detection towers are not part of this crate.
pub trait FcosHook {
    fn l_fcos(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFcos;

impl FcosHook for ZeroFcos {
    fn l_fcos(&self) -> f64 {
        0.0
    }
}

impl<F: Fn() -> f64> FcosHook for F {
    fn l_fcos(&self) -> f64 {
        self()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l_mins: f64,
    pub l_mdp: f64,
    pub l_i: f64,
    pub l_uv: f64,
    pub l_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub parts: LossParts,
    pub l_fcos: f64,
    pub l_mask: f64,
    pub l_iuv: f64,
    pub l_all: f64,
}

/// `L_all = (L_fcos + λ1(L_Mins + L_Mdp)) + (L_I + λ2·L_UV + λ3·L_s)`.
pub fn total_loss(parts: &LossParts, w: &LossWeights, fcos: &dyn FcosHook) -> Result<LossBreakdown> {
    let l_fcos = fcos.l_fcos();
    for (name, v) in [
        ("l_fcos", l_fcos),
        ("l_mins", parts.l_mins),
        ("l_mdp", parts.l_mdp),
        ("l_i", parts.l_i),
        ("l_uv", parts.l_uv),
        ("l_s", parts.l_s),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    let l_mask = l_fcos + w.lambda1 * (parts.l_mins + parts.l_mdp);
    let l_iuv = parts.l_i + w.lambda2 * parts.l_uv + w.lambda3 * parts.l_s;
    Ok(LossBreakdown { parts: *parts, l_fcos, l_mask, l_iuv, l_all: l_mask + l_iuv })
}
