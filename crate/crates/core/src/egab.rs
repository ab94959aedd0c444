//! Entropy-guided adaptive balancing of the uniformity weight.
//!
//! Once per epoch the collapse metric `C` is mapped to an entropy proxy
//! `H = -ln(C + eps)`. A sigmoid schedule turns the gap to a target entropy
//! into a desired weight, and an exponential moving average moves the
//! current weight toward it. Low entropy (collapse) raises the weight.

use serde::{Deserialize, Serialize};

use crate::objective::{entropy_proxy, sigmoid, ENTROPY_EPS};
use crate::{Error, Result};

/// Target entropy: a fixed value or `ln(d)` of the embedding dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HTarget {
    Value(f64),
    Named(HTargetRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HTargetRule {
    Logd,
}

impl HTarget {
    pub fn resolve(self, dim: usize) -> f64 {
        match self {
            HTarget::Value(v) => v,
            HTarget::Named(HTargetRule::Logd) => (dim as f64).ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgabConfig {
    pub enabled: bool,
    /// Initial weight, and the constant weight when disabled.
    pub alpha0: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta: f64,
    pub gamma: f64,
    pub h_target: HTarget,
    pub eps: f64,
}

impl Default for EgabConfig {
    fn default() -> Self {
        EgabConfig {
            enabled: true,
            alpha0: 1.0,
            alpha_min: 0.0,
            alpha_max: 2.0,
            beta: 5.0,
            gamma: 0.1,
            h_target: HTarget::Value(1.5),
            eps: ENTROPY_EPS,
        }
    }
}

impl EgabConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha0 >= 0.0) {
            return bad(format!("egab.alpha0 = {} must be >= 0", self.alpha0));
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max) {
            return bad(format!(
                "egab bounds must satisfy 0 <= alpha_min <= alpha_max (got {}, {})",
                self.alpha_min, self.alpha_max
            ));
        }
        if !(self.beta > 0.0) {
            return bad(format!("egab.beta = {} must be > 0", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("egab.gamma = {} must lie in (0, 1]", self.gamma));
        }
        if !(self.eps > 0.0) {
            return bad(format!("egab.eps = {} must be > 0", self.eps));
        }
        if let HTarget::Value(h) = self.h_target {
            if !(h > 0.0) {
                return bad(format!("egab.h_target = {h} must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgabState {
    pub alpha: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta: f64,
    pub gamma: f64,
    pub h_target: f64,
    pub eps: f64,
    pub enabled: bool,
}

/// Quantities computed by one [`EgabState::epoch_update`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgabStep {
    pub h_proxy: f64,
    pub alpha_hat: Option<f64>,
    pub alpha: f64,
}

impl EgabState {
    pub fn new(config: &EgabConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        let h_target = config.h_target.resolve(dim);
        if !(h_target > 0.0) {
            return Err(Error::Config(format!("resolved target entropy {h_target} must be > 0")));
        }
        Ok(EgabState {
            alpha: config.alpha0,
            alpha_min: config.alpha_min,
            alpha_max: config.alpha_max,
            beta: config.beta,
            gamma: config.gamma,
            h_target,
            eps: config.eps,
            enabled: config.enabled,
        })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.alpha_min + self.alpha_max)
    }

    /// `alpha_min + (alpha_max - alpha_min) * sigmoid(beta * (H_target - h) / H_target)`.
    pub fn target_alpha(&self, h_proxy: f64) -> Result<f64> {
        if !(self.h_target > 0.0) {
            return Err(Error::Argument(format!(
                "target entropy must be positive, got {}",
                self.h_target
            )));
        }
        let gap = (self.h_target - h_proxy) / self.h_target;
        Ok(self.alpha_min + (self.alpha_max - self.alpha_min) * sigmoid(self.beta * gap))
    }

    /// `alpha <- (1 - gamma) alpha + gamma alpha_hat`.
    pub fn ema_update(&mut self, alpha_hat: f64) {
        self.alpha = (1.0 - self.gamma) * self.alpha + self.gamma * alpha_hat;
    }

    /// End-of-epoch update from the collapse metric. A disabled state keeps its weight.
    pub fn epoch_update(&mut self, collapse: f64) -> Result<EgabStep> {
        if !(collapse >= 0.0) {
            return Err(Error::Argument(format!("collapse metric {collapse} must be >= 0")));
        }
        let h_proxy = entropy_proxy(collapse, self.eps);
        if !self.enabled {
            return Ok(EgabStep {
                h_proxy,
                alpha_hat: None,
                alpha: self.alpha,
            });
        }
        let alpha_hat = self.target_alpha(h_proxy)?;
        self.ema_update(alpha_hat);
        Ok(EgabStep {
            h_proxy,
            alpha_hat: Some(alpha_hat),
            alpha: self.alpha,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(alpha: f64) -> EgabState {
        let mut s = EgabState::new(&EgabConfig::default(), 64).unwrap();
        s.alpha = alpha;
        s
    }

    #[test]
    fn disabled_state_keeps_alpha() {
        let cfg = EgabConfig {
            enabled: false,
            alpha0: 0.5,
            ..EgabConfig::default()
        };
        let mut s = EgabState::new(&cfg, 8).unwrap();
        for c in [1.0, 0.0, 0.3, 0.9] {
            s.epoch_update(c).unwrap();
            assert_eq!(s.alpha, 0.5);
        }
    }

    #[test]
    fn logd_target_resolves() {
        let cfg = EgabConfig {
            h_target: HTarget::Named(HTargetRule::Logd),
            ..EgabConfig::default()
        };
        let s = EgabState::new(&cfg, 1024).unwrap();
        assert!((s.h_target - 1024f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let bad = [
            EgabConfig { alpha_min: 3.0, ..EgabConfig::default() },
            EgabConfig { beta: 0.0, ..EgabConfig::default() },
            EgabConfig { gamma: 0.0, ..EgabConfig::default() },
            EgabConfig { h_target: HTarget::Value(0.0), ..EgabConfig::default() },
        ];
        for c in bad {
            assert!(EgabState::new(&c, 4).is_err(), "{c:?}");
        }
    }

    #[test]
    fn h_target_parses_number_or_logd() {
        let v: HTarget = serde_json::from_str("2.0").unwrap();
        assert_eq!(v, HTarget::Value(2.0));
        let l: HTarget = serde_json::from_str("\"logd\"").unwrap();
        assert_eq!(l, HTarget::Named(HTargetRule::Logd));
    }

    #[test]
    fn negative_collapse_rejected() {
        assert!(state(1.0).epoch_update(-0.1).is_err());
    }
}
