use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default neighborhood factor of the variance-tuned methods.
pub const DEFAULT_BETA: f64 = 1.5;
/// Default number of neighborhood samples of the variance-tuned methods.
pub const DEFAULT_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fgsm,
    Ifgsm,
    Mifgsm,
    Nifgsm,
    Vmifgsm,
    Vnifgsm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Fgsm,
        Method::Ifgsm,
        Method::Mifgsm,
        Method::Nifgsm,
        Method::Vmifgsm,
        Method::Vnifgsm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fgsm => "fgsm",
            Method::Ifgsm => "ifgsm",
            Method::Mifgsm => "mifgsm",
            Method::Nifgsm => "nifgsm",
            Method::Vmifgsm => "vmifgsm",
            Method::Vnifgsm => "vnifgsm",
        }
    }

    pub fn is_variance_tuned(self) -> bool {
        matches!(self, Method::Vmifgsm | Method::Vnifgsm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown attack method {s:?}")))
    }
}

/// Where the Nesterov variants sample the gradient variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariancePoint {
    /// The lookahead point the momentum gradient is taken at.
    #[default]
    Lookahead,
    /// The current iterate, before the lookahead shift.
    Current,
}

/// Attack hyper-parameters. Budgets are in 0–255 pixel units and divided by
/// 255 when applied to `[0,1]` images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon_255: f64,
    pub steps: usize,
    pub step_size_255: f64,
    pub decay: f64,
    pub beta: f64,
    pub samples: usize,
    pub nesterov: bool,
    pub clip_range: bool,
    pub project_ball: bool,
    pub variance_point: VariancePoint,
}

impl AttackConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon_255 / 255.0
    }

    pub fn alpha(&self) -> f64 {
        self.step_size_255 / 255.0
    }

    pub fn variance_enabled(&self) -> bool {
        self.samples > 0 && self.beta > 0.0
    }

    /// True when the configuration alone keeps `‖x_adv − x‖∞ ≤ ε`.
    pub fn budget_guaranteed(&self) -> bool {
        self.project_ball
            || self.step_size_255 * self.steps as f64 <= self.epsilon_255 * (1.0 + 1e-12)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.epsilon_255, self.step_size_255, self.decay, self.beta];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("attack parameters must be finite"));
        }
        if self.epsilon_255 < 0.0 {
            return Err(Error::invalid(format!(
                "epsilon {} is negative",
                self.epsilon_255
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.step_size_255 < 0.0 {
            return Err(Error::invalid(format!(
                "step size {} is negative",
                self.step_size_255
            )));
        }
        if self.decay < 0.0 || self.beta < 0.0 {
            return Err(Error::invalid("decay and beta must be non-negative"));
        }
        Ok(())
    }
}

/// Preset for `method` with budget `epsilon_255` over `steps` iterations,
/// step size `ε/T`. FGSM always takes a single step of size ε.
pub fn make_config(method: Method, epsilon_255: f64, steps: usize) -> AttackConfig {
    let steps = if method == Method::Fgsm { 1 } else { steps };
    let (decay, beta, samples) = match method {
        Method::Fgsm | Method::Ifgsm => (0.0, 0.0, 0),
        Method::Mifgsm | Method::Nifgsm => (1.0, 0.0, 0),
        Method::Vmifgsm | Method::Vnifgsm => (1.0, DEFAULT_BETA, DEFAULT_SAMPLES),
    };
    AttackConfig {
        epsilon_255,
        steps,
        step_size_255: epsilon_255 / steps.max(1) as f64,
        decay,
        beta,
        samples,
        nesterov: matches!(method, Method::Nifgsm | Method::Vnifgsm),
        clip_range: true,
        project_ball: false,
        variance_point: VariancePoint::Lookahead,
    }
}

impl Default for AttackConfig {
    fn default() -> Self {
        make_config(Method::Vmifgsm, 16.0, 10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let v = make_config(Method::Vmifgsm, 16.0, 10);
        assert_eq!((v.epsilon_255, v.steps, v.step_size_255), (16.0, 10, 1.6));
        assert_eq!(
            (v.decay, v.beta, v.samples, v.nesterov),
            (1.0, 1.5, 20, false)
        );
        let f = make_config(Method::Fgsm, 16.0, 10);
        assert_eq!((f.steps, f.step_size_255, f.decay), (1, 16.0, 0.0));
        assert_eq!(make_config(Method::Mifgsm, 16.0, 10).decay, 1.0);
        assert!(make_config(Method::Nifgsm, 16.0, 10).nesterov);
        let vn = make_config(Method::Vnifgsm, 16.0, 10);
        assert!(vn.nesterov && vn.variance_enabled());
        let i = make_config(Method::Ifgsm, 16.0, 10);
        assert!(!i.variance_enabled() && i.decay == 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!(
            "pgd".parse::<Method>(),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn validation() {
        let mut c = AttackConfig::default();
        assert!(c.validate().is_ok());
        c.steps = 0;
        assert!(c.validate().is_err());
        let c = AttackConfig {
            step_size_255: -0.5,
            ..AttackConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(make_config(Method::Ifgsm, 0.0, 10).validate().is_ok());
        let c = AttackConfig {
            beta: -1.0,
            ..AttackConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(AttackConfig::default().budget_guaranteed());
    }
}
