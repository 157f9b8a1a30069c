use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 2.0;
pub const DEFAULT_ROBUST_PRUNE_RATE: f64 = 0.9;
pub const DEFAULT_TIES_PRUNE_RATE: f64 = 0.8;
pub const DEFAULT_DROP_PROB: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Robust,
    TaskArithmetic,
    Ties,
    Dare,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Robust, Method::TaskArithmetic, Method::Ties, Method::Dare];

    pub fn name(self) -> &'static str {
        match self {
            Method::Robust => "robust",
            Method::TaskArithmetic => "task_arithmetic",
            Method::Ties => "ties",
            Method::Dare => "dare",
        }
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
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown method '{s}' (expected robust, task_arithmetic, ties or dare)"
                ))
            })
    }
}

/// What to do when pruning removes all mass from a row of `A`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadRowPolicy {
    #[default]
    Error,
    /// Use a scaling entry of 1 for the row and record the incident.
    UnitScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub method: Method,
    /// Fraction of entries pruned by magnitude (robust, ties).
    pub prune_rate: f64,
    pub lambda: f64,
    /// Drop probability (dare only).
    pub drop_prob: f64,
    pub seed: u64,
    pub dead_row_policy: DeadRowPolicy,
    /// Reject module sets that differ between tasks instead of intersecting.
    pub strict: bool,
}

impl MergeConfig {
    fn base(method: Method, lambda: f64) -> Self {
        Self {
            method,
            prune_rate: 0.0,
            lambda,
            drop_prob: 0.0,
            seed: 0,
            dead_row_policy: DeadRowPolicy::Error,
            strict: true,
        }
    }

    pub fn robust(prune_rate: f64, lambda: f64) -> Self {
        Self {
            prune_rate,
            ..Self::base(Method::Robust, lambda)
        }
    }

    pub fn task_arithmetic(lambda: f64) -> Self {
        Self::base(Method::TaskArithmetic, lambda)
    }

    pub fn ties(prune_rate: f64, lambda: f64) -> Self {
        Self {
            prune_rate,
            ..Self::base(Method::Ties, lambda)
        }
    }

    pub fn dare(drop_prob: f64, lambda: f64, seed: u64) -> Self {
        Self {
            drop_prob,
            seed,
            ..Self::base(Method::Dare, lambda)
        }
    }

    /// Defaults for a method: λ = 2 and the method's default rate.
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Robust => Self::robust(DEFAULT_ROBUST_PRUNE_RATE, DEFAULT_LAMBDA),
            Method::TaskArithmetic => Self::task_arithmetic(DEFAULT_LAMBDA),
            Method::Ties => Self::ties(DEFAULT_TIES_PRUNE_RATE, DEFAULT_LAMBDA),
            Method::Dare => Self::dare(DEFAULT_DROP_PROB, DEFAULT_LAMBDA, 0),
        }
    }

    pub fn with_policy(mut self, policy: DeadRowPolicy) -> Self {
        self.dead_row_policy = policy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be a positive number, got {}",
                self.lambda
            )));
        }
        crate::tensor::check_rate("prune rate", self.prune_rate)?;
        crate::tensor::check_rate("drop probability", self.drop_prob)?;
        let uses_prune = matches!(self.method, Method::Robust | Method::Ties);
        if !uses_prune && self.prune_rate != 0.0 {
            return Err(Error::Parameter(format!(
                "prune rate does not apply to method {}",
                self.method
            )));
        }
        if self.method != Method::Dare && self.drop_prob != 0.0 {
            return Err(Error::Parameter(format!(
                "drop probability only applies to dare, not {}",
                self.method
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for m in Method::ALL {
            MergeConfig::default_for(m).validate().unwrap();
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(MergeConfig::default_for(Method::Robust).lambda, 2.0);
    }

    #[test]
    fn method_specific_fields() {
        let mut cfg = MergeConfig::task_arithmetic(1.0);
        cfg.drop_prob = 0.3;
        assert!(cfg.validate().is_err());
        let mut cfg = MergeConfig::dare(0.3, 1.0, 0);
        cfg.prune_rate = 0.5;
        assert!(cfg.validate().is_err());
        assert!(MergeConfig::robust(1.0, 2.0).validate().is_err());
        assert!(MergeConfig::robust(0.5, 0.0).validate().is_err());
        assert!("pcb".parse::<Method>().is_err());
    }
}
