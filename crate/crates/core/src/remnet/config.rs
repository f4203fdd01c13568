use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemnetConfig {
    /// Input CIR length.
    pub input_len: usize,
    /// Feature maps per convolution.
    pub filters: usize,
    /// Number of residual reduction modules.
    pub modules: usize,
    /// Squeeze-and-excitation bottleneck reduction factor.
    pub se_reduction: usize,
    pub kernel_first: usize,
    pub kernel_body: usize,
    pub kernel_branch2: usize,
    pub dropout_rate: f64,
}

impl Default for RemnetConfig {
    fn default() -> Self {
        RemnetConfig {
            input_len: 128,
            filters: 16,
            modules: 3,
            se_reduction: 8,
            kernel_first: 7,
            kernel_body: 3,
            kernel_branch2: 1,
            dropout_rate: 0.2,
        }
    }
}

impl RemnetConfig {
    pub fn with_input_len(self, input_len: usize) -> Self {
        RemnetConfig { input_len, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.filters == 0 || self.input_len == 0 {
            return bad("input_len and filters must be positive".into());
        }
        if self.se_reduction == 0
            || !self.filters.is_multiple_of(self.se_reduction)
            || self.filters / self.se_reduction < 1
        {
            return bad(format!(
                "filters {} must be a positive multiple of se_reduction {}",
                self.filters, self.se_reduction
            ));
        }
        if self.filters == self.se_reduction {
            return bad(format!(
                "filters/se_reduction = {}/{} leaves a bottleneck of 1",
                self.filters, self.se_reduction
            ));
        }
        if self.modules > 32 {
            return bad(format!("{} modules is more than 32", self.modules));
        }
        for (name, k) in [
            ("kernel_first", self.kernel_first),
            ("kernel_body", self.kernel_body),
            ("kernel_branch2", self.kernel_branch2),
        ] {
            if k % 2 == 0 {
                return bad(format!("{name} = {k} must be odd"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn bottleneck(&self) -> usize {
        self.filters / self.se_reduction
    }

    /// Temporal length entering module `m`; each reduction halves it,
    /// rounding up.
    pub fn module_len(&self, m: usize) -> usize {
        (0..m).fold(self.input_len, |l, _| l.div_ceil(2))
    }

    /// Temporal length after the last reduction module.
    pub fn final_len(&self) -> usize {
        self.module_len(self.modules)
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let f = self.filters;
        let b = self.bottleneck();
        let stem = self.kernel_first * f + f;
        let rrm = (self.kernel_body * f * f + f)
            + (f * b + b)
            + (b * f + f)
            + (self.kernel_body * f * f + f)
            + (self.kernel_branch2 * f * f + f);
        let head = self.final_len() * f + 1;
        stem + self.modules * rrm + head
    }
}
