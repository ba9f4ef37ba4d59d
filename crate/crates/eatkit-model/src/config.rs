//! Architectural hyperparameters and their validation.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    /// channels per stage
    pub stage_dims: [usize; 4],
    /// EAT blocks per stage
    pub stage_depths: [usize; 4],
    pub stage_heads: [usize; 4],
    /// fraction of channels routed to the global (attention) path
    pub split_ratio: f64,
    /// depthwise kernel size for the GLI local path and MSRA branches (odd)
    pub local_kernel: usize,
    /// dilation rates of the in-block MSRA branches
    pub msra_dilations: Vec<usize>,
    pub stem_stride: usize,
    pub num_classes: usize,
    pub ffn_expansion: f64,
    /// false falls back to plain MSA on the global path
    pub md_msa_enabled: bool,
    /// debug switch: skip the modulation multiply so MD-MSA reduces to MSA
    /// exactly when the offset predictor is zeroed
    pub modulation_bypass: bool,
}

impl ModelConfig {
    /// Desk-scale default configuration.
    pub fn mini(num_classes: usize) -> Self {
        ModelConfig {
            stage_dims: [32, 64, 128, 256],
            stage_depths: [1, 1, 2, 1],
            stage_heads: [1, 2, 4, 8],
            split_ratio: 0.5,
            local_kernel: 3,
            msra_dilations: vec![1, 2, 3],
            stem_stride: 4,
            num_classes,
            ffn_expansion: 4.0,
            md_msa_enabled: true,
            modulation_bypass: false,
        }
    }

    /// Tiny configuration for gradient checks and fast tests.
    pub fn micro(num_classes: usize) -> Self {
        ModelConfig {
            stage_dims: [8, 8, 16, 16],
            stage_depths: [1, 1, 1, 1],
            stage_heads: [1, 1, 2, 2],
            split_ratio: 0.5,
            local_kernel: 3,
            msra_dilations: vec![1, 2],
            stem_stride: 4,
            num_classes,
            ffn_expansion: 2.0,
            md_msa_enabled: true,
            modulation_bypass: false,
        }
    }

    /// Total spatial reduction of the backbone (stem and three stride-2
    /// transitions).
    pub fn total_stride(&self) -> usize {
        self.stem_stride * 8
    }

    /// Check every structural constraint and resolve per-stage channel
    /// splits. C_g = round(p*C) is adjusted downward to the nearest multiple
    /// of the stage's head count; adjustments are reported, not silent.
    pub fn validate(&self) -> Result<ValidatedConfig> {
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(ModelError::Config(format!(
                "split_ratio p must lie in [0, 1], got {}",
                self.split_ratio
            )));
        }
        if self.local_kernel % 2 == 0 || self.local_kernel == 0 {
            return Err(ModelError::Config(format!(
                "local_kernel must be odd, got {}",
                self.local_kernel
            )));
        }
        if self.msra_dilations.is_empty() {
            return Err(ModelError::Config("msra_dilations must be nonempty".into()));
        }
        if self.msra_dilations.iter().any(|&d| d == 0) {
            return Err(ModelError::Config("msra_dilations must be >= 1".into()));
        }
        if ![1, 2, 4].contains(&self.stem_stride) {
            return Err(ModelError::Config(format!(
                "stem_stride must be 1, 2 or 4, got {}",
                self.stem_stride
            )));
        }
        if self.num_classes < 2 {
            return Err(ModelError::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.ffn_expansion <= 0.0 {
            return Err(ModelError::Config(format!(
                "ffn_expansion must be > 0, got {}",
                self.ffn_expansion
            )));
        }
        let mut stages = Vec::with_capacity(4);
        let mut adjustments = Vec::new();
        for s in 0..4 {
            let (c, heads, depth) = (self.stage_dims[s], self.stage_heads[s], self.stage_depths[s]);
            if c == 0 || heads == 0 || depth == 0 {
                return Err(ModelError::Config(format!(
                    "stage {} has zero dim/heads/depth",
                    s + 1
                )));
            }
            if c % heads != 0 {
                return Err(ModelError::Config(format!(
                    "stage {} dim {} not divisible by {} heads",
                    s + 1,
                    c,
                    heads
                )));
            }
            let requested = (self.split_ratio * c as f64).round() as usize;
            let c_g = (requested.min(c) / heads) * heads;
            if c_g != requested.min(c) {
                adjustments.push(format!(
                    "stage {}: C_g adjusted {} -> {} (multiple of {} heads)",
                    s + 1,
                    requested,
                    c_g,
                    heads
                ));
            }
            stages.push(StageGeometry {
                channels: c,
                heads,
                depth,
                c_g,
                c_l: c - c_g,
            });
        }
        Ok(ValidatedConfig {
            config: self.clone(),
            stages,
            adjustments,
        })
    }
}

/// Resolved per-stage channel accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct StageGeometry {
    pub channels: usize,
    pub heads: usize,
    pub depth: usize,
    pub c_g: usize,
    pub c_l: usize,
}

#[derive(Clone, Debug)]
pub struct ValidatedConfig {
    pub config: ModelConfig,
    pub stages: Vec<StageGeometry>,
    /// human-readable log of C_g rounding adjustments
    pub adjustments: Vec<String>,
}
