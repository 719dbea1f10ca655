//! Separator hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fusion strategy for multi-microphone input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One microphone, the reference pipeline.
    Single,
    /// Per-channel encoder outputs concatenated before the bottleneck.
    EarlyFusion,
    /// Shared bottleneck + TCN per channel, concatenated before mask estimation.
    LateFusion,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Single => "single",
            Variant::EarlyFusion => "early_fusion",
            Variant::LateFusion => "late_fusion",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Variant::Single),
            "ef" | "early_fusion" => Ok(Variant::EarlyFusion),
            "lf" | "late_fusion" => Ok(Variant::LateFusion),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?} (expected single, ef or lf)"
            ))),
        }
    }
}

/// Architecture sizes. Skip channels equal the bottleneck width `B`
/// throughout, so `Sc` is exposed as [`ModelConfig::sc`] rather than stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Microphone count.
    pub m: usize,
    /// Speaker count.
    pub k: usize,
    /// Encoder window length in samples; the hop is `l / 2`.
    pub l: usize,
    /// Encoder basis count.
    pub n: usize,
    /// Bottleneck channels.
    pub b: usize,
    /// TCN hidden channels.
    pub h: usize,
    /// TCN depthwise kernel width (odd).
    pub p: usize,
    /// Convolution blocks per repeat; dilations run 1, 2, …, 2^(X−1).
    pub x: usize,
    /// Repeats of the block stack.
    pub r: usize,
}

impl ModelConfig {
    /// Small configuration that trains in seconds on a CPU.
    pub fn desk_scale(variant: Variant, m: usize) -> Self {
        ModelConfig { variant, m, k: 2, l: 16, n: 64, b: 32, h: 64, p: 3, x: 4, r: 2 }
    }

    /// The published configuration (L=16, N=512, B=128, H=512, P=3, X=8, R=3).
    pub fn full_scale(variant: Variant, m: usize) -> Self {
        ModelConfig { variant, m, k: 2, l: 16, n: 512, b: 128, h: 512, p: 3, x: 8, r: 3 }
    }

    /// Skip-connection channels.
    pub fn sc(&self) -> usize {
        self.b
    }

    /// Segmentation hop (50% overlap).
    pub fn hop(&self) -> usize {
        self.l / 2
    }

    /// Bottleneck input channels: the encoder outputs fused ahead of it.
    pub fn bnl_in(&self) -> usize {
        match self.variant {
            Variant::EarlyFusion => self.m * self.n,
            _ => self.n,
        }
    }

    /// Mask-estimator input channels: TCN outputs fused ahead of it.
    pub fn me_in(&self) -> usize {
        match self.variant {
            Variant::LateFusion => self.m * self.sc(),
            _ => self.sc(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Single && self.m != 1 {
            return Err(Error::invalid(format!("single-channel variant requires m = 1, got {}", self.m)));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be >= 1"));
        }
        if self.k < 2 {
            return Err(Error::invalid(format!("k must be >= 2, got {}", self.k)));
        }
        for (name, v) in
            [("l", self.l), ("n", self.n), ("b", self.b), ("h", self.h), ("p", self.p), ("x", self.x), ("r", self.r)]
        {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.p % 2 == 0 {
            return Err(Error::invalid(format!("p must be odd for same padding, got {}", self.p)));
        }
        if self.l % 2 != 0 {
            return Err(Error::invalid(format!("l must be even (hop = l/2), got {}", self.l)));
        }
        Ok(())
    }

    /// Closed-form parameter total; kept in lock step with the actual tensor
    /// sizes by a unit test.
    pub fn count_parameters(&self) -> usize {
        let (n, b, h, p, sc) = (self.n, self.b, self.h, self.p, self.sc());
        let encoder = n * self.l;
        let decoder = self.l * n;
        let bnl = 2 * self.bnl_in() + b * self.bnl_in() + b;
        let block = (h * b + h)        // entry 1x1 conv
            + 1 + 2 * h                // PReLU + gLN
            + (h * p + h)              // depthwise conv
            + 1 + 2 * h                // PReLU + gLN
            + (b * h + b)              // residual 1x1 conv
            + (sc * h + sc);           // skip 1x1 conv
        let me = 1 + n * self.me_in() + n;
        encoder + decoder + bnl + self.r * self.x * block + self.k * me
    }
}
