use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which convolutions are wavelength-conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both SOFE and SOBR use hypernetwork-predicted weights.
    Meta,
    /// SOFE uses a shared trainable conv; SOBR stays meta.
    PlainSofe,
    /// Shared trainable convs on both sides; no hypernetwork at all.
    PlainBoth,
}

impl std::str::FromStr for Variant {
    type Err = crate::MlsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meta" => Ok(Variant::Meta),
            "plain_sofe" => Ok(Variant::PlainSofe),
            "plain_both" => Ok(Variant::PlainBoth),
            _ => invalid(format!("unknown variant {s:?} (expected meta, plain_sofe or plain_both)")),
        }
    }
}

impl Variant {
    pub fn meta_sofe(self) -> bool {
        self == Variant::Meta
    }

    pub fn meta_sobr(self) -> bool {
        self != Variant::PlainBoth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_channels: usize,
    pub scale: usize,
    pub n_res_blocks_sofe: usize,
    pub n_rdb: usize,
    pub rdb_layers_per_block: usize,
    pub rdb_growth: usize,
    pub n_res_blocks_sobr: usize,
    pub w2w_hidden: usize,
    pub meta_kernel: usize,
    pub wavelength_norm_range: (f64, f64),
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            feature_channels: 16,
            scale: 2,
            n_res_blocks_sofe: 4,
            n_rdb: 4,
            rdb_layers_per_block: 4,
            rdb_growth: 16,
            n_res_blocks_sobr: 2,
            w2w_hidden: 64,
            meta_kernel: 1,
            wavelength_norm_range: (400.0, 700.0),
            variant: Variant::Meta,
        }
    }

    pub fn large() -> Self {
        ModelConfig {
            feature_channels: 64,
            n_res_blocks_sofe: 8,
            n_rdb: 8,
            rdb_layers_per_block: 8,
            rdb_growth: 64,
            n_res_blocks_sobr: 4,
            ..Self::desk()
        }
    }

    /// Smallest configuration that still exercises every component.
    pub fn tiny() -> Self {
        ModelConfig {
            feature_channels: 4,
            scale: 2,
            n_res_blocks_sofe: 1,
            n_rdb: 1,
            rdb_layers_per_block: 1,
            rdb_growth: 4,
            n_res_blocks_sobr: 1,
            w2w_hidden: 8,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_channels", self.feature_channels),
            ("n_rdb", self.n_rdb),
            ("rdb_layers_per_block", self.rdb_layers_per_block),
            ("rdb_growth", self.rdb_growth),
            ("w2w_hidden", self.w2w_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return invalid(format!("{name} must be positive"));
        }
        if !(2..=4).contains(&self.scale) {
            return invalid(format!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        if self.meta_kernel != 1 && self.meta_kernel != 3 {
            return invalid(format!("meta_kernel must be 1 or 3, got {}", self.meta_kernel));
        }
        let (lo, hi) = self.wavelength_norm_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return invalid(format!("bad wavelength_norm_range ({lo}, {hi})"));
        }
        Ok(())
    }

    /// Weight+bias count of the SOFE meta conv (G -> G).
    pub fn w2w1_output_dim(&self) -> usize {
        let g = self.feature_channels;
        g * g * self.meta_kernel * self.meta_kernel + g
    }

    /// Weight+bias count of the SOBR meta conv (G+3 -> G).
    pub fn w2w2_output_dim(&self) -> usize {
        let g = self.feature_channels;
        (g + 3) * g * self.meta_kernel * self.meta_kernel + g
    }

    /// Low-resolution pixels of context an output pixel depends on, per side.
    pub fn receptive_radius_lr(&self) -> usize {
        let m = self.meta_kernel / 2;
        let lr = 1 + 2 * self.n_res_blocks_sofe + m + self.n_rdb * self.rdb_layers_per_block + 1 + 1;
        let hr = m + 2 * self.n_res_blocks_sobr + 1;
        lr + hr.div_ceil(self.scale)
    }
}
