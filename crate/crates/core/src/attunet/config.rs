use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First-stage filter count; stage `k` uses `BASE_FILTERS · 2^k` before the
/// width multiplier. Stages 1–2 at full width (64/128) line up with VGG19.
pub const BASE_FILTERS: usize = 64;

/// Channels produced by the 1×1 adapter that lifts grayscale input to the
/// three channels a VGG-style first block expects.
pub const ADAPTER_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Square input side in pixels.
    pub input_size: usize,
    pub in_channels: usize,
    /// Width multiplier in (0, 1]; scales every stage except the adapter.
    pub width_mult: f64,
    /// Number of 2× down-sampling stages.
    pub depth: usize,
    /// Explicit per-level filter counts (`depth + 1` entries, last is the
    /// bottleneck). Overrides `width_mult` when set.
    pub filters: Option<Vec<usize>>,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_size: 224,
            in_channels: 1,
            width_mult: 1.0,
            depth: 4,
            filters: None,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width_mult > 0.0 && self.width_mult <= 1.0) {
            return Err(Error::Config(format!(
                "width multiplier {} outside (0, 1]",
                self.width_mult
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be positive".into()));
        }
        let step = 1usize << self.depth;
        if self.input_size == 0 || !self.input_size.is_multiple_of(step) {
            return Err(Error::Config(format!(
                "input size {} is not divisible by 2^{} = {step}",
                self.input_size, self.depth
            )));
        }
        if let Some(f) = &self.filters {
            if f.len() != self.depth + 1 || f.contains(&0) {
                return Err(Error::Config(format!(
                    "filters {f:?} must list {} positive counts",
                    self.depth + 1
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }

    /// Filter counts for encoder levels `0..depth` followed by the bottleneck.
    pub fn stage_filters(&self) -> Vec<usize> {
        if let Some(f) = &self.filters {
            return f.clone();
        }
        (0..=self.depth)
            .map(|k| {
                let full = (BASE_FILTERS << k) as f64;
                ((full * self.width_mult).round() as usize).max(1)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_width_matches_vgg_blocks() {
        let f = NetConfig::default().stage_filters();
        assert_eq!(f, vec![64, 128, 256, 512, 1024]);
    }

    #[test]
    fn width_multiplier_scales() {
        let cfg = NetConfig {
            width_mult: 0.125,
            ..Default::default()
        };
        assert_eq!(cfg.stage_filters(), vec![8, 16, 32, 64, 128]);
    }

    #[test]
    fn divisibility_enforced() {
        let cfg = NetConfig {
            input_size: 100,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(NetConfig::default().validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<NetConfig>(r#"{"depht": 3}"#).unwrap_err();
        assert!(err.to_string().contains("depht"));
        let cfg: NetConfig = serde_json::from_str(r#"{"depth": 3}"#).unwrap();
        assert_eq!(cfg.depth, 3);
        assert_eq!(cfg.input_size, 224);
    }
}
