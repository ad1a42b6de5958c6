//! Run configuration: JSON file + flag overrides, fully resolved before a
//! subcommand starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attunet::NetConfig;
use crate::datapipe::PrepConfig;
use crate::error::{Error, Result};
use crate::evalstats::CompareOptions;
use crate::phantom::PhantomSpec;
use crate::relaxfit::SequenceParams;
use crate::trainer::TrainConfig;

/// Every setting of a pipeline run. The top-level `seed` is authoritative:
/// on resolution it is copied into the phantom, network and trainer seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of phantom subjects.
    pub subjects: usize,
    /// Subjects per split: train, validation, test.
    pub split: [usize; 3],
    pub phantom: PhantomSpec,
    pub sequence: SequenceParams,
    pub prep: PrepConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub compare: CompareOptions,
    /// Fit voxels on all cores.
    pub parallel: bool,
}

impl Default for RunConfig {
    /// Desk-scale phantom experiment: 20 subjects on a 128×128×12 grid,
    /// 96×96 network input, quarter-width network.
    fn default() -> Self {
        RunConfig {
            seed: 0,
            subjects: 20,
            split: [12, 4, 4],
            phantom: PhantomSpec::default(),
            sequence: SequenceParams::default(),
            prep: PrepConfig {
                crop: 128,
                size: 96,
                augment: false,
                ..PrepConfig::default()
            },
            net: NetConfig {
                input_size: 96,
                width_mult: 0.25,
                ..NetConfig::default()
            },
            train: TrainConfig {
                batch_size: 8,
                ..TrainConfig::default()
            },
            compare: CompareOptions::default(),
            parallel: true,
        }
    }
}

/// Overlays `patch` onto `base`: objects merge recursively, any other value
/// replaces the base value.
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub width_mult: Option<f64>,
    pub threshold: Option<f64>,
    pub subjects: Option<usize>,
    pub max_epochs: Option<usize>,
}

impl RunConfig {
    /// Parses a JSON document; blank text yields the defaults. The document
    /// is merged key by key onto the run defaults, so a partial nested
    /// section (e.g. `{"prep": {"augment": true}}`) keeps the other run
    /// defaults of that section. Unknown keys are configuration errors
    /// naming the key.
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(RunConfig::default());
        }
        let err = |e: serde_json::Error| Error::Config(format!("config: {e}"));
        let patch: serde_json::Value = serde_json::from_str(text).map_err(err)?;
        if !patch.is_object() {
            return Err(Error::Config("config: top level must be a JSON object".into()));
        }
        let mut merged = serde_json::to_value(RunConfig::default()).expect("config serializes");
        merge(&mut merged, patch);
        serde_json::from_value(merged).map_err(err)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.width_mult {
            self.net.width_mult = w;
        }
        if let Some(t) = o.threshold {
            self.net.threshold = t;
        }
        if let Some(n) = o.subjects {
            self.subjects = n;
            // A split that no longer fits is rescaled to the default
            // 60/20/20 ratio, keeping at least one validation and test subject.
            if self.split.iter().sum::<usize>() != n {
                let held_out = (n / 5).max(1);
                self.split = [n.saturating_sub(2 * held_out), held_out, held_out];
            }
        }
        if let Some(e) = o.max_epochs {
            self.train.max_epochs = e;
        }
    }

    /// Propagates the master seed and checks cross-field consistency.
    pub fn resolve(mut self) -> Result<Self> {
        self.phantom.seed = self.seed;
        self.net.seed = self.seed;
        self.train.seed = self.seed;
        self.phantom.validate()?;
        self.sequence.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        if self.prep.size != self.net.input_size {
            return Err(Error::Config(format!(
                "prep.size {} must equal net.input_size {}",
                self.prep.size, self.net.input_size
            )));
        }
        let [nx, ny, _] = self.phantom.grid;
        if self.prep.crop == 0 || self.prep.crop > nx.min(ny) {
            return Err(Error::Config(format!(
                "prep.crop {} must lie in 1..={}",
                self.prep.crop,
                nx.min(ny)
            )));
        }
        if self.split.iter().sum::<usize>() != self.subjects {
            return Err(Error::Config(format!(
                "split {:?} does not sum to {} subjects",
                self.split, self.subjects
            )));
        }
        if !(self.compare.alpha > 0.0 && self.compare.alpha < 1.0) || self.compare.comparisons == 0 {
            return Err(Error::Config(
                "compare.alpha must lie in (0, 1) and comparisons ≥ 1".into(),
            ));
        }
        Ok(self)
    }
}

/// Reads `path` (defaults when absent), applies `overrides` and resolves.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.resolve()
}
