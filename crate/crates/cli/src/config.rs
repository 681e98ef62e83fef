//! The run configuration file.
//!
//! A TOML document; every key is optional.
//!
//! ```toml
//! seed = 1                 # keys, initial model and attack randomness
//! mode = "basic"           # or "unique-value"
//! data = "train.csv"       # omitted: the bundled 100-row dataset
//! out_dir = "veridl-run"
//! max_samples = 200
//!
//! [network]
//! hidden = [8, 8]
//! activation = "sigmoid"   # sigmoid | relu | tanh
//! learning_rate = 0.1
//! threshold = 1e-4
//! max_epochs = 100000
//!
//! [codec]
//! fractional_bits = 20
//!
//! [attack]                 # only read by train-certify and demo-serve
//! kind = "wrong-E1-keep-proof"
//! bits = 8
//! prune_fraction = 0.1
//! neuron_fraction = 0.01
//! weight_fraction = 0.1
//! boost = 10
//! ```
//!
//! `VERIDL_SEED`, when set, replaces `seed`.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use veridl_core::{Activation, AttackKind, AttackSpec, CodecParams, Mode, NetworkConfig};

use crate::error::CliError;

pub const SEED_VAR: &str = "VERIDL_SEED";

fn parsed<'de, D, T>(d: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(deserialize_with = "parsed")]
    pub mode: Mode,
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub max_samples: usize,
    pub network: NetworkSection,
    pub codec: CodecSection,
    pub attack: Option<AttackSection>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    #[serde(deserialize_with = "parsed")]
    pub activation: Activation,
    pub learning_rate: f64,
    pub threshold: f64,
    pub max_epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecSection {
    pub fractional_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(deserialize_with = "parsed")]
    pub kind: AttackKind,
    pub bits: Option<u32>,
    pub prune_fraction: Option<f64>,
    pub neuron_fraction: Option<f64>,
    pub weight_fraction: Option<f64>,
    pub boost: Option<i128>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: Mode::Basic,
            data: None,
            out_dir: PathBuf::from("veridl-run"),
            max_samples: 200,
            network: NetworkSection::default(),
            codec: CodecSection::default(),
            attack: None,
        }
    }
}

impl Default for NetworkSection {
    fn default() -> Self {
        let base = NetworkConfig::new(1, vec![8, 8], Activation::Sigmoid);
        Self {
            hidden: base.hidden,
            activation: base.activation,
            learning_rate: base.learning_rate,
            threshold: base.threshold,
            max_epochs: base.max_epochs,
        }
    }
}

impl Default for CodecSection {
    fn default() -> Self {
        Self { fractional_bits: CodecParams::DEFAULT_FRACTIONAL_BITS }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Reads `path` if given, defaults otherwise, then applies `VERIDL_SEED`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        if let Ok(v) = std::env::var(SEED_VAR) {
            config.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Parse(format!("{SEED_VAR}={v:?} is not an unsigned integer")))?;
        }
        Ok(config)
    }

    pub fn network(&self, input_dim: usize) -> Result<NetworkConfig, CliError> {
        let n = &self.network;
        let config = NetworkConfig {
            learning_rate: n.learning_rate,
            threshold: n.threshold,
            max_epochs: n.max_epochs,
            ..NetworkConfig::new(input_dim, n.hidden.clone(), n.activation)
        };
        config.validate()?;
        Ok(config)
    }

    pub fn codec(&self) -> Result<CodecParams, CliError> {
        Ok(CodecParams::bls12_381(self.codec.fractional_bits)?)
    }

    pub fn attack_spec(&self) -> Option<AttackSpec> {
        self.attack.as_ref().map(|a| a.spec(self.seed))
    }
}

impl AttackSection {
    pub fn spec(&self, seed: u64) -> AttackSpec {
        let base = AttackSpec::new(self.kind, seed);
        AttackSpec {
            bits: self.bits.unwrap_or(base.bits),
            prune_fraction: self.prune_fraction.unwrap_or(base.prune_fraction),
            neuron_fraction: self.neuron_fraction.unwrap_or(base.neuron_fraction),
            weight_fraction: self.weight_fraction.unwrap_or(base.weight_fraction),
            boost: self.boost.unwrap_or(base.boost),
            ..base
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_documented_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.network.hidden, [8, 8]);
        assert_eq!(c.network.activation, Activation::Sigmoid);
        assert_eq!((c.network.learning_rate, c.network.threshold), (0.1, 1e-4));
        assert_eq!(c.codec.fractional_bits, 20);
        assert_eq!(c.max_samples, 200);
        assert_eq!(c.mode, Mode::Basic);
    }

    #[test]
    fn full_file() {
        let c = RunConfig::parse(
            r#"
            seed = 9
            mode = "unique-value"
            data = "d.csv"
            [network]
            hidden = [4]
            activation = "relu"
            threshold = 1e-6
            [codec]
            fractional_bits = 16
            [attack]
            kind = "compress-prune"
            prune_fraction = 0.25
            "#,
        )
        .unwrap();
        assert_eq!(c.mode, Mode::UniqueValue);
        assert_eq!(c.network(3).unwrap().hidden, [4]);
        assert_eq!(c.codec().unwrap().fractional_bits, 16);
        let spec = c.attack_spec().unwrap();
        assert_eq!((spec.kind, spec.prune_fraction, spec.seed), (AttackKind::CompressPrune, 0.25, 9));
    }

    #[test]
    fn bad_values_are_parse_errors() {
        for text in ["mode = \"fast\"", "[network]\nactivation = \"step\"", "colour = 1", "[attack]\nkind = \"x\""] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Parse(_))), "{text}");
        }
        let c = RunConfig::parse("[network]\nthreshold = -1.0").unwrap();
        assert!(matches!(c.network(2), Err(CliError::Parse(_))));
    }
}
