//! Run configuration: flags merged with an optional JSON file that wins over them.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ibp_core::buffet::{MatrixModel, MatrixPrior};
use ibp_core::IbpError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::minilang::{parse_prior, parse_score, ScoreArg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Sample,
    Logprob,
    Posterior,
    Verify,
    Transform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    #[default]
    Auto,
    Closed,
    Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ToHalfline,
    ToUnit,
}

/// Everything that determines a run. Absent fields fall back to flags, then defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    #[serde(default, with = "prior_field", skip_serializing_if = "Option::is_none")]
    pub prior: Option<MatrixPrior>,
    #[serde(default, with = "score_field", skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customers: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_atoms: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_explosive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Relative agreement required between the two sides of a transform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, IbpError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IbpError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| IbpError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `file` replace those in `self`.
    pub fn overlay(self, file: RunConfig) -> RunConfig {
        RunConfig {
            command: file.command.or(self.command),
            prior: file.prior.or(self.prior),
            score: file.score.or(self.score),
            customers: file.customers.or(self.customers),
            q: file.q.or(self.q),
            seed: file.seed.or(self.seed),
            input: file.input.or(self.input),
            out: file.out.or(self.out),
            format: file.format.or(self.format),
            method: file.method.or(self.method),
            include_atoms: file.include_atoms.or(self.include_atoms),
            allow_explosive: file.allow_explosive.or(self.allow_explosive),
            direction: file.direction.or(self.direction),
            suite: file.suite.or(self.suite),
            budget: file.budget.or(self.budget),
            tolerance: file.tolerance.or(self.tolerance),
        }
    }
}

fn string_or_object<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    Ok(match Option::<Value>::deserialize(d)? {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(v) => Some(v.to_string()),
    })
}

mod prior_field {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<MatrixPrior>, s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<MatrixPrior>, D::Error> {
        string_or_object(d)?.map(|t| parse_prior(&t)).transpose().map_err(serde::de::Error::custom)
    }
}

mod score_field {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<ScoreArg>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(ScoreArg::Scalar(m)) => MatrixModel::Score(*m).serialize(s),
            Some(ScoreArg::Multinomial { q: Some(q) }) => MatrixModel::Multinomial { q: *q }.serialize(s),
            Some(ScoreArg::Multinomial { q: None }) => serde_json::json!({ "kind": "multinomial" }).serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ScoreArg>, D::Error> {
        let text = match string_or_object(d)? {
            None => return Ok(None),
            Some(t) => t,
        };
        if let Ok(Value::Object(o)) = serde_json::from_str::<Value>(&text) {
            if o.len() == 1 && o.get("kind").and_then(Value::as_str) == Some("multinomial") {
                return Ok(Some(ScoreArg::Multinomial { q: None }));
            }
        }
        parse_score(&text).map(Some).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_wins_and_round_trips() {
        let flags = RunConfig { seed: Some(1), customers: Some(5), ..RunConfig::default() };
        let file: RunConfig = serde_json::from_str(
            r#"{"seed": 9, "prior": "beta:theta=1,beta=1", "score": {"kind": "poisson", "b": 2}, "format": "csv"}"#,
        )
        .unwrap();
        let merged = flags.overlay(file);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.customers, Some(5));
        assert_eq!(merged.format, Some(Format::Csv));
        let text = serde_json::to_string(&merged).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"prior": "beta:theta=1"}"#).is_err());
    }
}
