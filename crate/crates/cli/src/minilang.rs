//! The `kind:key=val,...` mini-language for priors and score models.

use std::collections::BTreeMap;

use ibp_core::buffet::{MatrixModel, MatrixPrior};
use ibp_core::multivar::SbdPrior;
use ibp_core::{IbpError, LevyDensity, Result, ScoreModel};

struct Params<'a> {
    kind: &'a str,
    values: BTreeMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut values = BTreeMap::new();
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value in `{text}`, found `{item}`")))?;
            if values.insert(k.trim(), v.trim()).is_some() {
                return Err(bad(format!("parameter `{}` given twice in `{text}`", k.trim())));
            }
        }
        Ok(Params { kind: kind.trim(), values })
    }

    /// Fail on any key outside `allowed`.
    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(bad(format!("`{}` does not take parameter `{k}` (expected {})", self.kind, allowed.join(", ")))),
            None => Ok(()),
        }
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.values.get(key).copied().ok_or_else(|| bad(format!("`{}` requires parameter `{key}`", self.kind)))
    }

    fn num(&self, key: &str) -> Result<f64> {
        number(key, self.raw(key)?)
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            Some(v) => number(key, v),
            None => Ok(default),
        }
    }
}

fn bad(msg: String) -> IbpError {
    IbpError::Config(msg)
}

fn number(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| bad(format!("parameter `{key}` is not a number: `{v}`")))
}

/// Parse a prior: a mini-language string, `transformed(<levy>)`, or a JSON object.
pub fn parse_prior(text: &str) -> Result<MatrixPrior> {
    let text = text.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| bad(format!("invalid prior JSON: {e}")));
    }
    if let Some(inner) = text.strip_prefix("transformed(").and_then(|t| t.strip_suffix(')')) {
        return match parse_prior(inner)? {
            MatrixPrior::Levy(l) => Ok(MatrixPrior::Levy(l.transform())),
            MatrixPrior::Sbd(_) => Err(bad("only univariate Lévy densities can be transformed".into())),
        };
    }
    let p = Params::parse(text)?;
    let levy = match p.kind {
        "beta" | "beta-process" => {
            p.only(&["theta", "beta"])?;
            LevyDensity::beta_process(p.num("theta")?, p.num("beta")?)?
        }
        "stable-beta" => {
            p.only(&["theta", "alpha", "beta"])?;
            LevyDensity::stable_beta(p.num("theta")?, p.num("alpha")?, p.num("beta")?)?
        }
        "gamma" | "gamma-process" => {
            p.only(&["theta", "beta"])?;
            LevyDensity::gamma_process(p.num("theta")?, p.num("beta")?)?
        }
        "stable" => {
            p.only(&["alpha"])?;
            LevyDensity::stable_positive(p.num("alpha")?)?
        }
        "gg" | "generalized-gamma" => {
            p.only(&["alpha", "beta"])?;
            LevyDensity::generalized_gamma(p.num("alpha")?, p.num("beta")?)?
        }
        "sbd" => {
            p.only(&["theta", "alpha", "beta", "gamma"])?;
            let gamma = p.raw("gamma")?.split('/').map(|g| number("gamma", g.trim())).collect::<Result<Vec<_>>>()?;
            return Ok(MatrixPrior::Sbd(SbdPrior::new(
                p.num("theta")?,
                p.num_or("alpha", 0.0)?,
                p.num("beta")?,
                gamma,
            )?));
        }
        other => {
            return Err(bad(format!(
                "unknown prior kind `{other}` (expected beta, stable-beta, gamma, stable, gg or sbd)"
            )))
        }
    };
    Ok(MatrixPrior::Levy(levy))
}

/// Parse a score model: `bernoulli`, `poisson:b=`, `nb:r=`, `multinomial[:q=]`,
/// or a JSON object.
pub fn parse_score(text: &str) -> Result<ScoreArg> {
    let text = text.trim();
    if text.starts_with('{') {
        let m: MatrixModel = serde_json::from_str(text).map_err(|e| bad(format!("invalid score JSON: {e}")))?;
        return Ok(match m {
            MatrixModel::Score(s) => ScoreArg::Scalar(s),
            MatrixModel::Multinomial { q } => ScoreArg::Multinomial { q: Some(q) },
        });
    }
    let p = Params::parse(text)?;
    Ok(match p.kind {
        "bernoulli" => {
            p.only(&[])?;
            ScoreArg::Scalar(ScoreModel::Bernoulli)
        }
        "poisson" => {
            p.only(&["b"])?;
            ScoreArg::Scalar(ScoreModel::poisson(p.num_or("b", 1.0)?)?)
        }
        "nb" | "negative-binomial" => {
            p.only(&["r"])?;
            ScoreArg::Scalar(ScoreModel::negative_binomial(p.num("r")?)?)
        }
        "multinomial" => {
            p.only(&["q"])?;
            let q = match p.values.get("q") {
                Some(v) => Some(v.parse::<usize>().ok().filter(|&q| q > 0).ok_or_else(|| {
                    bad(format!("multinomial `q` must be a positive integer, got `{v}`"))
                })?),
                None => None,
            };
            ScoreArg::Multinomial { q }
        }
        other => {
            return Err(bad(format!("unknown score kind `{other}` (expected bernoulli, poisson, nb or multinomial)")))
        }
    })
}

/// A parsed score model; a multinomial may leave `q` to the prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScoreArg {
    Scalar(ScoreModel),
    Multinomial { q: Option<usize> },
}

impl ScoreArg {
    /// Fix `q` against an explicit `--q` and the prior, reporting disagreement.
    pub fn resolve(self, q_flag: Option<usize>, prior: &MatrixPrior) -> Result<MatrixModel> {
        match self {
            ScoreArg::Scalar(s) => {
                if let Some(q) = q_flag {
                    if q != 1 {
                        return Err(bad(format!("q = {q} given for the scalar score model {s}")));
                    }
                }
                Ok(MatrixModel::Score(s))
            }
            ScoreArg::Multinomial { q } => {
                let from_prior = match prior {
                    MatrixPrior::Sbd(p) => Some(p.q()),
                    MatrixPrior::Levy(_) => None,
                };
                let mut chosen = None;
                for v in [q, q_flag, from_prior].into_iter().flatten() {
                    match chosen {
                        Some(c) if c != v => return Err(bad(format!("conflicting condiment counts q = {c} and q = {v}"))),
                        _ => chosen = Some(v),
                    }
                }
                let q = chosen.ok_or_else(|| bad("multinomial scores need q (from the score, --q or the prior)".into()))?;
                Ok(MatrixModel::Multinomial { q })
            }
        }
    }
}

impl From<MatrixModel> for ScoreArg {
    fn from(m: MatrixModel) -> Self {
        match m {
            MatrixModel::Score(s) => ScoreArg::Scalar(s),
            MatrixModel::Multinomial { q } => ScoreArg::Multinomial { q: Some(q) },
        }
    }
}
