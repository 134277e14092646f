use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{IbpError, Result};
use crate::rng::SeedLineage;
use crate::verify::checks::{self, finalize, CheckRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    LevyClosedForms,
    PairPmfs,
    BuffetCounts,
    GammaPoissonTotals,
    PosteriorCoherence,
    MultivarCollapse,
    Explosivity,
    All,
}

impl Suite {
    pub const NAMED: [Suite; 7] = [
        Suite::LevyClosedForms,
        Suite::PairPmfs,
        Suite::BuffetCounts,
        Suite::GammaPoissonTotals,
        Suite::PosteriorCoherence,
        Suite::MultivarCollapse,
        Suite::Explosivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LevyClosedForms => "levy-closed-forms",
            Suite::PairPmfs => "pair-pmfs",
            Suite::BuffetCounts => "buffet-counts",
            Suite::GammaPoissonTotals => "gamma-poisson-totals",
            Suite::PosteriorCoherence => "posterior-coherence",
            Suite::MultivarCollapse => "multivar-collapse",
            Suite::Explosivity => "explosivity",
            Suite::All => "all",
        }
    }

    fn index(self) -> u64 {
        Suite::NAMED.iter().position(|s| *s == self).unwrap_or(Suite::NAMED.len()) as u64
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = IbpError;
    fn from_str(s: &str) -> Result<Self> {
        Suite::NAMED
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| IbpError::UnknownSuite(s.to_string()))
    }
}

impl Serialize for Suite {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TestReport {
    pub suite: Suite,
    pub seed: u64,
    pub budget: u64,
    pub pass: bool,
    pub checks: Vec<CheckRecord>,
}

impl TestReport {
    /// Plain-text table, one line per check.
    pub fn table(&self) -> String {
        let mut out = format!("suite {} (seed {}, budget {})\n", self.suite, self.seed, self.budget);
        for c in &self.checks {
            let cmp = match c.measure {
                checks::Measure::PValue => "p ≥",
                checks::Measure::Exact => "holds",
                _ => "≤",
            };
            let shown = if c.measure == checks::Measure::Exact { String::new() } else { format!("{:.3e} {cmp} {:.1e}", c.value, c.threshold) };
            out.push_str(&format!(
                "{:4}  {:<72} {}{}\n",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                shown,
                c.note.as_ref().map(|n| format!("  [{n}]")).unwrap_or_default()
            ));
        }
        out.push_str(if self.pass { "PASS\n" } else { "FAIL\n" });
        out
    }
}

type Job = Box<dyn Fn(u64, u64) -> Result<Vec<CheckRecord>> + Send + Sync>;

fn jobs(suite: Suite) -> Vec<(&'static str, Job)> {
    match suite {
        Suite::LevyClosedForms => vec![
            ("closed-form exponents", Box::new(|_, _| checks::closed_form_exponents())),
            ("transform round trip", Box::new(|_, _| checks::transform_round_trip())),
        ],
        Suite::PairPmfs => vec![("pair pmfs", Box::new(checks::pair_pmfs))],
        Suite::BuffetCounts => vec![
            ("new-dish counts", Box::new(checks::ibp_new_dish_counts)),
            ("oracle equivalence", Box::new(|s, b| checks::oracle_equivalence(s, b, 1e-5))),
        ],
        Suite::GammaPoissonTotals => vec![("gamma-Poisson totals", Box::new(checks::gamma_poisson_totals))],
        Suite::PosteriorCoherence => vec![
            ("take probability", Box::new(checks::take_probability)),
            ("marginal coherence", Box::new(checks::marginal_coherence)),
            ("log-marginal paths", Box::new(|s, _| checks::log_marginal_paths(s))),
        ],
        Suite::MultivarCollapse => vec![("multivariate collapse", Box::new(checks::multivar_collapse))],
        Suite::Explosivity => vec![("explosivity", Box::new(|_, _| checks::explosivity()))],
        Suite::All => Vec::new(),
    }
}

/// Run a battery. `budget` is the Monte Carlo sample size per check.
pub fn run_suite(suite: Suite, seed: u64, budget: u64) -> Result<TestReport> {
    if budget == 0 {
        return Err(IbpError::Config("budget must be positive".into()));
    }
    let suites: Vec<Suite> = if suite == Suite::All { Suite::NAMED.to_vec() } else { vec![suite] };
    let lineage = SeedLineage::new(seed);
    let mut checks = Vec::new();
    for s in suites {
        let node = lineage.child(s.index());
        let mut recs: Vec<CheckRecord> = jobs(s)
            .into_par_iter()
            .enumerate()
            .map(|(i, (name, job))| match job(node.child(i as u64).seed(), budget) {
                Ok(r) => r,
                Err(e) => vec![CheckRecord::failed(format!("{s}: {name}"), &e)],
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        finalize(&mut recs);
        for r in &mut recs {
            if suite == Suite::All {
                r.name = format!("[{s}] {}", r.name);
            }
        }
        checks.extend(recs);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(TestReport { suite, seed, budget, pass, checks })
}
