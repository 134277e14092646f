use std::collections::BTreeMap;

use crate::buffet::BuffetState;
use crate::special::ln_factorial;

/// The unordered multiset of per-dish score columns, atoms forgotten.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    customers: u64,
    columns: Vec<Vec<u64>>,
}

impl Pattern {
    /// Build from full columns (one score per customer); all-zero columns are dropped.
    pub fn from_columns(customers: u64, columns: impl IntoIterator<Item = Vec<u64>>) -> Self {
        let mut columns: Vec<Vec<u64>> = columns.into_iter().filter(|c| c.iter().any(|&a| a > 0)).collect();
        debug_assert!(columns.iter().all(|c| c.len() as u64 == customers));
        columns.sort();
        Pattern { customers, columns }
    }

    pub fn from_state(st: &BuffetState) -> Self {
        let m = st.customers();
        let cols = st.dishes().iter().map(|d| (1..=m).map(|i| d.score_of(i)).collect::<Vec<_>>());
        Pattern::from_columns(m, cols)
    }

    pub fn customers(&self) -> u64 {
        self.customers
    }

    pub fn columns(&self) -> &[Vec<u64>] {
        &self.columns
    }

    pub fn num_dishes(&self) -> usize {
        self.columns.len()
    }

    /// `Σ ln(n!)` over the multiplicities of identical columns: the log of the
    /// number of dish labelings that collapse onto this pattern.
    pub fn ln_multiplicity(&self) -> f64 {
        let mut counts: BTreeMap<&Vec<u64>, u64> = BTreeMap::new();
        for c in &self.columns {
            *counts.entry(c).or_default() += 1;
        }
        counts.values().map(|&n| ln_factorial(n)).sum()
    }
}
