//! Dolan-More performance profiles over a problems × solvers error table.
//!
//! With `r(p, s) = t(p, s) / min_s t(p, s)` the profile of solver `s` is
//! `ρ(τ, s) = |{p : r(p, s) ≤ τ}| / |P|`. A missing entry counts as an
//! infinite ratio, so its problem never enters that solver's profile.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub problems: Vec<String>,
    pub solvers: Vec<String>,
    /// Row-major `problems × solvers`; `None` where a solver did not run.
    pub values: Vec<Option<f64>>,
}

impl ErrorTable {
    pub fn new(problems: Vec<String>, solvers: Vec<String>, values: Vec<Option<f64>>) -> Result<Self> {
        if problems.is_empty() || solvers.is_empty() {
            return Err(Error::EmptyInput("error table".into()));
        }
        if values.len() != problems.len() * solvers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} problems × {} solvers",
                values.len(),
                problems.len(),
                solvers.len()
            )));
        }
        Ok(Self {
            problems,
            solvers,
            values,
        })
    }

    pub fn get(&self, problem: usize, solver: usize) -> Option<f64> {
        self.values[problem * self.solvers.len() + solver]
    }

    /// Final-round error rate `1 − accuracy` per (seed, strategy).
    ///
    /// Problems are the seeds in ascending order and solvers the strategies
    /// in order of first appearance.
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("run records".into()));
        }
        let mut solvers: Vec<String> = Vec::new();
        let mut cells: BTreeMap<u64, BTreeMap<usize, f64>> = BTreeMap::new();
        for rec in records {
            let s = match solvers.iter().position(|x| *x == rec.strategy) {
                Some(s) => s,
                None => {
                    solvers.push(rec.strategy.clone());
                    solvers.len() - 1
                }
            };
            let final_round = rec
                .rounds
                .last()
                .ok_or_else(|| Error::EmptyInput(format!("record {} / seed {}", rec.strategy, rec.seed)))?;
            cells.entry(rec.seed).or_default().insert(s, 1.0 - final_round.test_accuracy);
        }
        let problems = cells.keys().map(|s| format!("seed-{s}")).collect();
        let values = cells
            .values()
            .flat_map(|row| (0..solvers.len()).map(move |s| row.get(&s).copied()))
            .collect();
        Self::new(problems, solvers, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurves {
    pub solvers: Vec<String>,
    /// Sorted distinct finite ratios; always starts at 1.
    pub taus: Vec<f64>,
    /// `rho[s][t]` is the profile of solver `s` at `taus[t]`.
    pub rho: Vec<Vec<f64>>,
    /// `ratios[p][s]`, `None` (an infinite ratio) where the entry is missing.
    pub ratios: Vec<Vec<Option<f64>>>,
}

impl ProfileCurves {
    pub fn rho_at(&self, solver: usize, tau: f64) -> f64 {
        let hits = self.ratios.iter().filter(|row| row[solver].is_some_and(|r| r <= tau)).count();
        hits as f64 / self.ratios.len() as f64
    }

    /// Largest finite ratio of the solver, where its profile reaches its final value.
    pub fn max_ratio(&self, solver: usize) -> f64 {
        self.ratios
            .iter()
            .filter_map(|row| row[solver])
            .fold(1.0, f64::max)
    }
}

pub fn dolan_more(table: &ErrorTable) -> Result<ProfileCurves> {
    let ns = table.solvers.len();
    let mut ratios = Vec::with_capacity(table.problems.len());
    for (p, name) in table.problems.iter().enumerate() {
        let row: Vec<Option<f64>> = (0..ns).map(|s| table.get(p, s)).collect();
        for (s, v) in row.iter().enumerate() {
            if let Some(v) = *v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositiveError {
                        problem: name.clone(),
                        solver: table.solvers[s].clone(),
                        value: v,
                    });
                }
            }
        }
        let best = row
            .iter()
            .flatten()
            .copied()
            .reduce(f64::min)
            .ok_or_else(|| Error::EmptyInput(format!("no solver ran on problem {name}")))?;
        ratios.push(row.iter().map(|v| v.map(|v| v / best)).collect::<Vec<_>>());
    }
    let mut taus: Vec<f64> = ratios.iter().flatten().flatten().copied().collect();
    taus.push(1.0);
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut curves = ProfileCurves {
        solvers: table.solvers.clone(),
        taus,
        rho: Vec::new(),
        ratios,
    };
    curves.rho = (0..ns)
        .map(|s| curves.taus.iter().map(|&t| curves.rho_at(s, t)).collect())
        .collect();
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two() -> ErrorTable {
        ErrorTable::new(
            vec!["p1".into(), "p2".into()],
            vec!["A".into(), "B".into()],
            vec![Some(0.10), Some(0.12), Some(0.20), Some(0.18)],
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_table() {
        let pc = dolan_more(&two_by_two()).unwrap();
        assert_eq!(pc.rho_at(0, 1.0), 0.5);
        assert_eq!(pc.rho_at(1, 1.0), 0.5);
        assert_eq!(pc.rho_at(0, 1.15), 1.0);
        assert_eq!(pc.rho_at(1, 1.15), 0.5);
        assert_eq!(pc.rho_at(1, 1.2), 1.0);
    }

    #[test]
    fn single_solver_is_always_best() {
        let t = ErrorTable::new(vec!["a".into(), "b".into()], vec!["only".into()], vec![Some(0.3), Some(0.01)]).unwrap();
        let pc = dolan_more(&t).unwrap();
        assert_eq!(pc.taus, vec![1.0]);
        assert!([1.0, 1.5, 100.0].iter().all(|&tau| pc.rho_at(0, tau) == 1.0));
    }

    #[test]
    fn zero_error_is_rejected() {
        let t = ErrorTable::new(vec!["a".into()], vec!["x".into(), "y".into()], vec![Some(0.0), Some(0.1)]).unwrap();
        assert!(matches!(dolan_more(&t), Err(Error::NonPositiveError { value, .. }) if value == 0.0));
    }

    #[test]
    fn missing_entries_never_count() {
        let t = ErrorTable::new(vec!["a".into(), "b".into()], vec!["x".into(), "y".into()], vec![Some(0.1), None, Some(0.2), Some(0.1)]).unwrap();
        let pc = dolan_more(&t).unwrap();
        assert_eq!(pc.rho_at(1, 1e9), 0.5);
        assert_eq!(pc.rho_at(0, 2.0), 1.0);
    }

    proptest! {
        #[test]
        fn profiles_are_cdfs(values in proptest::collection::vec(1e-3f64..1.0, 12)) {
            let t = ErrorTable::new(
                (0..4).map(|p| format!("p{p}")).collect(),
                (0..3).map(|s| format!("s{s}")).collect(),
                values.into_iter().map(Some).collect(),
            ).unwrap();
            let pc = dolan_more(&t).unwrap();
            let mut best_at_one = 0.0;
            for s in 0..3 {
                prop_assert!(pc.rho[s].windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(pc.rho_at(s, pc.max_ratio(s)), 1.0);
                best_at_one += pc.rho_at(s, 1.0) * 4.0;
            }
            prop_assert!(best_at_one >= 4.0);
            let back: ProfileCurves = serde_json::from_str(&serde_json::to_string(&pc).unwrap()).unwrap();
            prop_assert_eq!(back, pc);
        }
    }
}
