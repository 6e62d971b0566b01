//! Mediator subsets that maximize the concurrent NIE: Top-k and Greedy.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;

use crate::effects;
use crate::error::{Error, Result};
use crate::mediation::{EffectKind, Mediator, Reading, Runner, Subject};

/// Set function being maximized.
pub trait SetObjective: Sync {
    fn value(&self, set: &[Mediator]) -> Result<f64>;
}

impl<F> SetObjective for F
where
    F: Fn(&[Mediator]) -> Result<f64> + Sync,
{
    fn value(&self, set: &[Mediator]) -> Result<f64> {
        self(set)
    }
}

/// Population NIE of a set over units prepared once up front.
pub struct NieObjective<'a, S: Subject> {
    runner: &'a Runner,
    subject: &'a S,
    prepared: Vec<S::Prepared>,
}

impl<'a, S: Subject> NieObjective<'a, S> {
    pub fn new(runner: &'a Runner, subject: &'a S) -> Result<Self> {
        Ok(Self {
            runner,
            subject,
            prepared: runner.prepare_all(subject)?,
        })
    }

    /// NIE of several sets in one pass over the units.
    pub fn values(&self, sets: &[Vec<Mediator>]) -> Result<Vec<f64>> {
        let eval = self
            .runner
            .evaluate_prepared(self.subject, &self.prepared, sets, &[EffectKind::Nie])?;
        Ok(eval.nie.iter().map(|v| eval.population(v)).collect())
    }
}

impl<S: Subject> SetObjective for NieObjective<'_, S> {
    fn value(&self, set: &[Mediator]) -> Result<f64> {
        let included: Vec<usize> = (0..self.subject.n_units()).filter(|&u| self.subject.included(u)).collect();
        let per_unit = included
            .par_iter()
            .map(|&u| {
                let p = &self.prepared[u];
                let null = self.subject.baseline(u, p, Reading::Null);
                let cf = self.subject.outcome(u, p, Reading::Null, set)?;
                effects::unit_effect(self.runner.metric(), &cf, &null)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(effects::mean(&per_unit))
    }
}

/// The `k` mediators with the largest effect, in descending order; ties go to the
/// lowest `(layer, index)`.
pub fn select_top_k(effects: &[(Mediator, f64)], k: usize) -> Result<Vec<Mediator>> {
    if k > effects.len() {
        return Err(Error::Precondition(format!("k = {k} exceeds the {} mediators", effects.len())));
    }
    let mut ranked = effects.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(k).map(|(m, _)| m).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveStep {
    pub added: Vec<Mediator>,
    /// Objective of the union of everything added so far.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionCurve {
    pub steps: Vec<CurveStep>,
    /// Objective of the full mediator set.
    pub reference: f64,
}

impl SelectionCurve {
    pub fn chosen(&self) -> Vec<Mediator> {
        self.steps.iter().flat_map(|s| s.added.iter().copied()).collect()
    }

    /// Rows `step, mediator, cumulative_nie, reference`; step 0 is the empty set.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "mediator", "cumulative_nie", "reference"])?;
        out.write_record(["0".to_string(), String::new(), "0".to_string(), self.reference.to_string()])?;
        for (i, s) in self.steps.iter().enumerate() {
            let names: Vec<String> = s.added.iter().map(Mediator::to_string).collect();
            out.write_record([(i + 1).to_string(), names.join(" "), s.value.to_string(), self.reference.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<selection curve>", e))?;
        Ok(())
    }
}

/// Greedy maximization: each step adds the mediator with the largest marginal
/// gain, lowest `(layer, index)` on ties. `candidate_limit` restricts each step to
/// the best remaining mediators by `individual` effect.
pub fn select_greedy(
    objective: &dyn SetObjective,
    universe: &[Mediator],
    budget: usize,
    individual: Option<(&[(Mediator, f64)], usize)>,
) -> Result<SelectionCurve> {
    if budget > universe.len() {
        return Err(Error::Precondition(format!("budget {budget} exceeds the {} mediators", universe.len())));
    }
    let distinct: BTreeSet<Mediator> = universe.iter().copied().collect();
    if distinct.len() != universe.len() {
        return Err(Error::Precondition("duplicate mediators".into()));
    }
    let reference = objective.value(universe)?;
    let mut chosen: Vec<Mediator> = Vec::with_capacity(budget);
    let mut remaining = distinct;
    let mut steps = Vec::with_capacity(budget);
    for _ in 0..budget {
        let pool: Vec<Mediator> = match individual {
            Some((effects, m)) => {
                let ranked: Vec<(Mediator, f64)> = effects.iter().filter(|(x, _)| remaining.contains(x)).copied().collect();
                select_top_k(&ranked, m.min(ranked.len()))?
            }
            None => remaining.iter().copied().collect(),
        };
        let values: Vec<f64> = pool
            .par_iter()
            .map(|&m| {
                let mut set = chosen.clone();
                set.push(m);
                objective.value(&set)
            })
            .collect::<Result<_>>()?;
        let (best, value) = pool
            .iter()
            .zip(&values)
            .fold(None::<(Mediator, f64)>, |acc, (&m, &v)| match acc {
                Some((bm, bv)) if bv > v || (bv == v && bm < m) => Some((bm, bv)),
                _ => Some((m, v)),
            })
            .ok_or_else(|| Error::Precondition("no candidates left".into()))?;
        remaining.remove(&best);
        chosen.push(best);
        steps.push(CurveStep { added: vec![best], value });
    }
    Ok(SelectionCurve { steps, reference })
}

/// Top-k curve: mediators ranked by individual effect, added `block_size` at a time
/// for `n_blocks` steps.
pub fn top_k_curve(
    values: impl Fn(&[Vec<Mediator>]) -> Result<Vec<f64>>,
    individual: &[(Mediator, f64)],
    block_size: usize,
    n_blocks: usize,
) -> Result<SelectionCurve> {
    if block_size == 0 {
        return Err(Error::Precondition("block size must be positive".into()));
    }
    let k = block_size
        .checked_mul(n_blocks)
        .filter(|&k| k <= individual.len())
        .ok_or_else(|| Error::Precondition(format!("{n_blocks} blocks of {block_size} exceed the {} mediators", individual.len())))?;
    let ranked = select_top_k(individual, k)?;
    let universe: Vec<Mediator> = individual.iter().map(|(m, _)| *m).collect();
    let mut sets: Vec<Vec<Mediator>> = (1..=n_blocks).map(|b| ranked[..b * block_size].to_vec()).collect();
    sets.push(universe);
    let mut v = values(&sets)?;
    let reference = v.pop().expect("reference set evaluated");
    let steps = v
        .into_iter()
        .enumerate()
        .map(|(b, value)| CurveStep {
            added: ranked[b * block_size..(b + 1) * block_size].to_vec(),
            value,
        })
        .collect();
    Ok(SelectionCurve { steps, reference })
}
