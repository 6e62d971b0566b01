//! Intervention experiments: record traces under the null and intervened
//! readings, patch mediator values across them, and aggregate unit effects.
//!
//! Work is parallel over units and sequential over mediator sets within a unit,
//! so a unit's traces are recorded once and dropped when its loop finishes.
//! Results are gathered in unit order, which makes every output independent of
//! the worker count.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::{Orientation, Pronoun, TemplateExample, WinogradExample};
use crate::effects::{self, CandidateDistribution, Metric};
use crate::error::{Error, Result};
use crate::model::{InterventionSpec, MediatorCoord, Model, Trace};
use crate::tokenizer::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reading {
    Null,
    Intervened,
}

impl Reading {
    pub fn opposite(self) -> Self {
        match self {
            Reading::Null => Reading::Intervened,
            Reading::Intervened => Reading::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectKind {
    Nie,
    Nde,
}

/// A mediator independent of position; the unit decides where it is read.
///
/// Ordering is by kind, then layer, then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mediator {
    Neuron { layer: usize, neuron: usize },
    Head { layer: usize, head: usize },
}

impl Mediator {
    pub fn kind(&self) -> &'static str {
        match self {
            Mediator::Neuron { .. } => "neuron",
            Mediator::Head { .. } => "head",
        }
    }

    pub fn layer(&self) -> usize {
        match *self {
            Mediator::Neuron { layer, .. } | Mediator::Head { layer, .. } => layer,
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            Mediator::Neuron { neuron, .. } => neuron,
            Mediator::Head { head, .. } => head,
        }
    }

    fn coords(&self, site: &Range<usize>) -> impl Iterator<Item = MediatorCoord> + '_ {
        let m = *self;
        site.clone().map(move |position| match m {
            Mediator::Neuron { layer, neuron } => MediatorCoord::Neuron { layer, position, neuron },
            Mediator::Head { layer, head } => MediatorCoord::Head { layer, head, position },
        })
    }
}

impl fmt::Display for Mediator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.kind(), self.layer(), self.index())
    }
}

impl FromStr for Mediator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad mediator {s:?}, expected kind:layer:index"));
        let mut it = s.split(':');
        let (Some(kind), Some(layer), Some(index), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        let layer = layer.parse().map_err(|_| bad())?;
        let index = index.parse().map_err(|_| bad())?;
        match kind {
            "neuron" => Ok(Mediator::Neuron { layer, neuron: index }),
            "head" => Ok(Mediator::Head { layer, head: index }),
            _ => Err(bad()),
        }
    }
}

/// Every neuron in `layers`.
pub fn all_neurons(layers: &[usize], d_model: usize) -> Vec<Mediator> {
    layers
        .iter()
        .flat_map(|&layer| (0..d_model).map(move |neuron| Mediator::Neuron { layer, neuron }))
        .collect()
}

/// Every `(layer, head)` pair from the given 1-based layers and heads.
pub fn all_heads(layers: &[usize], heads: &[usize]) -> Vec<Mediator> {
    layers
        .iter()
        .flat_map(|&layer| heads.iter().map(move |&head| Mediator::Head { layer, head }))
        .collect()
}

/// One analysis unit as seen by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub label: String,
    pub null_ids: Vec<u32>,
    pub intervened_ids: Vec<u32>,
    /// Token span holding the mediators: the profession word or the pronoun.
    pub site: Range<usize>,
    pub anti_ids: Vec<u32>,
    pub stereo_ids: Vec<u32>,
    /// Whether the unit counts towards population effects.
    pub included: bool,
    pub external_bias: f64,
    pub orientation: Option<Orientation>,
}

impl Unit {
    pub fn new(
        label: String,
        null_ids: Vec<u32>,
        intervened_ids: Vec<u32>,
        site: Range<usize>,
        anti_ids: Vec<u32>,
        stereo_ids: Vec<u32>,
    ) -> Result<Self> {
        if null_ids.len() != intervened_ids.len() {
            return Err(Error::Precondition(format!(
                "{label}: null prompt has {} tokens but the intervened prompt has {}",
                null_ids.len(),
                intervened_ids.len()
            )));
        }
        if site.is_empty() || site.end > null_ids.len() {
            return Err(Error::Precondition(format!("{label}: site {site:?} outside the prompt")));
        }
        if anti_ids.is_empty() || stereo_ids.is_empty() {
            return Err(Error::Precondition(format!("{label}: empty candidate")));
        }
        let outside_differs = (0..null_ids.len()).any(|i| !site.contains(&i) && null_ids[i] != intervened_ids[i]);
        if outside_differs {
            return Err(Error::Precondition(format!("{label}: prompts differ outside the site")));
        }
        Ok(Self {
            label,
            null_ids,
            intervened_ids,
            site,
            anti_ids,
            stereo_ids,
            included: true,
            external_bias: f64::NAN,
            orientation: None,
        })
    }

    /// Set-gender unit; definitional professions are traced but not aggregated.
    pub fn from_template(ex: &TemplateExample, vocab: &Vocabulary, null_intervention: bool) -> Result<Self> {
        let intervened = if null_intervention { ex.apply_null() } else { ex.apply_set_gender(vocab)? };
        if intervened.site != ex.prompt.site {
            return Err(Error::Precondition(format!("{}: set-gender moves the profession site", ex.prompt.text)));
        }
        let mut unit = Unit::new(
            ex.prompt.text.clone(),
            ex.prompt.ids.clone(),
            intervened.ids,
            ex.prompt.site.clone(),
            ex.anti_stereotypical_ids.clone(),
            ex.stereotypical_ids.clone(),
        )?;
        unit.included = !ex.profession.is_definitional;
        unit.external_bias = ex.profession.external_bias();
        unit.orientation = Some(ex.orientation());
        Ok(unit)
    }

    /// Swap-gender unit with mediators on the pronoun.
    pub fn from_winograd(ex: &WinogradExample, vocab: &Vocabulary, null_intervention: bool) -> Result<Self> {
        let intervened = if null_intervention { ex.prompt.clone() } else { ex.apply_swap_gender(vocab)? };
        if intervened.site != ex.prompt.site {
            return Err(Error::Precondition(format!("{}: swapped pronoun changes length", ex.shared_prompt)));
        }
        let mut unit = Unit::new(
            ex.shared_prompt.clone(),
            ex.prompt.ids.clone(),
            intervened.ids,
            ex.prompt.site.clone(),
            ex.anti_stereotypical_ids.clone(),
            ex.stereotypical_ids.clone(),
        )?;
        unit.external_bias = ex.occupation_stats.log_ratio();
        unit.orientation = Some(match ex.pronoun {
            Pronoun::She => Orientation::Female,
            Pronoun::He => Orientation::Male,
        });
        Ok(unit)
    }

    pub fn ids(&self, reading: Reading) -> &[u32] {
        match reading {
            Reading::Null => &self.null_ids,
            Reading::Intervened => &self.intervened_ids,
        }
    }
}

/// Anything whose outcome can be measured under input and mediator interventions.
pub trait Subject: Sync {
    type Prepared: Send + Sync;

    fn n_units(&self) -> usize;

    fn included(&self, unit: usize) -> bool;

    /// Records whatever a unit's interventions need (traces, baseline outcomes).
    fn prepare(&self, unit: usize) -> Result<Self::Prepared>;

    fn baseline(&self, unit: usize, prepared: &Self::Prepared, reading: Reading) -> CandidateDistribution;

    /// Outcome with the input under `input` and `mediators` set to their
    /// values under the opposite reading.
    fn outcome(
        &self,
        unit: usize,
        prepared: &Self::Prepared,
        input: Reading,
        mediators: &[Mediator],
    ) -> Result<CandidateDistribution>;
}

/// A recorded forward pass and its candidate outcome.
#[derive(Debug)]
pub struct Recorded {
    pub trace: Trace,
    pub dist: CandidateDistribution,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub null: Arc<Recorded>,
    pub intervened: Arc<Recorded>,
}

impl Prepared {
    pub fn get(&self, reading: Reading) -> &Recorded {
        match reading {
            Reading::Null => &self.null,
            Reading::Intervened => &self.intervened,
        }
    }
}

type CacheKey = (Vec<u32>, Vec<u32>, Vec<u32>);

/// Language model plus corpus. Recordings of prompts that occur in several
/// units (e.g. one set-gender prompt per template) are shared.
pub struct LmSubject<'m> {
    model: &'m Model,
    units: Vec<Unit>,
    repeated: HashSet<CacheKey>,
    cache: Mutex<HashMap<CacheKey, Arc<Recorded>>>,
}

impl<'m> LmSubject<'m> {
    pub fn new(model: &'m Model, units: Vec<Unit>) -> Self {
        let mut seen = HashSet::new();
        let mut repeated = HashSet::new();
        for u in &units {
            for r in [Reading::Null, Reading::Intervened] {
                let key = (u.ids(r).to_vec(), u.anti_ids.clone(), u.stereo_ids.clone());
                if !seen.insert(key.clone()) {
                    repeated.insert(key);
                }
            }
        }
        Self {
            model,
            units,
            repeated,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    fn record(&self, unit: &Unit, reading: Reading) -> Result<Arc<Recorded>> {
        let key = (unit.ids(reading).to_vec(), unit.anti_ids.clone(), unit.stereo_ids.clone());
        let shared = self.repeated.contains(&key);
        if shared {
            if let Some(r) = self.cache.lock().expect("trace cache poisoned").get(&key) {
                return Ok(Arc::clone(r));
            }
        }
        let ids = unit.ids(reading);
        let empty = InterventionSpec::new();
        let (probs, trace) = self.model.forward(ids, &empty, true)?;
        let dist = if unit.anti_ids.len() == 1 && unit.stereo_ids.len() == 1 {
            effects::distribution_from_probs(&probs, &unit.anti_ids, &unit.stereo_ids)?
        } else {
            effects::score_candidates(self.model, ids, &unit.anti_ids, &unit.stereo_ids, &empty)?
        };
        let rec = Arc::new(Recorded {
            trace: trace.expect("trace requested"),
            dist,
        });
        if shared {
            self.cache
                .lock()
                .expect("trace cache poisoned")
                .insert(key, Arc::clone(&rec));
        }
        Ok(rec)
    }

    /// Intervention spec copying `mediators` at the unit's site out of `source`.
    pub fn patch_spec(&self, unit: usize, source: &Trace, mediators: &[Mediator]) -> Result<InterventionSpec> {
        let site = &self.units[unit].site;
        let mut spec = InterventionSpec::new();
        for m in mediators {
            for c in m.coords(site) {
                spec.copy_from_trace(source, c)?;
            }
        }
        Ok(spec)
    }
}

impl Subject for LmSubject<'_> {
    type Prepared = Prepared;

    fn n_units(&self) -> usize {
        self.units.len()
    }

    fn included(&self, unit: usize) -> bool {
        self.units[unit].included
    }

    fn prepare(&self, unit: usize) -> Result<Prepared> {
        let u = &self.units[unit];
        let ctx = |e: Error| e.context(format!("unit {unit} ({})", u.label));
        Ok(Prepared {
            null: self.record(u, Reading::Null).map_err(ctx)?,
            intervened: self.record(u, Reading::Intervened).map_err(ctx)?,
        })
    }

    fn baseline(&self, _unit: usize, prepared: &Prepared, reading: Reading) -> CandidateDistribution {
        prepared.get(reading).dist
    }

    fn outcome(&self, unit: usize, prepared: &Prepared, input: Reading, mediators: &[Mediator]) -> Result<CandidateDistribution> {
        let u = &self.units[unit];
        let spec = self.patch_spec(unit, &prepared.get(input.opposite()).trace, mediators)?;
        effects::score_candidates(self.model, u.ids(input), &u.anti_ids, &u.stereo_ids, &spec)
            .map_err(|e| e.context(format!("unit {unit} ({})", u.label)))
    }
}

/// Metric plus the worker pool all experiments run on.
pub struct Runner {
    metric: Metric,
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(metric: Metric, workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Precondition("need at least one worker".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
        Ok(Self { metric, pool })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` inside the worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Prepares every unit up front, for objectives evaluated many times.
    pub fn prepare_all<S: Subject>(&self, subject: &S) -> Result<Vec<S::Prepared>> {
        self.install(|| (0..subject.n_units()).into_par_iter().map(|u| subject.prepare(u)).collect())
    }

    /// Null and intervened outcomes of every unit, without keeping traces.
    pub fn baselines<S: Subject>(&self, subject: &S) -> Result<Vec<[CandidateDistribution; 2]>> {
        self.install(|| {
            (0..subject.n_units())
                .into_par_iter()
                .map(|u| {
                    let p = subject.prepare(u)?;
                    Ok([subject.baseline(u, &p, Reading::Null), subject.baseline(u, &p, Reading::Intervened)])
                })
                .collect()
        })
    }

    /// TE for every unit plus the requested effects of every mediator set.
    pub fn evaluate<S: Subject>(&self, subject: &S, sets: &[Vec<Mediator>], kinds: &[EffectKind]) -> Result<Evaluation> {
        let per_unit: Vec<UnitResult> = self.install(|| {
            (0..subject.n_units())
                .into_par_iter()
                .map(|u| {
                    let prepared = subject.prepare(u)?;
                    unit_results(subject, self.metric, u, &prepared, sets, kinds)
                })
                .collect::<Result<_>>()
        })?;
        Ok(Evaluation::gather(subject, self.metric, per_unit, sets.len(), kinds))
    }

    /// As `evaluate`, over units prepared with `prepare_all`.
    pub fn evaluate_prepared<S: Subject>(
        &self,
        subject: &S,
        prepared: &[S::Prepared],
        sets: &[Vec<Mediator>],
        kinds: &[EffectKind],
    ) -> Result<Evaluation> {
        let per_unit: Vec<UnitResult> = self.install(|| {
            prepared
                .par_iter()
                .enumerate()
                .map(|(u, p)| unit_results(subject, self.metric, u, p, sets, kinds))
                .collect::<Result<_>>()
        })?;
        Ok(Evaluation::gather(subject, self.metric, per_unit, sets.len(), kinds))
    }
}

struct UnitResult {
    te: f64,
    nie: Vec<f64>,
    nde: Vec<f64>,
    degenerate: bool,
}

fn unit_results<S: Subject>(
    subject: &S,
    metric: Metric,
    unit: usize,
    prepared: &S::Prepared,
    sets: &[Vec<Mediator>],
    kinds: &[EffectKind],
) -> Result<UnitResult> {
    let null = subject.baseline(unit, prepared, Reading::Null);
    let interv = subject.baseline(unit, prepared, Reading::Intervened);
    let mut degenerate = null.is_degenerate() || interv.is_degenerate();
    let te = effects::unit_effect(metric, &interv, &null)?;
    let mut out = UnitResult {
        te,
        nie: Vec::new(),
        nde: Vec::new(),
        degenerate: false,
    };
    for set in sets {
        for &kind in kinds {
            let input = match kind {
                EffectKind::Nie => Reading::Null,
                EffectKind::Nde => Reading::Intervened,
            };
            let cf = subject.outcome(unit, prepared, input, set)?;
            degenerate |= cf.is_degenerate();
            let v = effects::unit_effect(metric, &cf, &null)?;
            match kind {
                EffectKind::Nie => out.nie.push(v),
                EffectKind::Nde => out.nde.push(v),
            }
        }
    }
    out.degenerate = degenerate;
    Ok(out)
}

/// Unit-level effects of a batch of mediator sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metric: Metric,
    pub te: Vec<f64>,
    /// `nie[set][unit]`; empty when not requested.
    pub nie: Vec<Vec<f64>>,
    pub nde: Vec<Vec<f64>>,
    pub included: Vec<bool>,
    pub degenerate: Vec<bool>,
}

impl Evaluation {
    fn gather<S: Subject>(subject: &S, metric: Metric, per_unit: Vec<UnitResult>, n_sets: usize, kinds: &[EffectKind]) -> Self {
        let n = per_unit.len();
        let column = |want: bool| if want { vec![Vec::with_capacity(n); n_sets] } else { Vec::new() };
        let mut nie = column(kinds.contains(&EffectKind::Nie));
        let mut nde = column(kinds.contains(&EffectKind::Nde));
        let mut te = Vec::with_capacity(n);
        let mut degenerate = Vec::with_capacity(n);
        for r in per_unit {
            te.push(r.te);
            degenerate.push(r.degenerate);
            for (s, v) in r.nie.into_iter().enumerate() {
                nie[s].push(v);
            }
            for (s, v) in r.nde.into_iter().enumerate() {
                nde[s].push(v);
            }
        }
        Self {
            metric,
            te,
            nie,
            nde,
            included: (0..n).map(|u| subject.included(u)).collect(),
            degenerate,
        }
    }

    pub fn n_included(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    /// Values of included units, in unit order.
    pub fn included_values(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.included)
            .filter(|(_, &inc)| inc)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Population mean over included units.
    pub fn population(&self, values: &[f64]) -> f64 {
        effects::mean(&self.included_values(values))
    }

    pub fn population_sd(&self, values: &[f64]) -> f64 {
        effects::std_dev(&self.included_values(values))
    }

    pub fn te_population(&self) -> f64 {
        self.population(&self.te)
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Population effects of one mediator set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEffect {
    pub te: f64,
    pub effect: f64,
    pub sd: f64,
    pub n: usize,
    pub per_unit: Vec<f64>,
}

fn set_effect(eval: &Evaluation, values: &[f64]) -> SetEffect {
    SetEffect {
        te: eval.te_population(),
        effect: eval.population(values),
        sd: eval.population_sd(values),
        n: eval.n_included(),
        per_unit: values.to_vec(),
    }
}

/// Concurrent NIE of a neuron set at the profession site.
pub fn run_neuron_nie<S: Subject>(runner: &Runner, subject: &S, neurons: &[Mediator]) -> Result<SetEffect> {
    if let Some(m) = neurons.iter().find(|m| !matches!(m, Mediator::Neuron { .. })) {
        return Err(Error::Precondition(format!("{m} is not a neuron")));
    }
    let eval = runner.evaluate(subject, &[neurons.to_vec()], &[EffectKind::Nie])?;
    Ok(set_effect(&eval, &eval.nie[0]))
}

/// Concurrent NIE or NDE of a head set on the pronoun's attention rows.
pub fn run_attention_effects<S: Subject>(runner: &Runner, subject: &S, heads: &[Mediator], kind: EffectKind) -> Result<SetEffect> {
    if let Some(m) = heads.iter().find(|m| !matches!(m, Mediator::Head { .. })) {
        return Err(Error::Precondition(format!("{m} is not a head")));
    }
    let eval = runner.evaluate(subject, &[heads.to_vec()], &[kind])?;
    let values = match kind {
        EffectKind::Nie => &eval.nie[0],
        EffectKind::Nde => &eval.nde[0],
    };
    Ok(set_effect(&eval, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectRow {
    pub mediator: Mediator,
    pub te: f64,
    pub nde: Option<f64>,
    pub nie: Option<f64>,
    pub n: usize,
}

/// Per-mediator population effects of singleton interventions.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectMap {
    pub metric: Metric,
    pub rows: Vec<EffectRow>,
    pub evaluation: Evaluation,
}

pub const EFFECT_HEADER: [&str; 8] = ["kind", "layer", "index", "te", "nde", "nie", "n", "metric"];

impl EffectMap {
    /// Singleton effects of each mediator; mediators must be distinct.
    pub fn compute<S: Subject>(runner: &Runner, subject: &S, mediators: &[Mediator], kinds: &[EffectKind]) -> Result<Self> {
        let sets: Vec<Vec<Mediator>> = mediators.iter().map(|&m| vec![m]).collect();
        let evaluation = runner.evaluate(subject, &sets, kinds)?;
        Self::from_evaluation(mediators, evaluation)
    }

    /// Map over an evaluation whose first sets are the singletons of `mediators`.
    pub fn from_evaluation(mediators: &[Mediator], evaluation: Evaluation) -> Result<Self> {
        let distinct: HashSet<&Mediator> = mediators.iter().collect();
        if distinct.len() != mediators.len() {
            return Err(Error::Precondition("duplicate mediators".into()));
        }
        let n_sets = evaluation.nie.len().max(evaluation.nde.len());
        if n_sets < mediators.len() {
            return Err(Error::LengthMismatch(format!("{} mediators but {n_sets} evaluated sets", mediators.len())));
        }
        let te = evaluation.te_population();
        let n = evaluation.n_included();
        let rows = mediators
            .iter()
            .enumerate()
            .map(|(i, &mediator)| EffectRow {
                mediator,
                te,
                nde: evaluation.nde.get(i).map(|v| evaluation.population(v)),
                nie: evaluation.nie.get(i).map(|v| evaluation.population(v)),
                n,
            })
            .collect();
        Ok(Self {
            metric: evaluation.metric,
            rows,
            evaluation,
        })
    }

    pub fn nie(&self, mediator: &Mediator) -> Option<f64> {
        self.rows.iter().find(|r| &r.mediator == mediator).and_then(|r| r.nie)
    }

    /// `(mediator, NIE)` pairs for selection.
    pub fn nie_pairs(&self) -> Vec<(Mediator, f64)> {
        self.rows.iter().filter_map(|r| r.nie.map(|v| (r.mediator, v))).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(EFFECT_HEADER)?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &self.rows {
            out.write_record([
                r.mediator.kind().to_string(),
                r.mediator.layer().to_string(),
                r.mediator.index().to_string(),
                r.te.to_string(),
                opt(r.nde),
                opt(r.nie),
                r.n.to_string(),
                self.metric.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<effect map>", e))?;
        Ok(())
    }

    /// Dense grid of one effect, `rows × cols`, indexed by `(layer - first_layer, index)`.
    /// Mediators absent from the map are NaN.
    pub fn grid(&self, kind: EffectKind, first_layer: usize, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        let mut g = vec![vec![f64::NAN; cols]; rows];
        for r in &self.rows {
            let v = match kind {
                EffectKind::Nie => r.nie,
                EffectKind::Nde => r.nde,
            };
            let (l, i) = (r.mediator.layer(), r.mediator.index());
            if let Some(v) = v {
                if l >= first_layer && l - first_layer < rows && i < cols {
                    g[l - first_layer][i] = v;
                }
            }
        }
        g
    }
}

/// Writes a grid with a `layer` column followed by one column per index.
pub fn write_grid<W: Write>(w: W, first_layer: usize, grid: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let cols = grid.first().map_or(0, Vec::len);
    let mut header = vec!["layer".to_string()];
    header.extend((0..cols).map(|i| i.to_string()));
    out.write_record(&header)?;
    for (r, row) in grid.iter().enumerate() {
        let mut rec = vec![(first_layer + r).to_string()];
        rec.extend(row.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<grid>", e))?;
    Ok(())
}

/// Concurrent effect of one layer's mediator set.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEffect {
    pub layer: usize,
    pub mediators: Vec<Mediator>,
    pub effect: SetEffect,
}

/// All heads of each layer intervened on concurrently, one layer at a time.
pub fn per_layer_sweep_heads<S: Subject>(runner: &Runner, subject: &S, layers: &[usize], heads: &[usize]) -> Result<Vec<LayerEffect>> {
    let sets: Vec<Vec<Mediator>> = layers.iter().map(|&l| all_heads(&[l], heads)).collect();
    layer_effects(runner, subject, layers, sets)
}

/// Per layer, the top `top_percent`% of neurons by individual NIE, intervened on concurrently.
pub fn per_layer_sweep_neurons<S: Subject>(runner: &Runner, subject: &S, map: &EffectMap, top_percent: f64) -> Result<Vec<LayerEffect>> {
    if !(top_percent > 0.0 && top_percent <= 100.0) {
        return Err(Error::Precondition(format!("top percent {top_percent} outside (0, 100]")));
    }
    let mut layers: Vec<usize> = map.rows.iter().map(|r| r.mediator.layer()).collect();
    layers.dedup();
    let sets = layers
        .iter()
        .map(|&l| {
            let in_layer: Vec<(Mediator, f64)> = map
                .nie_pairs()
                .into_iter()
                .filter(|(m, _)| m.layer() == l)
                .collect();
            let k = ((in_layer.len() as f64 * top_percent / 100.0).ceil() as usize).clamp(1, in_layer.len());
            crate::selection::select_top_k(&in_layer, k)
        })
        .collect::<Result<Vec<_>>>()?;
    layer_effects(runner, subject, &layers, sets)
}

fn layer_effects<S: Subject>(runner: &Runner, subject: &S, layers: &[usize], sets: Vec<Vec<Mediator>>) -> Result<Vec<LayerEffect>> {
    let eval = runner.evaluate(subject, &sets, &[EffectKind::Nie])?;
    Ok(layers
        .iter()
        .zip(sets)
        .enumerate()
        .map(|(i, (&layer, mediators))| LayerEffect {
            layer,
            mediators,
            effect: set_effect(&eval, &eval.nie[i]),
        })
        .collect())
}

/// Sum of singleton NIEs against the concurrent NIE of the whole set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synergy {
    pub nie_sum: f64,
    pub nie_all: f64,
    /// `|NIE_sum − NIE_all| / |NIE_all|`; `None` when NIE_all is 0.
    pub relative_gap: Option<f64>,
}

pub fn nie_sum_vs_all(map: &EffectMap, nie_all: f64) -> Synergy {
    let singles: Vec<f64> = map.rows.iter().filter_map(|r| r.nie).collect();
    let nie_sum = effects::pairwise_sum(&singles);
    let relative_gap = (nie_all != 0.0).then(|| (nie_sum - nie_all).abs() / nie_all.abs());
    Synergy {
        nie_sum,
        nie_all,
        relative_gap,
    }
}

/// Ordinary least squares `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl LinearFit {
    pub fn ols(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch(format!("{} x values, {} y values", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::Precondition("a line fit needs at least two points".into()));
        }
        let (mx, my) = (effects::mean(x), effects::mean(y));
        let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
        let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
        let sxx = effects::pairwise_sum(&sxx);
        if sxx == 0.0 {
            return Err(Error::Precondition("x values are constant".into()));
        }
        let slope = effects::pairwise_sum(&sxy) / sxx;
        let intercept = my - slope * mx;
        let res: Vec<f64> = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).collect();
        let tot: Vec<f64> = y.iter().map(|b| (b - my).powi(2)).collect();
        let (ss_res, ss_tot) = (effects::pairwise_sum(&res), effects::pairwise_sum(&tot));
        let r_squared = if ss_tot == 0.0 {
            if ss_res == 0.0 { 1.0 } else { 0.0 }
        } else {
            1.0 - ss_res / ss_tot
        };
        Ok(Self {
            slope,
            intercept,
            r_squared,
            n: x.len(),
        })
    }
}

/// One `(mediator, unit)` point of the no-interaction check, both sides normalized by y_null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionPoint {
    pub mediator: Mediator,
    pub unit: usize,
    /// `(y_{null, z_x} − y_null) / y_null`, i.e. the singleton NIE.
    pub rhs: f64,
    /// `(y_x − y_{x, z_null}) / y_null`, i.e. TE minus the singleton NDE.
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub te: Vec<f64>,
    pub nde: Vec<f64>,
    pub nie: Vec<f64>,
    /// `TE − (NDE + NIE)` per unit for the whole mediator set.
    pub residual: Vec<f64>,
    pub included: Vec<bool>,
    pub points: Vec<InteractionPoint>,
    /// LHS regressed on RHS.
    pub fit: Option<LinearFit>,
}

impl Decomposition {
    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// TE against NDE + NIE of `mediators`, plus the per-mediator no-interaction points.
pub fn decomposition_check<S: Subject>(runner: &Runner, subject: &S, mediators: &[Mediator]) -> Result<Decomposition> {
    if runner.metric() != Metric::Original {
        return Err(Error::Precondition("the decomposition check uses the original metric".into()));
    }
    let mut sets = vec![mediators.to_vec()];
    sets.extend(mediators.iter().map(|&m| vec![m]));
    let eval = runner.evaluate(subject, &sets, &[EffectKind::Nie, EffectKind::Nde])?;
    let (te, nde, nie) = (eval.te.clone(), eval.nde[0].clone(), eval.nie[0].clone());
    let residual = (0..te.len()).map(|u| te[u] - (nde[u] + nie[u])).collect();
    let mut points = Vec::new();
    for (i, &m) in mediators.iter().enumerate() {
        for u in (0..te.len()).filter(|&u| eval.included[u]) {
            points.push(InteractionPoint {
                mediator: m,
                unit: u,
                rhs: eval.nie[i + 1][u],
                lhs: te[u] - eval.nde[i + 1][u],
            });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.rhs).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.lhs).collect();
    let fit = LinearFit::ols(&xs, &ys).ok();
    Ok(Decomposition {
        te,
        nde,
        nie,
        residual,
        included: eval.included,
        points,
        fit,
    })
}

/// Share of a layer's effective neuron indices that stay effective one layer up.
#[derive(Debug, Clone, PartialEq)]
pub struct StripeRow {
    pub layer: usize,
    pub effective: usize,
    pub aligned: f64,
    /// Mean over trials with the upper layer's indices permuted.
    pub randomized: f64,
    pub trials: usize,
}

/// `grid[l][k]` is the NIE of neuron `k` in layer `first_layer + l`. A neuron is
/// effective when it is among the top `fraction` of its layer.
pub fn stripe_analysis(grid: &[Vec<f64>], first_layer: usize, fraction: f64, trials: usize, seed: u64) -> Result<Vec<StripeRow>> {
    if grid.len() < 2 {
        return Err(Error::Precondition("stripe analysis needs at least two layers".into()));
    }
    let k = grid[0].len();
    if k == 0 || grid.iter().any(|r| r.len() != k) {
        return Err(Error::LengthMismatch("ragged or empty neuron grid".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Precondition(format!("fraction {fraction} outside (0, 1]")));
    }
    let count = ((k as f64 * fraction).ceil() as usize).clamp(1, k);
    let effective: Vec<Vec<bool>> = grid
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            let mut mask = vec![false; k];
            for &i in &idx[..count] {
                mask[i] = true;
            }
            mask
        })
        .collect();
    let overlap = |lo: &[bool], hi: &[bool], perm: Option<&[usize]>| {
        let hits = (0..k)
            .filter(|&i| lo[i] && perm.map_or(hi[i], |p| hi[p[i]]))
            .count();
        hits as f64 / count as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut rows = Vec::with_capacity(grid.len() - 1);
    for l in 0..grid.len() - 1 {
        let aligned = overlap(&effective[l], &effective[l + 1], None);
        let mut fractions = Vec::with_capacity(trials);
        for _ in 0..trials {
            perm.shuffle(&mut rng);
            fractions.push(overlap(&effective[l], &effective[l + 1], Some(&perm)));
        }
        rows.push(StripeRow {
            layer: first_layer + l,
            effective: count,
            aligned,
            randomized: if trials == 0 { f64::NAN } else { effects::mean(&fractions) },
            trials,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
    /// Pairs dropped for a non-positive TE or a non-finite value.
    pub flagged: usize,
}

/// Pearson correlation of ln(TE) with external bias.
pub fn correlate_effects(te: &[f64], external_bias: &[f64]) -> Result<Correlation> {
    if te.len() != external_bias.len() {
        return Err(Error::LengthMismatch(format!("{} effects, {} bias values", te.len(), external_bias.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = te
        .iter()
        .zip(external_bias)
        .filter(|(&t, &b)| t > 0.0 && t.is_finite() && b.is_finite())
        .map(|(&t, &b)| (b, t.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::Precondition(format!("correlation needs 3 usable pairs, got {}", xs.len())));
    }
    let r = pearson(&xs, &ys)?;
    Ok(Correlation {
        r,
        n: xs.len(),
        flagged: te.len() - xs.len(),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (effects::mean(x), effects::mean(y));
    let cov: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let vx: Vec<f64> = x.iter().map(|a| (a - mx).powi(2)).collect();
    let vy: Vec<f64> = y.iter().map(|b| (b - my).powi(2)).collect();
    let denom = (effects::pairwise_sum(&vx) * effects::pairwise_sum(&vy)).sqrt();
    if denom == 0.0 {
        return Err(Error::Precondition("correlation of a constant series".into()));
    }
    Ok(effects::pairwise_sum(&cov) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mediator_order_and_text() {
        let a = Mediator::Head { layer: 1, head: 3 };
        let b = Mediator::Head { layer: 2, head: 0 };
        assert!(a < b);
        assert_eq!(a.to_string(), "head:1:3");
        assert_eq!("neuron:0:7".parse::<Mediator>().unwrap(), Mediator::Neuron { layer: 0, neuron: 7 });
        assert!("head:1".parse::<Mediator>().is_err());
    }

    #[test]
    fn perfect_fit() {
        let x = [0.1, -0.2, 0.5, 0.9];
        let f = LinearFit::ols(&x, &x).unwrap();
        assert_eq!((f.slope, f.intercept, f.r_squared), (1.0, 0.0, 1.0));
        assert!(LinearFit::ols(&[1.0, 1.0], &[0.0, 2.0]).is_err());
    }

    #[test]
    fn correlation_of_exponential_is_one() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 / 3.0 - 1.0).collect();
        let te: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let c = correlate_effects(&te, &x).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        let c = correlate_effects(&[1.0, 2.0, -1.0, 3.0], &[0.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!((c.n, c.flagged), (3, 1));
        assert!(correlate_effects(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn stripes_on_identical_layers() {
        let row: Vec<f64> = (0..30).map(|i| ((i * 7) % 30) as f64).collect();
        let grid = vec![row.clone(), row.clone(), row];
        let s = stripe_analysis(&grid, 0, 0.1, 20, 3).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|r| r.aligned == 1.0 && r.effective == 3));
        assert!(s[0].randomized < 1.0);
        assert!(stripe_analysis(&grid[..1], 0, 0.1, 1, 0).is_err());
    }

    #[test]
    fn unit_rejects_edits_outside_site() {
        let ok = Unit::new("u".into(), vec![1, 2, 3], vec![1, 5, 3], 1..2, vec![7], vec![8]);
        assert!(ok.is_ok());
        assert!(Unit::new("u".into(), vec![1, 2, 3], vec![4, 5, 3], 1..2, vec![7], vec![8]).is_err());
        assert!(Unit::new("u".into(), vec![1, 2, 3], vec![1, 5], 1..2, vec![7], vec![8]).is_err());
    }
}
