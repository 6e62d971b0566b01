//! Small deterministic fixtures: a word-level vocabulary, seeded random models,
//! generated corpora, and a linear structural model with exact mediation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, ModelConfig};
use crate::datasets::{ProfessionEntry, Template, WinogradRecord, TEMPLATES};
use crate::effects::CandidateDistribution;
use crate::error::{Error, Result};
use crate::mediation::{Mediator, Reading, Subject};
use crate::tokenizer::Vocabulary;

/// Professions known to the toy vocabulary.
pub const PROFESSIONS: [&str; 24] = [
    "nurse", "doctor", "teacher", "farmer", "baker", "lawyer", "dancer", "pilot", "clerk", "surgeon",
    "editor", "guard", "chef", "singer", "banker", "plumber", "maid", "judge", "actor", "actress",
    "cashier", "janitor", "nanny", "sheriff",
];

const DEFINITIONAL: [&str; 2] = ["actor", "actress"];

const EXTRA_WORDS: [&str; 22] = [
    "man", "woman", "person", "she", "he", "they", "The", "the", "examined", "for", "injuries", "told",
    "asked", "helped", "was", "is", "tired", "busy", "caring", "late", "angry", "kind",
];

/// Word-level vocabulary covering the built-in templates and the toy corpora.
pub fn vocabulary() -> Vocabulary {
    let mut words: Vec<String> = vec!["<|endoftext|>".to_string()];
    let mut push = |w: &str| {
        if !words.iter().any(|x| x == w) {
            words.push(w.to_string());
        }
    };
    for t in TEMPLATES {
        for w in t.split_whitespace().filter(|w| *w != crate::datasets::SLOT) {
            push(w);
        }
    }
    for w in EXTRA_WORDS.iter().chain(PROFESSIONS.iter()) {
        push(w);
    }
    Vocabulary::word_level(&words).expect("toy vocabulary is valid")
}

/// `n_layers` blocks of two heads over a 16-wide residual stream.
pub fn config(n_layers: usize, vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        vocab_size,
        max_positions: 32,
    }
}

/// Random model for the toy vocabulary. Weights are drawn with a larger spread
/// than GPT2's initializer so that effects are not vanishingly small.
pub fn model_checkpoint(n_layers: usize, seed: u64) -> Result<Checkpoint> {
    let cfg = config(n_layers, vocabulary().len());
    let base = Checkpoint::init_random(cfg, seed)?;
    let mut tensors = base.tensors().clone();
    for (name, t) in tensors.iter_mut() {
        if !name.contains("ln_") {
            t.data_mut().iter_mut().for_each(|v| *v *= 15.0);
        }
    }
    Checkpoint::new(cfg, tensors)
}

/// Ratings drawn uniformly from `[-1, 1]`; actor/actress are definitional.
pub fn professions(seed: u64) -> Vec<ProfessionEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PROFESSIONS
        .iter()
        .map(|w| {
            let def = DEFINITIONAL.contains(w);
            let d: f64 = if def { 0.9 } else { rng.gen_range(-0.3..0.3) };
            let s: f64 = rng.gen_range(-1.0..1.0);
            ProfessionEntry::new(w, d, s, def).expect("ratings in range")
        })
        .collect()
}

pub fn templates() -> Vec<Template> {
    TEMPLATES.iter().map(|t| Template::parse(t).expect("built-in template")).collect()
}

/// Winograd-style records over the toy vocabulary.
pub fn winograd_records(n: usize, seed: u64) -> Vec<WinogradRecord> {
    let verbs = ["examined", "told", "asked", "helped"];
    let conts = ["was tired", "is busy", "was caring", "is late", "was angry", "is kind"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a = PROFESSIONS[rng.gen_range(0..PROFESSIONS.len())];
            let b = PROFESSIONS[rng.gen_range(0..PROFESSIONS.len())];
            let verb = verbs[rng.gen_range(0..verbs.len())];
            let pronoun = if rng.gen_bool(0.5) { "she" } else { "he" };
            let c1 = rng.gen_range(0..conts.len());
            let c2 = (c1 + rng.gen_range(1..conts.len())) % conts.len();
            let occ1 = f64::from(rng.gen_range(5u32..95));
            let occ2 = if rng.gen_bool(0.2) { None } else { Some(f64::from(rng.gen_range(5u32..95))) };
            WinogradRecord {
                prompt: format!("The {a} {verb} the {b} because {pronoun}"),
                pronoun: pronoun.to_string(),
                stereotypical_continuation: conts[c1].to_string(),
                anti_stereotypical_continuation: conts[c2].to_string(),
                occ1,
                occ2,
            }
        })
        .collect()
}

/// Structural model with additive mediation:
/// `z_h = a_h·x + u_h` and `y = c0 + bx·x + Σ w_h·z_h`, with `x ∈ {0, 1}`
/// for the null and intervened readings. Mediators are `Head { layer: 1, head }`.
#[derive(Debug, Clone)]
pub struct LinearScm {
    pub c0: f64,
    pub bx: f64,
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    /// `u[unit][h]`.
    pub u: Vec<Vec<f64>>,
}

/// Probability assigned to the stereotypical candidate; y stays below `1 / STEREO`.
const STEREO: f64 = 0.125;

impl LinearScm {
    pub fn random(n_mediators: usize, n_units: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |lo: f64, hi: f64| rng.gen_range(lo..hi);
        let c0 = draw(2.0, 3.0);
        let bx = draw(-0.5, 0.5);
        let a = (0..n_mediators).map(|_| draw(-1.0, 1.0)).collect();
        let w = (0..n_mediators).map(|_| draw(-0.2, 0.2)).collect();
        let u = (0..n_units)
            .map(|_| (0..n_mediators).map(|_| draw(-1.0, 1.0)).collect())
            .collect();
        Self { c0, bx, a, w, u }
    }

    pub fn mediators(&self) -> Vec<Mediator> {
        (0..self.a.len()).map(|head| Mediator::Head { layer: 1, head }).collect()
    }

    fn x(r: Reading) -> f64 {
        match r {
            Reading::Null => 0.0,
            Reading::Intervened => 1.0,
        }
    }

    /// y with the input at `input` and the listed mediators at the other reading.
    pub fn y(&self, unit: usize, input: Reading, mediators: &[Mediator]) -> f64 {
        let mut y = self.c0 + self.bx * Self::x(input);
        for h in 0..self.a.len() {
            let patched = mediators.contains(&Mediator::Head { layer: 1, head: h });
            let reading = if patched { input.opposite() } else { input };
            y += self.w[h] * (self.a[h] * Self::x(reading) + self.u[unit][h]);
        }
        y
    }

    fn dist(y: f64) -> Result<CandidateDistribution> {
        if !(y > 0.0 && y * STEREO <= 1.0) {
            return Err(Error::DegenerateProbability(format!("surrogate outcome {y} out of range")));
        }
        CandidateDistribution::new(y * STEREO, STEREO)
    }
}

impl Subject for LinearScm {
    type Prepared = ();

    fn n_units(&self) -> usize {
        self.u.len()
    }

    fn included(&self, _unit: usize) -> bool {
        true
    }

    fn prepare(&self, _unit: usize) -> Result<()> {
        Ok(())
    }

    fn baseline(&self, unit: usize, _: &(), reading: Reading) -> CandidateDistribution {
        Self::dist(self.y(unit, reading, &[])).expect("surrogate outcome in range")
    }

    fn outcome(&self, unit: usize, _: &(), input: Reading, mediators: &[Mediator]) -> Result<CandidateDistribution> {
        Self::dist(self.y(unit, input, mediators))
    }
}
