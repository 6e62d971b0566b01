//! Corpora: templated profession prompts and Winograd-style pronoun prompts,
//! plus the set-gender and swap-gender edits.
//!
//! File formats (UTF-8, one record per line, blank lines and `#` comments skipped):
//!
//! * templates: the prompt with a single `<occupation>` slot;
//! * professions: `word<TAB>definitionality<TAB>stereotypicality<TAB>definitional_flag`
//!   with ratings in `[-1, 1]` and the flag one of `0/1/true/false`;
//! * Winograd: `prompt<TAB>pronoun<TAB>stereo_cont<TAB>anti_cont<TAB>occ1_stat<TAB>occ2_stat`,
//!   where the stats are the share (in percent, `(0, 100)`) of the pronoun's gender in the
//!   stereotypical (`occ1`) and anti-stereotypical (`occ2`) referent's occupation. `occ2`
//!   may be `-` for a participant without statistics; it is then the complement of `occ1`.

mod builtin;

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;

pub use builtin::{PROFESSION_WORDS, TEMPLATES};

use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

pub const SLOT: &str = "<occupation>";

/// Grouping used by the built-in word list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfessionGroup {
    Female,
    Neutral,
    Male,
}

/// Direction of a profession's stereotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Female,
    Male,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Female => "female",
            Orientation::Male => "male",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenderMode {
    #[default]
    Binary,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfessionEntry {
    pub word: String,
    pub definitionality: f64,
    pub stereotypicality: f64,
    pub is_definitional: bool,
}

impl ProfessionEntry {
    pub fn new(word: &str, definitionality: f64, stereotypicality: f64, is_definitional: bool) -> Result<Self> {
        for (name, v) in [("definitionality", definitionality), ("stereotypicality", stereotypicality)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::Format(format!("{word}: {name} {v} outside [-1, 1]")));
            }
        }
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::Format(format!("profession {word:?} must be one word")));
        }
        Ok(Self {
            word: word.to_string(),
            definitionality,
            stereotypicality,
            is_definitional,
        })
    }

    /// Overall external bias: definitionality plus stereotypicality.
    pub fn external_bias(&self) -> f64 {
        self.definitionality + self.stereotypicality
    }

    /// Positive stereotypicality is female-stereotypical; zero falls in the male bucket.
    pub fn orientation(&self) -> Orientation {
        if self.stereotypicality > 0.0 {
            Orientation::Female
        } else {
            Orientation::Male
        }
    }

    /// Rated exactly neutral (bucketed as male by convention).
    pub fn is_neutral(&self) -> bool {
        self.stereotypicality == 0.0
    }
}

/// A prompt template with exactly one occupation slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
    slot: usize,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let slot = text
            .find(SLOT)
            .ok_or_else(|| Error::Format(format!("template {text:?} has no {SLOT} slot")))?;
        if text[slot + SLOT.len()..].contains(SLOT) {
            return Err(Error::Format(format!("template {text:?} has more than one slot")));
        }
        Ok(Self {
            text: text.to_string(),
            slot,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn fill(&self, word: &str) -> String {
        format!("{}{word}{}", &self.text[..self.slot], &self.text[self.slot + SLOT.len()..])
    }

    /// Fills the slot and locates the filled word's token span.
    pub fn realize(&self, word: &str, vocab: &Vocabulary) -> Result<Realized> {
        let prefix = &self.text[..self.slot];
        let text = self.fill(word);
        let ids = vocab.encode(&text)?;
        let prefix_ids = vocab.encode(prefix.trim_end())?;
        let word_ids = if prefix.ends_with(' ') {
            vocab.encode(&format!(" {word}"))?
        } else {
            vocab.encode(word)?
        };
        let site = prefix_ids.len()..prefix_ids.len() + word_ids.len();
        if ids.get(..prefix_ids.len()) != Some(prefix_ids.as_slice()) || ids.get(site.clone()) != Some(word_ids.as_slice()) {
            return Err(Error::Format(format!(
                "cannot locate {word:?} in the tokenization of {text:?}"
            )));
        }
        Ok(Realized { text, ids, site })
    }
}

/// A prompt together with its token ids and the token span of the edited word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realized {
    pub text: String,
    pub ids: Vec<u32>,
    pub site: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateExample {
    pub template: Template,
    pub profession: ProfessionEntry,
    pub mode: GenderMode,
    pub prompt: Realized,
    pub stereotypical_candidate: String,
    pub anti_stereotypical_candidate: String,
    pub stereotypical_ids: Vec<u32>,
    pub anti_stereotypical_ids: Vec<u32>,
    pub set_gender_word: String,
}

impl TemplateExample {
    pub fn orientation(&self) -> Orientation {
        self.profession.orientation()
    }

    /// Replaces the profession with the set-gender word.
    pub fn apply_set_gender(&self, vocab: &Vocabulary) -> Result<Realized> {
        self.template.realize(&self.set_gender_word, vocab)
    }

    /// The unchanged prompt, for null interventions.
    pub fn apply_null(&self) -> Realized {
        self.prompt.clone()
    }
}

/// Candidates and set-gender target for one profession.
pub fn candidates(orientation: Orientation, mode: GenderMode) -> (&'static str, &'static str, &'static str) {
    // (stereotypical, anti-stereotypical, set-gender word)
    match (mode, orientation) {
        (GenderMode::Binary, Orientation::Female) => ("she", "he", "man"),
        (GenderMode::Binary, Orientation::Male) => ("he", "she", "woman"),
        (GenderMode::Neutral, Orientation::Female) => ("she", "they", "person"),
        (GenderMode::Neutral, Orientation::Male) => ("he", "they", "person"),
    }
}

/// Template × profession product, template-major, skipping professions that are
/// not a single token (with a leading space) in `vocab`.
pub fn build_professions(
    templates: &[Template],
    professions: &[ProfessionEntry],
    vocab: &Vocabulary,
    mode: GenderMode,
) -> Result<Vec<TemplateExample>> {
    let kept: Vec<&ProfessionEntry> = professions.iter().filter(|p| vocab.is_single_token(&p.word)).collect();
    let mut out = Vec::with_capacity(templates.len() * kept.len());
    for template in templates {
        for &p in &kept {
            let (stereo, anti, set_word) = candidates(p.orientation(), mode);
            let prompt = template
                .realize(&p.word, vocab)
                .map_err(|e| e.context(format!("profession {}", p.word)))?;
            let ex = TemplateExample {
                template: template.clone(),
                profession: p.clone(),
                mode,
                prompt,
                stereotypical_candidate: stereo.to_string(),
                anti_stereotypical_candidate: anti.to_string(),
                stereotypical_ids: vocab.encode_continuation(stereo)?,
                anti_stereotypical_ids: vocab.encode_continuation(anti)?,
                set_gender_word: set_word.to_string(),
            };
            let edited = ex.apply_set_gender(vocab)?;
            if edited.site.len() != ex.prompt.site.len() {
                return Err(Error::Format(format!(
                    "set-gender word {set_word:?} and {:?} tokenize to different lengths",
                    p.word
                )));
            }
            out.push(ex);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pronoun {
    She,
    He,
}

impl Pronoun {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "she" => Ok(Pronoun::She),
            "he" => Ok(Pronoun::He),
            other => Err(Error::Precondition(format!("pronoun must be she or he, got {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pronoun::She => "she",
            Pronoun::He => "he",
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Pronoun::She => Pronoun::He,
            Pronoun::He => Pronoun::She,
        }
    }
}

/// Pronoun-gender share (percent) of the two referents' occupations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationStats {
    pub stereotypical: f64,
    pub anti_stereotypical: f64,
}

impl OccupationStats {
    /// Log-ratio of the two occupations' stereotypicality.
    pub fn log_ratio(&self) -> f64 {
        (self.stereotypical / self.anti_stereotypical).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinogradExample {
    pub shared_prompt: String,
    pub pronoun: Pronoun,
    pub stereotypical_continuation: String,
    pub anti_stereotypical_continuation: String,
    pub occupation_stats: OccupationStats,
    pub prompt: Realized,
    pub stereotypical_ids: Vec<u32>,
    pub anti_stereotypical_ids: Vec<u32>,
}

/// Replaces the prompt's final pronoun with its counterpart.
pub fn swap_gender(prompt: &str) -> Result<String> {
    let trimmed = prompt.trim_end();
    let (head, last) = match trimmed.rsplit_once(' ') {
        Some((h, l)) => (Some(h), l),
        None => (None, trimmed),
    };
    let swapped = Pronoun::parse(last)?.swapped().as_str();
    Ok(match head {
        Some(h) => format!("{h} {swapped}"),
        None => swapped.to_string(),
    })
}

impl WinogradExample {
    pub fn new(
        shared_prompt: &str,
        pronoun: Pronoun,
        stereotypical_continuation: &str,
        anti_stereotypical_continuation: &str,
        occupation_stats: OccupationStats,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let shared_prompt = shared_prompt.trim();
        if shared_prompt.rsplit(' ').next() != Some(pronoun.as_str()) {
            return Err(Error::Precondition(format!(
                "prompt {shared_prompt:?} does not end in the pronoun {:?}",
                pronoun.as_str()
            )));
        }
        if stereotypical_continuation.trim().is_empty() || anti_stereotypical_continuation.trim().is_empty() {
            return Err(Error::Precondition("continuations must be non-empty".into()));
        }
        for v in [occupation_stats.stereotypical, occupation_stats.anti_stereotypical] {
            if !(v > 0.0 && v < 100.0) {
                return Err(Error::Format(format!("occupation statistic {v} outside (0, 100)")));
            }
        }
        let prompt = realize_pronoun_prompt(shared_prompt, vocab)?;
        Ok(Self {
            shared_prompt: shared_prompt.to_string(),
            pronoun,
            stereotypical_continuation: stereotypical_continuation.trim().to_string(),
            anti_stereotypical_continuation: anti_stereotypical_continuation.trim().to_string(),
            occupation_stats,
            prompt,
            stereotypical_ids: vocab.encode_continuation(stereotypical_continuation)?,
            anti_stereotypical_ids: vocab.encode_continuation(anti_stereotypical_continuation)?,
        })
    }

    /// The prompt with its final pronoun swapped.
    pub fn apply_swap_gender(&self, vocab: &Vocabulary) -> Result<Realized> {
        realize_pronoun_prompt(&swap_gender(&self.shared_prompt)?, vocab)
    }
}

fn realize_pronoun_prompt(text: &str, vocab: &Vocabulary) -> Result<Realized> {
    let ids = vocab.encode(text)?;
    let (head, last) = text
        .rsplit_once(' ')
        .ok_or_else(|| Error::Precondition(format!("prompt {text:?} needs words before the pronoun")))?;
    let head_ids = vocab.encode(head)?;
    let site = head_ids.len()..ids.len();
    if ids.get(..head_ids.len()) != Some(head_ids.as_slice()) || ids[site.clone()] != vocab.encode(&format!(" {last}"))?[..] {
        return Err(Error::Format(format!("cannot locate the pronoun in the tokenization of {text:?}")));
    }
    Ok(Realized {
        text: text.to_string(),
        ids,
        site,
    })
}

/// Drops negative-TE examples, then the bottom quartile (the lowest `ceil(n/4)` after a
/// stable ascending sort) of the remainder. Returns kept indices in original order.
pub fn filter_by_total_effect(n_examples: usize, te: &[f64]) -> Result<Vec<usize>> {
    if n_examples != te.len() {
        return Err(Error::LengthMismatch(format!(
            "{n_examples} examples but {} total effects",
            te.len()
        )));
    }
    let mut kept: Vec<usize> = (0..te.len()).filter(|&i| te[i] >= 0.0).collect();
    kept.sort_by(|&a, &b| te[a].total_cmp(&te[b]).then(a.cmp(&b)));
    let drop = kept.len().div_ceil(4);
    let mut kept = kept.split_off(drop);
    kept.sort_unstable();
    Ok(kept)
}

fn records(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .collect())
}

pub fn load_templates(path: &Path) -> Result<Vec<Template>> {
    records(path)?
        .iter()
        .map(|(n, l)| Template::parse(l).map_err(|e| e.context(format!("{}:{n}", path.display()))))
        .collect()
}

pub fn parse_flag(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(Error::Format(format!("bad flag {other:?}"))),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad number {s:?}")))
}

pub fn load_professions(path: &Path) -> Result<Vec<ProfessionEntry>> {
    records(path)?
        .iter()
        .map(|(n, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            let entry = match f.as_slice() {
                [w, d, s, flag] => ProfessionEntry::new(w.trim(), parse_f64(d)?, parse_f64(s)?, parse_flag(flag)?),
                _ => Err(Error::Format(format!("expected 4 tab-separated fields, got {}", f.len()))),
            };
            entry.map_err(|e| e.context(format!("{}:{n}", path.display())))
        })
        .collect()
}

pub fn write_professions(path: &Path, professions: &[ProfessionEntry]) -> Result<()> {
    let mut out = String::new();
    for p in professions {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.word, p.definitionality, p.stereotypicality, p.is_definitional as u8
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One parsed line of a Winograd corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct WinogradRecord {
    pub prompt: String,
    pub pronoun: String,
    pub stereotypical_continuation: String,
    pub anti_stereotypical_continuation: String,
    pub occ1: f64,
    pub occ2: Option<f64>,
}

impl WinogradRecord {
    pub fn to_line(&self) -> String {
        let occ2 = self.occ2.map_or_else(|| "-".to_string(), |v| v.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.prompt, self.pronoun, self.stereotypical_continuation, self.anti_stereotypical_continuation, self.occ1, occ2
        )
    }
}

pub fn parse_winograd_line(line: &str) -> Result<WinogradRecord> {
    let f: Vec<&str> = line.split('\t').collect();
    let [prompt, pronoun, stereo, anti, occ1, occ2] = f.as_slice() else {
        return Err(Error::Format(format!("expected 6 tab-separated fields, got {}", f.len())));
    };
    Ok(WinogradRecord {
        prompt: prompt.trim().to_string(),
        pronoun: pronoun.trim().to_string(),
        stereotypical_continuation: stereo.trim().to_string(),
        anti_stereotypical_continuation: anti.trim().to_string(),
        occ1: parse_f64(occ1)?,
        occ2: match occ2.trim() {
            "-" => None,
            v => Some(parse_f64(v)?),
        },
    })
}

/// Winograd examples that fit the pronoun-final formulation, plus the number excluded.
#[derive(Debug, Clone)]
pub struct WinogradCorpus {
    pub examples: Vec<WinogradExample>,
    pub records: Vec<WinogradRecord>,
    pub excluded: usize,
}

pub fn build_winograd(records: Vec<WinogradRecord>, vocab: &Vocabulary) -> Result<WinogradCorpus> {
    let mut examples = Vec::new();
    let mut kept = Vec::new();
    let mut excluded = 0;
    for r in records {
        let Ok(pronoun) = Pronoun::parse(&r.pronoun) else {
            excluded += 1;
            continue;
        };
        if r.prompt.rsplit(' ').next() != Some(pronoun.as_str()) {
            excluded += 1;
            continue;
        }
        let stats = OccupationStats {
            stereotypical: r.occ1,
            anti_stereotypical: r.occ2.unwrap_or(100.0 - r.occ1),
        };
        let ex = WinogradExample::new(
            &r.prompt,
            pronoun,
            &r.stereotypical_continuation,
            &r.anti_stereotypical_continuation,
            stats,
            vocab,
        )
        .map_err(|e| e.context(format!("winograd prompt {:?}", r.prompt)))?;
        examples.push(ex);
        kept.push(r);
    }
    Ok(WinogradCorpus {
        examples,
        records: kept,
        excluded,
    })
}

pub fn load_winograd(path: &Path, vocab: &Vocabulary) -> Result<WinogradCorpus> {
    let recs = records(path)?
        .iter()
        .map(|(n, l)| parse_winograd_line(l).map_err(|e| e.context(format!("{}:{n}", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    build_winograd(recs, vocab)
}

pub fn write_winograd(path: &Path, records: &[WinogradRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::word_level(&[
            "The", "nurse", "doctor", "said", "that", "man", "woman", "person", "she", "he", "they",
            "examined", "farmer", "because", "was", "caring", "screaming",
        ])
        .unwrap()
    }

    fn nurse() -> ProfessionEntry {
        ProfessionEntry::new("nurse", 0.1, 0.8, false).unwrap()
    }

    fn doctor() -> ProfessionEntry {
        ProfessionEntry::new("doctor", 0.0, -0.5, false).unwrap()
    }

    #[test]
    fn builtin_list_sizes() {
        assert_eq!(TEMPLATES.len() * PROFESSION_WORDS.len(), 2873);
        assert_eq!(PROFESSION_WORDS.iter().filter(|p| p.2).count(), 11);
        for t in TEMPLATES {
            Template::parse(t).unwrap();
        }
    }

    #[test]
    fn template_needs_exactly_one_slot() {
        assert!(Template::parse("The nurse said that").is_err());
        assert!(Template::parse("The <occupation> told the <occupation>").is_err());
    }

    #[test]
    fn rating_range_enforced() {
        assert!(ProfessionEntry::new("x", 1.5, 0.0, false).is_err());
        assert_eq!(nurse().external_bias(), 0.1 + 0.8);
        let neutral = ProfessionEntry::new("x", 0.0, 0.0, false).unwrap();
        assert!(neutral.is_neutral());
        assert_eq!(neutral.orientation(), Orientation::Male);
    }

    #[test]
    fn one_by_one_product() {
        let v = vocab();
        let t = Template::parse("The <occupation> said that").unwrap();
        let ex = build_professions(&[t], &[nurse()], &v, GenderMode::Binary).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].prompt.text, "The nurse said that");
        assert_eq!(ex[0].prompt.site, 1..2);
        assert_eq!(ex[0].stereotypical_candidate, "she");
        assert_eq!(ex[0].anti_stereotypical_candidate, "he");
    }

    #[test]
    fn set_gender_moves_anti_stereotypically() {
        let v = vocab();
        let t = Template::parse("The <occupation> said that").unwrap();
        let ex = build_professions(std::slice::from_ref(&t), &[nurse(), doctor()], &v, GenderMode::Binary).unwrap();
        assert_eq!(ex[0].apply_set_gender(&v).unwrap().text, "The man said that");
        assert_eq!(ex[1].apply_set_gender(&v).unwrap().text, "The woman said that");
        let neutral = build_professions(&[t], &[nurse()], &v, GenderMode::Neutral).unwrap();
        let edited = neutral[0].apply_set_gender(&v).unwrap();
        assert_eq!(edited.text, "The person said that");
        assert_eq!(neutral[0].anti_stereotypical_candidate, "they");

        // exactly one contiguous edit
        let a = &ex[0].prompt.ids;
        let b = &ex[0].apply_set_gender(&v).unwrap().ids;
        let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        assert_eq!(diffs, vec![1]);
    }

    #[test]
    fn multi_piece_professions_are_dropped() {
        let v = vocab();
        let t = Template::parse("The <occupation> said that").unwrap();
        let unknown = ProfessionEntry::new("astronaut", 0.0, -0.2, false).unwrap();
        let ex = build_professions(&[t], &[nurse(), unknown, doctor()], &v, GenderMode::Binary).unwrap();
        assert_eq!(ex.len(), 2);
    }

    #[test]
    fn swap_gender_examples() {
        let p = "The nurse examined the farmer for injuries because she";
        let s = swap_gender(p).unwrap();
        assert!(s.ends_with("because he"));
        assert_eq!(swap_gender(&s).unwrap(), p);
        assert!(swap_gender("... because they").is_err());
    }

    #[test]
    fn winograd_requires_final_pronoun() {
        let v = vocab();
        let stats = OccupationStats {
            stereotypical: 90.0,
            anti_stereotypical: 22.0,
        };
        let ok = WinogradExample::new("The nurse examined the farmer because she", Pronoun::She, "was caring", "was screaming", stats, &v);
        assert!(ok.is_err(), "'the' and 'for' are not in the toy vocabulary");
        let ex = WinogradExample::new("The nurse examined The farmer because she", Pronoun::She, "was caring", "was screaming", stats, &v).unwrap();
        assert_eq!(ex.prompt.site, 6..7);
        let sw = ex.apply_swap_gender(&v).unwrap();
        assert_eq!(sw.ids.len(), ex.prompt.ids.len());
        assert!(WinogradExample::new("The nurse said that", Pronoun::She, "a", "b", stats, &v).is_err());
        assert!(WinogradExample::new("The nurse because she", Pronoun::She, "", "b", stats, &v).is_err());
    }

    #[test]
    fn winograd_records_round_trip_and_exclusion() {
        let v = vocab();
        let lines = [
            "The nurse examined The farmer because she\tshe\twas caring\twas screaming\t90\t22",
            "The doctor examined The nurse because he\the\twas caring\twas screaming\t60\t-",
            "The doctor examined The nurse because that\the\twas caring\twas screaming\t60\t-",
        ];
        let recs: Vec<_> = lines.iter().map(|l| parse_winograd_line(l).unwrap()).collect();
        assert_eq!(recs[0].to_line(), lines[0]);
        let corpus = build_winograd(recs, &v).unwrap();
        assert_eq!(corpus.examples.len(), 2);
        assert_eq!(corpus.excluded, 1);
        assert_eq!(corpus.examples[1].occupation_stats.anti_stereotypical, 40.0);
    }

    #[test]
    fn te_filter_examples() {
        let te = [-1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(filter_by_total_effect(6, &te).unwrap(), vec![3, 4, 5]);
        assert!(filter_by_total_effect(2, &[-1.0, -0.5]).unwrap().is_empty());
        assert!(filter_by_total_effect(3, &te).is_err());
        // ties broken by original index
        assert_eq!(filter_by_total_effect(4, &[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn profession_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prof.tsv");
        write_professions(&p, &[nurse(), doctor()]).unwrap();
        assert_eq!(load_professions(&p).unwrap(), vec![nurse(), doctor()]);
        std::fs::write(&p, "nurse\t0.1\n").unwrap();
        assert!(load_professions(&p).is_err());
    }
}
