//! Natural-language compliance commands.
//!
//! An utterance is tokenized, every vocabulary entry is scored by its best
//! normalized edit similarity against the utterance's words (or word pairs for
//! two-word entries), and the winning entry becomes a [`ComplianceCommand`]
//! that rescales one admittance parameter. The scorer is a deterministic
//! stand-in for a learned encoder: anything producing a [`ScoreVector`] can
//! replace it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admittance::{clamp_to_stable_with, AdmittanceError, AdmittanceParams, Integrator, ParamBounds};

/// Similarities below this are treated as no match.
pub const SIMILARITY_FLOOR: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VocabularyError {
    #[error("vocabulary bank is empty")]
    Empty,
    #[error("phrase `{0}` appears more than once")]
    Duplicate(String),
    #[error("entry `{token}` has non-positive factor {factor}")]
    Factor { token: String, factor: f64 },
    #[error("entry has an empty phrase")]
    EmptyPhrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    ScaleStiffness,
    ScaleDamping,
    ScaleMass,
    ScaleSpeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularyEntry {
    pub token: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub effect: Effect,
    pub factor: f64,
}

impl VocabularyEntry {
    fn new(token: &str, aliases: &[&str], effect: Effect, factor: f64) -> Self {
        Self {
            token: token.to_owned(),
            aliases: aliases.iter().map(|a| (*a).to_owned()).collect(),
            effect,
            factor,
        }
    }

    fn phrases(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.token.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VocabularyBank {
    entries: Vec<VocabularyEntry>,
}

impl Default for VocabularyBank {
    fn default() -> Self {
        Self {
            entries: vec![
                VocabularyEntry::new("softly", &["soft", "softer"], Effect::ScaleStiffness, 0.5),
                VocabularyEntry::new("gently", &["gentle", "gentler"], Effect::ScaleStiffness, 0.7),
                VocabularyEntry::new("stiffly", &["stiff", "stiffer", "firmly"], Effect::ScaleStiffness, 2.0),
                VocabularyEntry::new("slow down", &["slower"], Effect::ScaleSpeed, 0.5),
                VocabularyEntry::new("heavier feel", &["heavier"], Effect::ScaleMass, 1.5),
            ],
        }
    }
}

impl VocabularyBank {
    pub fn new(entries: Vec<VocabularyEntry>) -> Result<Self, VocabularyError> {
        let bank = Self { entries };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<(), VocabularyError> {
        if self.entries.is_empty() {
            return Err(VocabularyError::Empty);
        }
        let mut seen = BTreeSet::new();
        for entry in &self.entries {
            if !(entry.factor > 0.0 && entry.factor.is_finite()) {
                return Err(VocabularyError::Factor {
                    token: entry.token.clone(),
                    factor: entry.factor,
                });
            }
            for phrase in entry.phrases() {
                let normalized = tokenize(phrase).join(" ");
                if normalized.is_empty() {
                    return Err(VocabularyError::EmptyPhrase);
                }
                if !seen.insert(normalized.clone()) {
                    return Err(VocabularyError::Duplicate(normalized));
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[VocabularyEntry] {
        &self.entries
    }
}

/// Lowercases, strips punctuation and splits on whitespace.
pub fn tokenize(utterance: &str) -> Vec<String> {
    utterance
        .split_whitespace()
        .map(|word| {
            word.chars()
                .filter(|c| c.is_alphanumeric() || *c == '_' || *c == '-')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// `1 − levenshtein / max(len)` over characters.
pub fn similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / max_len as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryScore {
    /// Index into the bank.
    pub entry: usize,
    /// Normalized score; all scores of a vector sum to 1.
    pub score: f64,
    /// Raw similarity of the best match.
    pub similarity: f64,
    /// Token index where the best match starts.
    pub position: usize,
}

/// Entries that cleared the similarity floor, in bank order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<EntryScore>,
}

impl ScoreVector {
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Highest score; ties go to the earliest token position, then bank order.
    pub fn winner(&self) -> Option<&EntryScore> {
        self.scores.iter().reduce(|best, s| {
            if s.score > best.score || (s.score == best.score && s.position < best.position) {
                s
            } else {
                best
            }
        })
    }
}

pub fn score_tokens(tokens: &[String], bank: &VocabularyBank) -> ScoreVector {
    let mut raw = Vec::new();
    for (index, entry) in bank.entries.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for phrase in entry.phrases() {
            let words = phrase.split_whitespace().count().max(1);
            if tokens.len() < words {
                continue;
            }
            let phrase = tokenize(phrase).join(" ");
            for (position, window) in tokens.windows(words).enumerate() {
                let sim = similarity(&window.join(" "), &phrase);
                let better = match best {
                    None => true,
                    Some((s, p)) => sim > s || (sim == s && position < p),
                };
                if better {
                    best = Some((sim, position));
                }
            }
        }
        if let Some((sim, position)) = best {
            if sim >= SIMILARITY_FLOOR {
                raw.push((index, sim, position));
            }
        }
    }
    let total: f64 = raw.iter().map(|(_, s, _)| s).sum();
    ScoreVector {
        scores: raw
            .into_iter()
            .map(|(entry, sim, position)| EntryScore {
                entry,
                score: sim / total,
                similarity: sim,
                position,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceCommand {
    pub matched_token: String,
    pub effect: Effect,
    pub factor: f64,
    pub target_object: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interpretation {
    Command(ComplianceCommand),
    NoCommand,
}

/// Resolves an utterance against the bank and the named objects in the scene.
pub fn interpret<'a>(
    utterance: &str,
    object_ids: impl IntoIterator<Item = &'a str>,
    bank: &VocabularyBank,
) -> Interpretation {
    let tokens = tokenize(utterance);
    let scores = score_tokens(&tokens, bank);
    let Some(best) = scores.winner() else {
        return Interpretation::NoCommand;
    };
    let entry = &bank.entries[best.entry];
    let objects: Vec<String> = object_ids.into_iter().map(str::to_lowercase).collect();
    let target_object = tokens
        .iter()
        .find(|t| objects.iter().any(|o| o == *t))
        .cloned();
    Interpretation::Command(ComplianceCommand {
        matched_token: entry.token.clone(),
        effect: entry.effect,
        factor: entry.factor,
        target_object,
        confidence: best.score.clamp(0.0, 1.0),
    })
}

/// Scales the targeted parameter and clamps the result back into the stable
/// box. `ScaleSpeed` leaves the admittance untouched.
pub fn apply_command(
    cmd: &ComplianceCommand,
    params: &AdmittanceParams,
    bounds: &ParamBounds,
    integrator: Integrator,
    dt: f64,
) -> Result<AdmittanceParams, AdmittanceError> {
    let scale = |v: &[f64]| v.iter().map(|x| x * cmd.factor).collect::<Vec<_>>();
    let mut next = params.clone();
    match cmd.effect {
        Effect::ScaleStiffness => next.stiffness = scale(&params.stiffness),
        Effect::ScaleDamping => next.damping = scale(&params.damping),
        Effect::ScaleMass => next.mass = scale(&params.mass),
        Effect::ScaleSpeed => {}
    }
    clamp_to_stable_with(&next, bounds, integrator, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittance::stability_check;
    use proptest::prelude::*;

    /// Plain recursive edit distance, exponential but fine for short words.
    fn edit_distance_oracle(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = edit_distance_oracle(ra, rb) + usize::from(x != y);
                let del = edit_distance_oracle(ra, b) + 1;
                let ins = edit_distance_oracle(a, rb) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    fn command(utterance: &str) -> ComplianceCommand {
        match interpret(utterance, ["beam"], &VocabularyBank::default()) {
            Interpretation::Command(c) => c,
            Interpretation::NoCommand => panic!("no command for {utterance:?}"),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Move softly, please."), vec!["move", "softly", "please"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("STIFFLY"), vec!["stiffly"]);
        assert!(tokenize("  ?! ").is_empty());
    }

    #[test]
    fn exact_match_scores_one() {
        let bank = VocabularyBank::default();
        let s = score_tokens(&tokenize("softly"), &bank);
        assert_eq!(s.scores.len(), 1);
        assert_eq!(s.scores[0].similarity, 1.0);
        assert_eq!(s.scores[0].score, 1.0);
        assert!(score_tokens(&tokenize("xylophone"), &bank).is_empty());
    }

    #[test]
    fn one_typo_clears_the_floor() {
        let oracle = edit_distance_oracle(&['s', 'o', 'f', 't', 'y'], &"softly".chars().collect::<Vec<_>>());
        assert_eq!(oracle, 1);
        let expected = 1.0 - oracle as f64 / 6.0;
        assert!((similarity("softy", "softly") - expected).abs() < 1e-15);
        assert!(expected >= SIMILARITY_FLOOR);
        assert_eq!(command("softy").matched_token, "softly");
    }

    #[test]
    fn interpret_examples() {
        let c = command("grip the beam gently");
        assert_eq!(c.matched_token, "gently");
        assert_eq!(c.target_object.as_deref(), Some("beam"));
        assert_eq!(
            interpret("hello world", ["beam"], &VocabularyBank::default()),
            Interpretation::NoCommand
        );
        assert_eq!(command("softly but stiffly").matched_token, "softly");
        assert_eq!(command("stiffly but softly").matched_token, "stiffly");
        assert_eq!(command("please slow down").effect, Effect::ScaleSpeed);
        assert_eq!(command("a heavier feel").effect, Effect::ScaleMass);
    }

    #[test]
    fn scores_normalize_to_one() {
        let s = score_tokens(&tokenize("softly but stiffly and gentle"), &VocabularyBank::default());
        let total: f64 = s.scores.iter().map(|e| e.score).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(s.scores.len(), 3);
    }

    #[test]
    fn bank_validation() {
        let dup = VocabularyBank::new(vec![
            VocabularyEntry::new("soft", &[], Effect::ScaleStiffness, 0.5),
            VocabularyEntry::new("hard", &["Soft"], Effect::ScaleStiffness, 2.0),
        ]);
        assert!(matches!(dup, Err(VocabularyError::Duplicate(_))));
        assert!(VocabularyBank::new(vec![]).is_err());
        assert!(VocabularyBank::new(vec![VocabularyEntry::new("x", &[], Effect::ScaleMass, 0.0)]).is_err());
        VocabularyBank::default().validate().unwrap();
    }

    #[test]
    fn apply_examples() {
        let bounds = ParamBounds::default();
        let p = AdmittanceParams::default();
        let soft = apply_command(&command("softly"), &p, &bounds, Integrator::Rk4, 0.01).unwrap();
        assert_eq!(soft.stiffness, vec![50.0, 50.0]);
        assert_eq!(soft.damping, p.damping);

        let stiff = command("stiffly");
        let mut q = p.clone();
        for _ in 0..20 {
            q = apply_command(&stiff, &q, &bounds, Integrator::Rk4, 0.01).unwrap();
        }
        assert_eq!(q.stiffness, bounds.max.stiffness);

        let slow = apply_command(&command("slow down"), &p, &bounds, Integrator::Rk4, 0.01).unwrap();
        assert_eq!(slow, p);
    }

    proptest! {
        #[test]
        fn interpretation_is_total(utterance in ".{0,40}") {
            match interpret(&utterance, ["beam"], &VocabularyBank::default()) {
                Interpretation::Command(c) => prop_assert!((0.0..=1.0).contains(&c.confidence)),
                Interpretation::NoCommand => {}
            }
        }

        #[test]
        fn command_sequences_stay_stable(seq in proptest::collection::vec(0usize..5, 0..40)) {
            let bank = VocabularyBank::default();
            let bounds = ParamBounds::default();
            let mut p = AdmittanceParams::default();
            for i in seq {
                let e = &bank.entries()[i];
                let cmd = ComplianceCommand {
                    matched_token: e.token.clone(),
                    effect: e.effect,
                    factor: e.factor,
                    target_object: None,
                    confidence: 1.0,
                };
                p = apply_command(&cmd, &p, &bounds, Integrator::Rk4, 0.01).unwrap();
                prop_assert!(stability_check(&p, 0.01).stable);
                prop_assert!(p.is_positive());
            }
        }
    }
}
