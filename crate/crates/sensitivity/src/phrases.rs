use std::collections::BTreeMap;

use agentmesh_store::ChatMessage;
use serde::{Deserialize, Serialize};

use crate::lexicon::tokenize;
use crate::SensitivityError;

/// Longest n-gram counted by [`PhraseModel`].
pub const MAX_NGRAM: usize = 3;

/// Exact frequencies of every 1- to 3-token n-gram in a corpus. N-grams
/// never span two messages. Keys are tokens joined by one space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseModel {
    pub counts: BTreeMap<String, u64>,
    pub built_from: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseCount {
    pub phrase: String,
    pub count: u64,
}

impl PhraseModel {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> PhraseModel {
        let mut model = PhraseModel::default();
        for text in texts {
            model.built_from += 1;
            let tokens = tokenize(text);
            for n in 1..=MAX_NGRAM {
                for gram in tokens.windows(n) {
                    *model.counts.entry(gram.join(" ")).or_insert(0) += 1;
                }
            }
        }
        model
    }

    pub fn count(&self, phrase: &str) -> u64 {
        self.counts.get(&tokenize(phrase).join(" ")).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The `n` most frequent n-grams, ties broken by phrase.
    pub fn top(&self, n: usize) -> Vec<PhraseCount> {
        rank(self.counts.iter(), n)
    }
}

pub fn build_phrase_model<'a>(corpus: impl IntoIterator<Item = &'a ChatMessage>) -> PhraseModel {
    PhraseModel::from_texts(corpus.into_iter().map(|m| m.body.as_str()))
}

fn rank<'a>(it: impl Iterator<Item = (&'a String, &'a u64)>, k: usize) -> Vec<PhraseCount> {
    let mut all: Vec<(&String, &u64)> = it.collect();
    all.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    all.into_iter().take(k).map(|(p, c)| PhraseCount { phrase: p.clone(), count: *c }).collect()
}

/// Whether n-gram `gram` continues what the user has typed.
///
/// Every complete token of the prefix must match exactly. When the prefix
/// ends inside a word, that last token only has to be a prefix of the
/// n-gram's token. The n-gram must add something beyond the typed text.
fn extends(gram: &[&str], typed: &[String], last_partial: bool) -> bool {
    if gram.len() < typed.len() {
        return false;
    }
    let full = if last_partial { typed.len() - 1 } else { typed.len() };
    if gram[..full].iter().zip(&typed[..full]).any(|(g, t)| *g != t) {
        return false;
    }
    if last_partial {
        let (g, t) = (gram[full], &typed[full]);
        g.starts_with(t.as_str()) && (gram.len() > typed.len() || g.len() > t.len())
    } else {
        gram.len() > typed.len()
    }
}

/// Up to `k` phrases extending `prefix`, by count descending then phrase.
pub fn autocomplete_suggest(model: &PhraseModel, prefix: &str, k: usize) -> Result<Vec<String>, SensitivityError> {
    if k == 0 {
        return Err(SensitivityError::InvalidK);
    }
    let typed = tokenize(prefix);
    if typed.is_empty() {
        return Ok(Vec::new());
    }
    let last_partial = prefix.chars().last().is_some_and(char::is_alphanumeric);
    let matches = model.counts.iter().filter(|(phrase, _)| {
        let gram: Vec<&str> = phrase.split(' ').collect();
        extends(&gram, &typed, last_partial)
    });
    Ok(rank(matches, k).into_iter().map(|p| p.phrase).collect())
}
