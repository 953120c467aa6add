use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use agentmesh_store::{ChatMessage, Target};

use crate::SensitivityError;

/// Lowercases `text` and splits it on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Banned and good words, lowercased. The two sets never overlap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    banned: HashSet<String>,
    good: HashSet<String>,
}

impl Lexicon {
    pub fn new<B, G>(banned: B, good: G) -> Result<Lexicon, SensitivityError>
    where
        B: IntoIterator,
        B::Item: AsRef<str>,
        G: IntoIterator,
        G::Item: AsRef<str>,
    {
        let norm = |w: &str| w.trim().to_lowercase();
        let banned: HashSet<String> = banned.into_iter().map(|w| norm(w.as_ref())).filter(|w| !w.is_empty()).collect();
        let good: HashSet<String> = good.into_iter().map(|w| norm(w.as_ref())).filter(|w| !w.is_empty()).collect();
        let overlap: BTreeSet<String> = banned.intersection(&good).cloned().collect();
        if !overlap.is_empty() {
            return Err(SensitivityError::LexiconOverlap(overlap.into_iter().collect()));
        }
        Ok(Lexicon { banned, good })
    }

    /// Loads `banned.txt` and `good.txt` style files: one token per line,
    /// blank lines and lines starting with `#` ignored. A missing file is an
    /// empty list.
    pub fn load(banned: Option<&Path>, good: Option<&Path>) -> Result<Lexicon, SensitivityError> {
        Lexicon::new(read_words(banned)?, read_words(good)?)
    }

    pub fn is_banned(&self, token: &str) -> bool {
        self.banned.contains(token)
    }

    pub fn is_good(&self, token: &str) -> bool {
        self.good.contains(token)
    }

    pub fn banned_len(&self) -> usize {
        self.banned.len()
    }

    /// The first banned token of `text`, matched by whole tokens.
    pub fn first_banned(&self, text: &str) -> Option<String> {
        tokenize(text).into_iter().find(|t| self.banned.contains(t))
    }
}

fn read_words(path: Option<&Path>) -> Result<Vec<String>, SensitivityError> {
    let Some(path) = path else { return Ok(Vec::new()) };
    match fs::read_to_string(path) {
        Ok(text) => Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("lexicon file {} not found, using an empty list", path.display());
            Ok(Vec::new())
        }
        Err(e) => Err(e.into()),
    }
}

/// Blocks to add after a message containing a banned token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutoBlockAction {
    pub sender: String,
    /// Users who will block the sender: the recipient of a direct message,
    /// or every other member of the group.
    pub blockers: Vec<String>,
    pub token: String,
}

/// Checks a stored message against the lexicon. `group_members` are the
/// current members when the message went to a group.
pub fn scan_and_auto_block(
    msg: &ChatMessage,
    lexicon: &Lexicon,
    group_members: Option<&BTreeSet<String>>,
) -> Option<AutoBlockAction> {
    let token = lexicon.first_banned(&msg.body)?;
    let blockers: Vec<String> = match &msg.target {
        Target::User(to) if *to != msg.sender => vec![to.clone()],
        Target::User(_) => Vec::new(),
        Target::Group(_) => group_members
            .into_iter()
            .flatten()
            .filter(|m| **m != msg.sender)
            .cloned()
            .collect(),
    };
    Some(AutoBlockAction { sender: msg.sender.clone(), blockers, token })
}
