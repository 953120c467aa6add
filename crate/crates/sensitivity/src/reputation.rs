use std::sync::Arc;

use agentmesh_store::{ChatMessage, Store, UserRecord};

use crate::lexicon::{tokenize, Lexicon};
use crate::SensitivityError;

pub const DEFAULT_UNBLOCK_THRESHOLD: f64 = 0.8;
/// How many of a user's latest messages the default provider looks at.
pub const REPUTATION_WINDOW: usize = 50;

/// Source of a good-behavior score in `[0, 1]` for a user.
pub trait ReputationProvider: Send + Sync {
    fn score(&self, user: &str, store: &Store) -> Result<f64, SensitivityError>;
}

/// Scores a user by the share of their latest messages that contain a good
/// token and no banned token. A user with no messages scores 0.
pub struct LexiconReputation {
    lexicon: Arc<Lexicon>,
    window: usize,
}

impl LexiconReputation {
    pub fn new(lexicon: Arc<Lexicon>) -> Self {
        LexiconReputation { lexicon, window: REPUTATION_WINDOW }
    }

    pub fn is_good_message(&self, msg: &ChatMessage) -> bool {
        let tokens = tokenize(&msg.body);
        tokens.iter().any(|t| self.lexicon.is_good(t)) && !tokens.iter().any(|t| self.lexicon.is_banned(t))
    }
}

impl ReputationProvider for LexiconReputation {
    fn score(&self, user: &str, store: &Store) -> Result<f64, SensitivityError> {
        let recent = store.recent_messages_by(user, self.window);
        if recent.is_empty() {
            return Ok(0.0);
        }
        let good = recent.iter().filter(|m| self.is_good_message(m)).count();
        Ok(good as f64 / recent.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnblockAction {
    pub blocker: String,
    pub blocked: String,
    pub score: f64,
}

/// Asks `provider` whether `blocked` has behaved well enough to be unblocked
/// by `blocker`. Users who have not opted in are never evaluated.
pub fn evaluate_unblock(
    blocker: &UserRecord,
    blocked: &str,
    provider: &dyn ReputationProvider,
    store: &Store,
    threshold: f64,
) -> Result<Option<UnblockAction>, SensitivityError> {
    if !blocker.auto_unblock || !store.is_blocked(&blocker.user_name, blocked) {
        return Ok(None);
    }
    let score = provider.score(blocked, store)?;
    Ok((score >= threshold).then(|| UnblockAction {
        blocker: blocker.user_name.clone(),
        blocked: blocked.to_string(),
        score,
    }))
}
