//! Context-sensitive messenger features.
//!
//! - [`geo`]: great-circle distances and geofence enter events.
//! - [`lexicon`]: the tokenizer, banned and good word lists, and the
//!   auto-block rule for messages with banned words.
//! - [`reputation`]: opt-in automatic unblocking behind a pluggable score.
//! - [`crisis`]: alert feeds and crisis groups of nearby users.
//! - [`servers`]: the named server directory clients pick from.
//! - [`phrases`]: n-gram counts and autocomplete.
//! - [`usage`]: usage reports built from stored data.
//!
//! Everything here is either a pure function or works on per-user state, so
//! callers may evaluate different users concurrently.

pub mod crisis;
mod error;
pub mod geo;
pub mod lexicon;
pub mod phrases;
pub mod reputation;
pub mod servers;
pub mod usage;

pub use crisis::{crisis_broadcast, read_alert_feed, CrisisAlert, CrisisKind, CrisisOutcome};
pub use error::SensitivityError;
pub use geo::{geofence_check, haversine_distance, FenceState, Geofence, GeofenceEvent, EARTH_RADIUS_M};
pub use lexicon::{scan_and_auto_block, tokenize, AutoBlockAction, Lexicon};
pub use phrases::{autocomplete_suggest, build_phrase_model, PhraseCount, PhraseModel};
pub use reputation::{evaluate_unblock, LexiconReputation, ReputationProvider, UnblockAction, DEFAULT_UNBLOCK_THRESHOLD};
pub use servers::{list_servers, ServerEntry};
pub use usage::{usage_report, GeoBucket, UsageReport};
