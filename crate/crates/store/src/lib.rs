//! Persistence for the messenger: a JSON catalog of users, groups and
//! blocks, an append-only segmented message log with per-conversation
//! indexes, an action log, and the maintenance procedures that keep them
//! lean (log purging, group archival and index review).
//!
//! On-disk layout of a store directory:
//!
//! | file | contents |
//! |------|----------|
//! | `catalog.json` | users, groups and blocks, keys sorted |
//! | `seg-NNNN.log` | length-prefixed JSON records: messages, tombstones, archive marks |
//! | `actions.log` | length-prefixed JSON action-log entries |
//! | `arc-<group>.bin` | length-prefixed archive bundles, see [`ArchiveBundle`] |

mod archive;
mod error;
mod frames;
mod index;
mod model;
mod store;

pub use archive::ArchiveBundle;
pub use error::StoreError;
pub use index::{ConvKey, DropReason, IndexReview, IndexReviewReport};
pub use model::{
    ActionLogEntry, BlockReason, BlockRecord, ChatMessage, GeoPoint, GroupRecord, NewMessage, Outcome, Target,
    Timestamp, UserRecord, UserStatus, PREDEFINED_REASONS,
};
pub use store::{archive_file_name, Store, StoreOptions, ACTION_LOG_FILE, CATALOG_FILE};
