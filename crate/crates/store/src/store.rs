use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use agentmesh_acl::now_millis;

use crate::archive::ArchiveBundle;
use crate::frames::{read_frames, write_atomic, FrameFile};
use crate::index::{ConvIndex, ConvKey, DropReason, IndexEntry, IndexReview, IndexReviewReport};
use crate::model::{
    ActionLogEntry, BlockRecord, ChatMessage, GeoPoint, GroupRecord, NewMessage, Target, Timestamp, UserRecord,
    UserStatus,
};
use crate::StoreError;

pub const CATALOG_FILE: &str = "catalog.json";
pub const ACTION_LOG_FILE: &str = "actions.log";

/// Share of dead entries at which an index is rebuilt during review.
const FRAGMENTATION_LIMIT: f64 = 0.25;
/// Indexes covering more than this share of the hot log are no better than a scan.
const SELECTIVITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct StoreOptions {
    /// Sync every write to stable storage before acknowledging it.
    pub sync: bool,
    /// A new segment file is started once the current one reaches this size.
    pub segment_bytes: u64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { sync: true, segment_bytes: 8 * 1024 * 1024 }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Record {
    Message(ChatMessage),
    Tombstone { message_id: u64, user: String },
    Archived { group: String, through_id: u64, archived_at: Timestamp },
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    blocks: Vec<BlockRecord>,
    groups: Vec<GroupRecord>,
    users: Vec<UserRecord>,
}

#[derive(Default)]
struct Catalog {
    users: BTreeMap<String, UserRecord>,
    groups: BTreeMap<String, GroupRecord>,
    blocks: BTreeMap<(String, String), BlockRecord>,
}

impl Catalog {
    fn from_file(file: CatalogFile) -> Result<Catalog, StoreError> {
        let mut cat = Catalog::default();
        for mut u in file.users {
            u.status = UserStatus::Offline;
            let name = u.user_name.clone();
            if cat.users.insert(name.clone(), u).is_some() {
                return Err(StoreError::Corrupt(format!("user {name:?} listed twice")));
            }
        }
        for g in file.groups {
            if let Some(m) = g.members.iter().find(|m| !cat.users.contains_key(*m)) {
                return Err(StoreError::Corrupt(format!("group {:?} lists unknown member {m:?}", g.group_name)));
            }
            cat.groups.insert(g.group_name.clone(), g);
        }
        for b in file.blocks {
            for n in [&b.blocker, &b.blocked] {
                if !cat.users.contains_key(n) {
                    return Err(StoreError::Corrupt(format!("block references unknown user {n:?}")));
                }
            }
            cat.blocks.insert((b.blocker.clone(), b.blocked.clone()), b);
        }
        Ok(cat)
    }

    fn to_json(&self) -> Vec<u8> {
        let file = CatalogFile {
            blocks: self.blocks.values().cloned().collect(),
            groups: self.groups.values().cloned().collect(),
            users: self.users.values().cloned().collect(),
        };
        // Going through Value sorts every object's keys.
        let value = serde_json::to_value(file).expect("catalog serializes");
        serde_json::to_vec_pretty(&value).expect("catalog serializes")
    }
}

struct Slot {
    msg: ChatMessage,
    segment: u32,
    offset: u64,
}

struct Segments {
    dir: Option<PathBuf>,
    current: Option<FrameFile>,
    number: u32,
    next_offset: u64,
    limit: u64,
    sync: bool,
}

pub(crate) fn segment_name(number: u32) -> String {
    format!("seg-{number:04}.log")
}

fn segment_number(file_name: &str) -> Option<u32> {
    file_name.strip_prefix("seg-")?.strip_suffix(".log")?.parse().ok()
}

impl Segments {
    fn append(&mut self, record: &Record) -> Result<(u32, u64), StoreError> {
        let Some(dir) = &self.dir else {
            let offset = self.next_offset;
            self.next_offset += 1;
            return Ok((self.number, offset));
        };
        if self.current.as_ref().is_none_or(|f| f.len() >= self.limit) {
            if self.current.is_some() {
                self.number += 1;
            }
            self.current = Some(FrameFile::open(&dir.join(segment_name(self.number)), self.sync)?);
        }
        let payload = serde_json::to_vec(record).expect("record serializes");
        let file = self.current.as_mut().expect("segment open");
        Ok((self.number, file.append(&payload)?))
    }

    fn append_all(&mut self, records: &[Record]) -> Result<(), StoreError> {
        if self.dir.is_none() || records.is_empty() {
            return Ok(());
        }
        if self.current.is_none() {
            self.append(&records[0])?;
            return self.append_all(&records[1..]);
        }
        let payloads: Vec<Vec<u8>> = records.iter().map(|r| serde_json::to_vec(r).expect("record serializes")).collect();
        self.current
            .as_mut()
            .expect("segment open")
            .append_all(payloads.iter().map(Vec::as_slice))
    }
}

/// File name of a group's archive, with bytes outside `[A-Za-z0-9._-]`
/// written as `%XX`.
pub fn archive_file_name(group: &str) -> String {
    let mut out = String::from("arc-");
    for b in group.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out.push_str(".bin");
    out
}

/// Users, groups, blocks, the message log and the action log.
///
/// Writes take `&mut self` and reads `&self`, so a `RwLock<Store>` gives one
/// writer with concurrent readers.
pub struct Store {
    dir: Option<PathBuf>,
    sync: bool,
    catalog: Catalog,
    segments: Segments,
    actions: Vec<ActionLogEntry>,
    action_file: Option<FrameFile>,
    /// Archive bundles of an in-memory store.
    archives: HashMap<String, Vec<Vec<u8>>>,
    messages: BTreeMap<u64, Slot>,
    indexes: HashMap<ConvKey, ConvIndex>,
    unindexed: HashSet<ConvKey>,
    next_id: u64,
}

impl Store {
    /// A store that keeps everything in memory.
    pub fn in_memory() -> Store {
        Store {
            dir: None,
            sync: false,
            catalog: Catalog::default(),
            segments: Segments { dir: None, current: None, number: 1, next_offset: 0, limit: u64::MAX, sync: false },
            actions: Vec::new(),
            action_file: None,
            archives: HashMap::new(),
            messages: BTreeMap::new(),
            indexes: HashMap::new(),
            unindexed: HashSet::new(),
            next_id: 1,
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Store, StoreError> {
        Self::open_with(dir, StoreOptions::default())
    }

    /// Opens or creates the store in `dir`, replaying its segments.
    pub fn open_with(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Store, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;

        let catalog = match fs::read(dir.join(CATALOG_FILE)) {
            Ok(bytes) => {
                let file: CatalogFile =
                    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(format!("{CATALOG_FILE}: {e}")))?;
                Catalog::from_file(file)?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Catalog::default(),
            Err(e) => return Err(e.into()),
        };

        let mut numbers: Vec<u32> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| segment_number(&e.file_name().to_string_lossy()))
            .collect();
        numbers.sort_unstable();

        let mut store = Store {
            dir: Some(dir.clone()),
            sync: options.sync,
            catalog,
            segments: Segments {
                dir: Some(dir.clone()),
                current: None,
                number: numbers.last().copied().unwrap_or(1),
                next_offset: 0,
                limit: options.segment_bytes.max(1),
                sync: options.sync,
            },
            actions: Vec::new(),
            action_file: None,
            archives: HashMap::new(),
            messages: BTreeMap::new(),
            indexes: HashMap::new(),
            unindexed: HashSet::new(),
            next_id: 1,
        };

        for (i, n) in numbers.iter().enumerate() {
            let name = segment_name(*n);
            let is_last = i + 1 == numbers.len();
            for (offset, payload) in read_frames(&dir.join(&name), is_last)? {
                let record: Record = serde_json::from_slice(&payload)
                    .map_err(|e| StoreError::Corrupt(format!("{name} at {offset}: {e}")))?;
                store.replay(record, *n, offset);
            }
        }
        if !numbers.is_empty() {
            store.segments.current =
                Some(FrameFile::open(&dir.join(segment_name(store.segments.number)), options.sync)?);
        }
        store.rebuild_all_indexes();

        let action_path = dir.join(ACTION_LOG_FILE);
        for (offset, payload) in read_frames(&action_path, true)? {
            let entry: ActionLogEntry = serde_json::from_slice(&payload)
                .map_err(|e| StoreError::Corrupt(format!("{ACTION_LOG_FILE} at {offset}: {e}")))?;
            store.actions.push(entry);
        }
        store.action_file = Some(FrameFile::open(&action_path, false)?);

        log::info!(
            "opened store at {}: {} users, {} groups, {} messages",
            dir.display(),
            store.catalog.users.len(),
            store.catalog.groups.len(),
            store.messages.len()
        );
        Ok(store)
    }

    fn replay(&mut self, record: Record, segment: u32, offset: u64) {
        match record {
            Record::Message(msg) => {
                self.next_id = self.next_id.max(msg.message_id + 1);
                self.messages.insert(msg.message_id, Slot { msg, segment, offset });
            }
            Record::Tombstone { message_id, user } => {
                if let Some(slot) = self.messages.get_mut(&message_id) {
                    slot.msg.deleted_for.insert(user);
                }
            }
            Record::Archived { group, through_id, .. } => {
                self.next_id = self.next_id.max(through_id + 1);
                self.messages
                    .retain(|id, s| *id > through_id || s.msg.target != Target::Group(group.clone()));
            }
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn save_catalog(&self) -> Result<(), StoreError> {
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(CATALOG_FILE), &self.catalog.to_json(), self.sync)?;
        }
        Ok(())
    }

    // ---- users --------------------------------------------------------

    pub fn add_user(&mut self, user: UserRecord) -> Result<(), StoreError> {
        if self.catalog.users.contains_key(&user.user_name) {
            return Err(StoreError::DuplicateUser(user.user_name));
        }
        self.catalog.users.insert(user.user_name.clone(), user);
        self.save_catalog()
    }

    pub fn user(&self, name: &str) -> Option<&UserRecord> {
        self.catalog.users.get(name)
    }

    /// All users, sorted by name.
    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.catalog.users.values()
    }

    fn user_mut(&mut self, name: &str) -> Result<&mut UserRecord, StoreError> {
        self.catalog.users.get_mut(name).ok_or_else(|| StoreError::UnknownUser(name.to_string()))
    }

    /// Presence is not persisted; every user is offline after a reopen.
    pub fn set_status(&mut self, name: &str, status: UserStatus) -> Result<(), StoreError> {
        self.user_mut(name)?.status = status;
        Ok(())
    }

    pub fn set_location(&mut self, name: &str, at: GeoPoint) -> Result<(), StoreError> {
        self.user_mut(name)?.last_location = Some(at);
        self.save_catalog()
    }

    pub fn set_auto_unblock(&mut self, name: &str, enabled: bool) -> Result<(), StoreError> {
        self.user_mut(name)?.auto_unblock = enabled;
        self.save_catalog()
    }

    // ---- groups -------------------------------------------------------

    pub fn create_group(&mut self, group: GroupRecord) -> Result<(), StoreError> {
        if self.catalog.groups.contains_key(&group.group_name) {
            return Err(StoreError::DuplicateGroup(group.group_name));
        }
        if let Some(m) = group.members.iter().find(|m| !self.catalog.users.contains_key(*m)) {
            return Err(StoreError::UnknownUser(m.clone()));
        }
        self.catalog.groups.insert(group.group_name.clone(), group);
        self.save_catalog()
    }

    pub fn group(&self, name: &str) -> Option<&GroupRecord> {
        self.catalog.groups.get(name)
    }

    pub fn groups(&self) -> impl Iterator<Item = &GroupRecord> {
        self.catalog.groups.values()
    }

    /// Adds `user` to `group`. An archived group becomes active again.
    pub fn add_member(&mut self, group: &str, user: &str) -> Result<(), StoreError> {
        if !self.catalog.users.contains_key(user) {
            return Err(StoreError::UnknownUser(user.to_string()));
        }
        let g = self.group_mut(group)?;
        if !g.members.insert(user.to_string()) {
            return Err(StoreError::AlreadyMember { user: user.to_string(), group: group.to_string() });
        }
        g.archived_at = None;
        self.save_catalog()
    }

    pub fn remove_member(&mut self, group: &str, user: &str) -> Result<(), StoreError> {
        let g = self.group_mut(group)?;
        if !g.members.remove(user) {
            return Err(StoreError::NotAMember { user: user.to_string(), group: group.to_string() });
        }
        self.save_catalog()
    }

    /// Clears the archived flag so the group takes new messages again.
    pub fn reactivate_group(&mut self, group: &str) -> Result<(), StoreError> {
        let g = self.group_mut(group)?;
        if g.archived_at.take().is_some() {
            self.save_catalog()?;
        }
        Ok(())
    }

    fn group_mut(&mut self, name: &str) -> Result<&mut GroupRecord, StoreError> {
        self.catalog.groups.get_mut(name).ok_or_else(|| StoreError::UnknownGroup(name.to_string()))
    }

    // ---- blocks -------------------------------------------------------

    pub fn add_block(&mut self, block: BlockRecord) -> Result<(), StoreError> {
        if block.blocker == block.blocked {
            return Err(StoreError::SelfBlock);
        }
        for n in [&block.blocker, &block.blocked] {
            if !self.catalog.users.contains_key(n) {
                return Err(StoreError::UnknownUser(n.clone()));
            }
        }
        let key = (block.blocker.clone(), block.blocked.clone());
        if self.catalog.blocks.contains_key(&key) {
            return Err(StoreError::AlreadyBlocked { blocker: key.0, blocked: key.1 });
        }
        self.catalog.blocks.insert(key, block);
        self.save_catalog()
    }

    pub fn remove_block(&mut self, blocker: &str, blocked: &str) -> Result<BlockRecord, StoreError> {
        let removed = self
            .catalog
            .blocks
            .remove(&(blocker.to_string(), blocked.to_string()))
            .ok_or_else(|| StoreError::NotBlocked { blocker: blocker.to_string(), blocked: blocked.to_string() })?;
        self.save_catalog()?;
        Ok(removed)
    }

    pub fn is_blocked(&self, blocker: &str, blocked: &str) -> bool {
        self.catalog.blocks.contains_key(&(blocker.to_string(), blocked.to_string()))
    }

    pub fn block(&self, blocker: &str, blocked: &str) -> Option<&BlockRecord> {
        self.catalog.blocks.get(&(blocker.to_string(), blocked.to_string()))
    }

    /// Blocks placed by `blocker`, sorted by blocked name.
    pub fn blocks_by(&self, blocker: &str) -> Vec<&BlockRecord> {
        self.catalog.blocks.values().filter(|b| b.blocker == blocker).collect()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockRecord> {
        self.catalog.blocks.values()
    }

    // ---- messages -----------------------------------------------------

    /// Appends a message, assigning the next id. The message is durable
    /// (with `sync`) and indexed when this returns.
    pub fn append_message(&mut self, new: NewMessage) -> Result<ChatMessage, StoreError> {
        if !self.catalog.users.contains_key(&new.sender) {
            return Err(StoreError::Integrity(format!("sender {:?} does not exist", new.sender)));
        }
        match &new.target {
            Target::User(u) if !self.catalog.users.contains_key(u) => {
                return Err(StoreError::Integrity(format!("recipient {u:?} does not exist")))
            }
            Target::Group(g) if !self.catalog.groups.contains_key(g) => {
                return Err(StoreError::Integrity(format!("group {g:?} does not exist")))
            }
            _ => {}
        }
        let msg = ChatMessage {
            message_id: self.next_id,
            sender: new.sender,
            target: new.target,
            body: new.body,
            sent_at: new.sent_at,
            deleted_for: Default::default(),
        };
        let record = Record::Message(msg);
        let (segment, offset) = self.segments.append(&record)?;
        let Record::Message(msg) = record else { unreachable!() };
        self.next_id += 1;

        if let Target::User(to) = &msg.target {
            if *to != msg.sender {
                let added = self.user_mut(&msg.sender)?.friends.insert(to.clone())
                    | self.user_mut(to)?.friends.insert(msg.sender.clone());
                if added {
                    self.save_catalog()?;
                }
            }
        }
        let key = ConvKey::of(&msg);
        if !self.unindexed.contains(&key) {
            let entry = IndexEntry { sent_at: msg.sent_at, message_id: msg.message_id, segment, offset };
            self.indexes.entry(key).or_insert_with(|| ConvIndex::new(Vec::new())).entries.push(entry);
        }
        self.messages.insert(msg.message_id, Slot { msg: msg.clone(), segment, offset });
        Ok(msg)
    }

    pub fn message(&self, id: u64) -> Option<&ChatMessage> {
        self.messages.get(&id).map(|s| &s.msg)
    }

    /// Every message in the hot log, oldest first.
    pub fn messages(&self) -> impl DoubleEndedIterator<Item = &ChatMessage> {
        self.messages.values().map(|s| &s.msg)
    }

    pub fn hot_len(&self) -> usize {
        self.messages.len()
    }

    /// The id the next appended message will get.
    pub fn next_message_id(&self) -> u64 {
        self.next_id
    }

    /// The newest-first page of `viewer`'s conversation with `peer`: at
    /// most `limit` messages with ids below `before`, skipping those the
    /// viewer deleted or cannot see.
    pub fn query_history(&self, viewer: &str, peer: &Target, limit: usize, before: Option<u64>) -> Vec<ChatMessage> {
        let key = ConvKey::between(viewer, peer);
        match self.indexes.get(&key) {
            Some(index) => {
                index.record_hit(now_millis());
                self.page_from_index(index, viewer, peer, limit, before)
            }
            None if self.unindexed.contains(&key) => self.scan_history(viewer, peer, limit, before),
            None => Vec::new(),
        }
    }

    fn members_of(&self, peer: &Target) -> Option<Option<&std::collections::BTreeSet<String>>> {
        match peer {
            Target::User(_) => Some(None),
            Target::Group(g) => self.catalog.groups.get(g).map(|g| Some(&g.members)),
        }
    }

    fn page_from_index(
        &self,
        index: &ConvIndex,
        viewer: &str,
        peer: &Target,
        limit: usize,
        before: Option<u64>,
    ) -> Vec<ChatMessage> {
        let Some(members) = self.members_of(peer) else { return Vec::new() };
        index
            .newest_first(before)
            .filter_map(|e| self.messages.get(&e.message_id))
            .map(|s| &s.msg)
            .filter(|m| m.visible_to(viewer, members))
            .take(limit)
            .cloned()
            .collect()
    }

    /// Same result as [`query_history`](Self::query_history), computed by
    /// scanning the whole hot log.
    pub fn scan_history(&self, viewer: &str, peer: &Target, limit: usize, before: Option<u64>) -> Vec<ChatMessage> {
        let Some(members) = self.members_of(peer) else { return Vec::new() };
        let key = ConvKey::between(viewer, peer);
        let upper = before.unwrap_or(u64::MAX);
        self.messages
            .range(..upper)
            .rev()
            .map(|(_, s)| &s.msg)
            .filter(|m| ConvKey::of(m) == key && m.visible_to(viewer, members))
            .take(limit)
            .cloned()
            .collect()
    }

    /// `sent_at` of the newest message in the conversation that `viewer`
    /// can see.
    pub fn last_visible(&self, viewer: &str, peer: &Target) -> Option<Timestamp> {
        let key = ConvKey::between(viewer, peer);
        let msg = match self.indexes.get(&key) {
            Some(index) => self.page_from_index(index, viewer, peer, 1, None),
            None if self.unindexed.contains(&key) => self.scan_history(viewer, peer, 1, None),
            None => Vec::new(),
        };
        msg.first().map(|m| m.sent_at)
    }

    /// Peers `viewer` has a direct conversation with that still has a
    /// message visible to the viewer, newest conversation first.
    pub fn direct_conversations(&self, viewer: &str) -> Vec<(String, Timestamp)> {
        let Some(user) = self.catalog.users.get(viewer) else { return Vec::new() };
        let mut out: Vec<(String, Timestamp)> = user
            .friends
            .iter()
            .filter_map(|f| self.last_visible(viewer, &Target::User(f.clone())).map(|t| (f.clone(), t)))
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// `sent_at` of the newest hot message in `group`.
    pub fn group_last_message(&self, group: &str) -> Option<Timestamp> {
        let key = ConvKey::Group(group.to_string());
        match self.indexes.get(&key) {
            Some(index) => index.entries.iter().rev().find(|e| self.messages.contains_key(&e.message_id)).map(|e| e.sent_at),
            None if self.unindexed.contains(&key) => {
                self.messages.values().rev().find(|s| ConvKey::of(&s.msg) == key).map(|s| s.msg.sent_at)
            }
            None => None,
        }
    }

    /// Up to `n` of `user`'s most recent messages, newest first.
    pub fn recent_messages_by(&self, user: &str, n: usize) -> Vec<&ChatMessage> {
        self.messages().rev().filter(|m| m.sender == user).take(n).collect()
    }

    /// Hides a message from `user`. Returns false if it already was.
    pub fn delete_for(&mut self, message_id: u64, user: &str) -> Result<bool, StoreError> {
        let slot = self.messages.get(&message_id).ok_or(StoreError::UnknownMessage(message_id))?;
        if slot.msg.deleted_for.contains(user) {
            return Ok(false);
        }
        self.segments.append(&Record::Tombstone { message_id, user: user.to_string() })?;
        self.messages
            .get_mut(&message_id)
            .expect("checked above")
            .msg
            .deleted_for
            .insert(user.to_string());
        Ok(true)
    }

    /// Hides every message of the direct conversation with `peer` from
    /// `viewer`. Returns how many messages were newly hidden.
    pub fn delete_conversation_for(&mut self, viewer: &str, peer: &str) -> Result<usize, StoreError> {
        let target = Target::User(peer.to_string());
        let ids: Vec<u64> = self
            .scan_or_index_ids(viewer, &target)
            .into_iter()
            .filter(|id| self.messages[id].msg.visible_to(viewer, None))
            .collect();
        let records: Vec<Record> = ids
            .iter()
            .map(|id| Record::Tombstone { message_id: *id, user: viewer.to_string() })
            .collect();
        self.segments.append_all(&records)?;
        for id in &ids {
            if let Some(s) = self.messages.get_mut(id) {
                s.msg.deleted_for.insert(viewer.to_string());
            }
        }
        Ok(ids.len())
    }

    fn scan_or_index_ids(&self, viewer: &str, peer: &Target) -> Vec<u64> {
        let key = ConvKey::between(viewer, peer);
        match self.indexes.get(&key) {
            Some(index) => index
                .entries
                .iter()
                .map(|e| e.message_id)
                .filter(|id| self.messages.contains_key(id))
                .collect(),
            None => self
                .messages
                .iter()
                .filter(|(_, s)| ConvKey::of(&s.msg) == key)
                .map(|(id, _)| *id)
                .collect(),
        }
    }

    // ---- indexes ------------------------------------------------------

    fn build_index(&self, key: &ConvKey) -> Vec<IndexEntry> {
        self.messages
            .values()
            .filter(|s| ConvKey::of(&s.msg) == *key)
            .map(|s| IndexEntry { sent_at: s.msg.sent_at, message_id: s.msg.message_id, segment: s.segment, offset: s.offset })
            .collect()
    }

    fn rebuild_all_indexes(&mut self) {
        let mut indexes: HashMap<ConvKey, Vec<IndexEntry>> = HashMap::new();
        for s in self.messages.values() {
            indexes.entry(ConvKey::of(&s.msg)).or_default().push(IndexEntry {
                sent_at: s.msg.sent_at,
                message_id: s.msg.message_id,
                segment: s.segment,
                offset: s.offset,
            });
        }
        self.indexes = indexes.into_iter().map(|(k, v)| (k, ConvIndex::new(v))).collect();
        self.unindexed.clear();
    }

    pub fn index_keys(&self) -> Vec<ConvKey> {
        let mut keys: Vec<ConvKey> = self.indexes.keys().cloned().collect();
        keys.sort();
        keys
    }

    /// Drops the index of one conversation; its queries fall back to a scan.
    pub fn drop_index(&mut self, key: &ConvKey) -> bool {
        let existed = self.indexes.remove(key).is_some();
        if existed {
            self.unindexed.insert(key.clone());
        }
        existed
    }

    pub fn rebuild_index(&mut self, key: &ConvKey) {
        let entries = self.build_index(key);
        self.unindexed.remove(key);
        let index = match self.indexes.get(key) {
            Some(old) => old.with_entries(entries),
            None => ConvIndex::new(entries),
        };
        self.indexes.insert(key.clone(), index);
    }

    /// Entries that can no longer appear in any result: their message left
    /// the hot log, or both sides of a direct conversation deleted it.
    fn is_dead(&self, key: &ConvKey, entry: &IndexEntry) -> bool {
        match (self.messages.get(&entry.message_id), key) {
            (None, _) => true,
            (Some(s), ConvKey::Direct(a, b)) => s.msg.deleted_for.contains(a) && s.msg.deleted_for.contains(b),
            (Some(_), ConvKey::Group(_)) => false,
        }
    }

    /// Reports per-index usage within `window_ms` before `now`, flags drop
    /// candidates and rebuilds fragmented indexes. Query results are the
    /// same before and after.
    pub fn review_indexes(&mut self, now: Timestamp, window_ms: u64) -> IndexReviewReport {
        let hot = self.messages.len();
        let since = now.saturating_sub(window_ms);
        let mut reviews = Vec::new();
        for key in self.index_keys() {
            let index = &self.indexes[&key];
            let live: Vec<IndexEntry> = index.entries.iter().filter(|e| !self.is_dead(&key, e)).copied().collect();
            let total = index.entries.len();
            let dead = total - live.len();
            let hits = index.hits_since(since);
            let selectivity = if hot == 0 { 0.0 } else { live.len() as f64 / hot as f64 };
            let drop_candidate = if hits == 0 {
                Some(DropReason::ZeroHits)
            } else if selectivity > SELECTIVITY_LIMIT {
                Some(DropReason::PoorSelectivity)
            } else {
                None
            };
            let rebuilt = dead > 0 && dead as f64 >= FRAGMENTATION_LIMIT * total as f64;
            reviews.push(IndexReview {
                key: key.to_string(),
                entries: total,
                live_entries: live.len(),
                hits_in_window: hits,
                hits_total: index.hits_total(),
                selectivity,
                drop_candidate,
                rebuilt,
            });
            if rebuilt {
                let fresh = index.with_entries(live);
                self.indexes.insert(key, fresh);
            }
        }
        IndexReviewReport { reviewed_at: now, window_ms, hot_messages: hot, indexes: reviews }
    }

    // ---- action log ---------------------------------------------------

    pub fn log_action(&mut self, entry: ActionLogEntry) -> Result<(), StoreError> {
        if let Some(f) = &mut self.action_file {
            f.append(&serde_json::to_vec(&entry).expect("entry serializes"))?;
        }
        self.actions.push(entry);
        Ok(())
    }

    pub fn actions(&self) -> &[ActionLogEntry] {
        &self.actions
    }

    /// Removes action-log entries older than `now - ttl_ms`. Messages are
    /// never touched. Returns how many entries were removed.
    pub fn purge_expired_logs(&mut self, now: Timestamp, ttl_ms: u64) -> Result<usize, StoreError> {
        if ttl_ms == 0 {
            return Err(StoreError::InvalidTtl);
        }
        let cutoff = now.saturating_sub(ttl_ms);
        let before = self.actions.len();
        let kept: Vec<ActionLogEntry> = self.actions.iter().filter(|e| e.at >= cutoff).cloned().collect();
        let purged = before - kept.len();
        if purged > 0 {
            if let Some(f) = &mut self.action_file {
                let payloads: Vec<Vec<u8>> =
                    kept.iter().map(|e| serde_json::to_vec(e).expect("entry serializes")).collect();
                f.rewrite(payloads.iter().map(Vec::as_slice))?;
            }
            self.actions = kept;
        }
        Ok(purged)
    }

    // ---- archive ------------------------------------------------------

    /// Archives every group that has no members, or whose latest activity
    /// (creation or message) is not newer than `now - inactivity_ms`. The
    /// group's messages move from the hot log into an archive bundle.
    /// Returns the archived group names, sorted.
    pub fn archive_inactive_groups(&mut self, now: Timestamp, inactivity_ms: u64) -> Result<Vec<String>, StoreError> {
        let cutoff = now.saturating_sub(inactivity_ms);
        let candidates: Vec<String> = self
            .catalog
            .groups
            .values()
            .filter(|g| g.archived_at.is_none())
            .filter(|g| {
                let last = self.group_last_message(&g.group_name).unwrap_or(0).max(g.created_at);
                g.members.is_empty() || last <= cutoff
            })
            .map(|g| g.group_name.clone())
            .collect();

        for name in &candidates {
            let target = Target::Group(name.clone());
            let messages: Vec<ChatMessage> =
                self.messages.values().filter(|s| s.msg.target == target).map(|s| s.msg.clone()).collect();
            if let Some(last) = messages.last() {
                let through_id = last.message_id;
                let bundle = ArchiveBundle::new(name.clone(), now, messages).encode()?;
                self.write_bundle(name, bundle)?;
                self.segments.append(&Record::Archived { group: name.clone(), through_id, archived_at: now })?;
                self.messages.retain(|_, s| s.msg.target != target);
            }
            let key = ConvKey::Group(name.clone());
            self.indexes.remove(&key);
            self.unindexed.remove(&key);
            self.group_mut(name)?.archived_at = Some(now);
        }
        if !candidates.is_empty() {
            self.save_catalog()?;
            log::info!("archived groups {candidates:?}");
        }
        Ok(candidates)
    }

    fn write_bundle(&mut self, group: &str, bundle: Vec<u8>) -> Result<(), StoreError> {
        match &self.dir {
            Some(dir) => {
                let mut f = FrameFile::open(&dir.join(archive_file_name(group)), self.sync)?;
                f.append(&bundle)?;
            }
            None => self.archives.entry(group.to_string()).or_default().push(bundle),
        }
        Ok(())
    }

    /// Every bundle archived for `group`, oldest first.
    pub fn load_archive(&self, group: &str) -> Result<Vec<ArchiveBundle>, StoreError> {
        let raw: Vec<Vec<u8>> = match &self.dir {
            Some(dir) => read_frames(&dir.join(archive_file_name(group)), false)?.into_iter().map(|(_, p)| p).collect(),
            None => self.archives.get(group).cloned().unwrap_or_default(),
        };
        raw.iter().map(|b| ArchiveBundle::decode(b)).collect()
    }

    /// The archived messages of `group` in their original order.
    pub fn expand_archive(&self, group: &str) -> Result<Vec<ChatMessage>, StoreError> {
        Ok(self.load_archive(group)?.into_iter().flat_map(|b| b.messages).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded() -> Store {
        let mut s = Store::in_memory();
        for u in ["alice", "bob", "carol"] {
            s.add_user(UserRecord::new(u, "digest", 1)).unwrap();
        }
        s
    }

    fn send(s: &mut Store, from: &str, to: Target, body: &str, at: u64) -> ChatMessage {
        s.append_message(NewMessage { sender: from.into(), target: to, body: body.into(), sent_at: at }).unwrap()
    }

    fn dm(name: &str) -> Target {
        Target::User(name.into())
    }

    #[test]
    fn ids_increase_and_history_is_newest_first() {
        let mut s = seeded();
        let ids: Vec<u64> = (0..5).map(|i| send(&mut s, "alice", dm("bob"), &i.to_string(), 100 + i).message_id).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let h = s.query_history("bob", &dm("alice"), 10, None);
        let bodies: Vec<_> = h.iter().map(|m| m.body.as_str()).collect();
        assert_eq!(bodies, ["4", "3", "2", "1", "0"]);
        assert!(s.query_history("carol", &dm("alice"), 10, None).is_empty());
    }

    #[test]
    fn unknown_references_are_integrity_errors() {
        let mut s = seeded();
        let bad_group = NewMessage { sender: "alice".into(), target: Target::Group("nope".into()), body: "x".into(), sent_at: 1 };
        assert!(matches!(s.append_message(bad_group), Err(StoreError::Integrity(_))));
        let bad_sender = NewMessage { sender: "zed".into(), target: dm("bob"), body: "x".into(), sent_at: 1 };
        assert!(matches!(s.append_message(bad_sender), Err(StoreError::Integrity(_))));
        assert_eq!(s.next_message_id(), 1);
    }

    #[test]
    fn tombstones_are_per_viewer() {
        let mut s = seeded();
        let m = send(&mut s, "alice", dm("bob"), "hi", 5);
        assert!(s.delete_for(m.message_id, "alice").unwrap());
        assert!(!s.delete_for(m.message_id, "alice").unwrap());
        assert!(s.query_history("alice", &dm("bob"), 10, None).is_empty());
        assert_eq!(s.query_history("bob", &dm("alice"), 10, None).len(), 1);
        assert!(matches!(s.delete_for(999, "alice"), Err(StoreError::UnknownMessage(999))));
    }

    #[test]
    fn friends_and_conversations() {
        let mut s = seeded();
        send(&mut s, "alice", dm("bob"), "a", 10);
        send(&mut s, "carol", dm("alice"), "b", 20);
        assert_eq!(s.user("alice").unwrap().friends.len(), 2);
        let conv = s.direct_conversations("alice");
        assert_eq!(conv, [("carol".to_string(), 20), ("bob".to_string(), 10)]);
        assert_eq!(s.delete_conversation_for("alice", "carol").unwrap(), 1);
        assert_eq!(s.direct_conversations("alice"), [("bob".to_string(), 10)]);
        assert_eq!(s.direct_conversations("carol").len(), 1);
    }

    #[test]
    fn blocks_validate() {
        let mut s = seeded();
        let b = |x: &str, y: &str| BlockRecord { blocker: x.into(), blocked: y.into(), reason: None, since: 1 };
        s.add_block(b("alice", "bob")).unwrap();
        assert!(s.is_blocked("alice", "bob") && !s.is_blocked("bob", "alice"));
        assert!(matches!(s.add_block(b("alice", "bob")), Err(StoreError::AlreadyBlocked { .. })));
        assert!(matches!(s.add_block(b("alice", "alice")), Err(StoreError::SelfBlock)));
        assert!(matches!(s.add_block(b("alice", "zed")), Err(StoreError::UnknownUser(_))));
        s.remove_block("alice", "bob").unwrap();
        assert!(matches!(s.remove_block("alice", "bob"), Err(StoreError::NotBlocked { .. })));
    }

    #[test]
    fn dropped_index_falls_back_to_scan() {
        let mut s = seeded();
        for i in 0..20 {
            send(&mut s, if i % 2 == 0 { "alice" } else { "bob" }, dm(if i % 2 == 0 { "bob" } else { "alice" }), "x", i);
        }
        let key = ConvKey::direct("alice", "bob");
        let before = s.query_history("alice", &dm("bob"), 7, Some(15));
        assert!(s.drop_index(&key));
        assert_eq!(s.query_history("alice", &dm("bob"), 7, Some(15)), before);
        send(&mut s, "alice", dm("bob"), "late", 99);
        assert_eq!(s.query_history("bob", &dm("alice"), 1, None)[0].body, "late");
        s.rebuild_index(&key);
        assert_eq!(s.query_history("bob", &dm("alice"), 100, None).len(), 21);
    }

    #[test]
    fn archive_file_names_are_escaped() {
        assert_eq!(archive_file_name("team-1"), "arc-team-1.bin");
        assert_eq!(archive_file_name("a/b c"), "arc-a%2Fb%20c.bin");
    }
}
