//! Compact encoding of archived group conversations.
//!
//! A bundle stores the names appearing in it once, in a dictionary, and each
//! message as varints relative to its predecessor:
//!
//! ```text
//! magic "AMA1"
//! group      : str
//! archived_at: uvarint
//! names      : uvarint count, then str each
//! messages   : uvarint count, then per message
//!     id delta      uvarint   (from previous id, first from 0)
//!     sent_at delta svarint   (from previous sent_at, first from 0)
//!     sender        uvarint   (dictionary index)
//!     body          str
//!     deleted_for   uvarint count, then dictionary indexes
//! str = uvarint byte length, then UTF-8 bytes
//! ```

use std::collections::{BTreeMap, BTreeSet};

use integer_encoding::VarInt;

use crate::model::{ChatMessage, Target, Timestamp};
use crate::StoreError;

const MAGIC: &[u8; 4] = b"AMA1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveBundle {
    pub group_name: String,
    pub archived_at: Timestamp,
    pub messages: Vec<ChatMessage>,
}

impl ArchiveBundle {
    pub fn new(group_name: impl Into<String>, archived_at: Timestamp, messages: Vec<ChatMessage>) -> Self {
        ArchiveBundle { group_name: group_name.into(), archived_at, messages }
    }

    /// Encodes the bundle. Every message must target this bundle's group.
    pub fn encode(&self) -> Result<Vec<u8>, StoreError> {
        let mut names = BTreeSet::new();
        for m in &self.messages {
            if m.target != Target::Group(self.group_name.clone()) {
                return Err(StoreError::Integrity(format!(
                    "message {} does not belong to group {:?}",
                    m.message_id, self.group_name
                )));
            }
            names.insert(m.sender.as_str());
            names.extend(m.deleted_for.iter().map(String::as_str));
        }
        let index: BTreeMap<&str, u64> = names.iter().enumerate().map(|(i, n)| (*n, i as u64)).collect();

        let mut out = Vec::with_capacity(16 + self.messages.len() * 16);
        out.extend_from_slice(MAGIC);
        put_str(&mut out, &self.group_name);
        put_u64(&mut out, self.archived_at);
        put_u64(&mut out, names.len() as u64);
        for n in &names {
            put_str(&mut out, n);
        }
        put_u64(&mut out, self.messages.len() as u64);
        let (mut prev_id, mut prev_at) = (0u64, 0u64);
        for m in &self.messages {
            put_u64(&mut out, m.message_id.wrapping_sub(prev_id));
            out.extend_from_slice(&(m.sent_at.wrapping_sub(prev_at) as i64).encode_var_vec());
            put_u64(&mut out, index[m.sender.as_str()]);
            put_str(&mut out, &m.body);
            put_u64(&mut out, m.deleted_for.len() as u64);
            for d in &m.deleted_for {
                put_u64(&mut out, index[d.as_str()]);
            }
            prev_id = m.message_id;
            prev_at = m.sent_at;
        }
        Ok(out)
    }

    /// Expands an encoded bundle back into the original messages.
    pub fn decode(bytes: &[u8]) -> Result<ArchiveBundle, StoreError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(StoreError::Corrupt("archive bundle has a bad magic number".into()));
        }
        let group_name = r.string()?;
        let archived_at = r.u64()?;
        let name_count = r.len()?;
        let names = (0..name_count).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
        let name = |i: u64| {
            names
                .get(i as usize)
                .cloned()
                .ok_or_else(|| StoreError::Corrupt(format!("name index {i} out of range")))
        };
        let count = r.len()?;
        let mut messages = Vec::with_capacity(count);
        let (mut prev_id, mut prev_at) = (0u64, 0u64);
        for _ in 0..count {
            let message_id = prev_id.wrapping_add(r.u64()?);
            let sent_at = prev_at.wrapping_add(r.i64()? as u64);
            let sender = name(r.u64()?)?;
            let body = r.string()?;
            let deleted = r.len()?;
            let deleted_for = (0..deleted).map(|_| name(r.u64()?)).collect::<Result<BTreeSet<_>, _>>()?;
            messages.push(ChatMessage {
                message_id,
                sender,
                target: Target::Group(group_name.clone()),
                body,
                sent_at,
                deleted_for,
            });
            prev_id = message_id;
            prev_at = sent_at;
        }
        if r.pos != bytes.len() {
            return Err(StoreError::Corrupt("trailing bytes after archive bundle".into()));
        }
        Ok(ArchiveBundle { group_name, archived_at, messages })
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.encode_var_vec());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| StoreError::Corrupt("archive bundle truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn var<T: VarInt>(&mut self) -> Result<T, StoreError> {
        let (v, n) = T::decode_var(&self.buf[self.pos..])
            .ok_or_else(|| StoreError::Corrupt("bad varint in archive bundle".into()))?;
        self.pos += n;
        Ok(v)
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        self.var()
    }

    fn i64(&mut self) -> Result<i64, StoreError> {
        self.var()
    }

    /// A count, bounded by the remaining input so corrupt data cannot
    /// trigger huge allocations.
    fn len(&mut self) -> Result<usize, StoreError> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(StoreError::Corrupt(format!("count {n} exceeds bundle size")));
        }
        Ok(n as usize)
    }

    fn string(&mut self) -> Result<String, StoreError> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| StoreError::Corrupt("non-UTF-8 text in archive bundle".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(id: u64, sender: &str, at: u64, body: &str) -> ChatMessage {
        ChatMessage {
            message_id: id,
            sender: sender.into(),
            target: Target::Group("g".into()),
            body: body.into(),
            sent_at: at,
            deleted_for: BTreeSet::new(),
        }
    }

    #[test]
    fn round_trip_with_out_of_order_timestamps() {
        let mut m2 = msg(9, "bob", 900, "second");
        m2.deleted_for.insert("carol".into());
        let bundle = ArchiveBundle::new("g", 5000, vec![msg(3, "alice", 1000, "first ✓"), m2, msg(10, "alice", 950, "")]);
        let bytes = bundle.encode().unwrap();
        assert_eq!(ArchiveBundle::decode(&bytes).unwrap(), bundle);
    }

    #[test]
    fn empty_bundle_round_trips() {
        let bundle = ArchiveBundle::new("quiet", 1, Vec::new());
        assert_eq!(ArchiveBundle::decode(&bundle.encode().unwrap()).unwrap(), bundle);
    }

    #[test]
    fn senders_stored_once() {
        let msgs: Vec<_> = (1..=200).map(|i| msg(i, "a-rather-long-sender-name", 1_700_000_000_000 + i, "hi")).collect();
        let compact = ArchiveBundle::new("g", 0, msgs.clone()).encode().unwrap();
        let json = serde_json::to_vec(&msgs).unwrap();
        assert!(compact.len() * 10 < json.len(), "{} vs {}", compact.len(), json.len());
    }

    #[test]
    fn foreign_message_rejected() {
        let mut m = msg(1, "a", 1, "x");
        m.target = Target::User("b".into());
        assert!(ArchiveBundle::new("g", 0, vec![m]).encode().is_err());
    }

    #[test]
    fn truncation_detected() {
        let bytes = ArchiveBundle::new("g", 7, vec![msg(1, "a", 2, "hello")]).encode().unwrap();
        for cut in 0..bytes.len() {
            assert!(ArchiveBundle::decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(ArchiveBundle::decode(&longer).is_err());
    }
}
