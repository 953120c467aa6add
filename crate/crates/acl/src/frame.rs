//! Wire framing: `[len: u32 big-endian][payload]`.
//!
//! Message payloads are canonical JSON: keys in lexicographic order, no
//! insignificant whitespace, optional fields omitted when unset. Equal
//! messages therefore always encode to identical bytes.
//!
//! The raw helpers ([`encode_raw`], [`read_raw`], [`write_raw`]) frame arbitrary
//! payloads and are reused by the storage layer for its record files.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::{AclError, AclMessage, AgentId, Performative};

/// Largest accepted payload, 16 MiB.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

// Field order is the canonical key order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireMessage {
    content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conversation_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_reply_to: Option<String>,
    performative: String,
    receivers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reply_with: Option<String>,
    sender: String,
    timestamp: u64,
}

/// Canonical JSON payload of a message, without the length prefix.
pub fn encode_payload(msg: &AclMessage) -> Vec<u8> {
    let wire = WireMessage {
        content: msg.content.clone(),
        conversation_id: msg.conversation_id.clone(),
        in_reply_to: msg.in_reply_to.clone(),
        performative: msg.performative.as_str().to_string(),
        receivers: msg.receivers.iter().map(ToString::to_string).collect(),
        reply_with: msg.reply_with.clone(),
        sender: msg.sender.to_string(),
        timestamp: msg.timestamp,
    };
    serde_json::to_vec(&wire).expect("serializing plain strings and integers cannot fail")
}

pub fn decode_payload(payload: &[u8]) -> Result<AclMessage, AclError> {
    let wire: WireMessage =
        serde_json::from_slice(payload).map_err(|e| AclError::MalformedPayload(e.to_string()))?;
    let performative: Performative = wire.performative.parse()?;
    let malformed = |e: AclError| AclError::MalformedPayload(e.to_string());
    let sender: AgentId = wire.sender.parse().map_err(malformed)?;
    let receivers = wire
        .receivers
        .iter()
        .map(|r| r.parse::<AgentId>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(malformed)?;
    if receivers.is_empty() {
        return Err(AclError::MalformedPayload("receivers must not be empty".into()));
    }
    if wire.timestamp == 0 {
        return Err(AclError::MalformedPayload("timestamp must be positive".into()));
    }
    Ok(AclMessage {
        performative,
        sender,
        receivers,
        content: wire.content,
        conversation_id: wire.conversation_id,
        reply_with: wire.reply_with,
        in_reply_to: wire.in_reply_to,
        timestamp: wire.timestamp,
    })
}

pub fn encode_frame(msg: &AclMessage) -> Result<Vec<u8>, AclError> {
    encode_raw(&encode_payload(msg))
}

/// Decodes exactly one frame; trailing bytes are a malformed payload.
pub fn decode_frame(bytes: &[u8]) -> Result<AclMessage, AclError> {
    match split_frame(bytes)? {
        Some((payload, used)) if used == bytes.len() => decode_payload(payload),
        Some((_, used)) => Err(AclError::MalformedPayload(format!(
            "{} trailing bytes after frame",
            bytes.len() - used
        ))),
        None => {
            let expected = if bytes.len() < 4 {
                4
            } else {
                4 + u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize
            };
            Err(AclError::TruncatedFrame { expected, actual: bytes.len() })
        }
    }
}

/// Prefixes `payload` with its big-endian length.
pub fn encode_raw(payload: &[u8]) -> Result<Vec<u8>, AclError> {
    if payload.len() > MAX_FRAME_LEN {
        return Err(AclError::FrameTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Splits the first complete frame off `buf`, returning its payload and the
/// number of bytes consumed, or `None` if more bytes are needed.
pub fn split_frame(buf: &[u8]) -> Result<Option<(&[u8], usize)>, AclError> {
    if buf.len() < 4 {
        return Ok(None);
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(AclError::FrameTooLarge(len));
    }
    if buf.len() < 4 + len {
        return Ok(None);
    }
    Ok(Some((&buf[4..4 + len], 4 + len)))
}

/// Reads one raw frame. Returns `Ok(None)` on a clean end of stream at a
/// frame boundary.
pub fn read_raw<R: Read>(reader: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, AclError::FrameTooLarge(len)));
    }
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload)?;
    Ok(Some(payload))
}

pub fn write_raw<W: Write>(writer: &mut W, payload: &[u8]) -> io::Result<()> {
    let frame = encode_raw(payload).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    writer.write_all(&frame)
}

/// Reads one message frame; `Ok(None)` at end of stream.
pub fn read_message<R: Read>(reader: &mut R) -> io::Result<Option<AclMessage>> {
    match read_raw(reader)? {
        None => Ok(None),
        Some(payload) => decode_payload(&payload)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
    }
}
