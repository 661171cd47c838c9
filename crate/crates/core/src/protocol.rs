//! Context-block wire format and the shared versioned repository.
//!
//! Every message in the simulator (scene summaries, retrieval requests,
//! patch deliveries) travels as one context block, and the encoded size of
//! that block is what gets charged against the channel budget.
//!
//! Wire layout (all integers little-endian):
//!
//! | offset      | bytes | field                                   |
//! |-------------|-------|-----------------------------------------|
//! | 0..4        | 4     | magic `52 41 4D 53` ("RAMS")            |
//! | 4           | 1     | format version, currently 1             |
//! | 5..9        | 4     | source_id                               |
//! | 9..17       | 8     | timestamp_ms                            |
//! | 17          | 1     | priority (0 = lowest)                   |
//! | 18..22      | 4     | block version                           |
//! | 22          | 1     | tag count T                             |
//! | ...         | var   | T x (1-byte length + UTF-8 tag bytes)   |
//! | ...         | 4     | payload length                          |
//! | ...         | var   | payload bytes                           |
//! | last 4      | 4     | CRC32 (IEEE) over all preceding bytes   |

use std::collections::HashMap;
use std::sync::RwLock;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"RAMS";
pub const FORMAT_VERSION: u8 = 1;
/// Fixed header bytes before the tag table.
pub const HEADER_LEN: usize = 23;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("block must carry at least one tag")]
    EmptyTags,
    #[error("tag {index} is empty")]
    EmptyTag { index: usize },
    #[error("tag {index} is {len} bytes, limit is 255")]
    TagTooLong { index: usize, len: usize },
    #[error("too many tags: {0}, limit is 255")]
    TooManyTags(usize),
    #[error("payload is {0} bytes, limit is u32::MAX")]
    PayloadTooLarge(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("input truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after block end")]
    TrailingBytes(usize),
    #[error("CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("tag {index} is not valid UTF-8")]
    InvalidTagUtf8 { index: usize },
}

/// The wire unit: metadata header, semantic tags and an opaque payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBlock {
    pub source_id: u32,
    pub timestamp_ms: u64,
    pub priority: u8,
    pub tags: Vec<String>,
    pub payload: Vec<u8>,
    /// Monotonically increasing per (source_id, first tag) key.
    pub version: u32,
}

impl ContextBlock {
    /// The repository key tag is the first tag by convention.
    pub fn key_tag(&self) -> &str {
        &self.tags[0]
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.tags.is_empty() {
            return Err(ProtocolError::EmptyTags);
        }
        if self.tags.len() > 255 {
            return Err(ProtocolError::TooManyTags(self.tags.len()));
        }
        for (index, tag) in self.tags.iter().enumerate() {
            if tag.is_empty() {
                return Err(ProtocolError::EmptyTag { index });
            }
            if tag.len() > 255 {
                return Err(ProtocolError::TagTooLong {
                    index,
                    len: tag.len(),
                });
            }
        }
        if self.payload.len() > u32::MAX as usize {
            return Err(ProtocolError::PayloadTooLarge(self.payload.len()));
        }
        Ok(())
    }

    /// Encoded size in bytes: 23 + sum(1 + tag_len) + 4 + payload_len + 4.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self.tags.iter().map(|t| 1 + t.len()).sum::<usize>()
            + 4
            + self.payload.len()
            + 4
    }

    /// Encoded size in bits, the unit the channel budget is charged in.
    pub fn encoded_bits(&self) -> u64 {
        self.encoded_len() as u64 * 8
    }

    pub fn encode(&self) -> Result<Vec<u8>, ProtocolError> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&self.source_id.to_le_bytes());
        out.extend_from_slice(&self.timestamp_ms.to_le_bytes());
        out.push(self.priority);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.tags.len() as u8);
        for tag in &self.tags {
            out.push(tag.len() as u8);
            out.extend_from_slice(tag.as_bytes());
        }
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        debug_assert_eq!(out.len(), self.encoded_len());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let need = |needed: usize, have: usize| -> Result<(), ProtocolError> {
            if have < needed {
                Err(ProtocolError::Truncated { needed, have })
            } else {
                Ok(())
            }
        };

        need(HEADER_LEN, bytes.len())?;
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(ProtocolError::BadMagic(magic));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(ProtocolError::UnsupportedVersion(bytes[4]));
        }
        let source_id = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let timestamp_ms = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
        let priority = bytes[17];
        let version = u32::from_le_bytes(bytes[18..22].try_into().unwrap());
        let tag_count = bytes[22] as usize;

        let mut pos = HEADER_LEN;
        let mut tags = Vec::with_capacity(tag_count);
        for index in 0..tag_count {
            need(pos + 1, bytes.len())?;
            let len = bytes[pos] as usize;
            pos += 1;
            need(pos + len, bytes.len())?;
            let tag = std::str::from_utf8(&bytes[pos..pos + len])
                .map_err(|_| ProtocolError::InvalidTagUtf8 { index })?
                .to_owned();
            tags.push(tag);
            pos += len;
        }

        need(pos + 4, bytes.len())?;
        let payload_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        need(pos + payload_len + 4, bytes.len())?;
        let payload = bytes[pos..pos + payload_len].to_vec();
        pos += payload_len;

        let stored = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let computed = crc32(&bytes[..pos]);
        if stored != computed {
            return Err(ProtocolError::CrcMismatch { stored, computed });
        }
        pos += 4;
        if pos != bytes.len() {
            return Err(ProtocolError::TrailingBytes(bytes.len() - pos));
        }

        let block = ContextBlock {
            source_id,
            timestamp_ms,
            priority,
            tags,
            payload,
            version,
        };
        block.validate()?;
        Ok(block)
    }
}

/// CRC32, IEEE 802.3 polynomial (reflected), init and xorout 0xFFFFFFFF.
pub fn crc32(data: &[u8]) -> u32 {
    const TABLE: [u32; 256] = crc32_table();
    let mut crc = !0u32;
    for &b in data {
        crc = TABLE[((crc ^ u32::from(b)) & 0xff) as usize] ^ (crc >> 8);
    }
    !crc
}

const fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut bit = 0;
        while bit < 8 {
            c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
            bit += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

/// In-process repository of the latest context blocks, keyed by
/// (source_id, first tag). Publishes are atomic and version-checked;
/// readers never observe partial state.
#[derive(Debug)]
pub struct Repository {
    inner: RwLock<HashMap<(u32, String), Vec<ContextBlock>>>,
    history_depth: usize,
}

impl Default for Repository {
    fn default() -> Self {
        Self::new()
    }
}

impl Repository {
    pub fn new() -> Self {
        Self::with_history_depth(1)
    }

    /// Keeps up to `depth` most recent versions per key (at least 1).
    pub fn with_history_depth(depth: usize) -> Self {
        Self {
            inner: RwLock::new(HashMap::new()),
            history_depth: depth.max(1),
        }
    }

    /// Stores the block if its version is strictly newer than the stored
    /// one for its key. Returns whether the publish was accepted.
    pub fn publish(&self, block: ContextBlock) -> Result<bool, ProtocolError> {
        block.validate()?;
        let key = (block.source_id, block.key_tag().to_owned());
        let mut map = self.inner.write().expect("repository lock poisoned");
        let entry = map.entry(key).or_default();
        if let Some(latest) = entry.last() {
            if block.version <= latest.version {
                return Ok(false);
            }
        }
        entry.push(block);
        let depth = self.history_depth;
        if entry.len() > depth {
            let drop = entry.len() - depth;
            entry.drain(..drop);
        }
        Ok(true)
    }

    /// Latest versions matching every tag in `tag_filter` with priority at
    /// least `min_priority`, ordered by (priority desc, timestamp desc,
    /// source_id asc, key tag asc).
    pub fn query(&self, tag_filter: &[&str], min_priority: u8) -> Vec<ContextBlock> {
        let map = self.inner.read().expect("repository lock poisoned");
        let mut hits: Vec<ContextBlock> = map
            .values()
            .filter_map(|history| history.last())
            .filter(|b| {
                b.priority >= min_priority
                    && tag_filter
                        .iter()
                        .all(|t| b.tags.iter().any(|tag| tag == t))
            })
            .cloned()
            .collect();
        hits.sort_by(|a, b| {
            b.priority
                .cmp(&a.priority)
                .then(b.timestamp_ms.cmp(&a.timestamp_ms))
                .then(a.source_id.cmp(&b.source_id))
                .then(a.key_tag().cmp(b.key_tag()))
        });
        hits
    }

    pub fn latest(&self, source_id: u32, key_tag: &str) -> Option<ContextBlock> {
        let map = self.inner.read().expect("repository lock poisoned");
        map.get(&(source_id, key_tag.to_owned()))
            .and_then(|h| h.last())
            .cloned()
    }

    pub fn history(&self, source_id: u32, key_tag: &str) -> Vec<ContextBlock> {
        let map = self.inner.read().expect("repository lock poisoned");
        map.get(&(source_id, key_tag.to_owned()))
            .cloned()
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("repository lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.inner.write().expect("repository lock poisoned").clear();
    }
}
