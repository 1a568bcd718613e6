//! Instance, key and transcript files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use privbid_core::masking::MaskingKeys;
use privbid_core::netmodel::AllianceInstance;
use privbid_core::protocol::{MessageKind, Transcript, TranscriptEntry};
use privbid_core::wire;
use serde::{Deserialize, Serialize};

pub const INSTANCE_FORMAT: &str = "privbid-instance/1";
pub const KEYS_FORMAT: &str = "privbid-keys/1";
pub const TRANSCRIPT_FORMAT: &str = "privbid-transcript/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(wire::sha256(bytes))
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format: String,
    #[serde(flatten)]
    instance: AllianceInstance,
}

/// Pretty JSON with a trailing newline; identical instances give identical bytes.
pub fn instance_to_string(instance: &AllianceInstance) -> Result<String> {
    let file = InstanceFile {
        format: INSTANCE_FORMAT.into(),
        instance: instance.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn instance_from_str(text: &str) -> Result<AllianceInstance> {
    let file: InstanceFile = serde_json::from_str(text).context("malformed instance file")?;
    if file.format != INSTANCE_FORMAT {
        bail!("malformed instance file: format is {:?}, expected {INSTANCE_FORMAT:?}", file.format);
    }
    file.instance.validate().context("malformed instance file")?;
    Ok(file.instance)
}

pub fn read_instance(path: &Path) -> Result<AllianceInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    instance_from_str(&text).with_context(|| format!("in {}", path.display()))
}

#[derive(Serialize, Deserialize)]
struct KeysFile {
    format: String,
    keys: MaskingKeys,
}

pub fn keys_to_string(keys: &MaskingKeys) -> Result<String> {
    let file = KeysFile {
        format: KEYS_FORMAT.into(),
        keys: keys.clone(),
    };
    Ok(serde_json::to_string(&file)? + "\n")
}

pub fn read_keys(path: &Path) -> Result<MaskingKeys> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: KeysFile = serde_json::from_str(&text).with_context(|| format!("malformed key file {}", path.display()))?;
    if file.format != KEYS_FORMAT {
        bail!("{} is not a key file", path.display());
    }
    Ok(file.keys)
}

/// Transcript index; message bodies live in separate files next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptIndex {
    pub format: String,
    pub num_parties: usize,
    pub c: Vec<f64>,
    pub messages: Vec<MessageRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub sender: usize,
    pub kind: MessageKind,
    pub sha256: String,
    pub length: usize,
    pub file: String,
}

pub fn message_file_name(sender: usize, kind: MessageKind) -> String {
    match kind {
        MessageKind::Payload => format!("party-{sender}.payload"),
        MessageKind::Offset => format!("party-{sender}.offset"),
    }
}

pub fn transcript_index(t: &Transcript) -> TranscriptIndex {
    TranscriptIndex {
        format: TRANSCRIPT_FORMAT.into(),
        num_parties: t.num_parties,
        c: t.c.clone(),
        messages: t
            .entries
            .iter()
            .map(|e| MessageRecord {
                sender: e.sender,
                kind: e.kind,
                sha256: hex::encode(e.hash),
                length: e.length,
                file: message_file_name(e.sender, e.kind),
            })
            .collect(),
    }
}

/// Loads an index and its message files from `dir`; outputs are left empty.
pub fn read_transcript(dir: &Path) -> Result<Transcript> {
    let path = dir.join("transcript.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let index: TranscriptIndex = serde_json::from_str(&text).context("malformed transcript index")?;
    if index.format != TRANSCRIPT_FORMAT {
        bail!("{} is not a transcript index", path.display());
    }
    let mut entries = Vec::with_capacity(index.messages.len());
    for m in &index.messages {
        let payload = fs::read(dir.join(&m.file)).with_context(|| format!("reading {}", m.file))?;
        let hash: [u8; 32] = hex::decode(&m.sha256)
            .ok()
            .and_then(|h| h.try_into().ok())
            .with_context(|| format!("bad hash for {}", m.file))?;
        entries.push(TranscriptEntry {
            sender: m.sender,
            kind: m.kind,
            hash,
            length: m.length,
            payload,
        });
    }
    Ok(Transcript {
        num_parties: index.num_parties,
        c: index.c,
        entries,
        outputs: Vec::new(),
    })
}
