//! Tamper-evident, hash-chained log of settled slot data.
//!
//! Each record names a counting point (a meter, or [`KOR_COUNTING_POINT`] for
//! repartition keys), the slot timestamp and a payload, and is chained to
//! its predecessor by SHA-256. The ledger file holds one record per line:
//!
//! ```text
//! <counting point>|<timestamp>|<payload>|<prev hash>|<hash>
//! ```
//!
//! where `hash = sha256("<counting point>|<timestamp>|<payload>|<prev hash>")`
//! in lowercase hex, and the first record's previous hash is all zeros.
//! Payloads are either `energy,<kind>,<wh>` or
//! `kor,<policy>,surplus=<wh>,<participant>=<coefficient>/<wh>,...`.
//!
//! Dropping records from the end of a file cannot be detected without an
//! external anchor for the head hash.

use rust_decimal::{Decimal, RoundingStrategy};
use sha2::{Digest as _, Sha256};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::model::time::{format_slot, parse_timestamp};
use crate::model::{EnergyWh, MeterId, ParticipantId, SeriesKind, SlotAllocation, SlotStart};

/// Counting point under which repartition keys are logged.
pub const KOR_COUNTING_POINT: &str = "KOR";

/// Fractional digits of logged coefficients.
const COEFFICIENT_DECIMALS: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("counting point {key}: timestamp {ts} precedes the last record at {last}")]
    TimestampRegression { key: MeterId, ts: String, last: String },
    #[error("policy name {0:?} cannot be logged")]
    InvalidPolicyName(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for Digest {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(format!("not a lowercase 64-digit hex digest: {s:?}"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(Digest(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KorShare {
    pub participant: ParticipantId,
    pub coefficient: Decimal,
    pub allocated: EnergyWh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Energy { kind: SeriesKind, energy: EnergyWh },
    Kor {
        policy: String,
        surplus: EnergyWh,
        shares: Vec<KorShare>,
    },
}

fn fixed_coefficient(c: Decimal) -> String {
    let mut c = c.round_dp_with_strategy(COEFFICIENT_DECIMALS, RoundingStrategy::MidpointNearestEven);
    c.rescale(COEFFICIENT_DECIMALS);
    c.to_string()
}

fn valid_policy_name(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

impl Payload {
    /// Effective keys of one settled slot: each participant's share of
    /// production (zero when nothing was produced) and the Wh it received.
    pub fn kor_from_allocation(policy: &str, allocation: &SlotAllocation) -> Result<Payload, AuditError> {
        if !valid_policy_name(policy) {
            return Err(AuditError::InvalidPolicyName(policy.to_string()));
        }
        let production = allocation.production().wh();
        let shares = allocation
            .self_consumed()
            .iter()
            .map(|(id, e)| KorShare {
                participant: id.clone(),
                coefficient: if production == 0 {
                    Decimal::ZERO
                } else {
                    (Decimal::from(e.wh()) / Decimal::from(production))
                        .round_dp_with_strategy(COEFFICIENT_DECIMALS, RoundingStrategy::MidpointNearestEven)
                },
                allocated: *e,
            })
            .collect();
        Ok(Payload::Kor {
            policy: policy.to_string(),
            surplus: allocation.surplus_to_grid(),
            shares,
        })
    }

    pub fn canonical(&self) -> String {
        match self {
            Payload::Energy { kind, energy } => format!("energy,{kind},{}", energy.wh()),
            Payload::Kor {
                policy,
                surplus,
                shares,
            } => {
                let mut s = format!("kor,{policy},surplus={}", surplus.wh());
                for share in shares {
                    s.push_str(&format!(
                        ",{}={}/{}",
                        share.participant,
                        fixed_coefficient(share.coefficient),
                        share.allocated.wh()
                    ));
                }
                s
            }
        }
    }

    pub fn parse(s: &str) -> Result<Payload, String> {
        let mut parts = s.split(',');
        match parts.next() {
            Some("energy") => {
                let kind = match parts.next() {
                    Some("production") => SeriesKind::Production,
                    Some("consumption") => SeriesKind::Consumption,
                    other => return Err(format!("unknown energy kind {other:?}")),
                };
                let energy = parts
                    .next()
                    .ok_or("missing energy value")?
                    .parse::<u64>()
                    .map_err(|e| e.to_string())?;
                if parts.next().is_some() {
                    return Err("trailing fields in energy payload".into());
                }
                Ok(Payload::Energy {
                    kind,
                    energy: EnergyWh(energy),
                })
            }
            Some("kor") => {
                let policy = parts.next().ok_or("missing policy")?.to_string();
                if !valid_policy_name(&policy) {
                    return Err(format!("invalid policy name {policy:?}"));
                }
                let surplus = parts
                    .next()
                    .and_then(|p| p.strip_prefix("surplus="))
                    .ok_or("missing surplus")?
                    .parse::<u64>()
                    .map_err(|e| e.to_string())?;
                let shares = parts
                    .map(|p| {
                        let (id, rest) = p.split_once('=').ok_or("share without '='")?;
                        let (coef, wh) = rest.split_once('/').ok_or("share without '/'")?;
                        Ok(KorShare {
                            participant: ParticipantId::new(id).map_err(|e| e.to_string())?,
                            coefficient: Decimal::from_str(coef).map_err(|e| e.to_string())?,
                            allocated: EnergyWh(wh.parse::<u64>().map_err(|e| e.to_string())?),
                        })
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                Ok(Payload::Kor {
                    policy,
                    surplus: EnergyWh(surplus),
                    shares,
                })
            }
            other => Err(format!("unknown payload type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub counting_point_key: MeterId,
    pub timestamp: SlotStart,
    pub payload: Payload,
    pub prev_hash: Digest,
    pub hash: Digest,
}

fn hashed_content(key: &MeterId, ts: &SlotStart, payload: &Payload, prev: &Digest) -> String {
    format!("{key}|{}|{}|{prev}", format_slot(ts), payload.canonical())
}

fn digest(content: &str) -> Digest {
    Digest(Sha256::digest(content.as_bytes()).into())
}

impl AuditRecord {
    pub fn compute_hash(&self) -> Digest {
        digest(&hashed_content(
            &self.counting_point_key,
            &self.timestamp,
            &self.payload,
            &self.prev_hash,
        ))
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}|{}",
            hashed_content(&self.counting_point_key, &self.timestamp, &self.payload, &self.prev_hash),
            self.hash
        )
    }

    pub fn parse_line(line: &str) -> Result<AuditRecord, String> {
        let fields: Vec<&str> = line.split('|').collect();
        let [key, ts, payload, prev, hash] = fields[..] else {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        };
        Ok(AuditRecord {
            counting_point_key: MeterId::new(key).map_err(|e| e.to_string())?,
            timestamp: parse_timestamp(ts).map_err(|e| e.to_string())?,
            payload: Payload::parse(payload)?,
            prev_hash: prev.parse()?,
            hash: hash.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainStatus {
    Intact { records: usize },
    Broken { index: usize, reason: String },
}

impl ChainStatus {
    pub fn is_intact(&self) -> bool {
        matches!(self, ChainStatus::Intact { .. })
    }
}

impl fmt::Display for ChainStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainStatus::Intact { records } => write!(f, "intact ({records} records)"),
            ChainStatus::Broken { index, reason } => write!(f, "broken at record {index}: {reason}"),
        }
    }
}

/// Append-only chain held in memory.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    records: Vec<AuditRecord>,
    last_seen: HashMap<MeterId, SlotStart>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn head(&self) -> Digest {
        self.records.last().map_or(Digest::ZERO, |r| r.hash)
    }

    pub fn append(
        &mut self,
        payload: Payload,
        counting_point_key: MeterId,
        timestamp: SlotStart,
    ) -> Result<&AuditRecord, AuditError> {
        if let Some(last) = self.last_seen.get(&counting_point_key) {
            if timestamp < *last {
                return Err(AuditError::TimestampRegression {
                    key: counting_point_key,
                    ts: format_slot(&timestamp),
                    last: format_slot(last),
                });
            }
        }
        let mut record = AuditRecord {
            counting_point_key,
            timestamp,
            payload,
            prev_hash: self.head(),
            hash: Digest::ZERO,
        };
        record.hash = record.compute_hash();
        self.last_seen.insert(record.counting_point_key.clone(), timestamp);
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn verify_chain(&self) -> ChainStatus {
        verify_records(&self.records)
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| r.to_line() + "\n").collect()
    }

    /// Rebuilds a ledger from its file form, refusing anything that does not
    /// verify.
    pub fn from_text(text: &str) -> Result<Ledger, AuditError> {
        let records = parse_text(text).map_err(|(line, reason)| AuditError::Parse { line, reason })?;
        if let ChainStatus::Broken { index, reason } = verify_records(&records) {
            return Err(AuditError::Parse { line: index, reason });
        }
        let mut last_seen = HashMap::new();
        for r in &records {
            last_seen.insert(r.counting_point_key.clone(), r.timestamp);
        }
        Ok(Ledger { records, last_seen })
    }
}

/// Checks hashes, chaining and per-counting-point timestamp order, and
/// reports the first record that fails.
pub fn verify_records(records: &[AuditRecord]) -> ChainStatus {
    verify_records_from(Digest::ZERO, records)
}

/// Like [`verify_records`] for a segment whose first record must follow
/// `anchor`. Timestamp order is only checked within the segment.
pub fn verify_records_from(anchor: Digest, records: &[AuditRecord]) -> ChainStatus {
    let mut prev = anchor;
    let mut last_seen: HashMap<&MeterId, &SlotStart> = HashMap::new();
    for (index, r) in records.iter().enumerate() {
        if r.prev_hash != prev {
            return ChainStatus::Broken {
                index,
                reason: "previous-hash link does not match".into(),
            };
        }
        if r.compute_hash() != r.hash {
            return ChainStatus::Broken {
                index,
                reason: "content does not match its hash".into(),
            };
        }
        if let Some(last) = last_seen.insert(&r.counting_point_key, &r.timestamp) {
            if r.timestamp < *last {
                return ChainStatus::Broken {
                    index,
                    reason: "timestamp regression".into(),
                };
            }
        }
        prev = r.hash;
    }
    ChainStatus::Intact {
        records: records.len(),
    }
}

fn parse_text(text: &str) -> Result<Vec<AuditRecord>, (usize, String)> {
    let mut records = Vec::new();
    let mut rest = text;
    let mut index = 0;
    while !rest.is_empty() {
        let (line, tail) = match rest.split_once('\n') {
            Some((l, t)) => (l, t),
            None => return Err((index, "missing line terminator".into())),
        };
        let record = AuditRecord::parse_line(line).map_err(|e| (index, e))?;
        // Anything that parses but is not byte-identical to its canonical
        // form (e.g. case changes) counts as tampering.
        if record.to_line() != line {
            return Err((index, "line is not in canonical form".into()));
        }
        records.push(record);
        rest = tail;
        index += 1;
    }
    Ok(records)
}

/// Verifies a ledger file's bytes. Undecodable bytes or lines break the
/// chain at the record they belong to.
pub fn verify_bytes(bytes: &[u8]) -> ChainStatus {
    verify_bytes_from(Digest::ZERO, bytes)
}

/// Verifies a segment of a ledger file that starts right after the record
/// whose hash is `anchor`. Indices in the result are relative to the segment.
pub fn verify_bytes_from(anchor: Digest, bytes: &[u8]) -> ChainStatus {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            let index = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count();
            return ChainStatus::Broken {
                index,
                reason: "invalid UTF-8".into(),
            };
        }
    };
    match parse_text(text) {
        Ok(records) => verify_records_from(anchor, &records),
        Err((index, reason)) => ChainStatus::Broken { index, reason },
    }
}
