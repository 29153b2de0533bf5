use rust_decimal::Decimal;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use super::community::kor_sum_tolerance;
use super::time::{format_slot, SlotStart};
use super::{Community, MeterId, ParticipantId, SeriesKind, SlotSeries};

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    NoParticipants,
    DuplicateParticipant { participant: ParticipantId },
    DuplicateRank { rank: u32 },
    ZeroRank { participant: ParticipantId },
    NonPositiveTariff { participant: ParticipantId },
    NegativeUplift { participant: ParticipantId },
    NegativeFeedIn,
    ProductionMeterShared { meter: MeterId },
    SharedMeter { meter: MeterId },
    MissingSeries { meter: MeterId },
    WrongKind { meter: MeterId, expected: SeriesKind },
    Gap { meter: MeterId, slot: String },
    ExtraSlot { meter: MeterId, slot: String },
    KorSum { sum: Decimal },
    KorMissing { participant: ParticipantId },
    KorUnknown { participant: ParticipantId },
    KorOutOfRange { participant: ParticipantId, value: Decimal },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::NoParticipants => write!(f, "community has no participants"),
            Finding::DuplicateParticipant { participant } => {
                write!(f, "participant {participant} listed more than once")
            }
            Finding::DuplicateRank { rank } => write!(f, "priority rank {rank} is not unique"),
            Finding::ZeroRank { participant } => {
                write!(f, "participant {participant}: priority rank must be positive")
            }
            Finding::NonPositiveTariff { participant } => {
                write!(f, "participant {participant}: tariff must be > 0")
            }
            Finding::NegativeUplift { participant } => {
                write!(f, "participant {participant}: uplift percentages must be >= 0")
            }
            Finding::NegativeFeedIn => write!(f, "feed-in rate must be >= 0"),
            Finding::ProductionMeterShared { meter } => {
                write!(f, "production meter {meter} is also a participant meter")
            }
            Finding::SharedMeter { meter } => {
                write!(f, "meter {meter} is assigned to more than one participant")
            }
            Finding::MissingSeries { meter } => write!(f, "no series for meter {meter}"),
            Finding::WrongKind { meter, expected } => {
                write!(f, "meter {meter}: expected a {expected} series")
            }
            Finding::Gap { meter, slot } => write!(f, "meter {meter}: gap at {slot}"),
            Finding::ExtraSlot { meter, slot } => {
                write!(f, "meter {meter}: slot {slot} has no production counterpart")
            }
            Finding::KorSum { sum } => write!(f, "KoR sum ≠ 1 ({sum})"),
            Finding::KorMissing { participant } => write!(f, "KoR missing for {participant}"),
            Finding::KorUnknown { participant } => {
                write!(f, "KoR given for unknown participant {participant}")
            }
            Finding::KorOutOfRange { participant, value } => {
                write!(f, "KoR for {participant} outside [0, 1]: {value}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Checks a community, its meter series and an optional raw KoR table.
///
/// Never fails; every problem found becomes a [`Finding`].
pub fn validate_community(
    community: &Community,
    series: &[SlotSeries],
    kors: Option<&BTreeMap<ParticipantId, Decimal>>,
) -> ValidationReport {
    let mut findings = Vec::new();

    if community.participants.is_empty() {
        findings.push(Finding::NoParticipants);
    }
    if community.feed_in_eur_per_kwh < Decimal::ZERO {
        findings.push(Finding::NegativeFeedIn);
    }

    let mut ids = HashSet::new();
    let mut ranks = BTreeSet::new();
    let mut meters = HashSet::new();
    for p in &community.participants {
        if !ids.insert(&p.id) {
            findings.push(Finding::DuplicateParticipant {
                participant: p.id.clone(),
            });
        }
        if p.priority_rank == 0 {
            findings.push(Finding::ZeroRank {
                participant: p.id.clone(),
            });
        } else if !ranks.insert(p.priority_rank) {
            findings.push(Finding::DuplicateRank {
                rank: p.priority_rank,
            });
        }
        if p.tariff_eur_per_kwh <= Decimal::ZERO {
            findings.push(Finding::NonPositiveTariff {
                participant: p.id.clone(),
            });
        }
        if p.grid_uplift_pct < Decimal::ZERO || p.tax_uplift_pct < Decimal::ZERO {
            findings.push(Finding::NegativeUplift {
                participant: p.id.clone(),
            });
        }
        if p.meter_id == community.production_meter {
            findings.push(Finding::ProductionMeterShared {
                meter: p.meter_id.clone(),
            });
        } else if !meters.insert(&p.meter_id) {
            findings.push(Finding::SharedMeter {
                meter: p.meter_id.clone(),
            });
        }
    }

    let by_meter: BTreeMap<&MeterId, &SlotSeries> = series.iter().map(|s| (s.meter_id(), s)).collect();
    let production = by_meter.get(&community.production_meter).copied();
    match production {
        None => findings.push(Finding::MissingSeries {
            meter: community.production_meter.clone(),
        }),
        Some(s) if s.kind() != SeriesKind::Production => findings.push(Finding::WrongKind {
            meter: s.meter_id().clone(),
            expected: SeriesKind::Production,
        }),
        Some(_) => {}
    }

    let production_slots: BTreeSet<&SlotStart> =
        production.map(|s| s.slot_starts().collect()).unwrap_or_default();
    let mut seen_meters = HashSet::new();
    for p in &community.participants {
        if !seen_meters.insert(&p.meter_id) || p.meter_id == community.production_meter {
            continue;
        }
        let Some(s) = by_meter.get(&p.meter_id) else {
            findings.push(Finding::MissingSeries {
                meter: p.meter_id.clone(),
            });
            continue;
        };
        if s.kind() != SeriesKind::Consumption {
            findings.push(Finding::WrongKind {
                meter: p.meter_id.clone(),
                expected: SeriesKind::Consumption,
            });
        }
        let own: BTreeSet<&SlotStart> = s.slot_starts().collect();
        for slot in production_slots.difference(&own) {
            findings.push(Finding::Gap {
                meter: p.meter_id.clone(),
                slot: format_slot(slot),
            });
        }
        if production.is_some() {
            for slot in own.difference(&production_slots) {
                findings.push(Finding::ExtraSlot {
                    meter: p.meter_id.clone(),
                    slot: format_slot(slot),
                });
            }
        }
    }

    if let Some(kors) = kors {
        for (id, value) in kors {
            if !ids.contains(id) {
                findings.push(Finding::KorUnknown {
                    participant: id.clone(),
                });
            }
            if *value < Decimal::ZERO || *value > Decimal::ONE {
                findings.push(Finding::KorOutOfRange {
                    participant: id.clone(),
                    value: *value,
                });
            }
        }
        for p in &community.participants {
            if !kors.contains_key(&p.id) {
                findings.push(Finding::KorMissing {
                    participant: p.id.clone(),
                });
            }
        }
        let sum: Decimal = kors.values().sum();
        if (sum - Decimal::ONE).abs() > kor_sum_tolerance() {
            findings.push(Finding::KorSum { sum });
        }
    }

    ValidationReport { findings }
}
